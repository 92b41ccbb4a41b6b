// sepmax: learn and evaluate a separation-index-maximizing first
// convolutional layer.
//
// Subcommands:
//   si-eval   separation index of raw pixels or of features from a saved bank
//   train     PCA init + quasi-LS training; writes bank, trace, summary
//   compare   random vs PCA-init vs quasi-LS banks under identical seeds
//   probe     linear/kNN probe accuracy of a saved bank on a train/test pair
//
// Exit codes: 0 success, 2 config error, 3 data I/O error, 4 precondition
// violation, 5 numerical failure.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "sepmax/dataset.hpp"
#include "sepmax/errors.hpp"
#include "sepmax/filter_bank.hpp"
#include "sepmax/parallel.hpp"
#include "sepmax/patches.hpp"
#include "sepmax/pca_init.hpp"
#include "sepmax/probe.hpp"
#include "sepmax/quasi_ls.hpp"
#include "sepmax/separation.hpp"
#include "sepmax/synth.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// ---------------------------------------------------------------------------
// Run configuration. Flags mirror these fields one-to-one and the whole
// struct is embedded verbatim in every report for provenance.
// ---------------------------------------------------------------------------
struct RunConfig {
    // dataset
    std::string dataset = "idx";  // idx|cifar10|cifar100|blobs|lines|images
    std::string images, labels;            // idx train pair
    std::string test_images, test_labels;  // idx test pair
    std::vector<std::string> batches, test_batches;  // cifar batch files
    std::string cifar_label_mode = "fine";
    std::vector<int> class_filter;
    std::size_t per_class = 0;       // 0 = take all
    std::size_t test_per_class = 0;  // 0 = take all
    // synthetic generator knobs
    std::size_t synth_per_class = 50;
    std::size_t synth_side = 8;
    double synth_separation = 20.0;
    int synth_classes = 10;
    double synth_noise = 0.45;

    std::uint64_t seed = 1;
    int threads = 0;

    // patch geometry / bank size
    std::size_t kernel_h = 5, kernel_w = 5, stride = 1, padding = 0;
    std::size_t filters = 16;

    // quasi-LS
    std::size_t t_stop = 10;
    double ridge = -1.0;  // < 0 = auto
    double eta = 1.0;
    std::size_t si_subsample = 0;  // 0 = full
    std::string selection = "best";  // best|last

    // probes
    std::size_t probe_epochs = 150;
    double probe_step = 0.0;  // 0 = auto from the feature spectrum
    double probe_l2 = 1e-4;
    std::size_t knn_k = 3;

    // compare
    std::vector<std::uint64_t> seeds;

    std::string out_dir = "sepmax_out";
    std::string bank_path;  // si-eval / probe input

    json to_json() const {
        return json{{"dataset", dataset},
                    {"images", images},
                    {"labels", labels},
                    {"test_images", test_images},
                    {"test_labels", test_labels},
                    {"batches", batches},
                    {"test_batches", test_batches},
                    {"cifar_label_mode", cifar_label_mode},
                    {"class_filter", class_filter},
                    {"per_class", per_class},
                    {"test_per_class", test_per_class},
                    {"synth_per_class", synth_per_class},
                    {"synth_side", synth_side},
                    {"synth_separation", synth_separation},
                    {"synth_classes", synth_classes},
                    {"synth_noise", synth_noise},
                    {"seed", seed},
                    {"threads", threads},
                    {"kernel_h", kernel_h},
                    {"kernel_w", kernel_w},
                    {"stride", stride},
                    {"padding", padding},
                    {"filters", filters},
                    {"t_stop", t_stop},
                    {"ridge", ridge},
                    {"eta", eta},
                    {"si_subsample", si_subsample},
                    {"selection", selection},
                    {"probe_epochs", probe_epochs},
                    {"probe_step", probe_step},
                    {"probe_l2", probe_l2},
                    {"knn_k", knn_k},
                    {"seeds", seeds},
                    {"out_dir", out_dir},
                    {"bank_path", bank_path}};
    }
};

// ---------------------------------------------------------------------------
// Provenance hashing (FNV-1a 64 over file bytes).
// ---------------------------------------------------------------------------
std::string fnv1a64_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw sepmax::data_error("cannot open " + path + " for hashing");
    std::uint64_t h = 0xcbf29ce484222325ull;
    char buf[1 << 16];
    while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
        for (std::streamsize i = 0; i < in.gcount(); ++i) {
            h ^= static_cast<unsigned char>(buf[i]);
            h *= 0x100000001b3ull;
        }
    }
    char out[32];
    std::snprintf(out, sizeof(out), "fnv1a64:%016llx", static_cast<unsigned long long>(h));
    return out;
}

// Resolve a dataset path: as given if it exists, else under SEPMAX_DATA_DIR.
std::string resolve_path(const std::string& path) {
    if (path.empty() || fs::exists(path)) return path;
    if (const char* root = std::getenv("SEPMAX_DATA_DIR")) {
        fs::path candidate = fs::path(root) / path;
        if (fs::exists(candidate)) return candidate.string();
    }
    return path;
}

struct LoadedData {
    sepmax::LabeledSet set;
    json data_hashes = json::object();
};

// Load the train or test side of the configured dataset, apply the class
// filter / per-class subsample, no standardization yet.
LoadedData load_side(const RunConfig& cfg, bool test_side) {
    LoadedData out;
    const std::uint64_t side_seed =
        test_side ? sepmax::stream_seed(cfg.seed, "test-side") : cfg.seed;

    if (cfg.dataset == "idx") {
        const std::string img = resolve_path(test_side ? cfg.test_images : cfg.images);
        const std::string lab = resolve_path(test_side ? cfg.test_labels : cfg.labels);
        if (img.empty() || lab.empty())
            throw sepmax::config_error(test_side ? "missing --test-images/--test-labels"
                                                 : "missing --images/--labels");
        out.set = sepmax::load_idx(img, lab);
        out.data_hashes[img] = fnv1a64_file(img);
        out.data_hashes[lab] = fnv1a64_file(lab);
    } else if (cfg.dataset == "cifar10" || cfg.dataset == "cifar100") {
        const auto& raw = test_side ? cfg.test_batches : cfg.batches;
        if (raw.empty())
            throw sepmax::config_error(test_side ? "missing --test-batches" : "missing --batches");
        std::vector<std::string> paths;
        for (const auto& p : raw) paths.push_back(resolve_path(p));
        const auto kind = cfg.dataset == "cifar10" ? sepmax::CifarKind::cifar10
                                                   : sepmax::CifarKind::cifar100;
        const auto mode = cfg.cifar_label_mode == "coarse" ? sepmax::CifarLabelMode::coarse
                                                           : sepmax::CifarLabelMode::fine;
        out.set = sepmax::load_cifar(paths, kind, mode);
        for (const auto& p : paths) out.data_hashes[p] = fnv1a64_file(p);
    } else if (cfg.dataset == "blobs") {
        out.set = sepmax::make_two_blobs(cfg.synth_per_class, cfg.synth_side,
                                         cfg.synth_separation, side_seed);
        out.data_hashes["synth:blobs"] = "seed:" + std::to_string(side_seed);
    } else if (cfg.dataset == "lines") {
        out.set = sepmax::make_alternating_line(std::max<std::size_t>(cfg.synth_per_class, 3) * 2);
        out.data_hashes["synth:lines"] = "fixed";
    } else if (cfg.dataset == "images") {
        // both sides share the class prototypes drawn from the master seed
        out.set = sepmax::make_image_classes(cfg.synth_classes, cfg.synth_per_class,
                                             cfg.synth_side, cfg.synth_noise, side_seed, 2,
                                             cfg.seed);
        out.data_hashes["synth:images"] = "seed:" + std::to_string(side_seed);
    } else {
        throw sepmax::config_error("unknown dataset kind: " + cfg.dataset);
    }

    const std::size_t want = test_side ? cfg.test_per_class : cfg.per_class;
    if (want > 0 || !cfg.class_filter.empty()) {
        std::size_t per = want;
        if (per == 0) {
            // class filter without subsampling: keep every member of the
            // smallest requested class
            per = out.set.size();
            auto hist = out.set.class_histogram();
            if (cfg.class_filter.empty()) {
                for (const auto& [c, n] : hist) per = std::min(per, n);
            } else {
                for (int cls : cfg.class_filter) {
                    auto it = hist.find(cls);
                    per = std::min(per, it == hist.end() ? std::size_t{0} : it->second);
                }
            }
        }
        out.set = sepmax::subset(out.set, per, side_seed, cfg.class_filter);
    }
    return out;
}

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw sepmax::data_error("cannot write " + path);
    out << content;
}

// Prepends provenance comment lines so that every emitted file carries the
// exact config and input hashes.
std::string with_provenance(const RunConfig& cfg, const json& hashes, const std::string& body) {
    std::string out = "# config: " + cfg.to_json().dump() + "\n";
    out += "# data: " + hashes.dump() + "\n";
    out += body;
    return out;
}

json report_skeleton(const RunConfig& cfg, const json& hashes) {
    return json{{"config", cfg.to_json()}, {"data", hashes}};
}

sepmax::PatchConfig patch_config(const RunConfig& cfg) {
    return sepmax::PatchConfig{cfg.kernel_h, cfg.kernel_w, cfg.stride, cfg.padding};
}

sepmax::QlsConfig qls_config(const RunConfig& cfg) {
    sepmax::QlsConfig q;
    q.filter_count = cfg.filters;
    q.t_stop = cfg.t_stop;
    if (cfg.ridge >= 0.0) q.ridge = cfg.ridge;
    q.step_scale = cfg.eta;
    if (cfg.si_subsample > 0) q.si_subsample = cfg.si_subsample;
    q.seed = cfg.seed;
    if (cfg.selection == "best")
        q.selection = sepmax::QlsConfig::Selection::best_si;
    else if (cfg.selection == "last")
        q.selection = sepmax::QlsConfig::Selection::last_iterate;
    else
        throw sepmax::config_error("--selection must be best or last");
    return q;
}

// ---------------------------------------------------------------------------
// si-eval
// ---------------------------------------------------------------------------
int cmd_si_eval(const RunConfig& cfg) {
    auto data = load_side(cfg, false);
    json report = report_skeleton(cfg, data.data_hashes);

    double si = 0.0;
    if (cfg.bank_path.empty()) {
        si = sepmax::separation_index(data.set);
        report["representation"] = "pixels";
    } else {
        auto bank = sepmax::load_filter_bank(cfg.bank_path);
        sepmax::LabeledSet prepared = bank.channel_stats
                                          ? sepmax::standardize(data.set, *bank.channel_stats)
                                          : data.set;
        auto pm = sepmax::build_patch_matrix(prepared, bank.patch_config);
        auto feats = sepmax::forward(bank, pm, prepared.labels, prepared.class_count);
        si = sepmax::separation_index(feats);
        report["representation"] = "features";
        report["bank_path"] = cfg.bank_path;
    }
    report["si"] = si;
    report["Q"] = data.set.size();
    report["K"] = data.set.class_count;

    fs::create_directories(cfg.out_dir);
    const std::string path = (fs::path(cfg.out_dir) / "si_report.json").string();
    write_file(path, report.dump(2) + "\n");
    std::cout << report.dump(2) << std::endl;
    return 0;
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------
int cmd_train(const RunConfig& cfg) {
    auto data = load_side(cfg, false);
    auto set = sepmax::standardize(data.set);
    auto pcfg = patch_config(cfg);
    auto qcfg = qls_config(cfg);
    pcfg.validate(set.height, set.width);

    auto result = sepmax::qls_train(set, pcfg, qcfg);
    if (result.stats_under_determined)
        std::cerr << "warning: fewer patch samples than patch dimensions; "
                     "the patch covariance is rank-deficient\n";

    fs::create_directories(cfg.out_dir);
    const fs::path dir(cfg.out_dir);
    const json provenance = report_skeleton(cfg, data.data_hashes);
    sepmax::save(result.bank, (dir / "bank.json").string(), &provenance);
    write_file((dir / "trace.csv").string(),
               with_provenance(cfg, data.data_hashes, sepmax::trace_to_csv(result.trace)));

    json trace_json = report_skeleton(cfg, data.data_hashes);
    trace_json["trace"] = sepmax::trace_to_json(result.trace);
    write_file((dir / "trace.json").string(), trace_json.dump(2) + "\n");

    json summary = report_skeleton(cfg, data.data_hashes);
    summary["Q"] = set.size();
    summary["K"] = set.class_count;
    summary["si_initial"] = result.trace.initial_si();
    summary["si_best"] = result.trace.best_si();
    summary["selected_iterate"] = result.trace.selected_index;
    summary["bank"] = (dir / "bank.json").string();
    summary["trace_csv"] = (dir / "trace.csv").string();
    write_file((dir / "summary.json").string(), summary.dump(2) + "\n");

    std::cout << "si(t=0) = " << result.trace.initial_si()
              << "  si(best) = " << result.trace.best_si()
              << "  selected iterate = " << result.trace.selected_index << "\n"
              << "bank: " << (dir / "bank.json").string() << std::endl;
    return 0;
}

// ---------------------------------------------------------------------------
// compare
// ---------------------------------------------------------------------------
struct CompareRow {
    std::string init;
    std::uint64_t seed;
    double si_train, si_test, linear_acc, knn_acc;
};

CompareRow evaluate_bank(const std::string& name, std::uint64_t seed,
                         const sepmax::FilterBank& bank, const sepmax::LabeledSet& train,
                         const sepmax::LabeledSet& test, const RunConfig& cfg) {
    auto pm_train = sepmax::build_patch_matrix(train, bank.patch_config);
    auto feats_train = sepmax::forward(bank, pm_train, train.labels, train.class_count);
    auto pm_test = sepmax::build_patch_matrix(test, bank.patch_config);
    auto feats_test = sepmax::forward(bank, pm_test, test.labels, test.class_count);

    sepmax::ProbeConfig pcfg;
    pcfg.epochs = cfg.probe_epochs;
    pcfg.step_size = cfg.probe_step;
    pcfg.l2 = cfg.probe_l2;
    pcfg.seed = seed;
    auto model = sepmax::linear_probe_train(feats_train, pcfg);
    auto linear_pred = sepmax::probe_predict(model, feats_test.values);
    auto knn_pred = sepmax::knn_predict(feats_train.values, train.labels, feats_test.values,
                                        std::min(cfg.knn_k, train.size()));

    CompareRow row;
    row.init = name;
    row.seed = seed;
    row.si_train = sepmax::separation_index(feats_train);
    row.si_test = sepmax::separation_index(feats_test);
    row.linear_acc = sepmax::accuracy(linear_pred, test.labels);
    row.knn_acc = sepmax::accuracy(knn_pred, test.labels);
    return row;
}

int cmd_compare(const RunConfig& cfg) {
    std::vector<std::uint64_t> seeds = cfg.seeds;
    if (seeds.empty()) seeds = {cfg.seed};

    auto pcfg = patch_config(cfg);
    std::vector<CompareRow> rows;
    json hashes = json::object();

    for (std::uint64_t seed : seeds) {
        RunConfig per_seed = cfg;
        per_seed.seed = seed;
        auto train_raw = load_side(per_seed, false);
        auto test_raw = load_side(per_seed, true);
        for (auto& [k, v] : train_raw.data_hashes.items()) hashes[k] = v;
        for (auto& [k, v] : test_raw.data_hashes.items()) hashes[k] = v;

        auto train = sepmax::standardize(train_raw.set);
        auto test = sepmax::standardize(test_raw.set, *train.channel_stats);

        auto pm = sepmax::build_patch_matrix(train, pcfg);
        auto stats = sepmax::patch_stats(pm);
        if (stats.under_determined())
            std::cerr << "warning: fewer patch samples (" << stats.sample_count
                      << ") than patch dimensions (" << pm.n_f << ")\n";

        auto random_bank = sepmax::random_filter_bank(stats, cfg.filters, pcfg, seed);
        random_bank.channel_stats = train.channel_stats;
        auto pca_bank = sepmax::pca_filter_init(stats, cfg.filters, pcfg, seed);
        pca_bank.channel_stats = train.channel_stats;

        auto qcfg = qls_config(cfg);
        qcfg.seed = seed;
        auto qls = sepmax::qls_train(train, pcfg, qcfg);

        rows.push_back(evaluate_bank("random", seed, random_bank, train, test, cfg));
        rows.push_back(evaluate_bank("pca", seed, pca_bank, train, test, cfg));
        rows.push_back(evaluate_bank("qls", seed, qls.bank, train, test, cfg));
    }

    // CSV
    std::string csv = "init,si_train,si_test,linear_acc,knn_acc,seed\n";
    char line[256];
    for (const auto& r : rows) {
        std::snprintf(line, sizeof(line), "%s,%.17g,%.17g,%.17g,%.17g,%llu\n", r.init.c_str(),
                      r.si_train, r.si_test, r.linear_acc, r.knn_acc,
                      static_cast<unsigned long long>(r.seed));
        csv += line;
    }
    fs::create_directories(cfg.out_dir);
    const fs::path dir(cfg.out_dir);
    write_file((dir / "comparison.csv").string(), with_provenance(cfg, hashes, csv));

    json report = report_skeleton(cfg, hashes);
    report["rows"] = json::array();
    for (const auto& r : rows)
        report["rows"].push_back(json{{"init", r.init},
                                      {"seed", r.seed},
                                      {"si_train", r.si_train},
                                      {"si_test", r.si_test},
                                      {"linear_acc", r.linear_acc},
                                      {"knn_acc", r.knn_acc}});
    write_file((dir / "comparison.json").string(), report.dump(2) + "\n");

    // text table with per-seed deltas (qls - random)
    std::printf("%-8s %-6s %10s %10s %11s %9s\n", "init", "seed", "si_train", "si_test",
                "linear_acc", "knn_acc");
    for (const auto& r : rows)
        std::printf("%-8s %-6llu %10.4f %10.4f %11.4f %9.4f\n", r.init.c_str(),
                    static_cast<unsigned long long>(r.seed), r.si_train, r.si_test, r.linear_acc,
                    r.knn_acc);
    std::printf("\nper-seed deltas (qls - random):\n");
    for (std::size_t s = 0; s < seeds.size(); ++s) {
        const auto& rnd = rows[3 * s];
        const auto& qls = rows[3 * s + 2];
        std::printf("seed %-4llu  d_si_test %+8.4f  d_linear %+8.4f  d_knn %+8.4f\n",
                    static_cast<unsigned long long>(seeds[s]), qls.si_test - rnd.si_test,
                    qls.linear_acc - rnd.linear_acc, qls.knn_acc - rnd.knn_acc);
    }
    std::printf("\nwrote %s\n", (dir / "comparison.csv").string().c_str());
    return 0;
}

// ---------------------------------------------------------------------------
// probe
// ---------------------------------------------------------------------------
int cmd_probe(const RunConfig& cfg) {
    auto bank = sepmax::load_filter_bank(cfg.bank_path);

    auto train_raw = load_side(cfg, false);
    auto test_raw = load_side(cfg, true);
    json hashes = train_raw.data_hashes;
    for (auto& [k, v] : test_raw.data_hashes.items()) hashes[k] = v;

    sepmax::LabeledSet train, test;
    if (bank.channel_stats) {
        train = sepmax::standardize(train_raw.set, *bank.channel_stats);
        test = sepmax::standardize(test_raw.set, *bank.channel_stats);
    } else {
        train = sepmax::standardize(train_raw.set);
        test = sepmax::standardize(test_raw.set, *train.channel_stats);
    }

    auto row = evaluate_bank("bank", cfg.seed, bank, train, test, cfg);
    json report = report_skeleton(cfg, hashes);
    report["bank_path"] = cfg.bank_path;
    report["si_train"] = row.si_train;
    report["si_test"] = row.si_test;
    report["linear_acc"] = row.linear_acc;
    report["knn_acc"] = row.knn_acc;

    fs::create_directories(cfg.out_dir);
    const std::string path = (fs::path(cfg.out_dir) / "probe_report.json").string();
    write_file(path, report.dump(2) + "\n");
    std::cout << report.dump(2) << std::endl;
    return 0;
}

void add_dataset_flags(CLI::App* sub, RunConfig& cfg, bool with_test) {
    sub->add_option("--dataset", cfg.dataset,
                    "dataset kind: idx|cifar10|cifar100|blobs|lines|images")
        ->default_val(cfg.dataset);
    sub->add_option("--images", cfg.images, "IDX image file (train)");
    sub->add_option("--labels", cfg.labels, "IDX label file (train)");
    sub->add_option("--batches", cfg.batches, "CIFAR batch files (train)");
    sub->add_option("--cifar-label-mode", cfg.cifar_label_mode, "coarse|fine (CIFAR-100)");
    if (with_test) {
        sub->add_option("--test-images", cfg.test_images, "IDX image file (test)");
        sub->add_option("--test-labels", cfg.test_labels, "IDX label file (test)");
        sub->add_option("--test-batches", cfg.test_batches, "CIFAR batch files (test)");
        sub->add_option("--test-per-class", cfg.test_per_class,
                        "per-class test subsample (0 = all)");
    }
    sub->add_option("--classes", cfg.class_filter, "class filter, labels remapped to 0..K'-1");
    sub->add_option("--per-class", cfg.per_class, "per-class train subsample (0 = all)");
    sub->add_option("--synth-per-class", cfg.synth_per_class, "synthetic points per class");
    sub->add_option("--synth-side", cfg.synth_side, "synthetic image side length");
    sub->add_option("--synth-separation", cfg.synth_separation, "blob center distance in sigmas");
    sub->add_option("--synth-classes", cfg.synth_classes, "synthetic class count");
    sub->add_option("--synth-noise", cfg.synth_noise, "synthetic pixel noise");
    sub->add_option("--seed", cfg.seed, "master seed; all randomness derives from it");
    sub->add_option("--threads", cfg.threads, "worker threads (0 = hardware)");
    sub->add_option("--out-dir", cfg.out_dir, "output directory")->default_val(cfg.out_dir);
}

void add_patch_flags(CLI::App* sub, RunConfig& cfg) {
    sub->add_option("--kernel-h", cfg.kernel_h, "kernel height")->default_val(cfg.kernel_h);
    sub->add_option("--kernel-w", cfg.kernel_w, "kernel width")->default_val(cfg.kernel_w);
    sub->add_option("--stride", cfg.stride, "stride")->default_val(cfg.stride);
    sub->add_option("--padding", cfg.padding, "zero padding")->default_val(cfg.padding);
    sub->add_option("--filters", cfg.filters, "filter count M")->default_val(cfg.filters);
}

void add_qls_flags(CLI::App* sub, RunConfig& cfg) {
    sub->add_option("--t-stop", cfg.t_stop, "quasi-LS iterations")->default_val(cfg.t_stop);
    sub->add_option("--ridge", cfg.ridge, "LS ridge (negative = auto)");
    sub->add_option("--eta", cfg.eta, "update step scale")->default_val(cfg.eta);
    sub->add_option("--si-subsample", cfg.si_subsample, "anchors for logged SI (0 = all)");
    sub->add_option("--selection", cfg.selection, "returned iterate: best|last")
        ->default_val(cfg.selection);
}

void add_probe_flags(CLI::App* sub, RunConfig& cfg) {
    sub->add_option("--probe-epochs", cfg.probe_epochs, "linear probe epochs")
        ->default_val(cfg.probe_epochs);
    sub->add_option("--probe-step", cfg.probe_step, "linear probe step size (0 = auto)")
        ->default_val(cfg.probe_step);
    sub->add_option("--probe-l2", cfg.probe_l2, "linear probe L2 penalty")
        ->default_val(cfg.probe_l2);
    sub->add_option("--knn-k", cfg.knn_k, "kNN probe neighbor count")->default_val(cfg.knn_k);
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"separation-index-maximizing first convolutional layer"};
    app.require_subcommand(1);
    RunConfig cfg;

    auto* si = app.add_subcommand("si-eval", "separation index of pixels or bank features");
    add_dataset_flags(si, cfg, false);
    si->add_option("--bank", cfg.bank_path, "evaluate features of this saved bank");

    auto* train = app.add_subcommand("train", "PCA init + quasi-LS training");
    add_dataset_flags(train, cfg, false);
    add_patch_flags(train, cfg);
    add_qls_flags(train, cfg);

    auto* compare = app.add_subcommand("compare", "random vs PCA vs quasi-LS banks");
    add_dataset_flags(compare, cfg, true);
    add_patch_flags(compare, cfg);
    add_qls_flags(compare, cfg);
    add_probe_flags(compare, cfg);
    compare->add_option("--seeds", cfg.seeds, "seed list, one full run per seed");

    auto* probe = app.add_subcommand("probe", "probe accuracy of a saved bank");
    add_dataset_flags(probe, cfg, true);
    add_probe_flags(probe, cfg);
    probe->add_option("--bank", cfg.bank_path, "saved filter bank")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    sepmax::thread_count() = cfg.threads;
    try {
        if (si->parsed()) return cmd_si_eval(cfg);
        if (train->parsed()) return cmd_train(cfg);
        if (compare->parsed()) return cmd_compare(cfg);
        if (probe->parsed()) return cmd_probe(cfg);
        throw sepmax::config_error("no subcommand");
    } catch (const sepmax::config_error& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const sepmax::data_error& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 3;
    } catch (const sepmax::precondition_error& e) {
        std::cerr << "precondition violation: " << e.what() << "\n";
        return 4;
    } catch (const sepmax::numeric_error& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 5;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
