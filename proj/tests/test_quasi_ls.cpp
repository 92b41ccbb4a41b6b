#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <vector>

#include "sepmax/quasi_ls.hpp"
#include "sepmax/synth.hpp"
#include "test_util.hpp"

using sepmax::FeatureSet;
using sepmax::FilterBank;
using sepmax::LabeledSet;
using sepmax::Matrix;
using sepmax::PatchConfig;
using sepmax::QlsConfig;

namespace {

// 12-pattern, 3-class synthetic image set (1x4x4) with class structure.
LabeledSet twelve_pattern_set() {
    LabeledSet set;
    set.channels = 1;
    set.height = 4;
    set.width = 4;
    set.class_count = 3;
    set.patterns = Matrix(12, 16);
    set.labels.resize(12);
    std::mt19937_64 gen(2024);
    for (std::size_t q = 0; q < 12; ++q) {
        const int label = static_cast<int>(q % 3);
        set.labels[q] = label;
        for (std::size_t i = 0; i < 16; ++i) {
            const double base = label == 0 ? 0.2 : (label == 1 ? 0.5 : 0.8);
            set.patterns(q, i) = base + 0.15 * testutil::unit_double(gen);
        }
    }
    return sepmax::standardize(set);
}

FilterBank seeded_bank(std::size_t m, const PatchConfig& cfg, std::size_t channels,
                       std::uint64_t seed) {
    FilterBank bank;
    bank.filter_count = m;
    bank.channels = channels;
    bank.patch_config = cfg;
    std::mt19937_64 gen(seed);
    const std::size_t n_f = cfg.filter_dim(channels);
    for (std::size_t l = 0; l < m; ++l) {
        std::vector<double> theta(n_f);
        for (double& v : theta) v = 0.5 * testutil::unit_double(gen);
        bank.theta.push_back(std::move(theta));
        bank.bias.push_back(0.1 * testutil::unit_double(gen));
    }
    return bank;
}

FeatureSet features_from_rows(const Matrix& rows, std::vector<int> labels, std::size_t m,
                              std::size_t n) {
    FeatureSet f;
    f.values = rows;
    f.labels = std::move(labels);
    f.class_count = 3;
    f.filter_count = m;
    f.map_size = n;
    return f;
}

} // namespace

TEST_CASE("build_targets: identical features collapse to the common column") {
    Matrix rows(4, 6, 0.5);  // M=2, n=3
    auto feats = features_from_rows(rows, {0, 0, 1, 1}, 2, 3);
    auto assign = sepmax::friend_enemy(feats);
    auto [zfr, zen] = sepmax::build_targets(feats, assign, 1);
    REQUIRE(zfr.size() == 12);
    for (double v : zfr) CHECK(v == 0.5);
    for (double v : zen) CHECK(v == 0.5);
}

TEST_CASE("build_targets: rows match a hand-written gather loop") {
    std::mt19937_64 gen(9);
    Matrix rows(6, 8);  // M=2, n=4
    for (double& v : rows.data()) v = std::abs(testutil::unit_double(gen));
    auto feats = features_from_rows(rows, {0, 1, 2, 0, 1, 2}, 2, 4);
    auto assign = sepmax::friend_enemy(feats);
    for (std::size_t l = 0; l < 2; ++l) {
        auto [zfr, zen] = sepmax::build_targets(feats, assign, l);
        for (std::size_t q = 0; q < 6; ++q)
            for (std::size_t rho = 0; rho < 4; ++rho) {
                CHECK(zfr[q * 4 + rho] == rows(assign.friend_index[q], l * 4 + rho));
                CHECK(zen[q * 4 + rho] == rows(assign.enemy_index[q], l * 4 + rho));
            }
    }
}

TEST_CASE("build_targets: filter index out of range") {
    Matrix rows(4, 6, 0.5);
    auto feats = features_from_rows(rows, {0, 0, 1, 1}, 2, 3);
    auto assign = sepmax::friend_enemy(feats);
    CHECK_THROWS_AS(sepmax::build_targets(feats, assign, 2), sepmax::precondition_error);
}

TEST_CASE("phi_weights: entries are gamma on active units, 0 on inactive") {
    Matrix rows(2, 4);
    rows(0, 0) = 0.0;
    rows(0, 1) = 0.7;
    rows(1, 0) = 1.2;
    rows(1, 1) = 0.0;
    auto feats = features_from_rows(rows, {0, 1}, 1, 4);
    std::vector<double> gamma{2.0, 1.0};
    auto w = sepmax::phi_weights(feats, gamma, 0);
    CHECK(w == std::vector<double>{0.0, 2.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0});
}

TEST_CASE("phi_weights: nonzero count equals strictly positive unit count") {
    std::mt19937_64 gen(17);
    Matrix rows(5, 6);
    for (double& v : rows.data()) {
        const double x = testutil::unit_double(gen);
        v = x > 0.0 ? x : 0.0;
    }
    auto feats = features_from_rows(rows, {0, 1, 0, 1, 0}, 2, 3);
    std::vector<double> gamma(5, 1.0);
    for (std::size_t l = 0; l < 2; ++l) {
        auto w = sepmax::phi_weights(feats, gamma, l);
        std::size_t nonzero = 0, positive = 0;
        for (std::size_t q = 0; q < 5; ++q)
            for (std::size_t rho = 0; rho < 3; ++rho) {
                if (w[q * 3 + rho] != 0.0) ++nonzero;
                if (feats.at(q, l, rho) > 0.0) ++positive;
                CHECK((w[q * 3 + rho] == 0.0 || w[q * 3 + rho] == 1.0 || w[q * 3 + rho] == 2.0));
            }
        CHECK(nonzero == positive);
    }
}

TEST_CASE("phi_weights: negative features are rejected") {
    Matrix rows(2, 2);
    rows(0, 0) = -0.1;
    auto feats = features_from_rows(rows, {0, 1}, 1, 2);
    std::vector<double> gamma{1.0, 1.0};
    CHECK_THROWS_AS(sepmax::phi_weights(feats, gamma, 0), sepmax::precondition_error);
}

TEST_CASE("qls_step: identical patterns are a fixed point") {
    LabeledSet set;
    set.channels = 1;
    set.height = 2;
    set.width = 2;
    set.class_count = 2;
    set.patterns = Matrix(4, 4, 0.3);
    set.labels = {0, 0, 1, 1};
    PatchConfig cfg{2, 2, 1, 0};
    auto pm = sepmax::build_patch_matrix(set, cfg);
    auto bank = seeded_bank(2, cfg, 1, 5);

    QlsConfig qcfg;
    qcfg.filter_count = 2;
    qcfg.ridge = 1e-6;
    auto res = sepmax::qls_step(pm, set.labels, bank, qcfg);
    for (std::size_t l = 0; l < 2; ++l) {
        CHECK(res.bank.bias[l] == bank.bias[l]);
        for (std::size_t k = 0; k < 4; ++k) CHECK(res.bank.theta[l][k] == bank.theta[l][k]);
        CHECK(res.update_norms[l] == 0.0);
    }
}

TEST_CASE("qls_step: eta = 0 freezes the bank but still reports diagnostics") {
    auto set = twelve_pattern_set();
    PatchConfig cfg{2, 2, 1, 0};
    auto pm = sepmax::build_patch_matrix(set, cfg);
    auto bank = seeded_bank(2, cfg, 1, 7);
    QlsConfig qcfg;
    qcfg.filter_count = 2;
    qcfg.step_scale = 0.0;
    auto res = sepmax::qls_step(pm, set.labels, bank, qcfg);
    for (std::size_t l = 0; l < 2; ++l) {
        CHECK(res.bank.bias[l] == bank.bias[l]);
        CHECK(res.bank.theta[l] == bank.theta[l]);
    }
    CHECK(res.si >= 0.0);
    CHECK(res.gamma2_frac >= 0.0);
    CHECK(res.update_norms.size() == 2);  // psi norms still reported
}

TEST_CASE("qls_step: single step reproduces the hand-assembled normal equations") {
    auto set = twelve_pattern_set();
    PatchConfig cfg{2, 2, 1, 0};  // n = 9 patches per pattern, n_f = 4
    auto pm = sepmax::build_patch_matrix(set, cfg);
    auto bank = seeded_bank(2, cfg, 1, 41);
    const double ridge = 1e-6;

    QlsConfig qcfg;
    qcfg.filter_count = 2;
    qcfg.ridge = ridge;
    auto res = sepmax::qls_step(pm, set.labels, bank, qcfg);

    // ---- independent oracle: naive forward, naive neighbors, dense solves.
    const std::size_t n = pm.n, n_f = pm.n_f, q_count = 12, m = 2;
    Matrix feats(q_count, m * n);
    for (std::size_t q = 0; q < q_count; ++q) {
        Matrix patches = sepmax::extract_patches(set, q, cfg);
        for (std::size_t l = 0; l < m; ++l)
            for (std::size_t rho = 0; rho < n; ++rho) {
                double acc = bank.bias[l];
                for (std::size_t k = 0; k < n_f; ++k) acc += patches(rho, k) * bank.theta[l][k];
                feats(q, l * n + rho) = std::max(0.0, acc);
            }
    }
    // brute-force friend/enemy + gamma
    std::vector<std::size_t> fr(q_count), en(q_count);
    std::vector<double> gamma(q_count);
    for (std::size_t q = 0; q < q_count; ++q) {
        double bf = 1e300, be = 1e300;
        for (std::size_t h = 0; h < q_count; ++h) {
            if (h == q) continue;
            double d = 0.0;
            for (std::size_t k = 0; k < m * n; ++k) {
                const double t = feats(q, k) - feats(h, k);
                d += t * t;
            }
            if (set.labels[h] == set.labels[q] && d < bf) {
                bf = d;
                fr[q] = h;
            }
            if (set.labels[h] != set.labels[q] && d < be) {
                be = d;
                en[q] = h;
            }
        }
        gamma[q] = be <= bf ? 2.0 : 1.0;
    }
    // per-filter dense weighted solves
    for (std::size_t l = 0; l < m; ++l) {
        std::vector<double> w(q_count * n), zfr(q_count * n), zen(q_count * n);
        for (std::size_t q = 0; q < q_count; ++q)
            for (std::size_t rho = 0; rho < n; ++rho) {
                w[q * n + rho] = feats(q, l * n + rho) > 0.0 ? gamma[q] : 0.0;
                zfr[q * n + rho] = feats(fr[q], l * n + rho);
                zen[q * n + rho] = feats(en[q], l * n + rho);
            }
        auto psi_fr = testutil::normal_equation_oracle(pm.x, w, zfr, ridge);
        auto psi_en = testutil::normal_equation_oracle(pm.x, w, zen, ridge);
        for (std::size_t k = 0; k < n_f; ++k) {
            const double expect = bank.theta[l][k] + (psi_fr[k] - psi_en[k]);
            CHECK(res.bank.theta[l][k] == doctest::Approx(expect).epsilon(1e-8));
        }
        const double expect_bias = bank.bias[l] + (psi_fr[n_f] - psi_en[n_f]);
        CHECK(res.bank.bias[l] == doctest::Approx(expect_bias).epsilon(1e-8));
    }
}

TEST_CASE("qls_step: dead filter with zero ridge raises a singularity error") {
    auto set = twelve_pattern_set();
    PatchConfig cfg{2, 2, 1, 0};
    auto pm = sepmax::build_patch_matrix(set, cfg);
    auto bank = seeded_bank(2, cfg, 1, 11);
    std::fill(bank.theta[1].begin(), bank.theta[1].end(), 0.0);
    bank.bias[1] = 0.0;  // filter 1 never activates -> all-zero weights
    QlsConfig qcfg;
    qcfg.filter_count = 2;
    qcfg.ridge = 0.0;
    CHECK_THROWS_WITH_AS(sepmax::qls_step(pm, set.labels, bank, qcfg),
                         doctest::Contains("ridge"), sepmax::numeric_error);
    qcfg.ridge = 1e-8;  // any positive ridge heals it
    auto res = sepmax::qls_step(pm, set.labels, bank, qcfg);
    CHECK(res.update_norms.size() == 2);
}

TEST_CASE("qls_train: separable blobs reach SI 1 and never fall below init") {
    auto blobs = sepmax::standardize(sepmax::make_two_blobs(10, 4, 20.0, 3));
    PatchConfig cfg{2, 2, 2, 0};
    QlsConfig qcfg;
    qcfg.filter_count = 4;
    qcfg.t_stop = 3;
    qcfg.seed = 1;
    auto res = sepmax::qls_train(blobs, cfg, qcfg);
    CHECK(res.trace.iterates.size() == 4);
    CHECK(res.trace.best_si() == 1.0);
    CHECK(res.trace.best_si() >= res.trace.initial_si());
    CHECK(res.trace.selected_index <= 3);
    // selected index really is the argmax (ties to the later iterate)
    double mx = 0.0;
    for (const auto& it : res.trace.iterates) mx = std::max(mx, it.si);
    CHECK(res.trace.best_si() == mx);
    // the returned bank reproduces the selected SI
    auto pm = sepmax::build_patch_matrix(blobs, cfg);
    auto feats = sepmax::forward(res.bank, pm, blobs.labels, blobs.class_count);
    CHECK(sepmax::separation_index(feats) == res.trace.best_si());
}

TEST_CASE("qls_train: determinism of trace and bank") {
    auto set = twelve_pattern_set();
    PatchConfig cfg{2, 2, 1, 0};
    QlsConfig qcfg;
    qcfg.filter_count = 4;
    qcfg.t_stop = 3;
    qcfg.seed = 77;
    auto a = sepmax::qls_train(set, cfg, qcfg);
    auto b = sepmax::qls_train(set, cfg, qcfg);
    CHECK(sepmax::trace_to_csv(a.trace) == sepmax::trace_to_csv(b.trace));
    CHECK(a.bank.theta == b.bank.theta);
    CHECK(a.bank.bias == b.bank.bias);
    CHECK(a.trace.selected_index == b.trace.selected_index);
}

TEST_CASE("qls_train: last-iterate selection is available") {
    auto set = twelve_pattern_set();
    PatchConfig cfg{2, 2, 1, 0};
    QlsConfig qcfg;
    qcfg.filter_count = 2;
    qcfg.t_stop = 2;
    qcfg.selection = QlsConfig::Selection::last_iterate;
    auto res = sepmax::qls_train(set, cfg, qcfg);
    CHECK(res.trace.selected_index == 2);
}

TEST_CASE("qls_train: preconditions") {
    auto set = twelve_pattern_set();
    PatchConfig cfg{2, 2, 1, 0};
    QlsConfig qcfg;
    qcfg.filter_count = 2;
    qcfg.t_stop = 0;
    CHECK_THROWS_AS(sepmax::qls_train(set, cfg, qcfg), sepmax::config_error);
    qcfg.t_stop = 1;

    auto raw = sepmax::make_two_blobs(5, 4, 20.0, 3);  // not standardized
    CHECK_THROWS_AS(sepmax::qls_train(raw, cfg, qcfg), sepmax::precondition_error);

    auto single = sepmax::standardize(sepmax::make_two_blobs(5, 4, 20.0, 3));
    single.labels.assign(single.size(), 0);
    CHECK_THROWS_AS(sepmax::qls_train(single, cfg, qcfg), sepmax::precondition_error);
}

TEST_CASE("trace serialization: CSV schema and JSON wall time") {
    auto set = twelve_pattern_set();
    PatchConfig cfg{2, 2, 1, 0};
    QlsConfig qcfg;
    qcfg.filter_count = 2;
    qcfg.t_stop = 2;
    auto res = sepmax::qls_train(set, cfg, qcfg);
    auto csv = sepmax::trace_to_csv(res.trace);
    CHECK(csv.rfind("t,si,loss_j,gamma2_frac,mean_update_norm\n", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 4);  // header + 3 iterates
    auto j = sepmax::trace_to_json(res.trace);
    CHECK(j["iterates"].size() == 3);
    CHECK(j["iterates"][1].contains("wall_seconds"));
    CHECK(j["selected_index"].get<std::size_t>() == res.trace.selected_index);
}

TEST_CASE("qls_train: si_subsample changes logging only, deterministically") {
    auto set = twelve_pattern_set();
    PatchConfig cfg{2, 2, 1, 0};
    QlsConfig qcfg;
    qcfg.filter_count = 2;
    qcfg.t_stop = 2;
    qcfg.seed = 5;
    auto full = sepmax::qls_train(set, cfg, qcfg);
    qcfg.si_subsample = 6;
    auto sub1 = sepmax::qls_train(set, cfg, qcfg);
    auto sub2 = sepmax::qls_train(set, cfg, qcfg);
    CHECK(sepmax::trace_to_csv(sub1.trace) == sepmax::trace_to_csv(sub2.trace));
    CHECK(sub1.trace.iterates.size() == full.trace.iterates.size());
    for (const auto& it : sub1.trace.iterates) {
        CHECK(it.si >= 0.0);
        CHECK(it.si <= 1.0);
        // 6 anchors: logged SI is a multiple of 1/6
        CHECK(std::abs(it.si * 6.0 - std::round(it.si * 6.0)) <= 1e-12);
    }
    CHECK(sub1.trace.best_si() >= sub1.trace.initial_si());
    // the parameter path is identical: update norms agree with the full run
    for (std::size_t t = 1; t < full.trace.iterates.size(); ++t)
        CHECK(sub1.trace.iterates[t].update_norms == full.trace.iterates[t].update_norms);
}

TEST_CASE("qls_train: reports a rank-deficient patch covariance") {
    // 2 patterns of 3x3 with a 3x3 kernel: 2 patch rows, 9 dims
    sepmax::LabeledSet tiny;
    tiny.channels = 1;
    tiny.height = 3;
    tiny.width = 3;
    tiny.class_count = 2;
    tiny.patterns = Matrix(2, 9);
    for (std::size_t i = 0; i < 9; ++i) {
        tiny.patterns(0, i) = static_cast<double>(i);
        tiny.patterns(1, i) = 8.0 - static_cast<double>(i);
    }
    tiny.labels = {0, 1};
    CHECK_THROWS_AS(sepmax::qls_train(sepmax::standardize(tiny), PatchConfig{3, 3, 1, 0},
                                      QlsConfig{}),
                    sepmax::precondition_error);  // singleton classes

    auto set = sepmax::standardize(sepmax::make_image_classes(2, 3, 3, 0.3, 9));
    QlsConfig qcfg;
    qcfg.filter_count = 2;
    qcfg.t_stop = 1;
    auto res = sepmax::qls_train(set, PatchConfig{3, 3, 1, 0}, qcfg);
    CHECK(res.stats_under_determined);  // 6 patch rows < 9 dims
}

TEST_CASE("qls_train: trace does not depend on the thread count") {
    auto set = twelve_pattern_set();
    PatchConfig cfg{2, 2, 1, 0};
    QlsConfig qcfg;
    qcfg.filter_count = 4;
    qcfg.t_stop = 2;
    sepmax::thread_count() = 1;
    auto one = sepmax::qls_train(set, cfg, qcfg);
    sepmax::thread_count() = 4;
    auto four = sepmax::qls_train(set, cfg, qcfg);
    sepmax::thread_count() = 0;
    CHECK(sepmax::trace_to_csv(one.trace) == sepmax::trace_to_csv(four.trace));
    CHECK(one.bank.theta == four.bank.theta);
    CHECK(one.bank.bias == four.bank.bias);
}
