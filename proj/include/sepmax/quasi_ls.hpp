#ifndef SEPMAX_QUASI_LS_HPP
#define SEPMAX_QUASI_LS_HPP

#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "sepmax/dataset.hpp"
#include "sepmax/errors.hpp"
#include "sepmax/filter_bank.hpp"
#include "sepmax/linalg.hpp"
#include "sepmax/parallel.hpp"
#include "sepmax/patches.hpp"
#include "sepmax/pca_init.hpp"
#include "sepmax/rng.hpp"
#include "sepmax/separation.hpp"

namespace sepmax {

/// Quasi-least-squares training configuration.
struct QlsConfig {
    std::size_t filter_count = 16;  // M
    std::size_t t_stop = 10;
    /// Ridge added to every LS solve; unset means
    /// 1e-6 * trace(X^T X) / (n_F + 1), computed from the patch matrix.
    std::optional<double> ridge;
    double step_scale = 1.0;  // eta applied to each psi^t
    /// When set and smaller than Q, the logged SI averages over this many
    /// seeded anchors. The parameter update always uses the full set.
    std::optional<std::size_t> si_subsample;
    std::uint64_t seed = 0;

    /// Which iterate becomes the returned bank: the best-SI iterate
    /// (including the initialization snapshot) or literally the last one.
    enum class Selection { best_si, last_iterate };
    Selection selection = Selection::best_si;

    void validate() const {
        if (filter_count < 1) throw config_error("qls: filter_count must be >= 1");
        if (t_stop < 1) throw config_error("qls: t_stop must be >= 1");
        if (!(step_scale >= 0.0)) throw config_error("qls: step_scale must be >= 0");
        if (ridge && *ridge < 0.0) throw config_error("qls: ridge must be >= 0");
        if (si_subsample && *si_subsample < 1)
            throw config_error("qls: si_subsample must be >= 1");
    }
};

/// One recorded iterate. t = 0 is the PCA-initialized snapshot; its update
/// norms are empty because no update produced it.
struct QlsIterate {
    std::size_t t = 0;
    double si = 0.0;
    double loss_j = 0.0;
    double gamma2_frac = 0.0;
    std::vector<double> update_norms;  // |psi^t| per filter
    double wall_seconds = 0.0;

    double mean_update_norm() const {
        if (update_norms.empty()) return 0.0;
        double s = 0.0;
        for (double v : update_norms) s += v;
        return s / static_cast<double>(update_norms.size());
    }
};

/// Per-iteration record of a training run plus the selected iterate.
struct QlsTrace {
    std::vector<QlsIterate> iterates;
    std::size_t selected_index = 0;

    double best_si() const { return iterates[selected_index].si; }
    double initial_si() const { return iterates.front().si; }
};

/// Default ridge: 1e-6 * trace(X^T X) / (n_F + 1).
inline double default_ridge(const PatchMatrix& pm) {
    double trace = 0.0;
    for (double v : pm.x.data()) trace += v * v;
    return 1e-6 * trace / static_cast<double>(pm.n_f + 1);
}

/// Gather the friend and enemy target columns for filter l: row (q, rho)
/// holds the l-th feature-map value of q's friend (resp. enemy) at patch
/// position rho, stacked in patch-matrix row order.
inline std::pair<std::vector<double>, std::vector<double>> build_targets(
    const FeatureSet& features, const NeighborAssignment& assign, std::size_t l) {
    if (l >= features.filter_count) throw precondition_error("build_targets: filter index out of range");
    if (assign.size() != features.size())
        throw precondition_error("build_targets: assignment/feature size mismatch");
    const std::size_t n = features.map_size;
    const std::size_t q_count = features.size();
    std::vector<double> zfr(q_count * n), zen(q_count * n);
    for (std::size_t q = 0; q < q_count; ++q) {
        const double* fr = features.values.row(assign.friend_index[q]).data() + l * n;
        const double* en = features.values.row(assign.enemy_index[q]).data() + l * n;
        double* dfr = zfr.data() + q * n;
        double* den = zen.data() + q * n;
        for (std::size_t rho = 0; rho < n; ++rho) {
            dfr[rho] = fr[rho];
            den[rho] = en[rho];
        }
    }
    return {std::move(zfr), std::move(zen)};
}

/// The diagonal of the LS weight matrix for filter l, flattened to patch-
/// matrix row order: gamma_q on active (strictly positive) units, 0 on
/// inactive ones. Entries are in {0, 1, 2}.
inline std::vector<double> phi_weights(const FeatureSet& features,
                                       const std::vector<double>& gamma, std::size_t l) {
    if (l >= features.filter_count) throw precondition_error("phi_weights: filter index out of range");
    if (gamma.size() != features.size())
        throw precondition_error("phi_weights: gamma/feature size mismatch");
    const std::size_t n = features.map_size;
    std::vector<double> w(features.size() * n);
    for (std::size_t q = 0; q < features.size(); ++q) {
        const double* z = features.values.row(q).data() + l * n;
        const double g = gamma[q];
        double* dst = w.data() + q * n;
        for (std::size_t rho = 0; rho < n; ++rho) {
            if (z[rho] < 0.0)
                throw precondition_error("phi_weights: negative feature value; "
                                         "features must be post-ReLU");
            dst[rho] = z[rho] > 0.0 ? g : 0.0;
        }
    }
    return w;
}

namespace detail {

// Solve the 2M weighted LS problems of one iteration from a fixed
// assignment and apply theta_l += eta * psi_l. Returns |psi_l| per filter.
inline std::vector<double> apply_qls_update(const PatchMatrix& pm, const FeatureSet& feats,
                                            const NeighborAssignment& assign,
                                            const std::vector<double>& gamma, double ridge,
                                            double eta, FilterBank& bank) {
    const std::size_t m = bank.filter_count;
    const std::size_t n_f = pm.n_f;
    std::vector<std::vector<double>> psi(m);
    parallel_for(m, [&](std::size_t l) {
        const auto w = phi_weights(feats, gamma, l);
        auto [zfr, zen] = build_targets(feats, assign, l);
        std::vector<double> psi_fr, psi_en;
        try {
            psi_fr = weighted_ridge_ls(pm.x, w, zfr, ridge);
            psi_en = weighted_ridge_ls(pm.x, w, zen, ridge);
        } catch (const numeric_error& e) {
            throw numeric_error("qls update, filter " + std::to_string(l) + ": " + e.what());
        }
        for (std::size_t k = 0; k <= n_f; ++k) psi_fr[k] -= psi_en[k];
        psi[l] = std::move(psi_fr);
    });

    std::vector<double> norms(m);
    for (std::size_t l = 0; l < m; ++l) {
        double n2 = 0.0;
        for (double v : psi[l]) n2 += v * v;
        norms[l] = std::sqrt(n2);
        for (std::size_t k = 0; k < n_f; ++k) bank.theta[l][k] += eta * psi[l][k];
        bank.bias[l] += eta * psi[l][n_f];
    }
    return norms;
}

// Logged SI: over all anchors, or over a fixed anchor subset when
// subsampling is on. The assignment itself is always full.
inline double logged_si(const NeighborAssignment& assign,
                        const std::vector<std::size_t>& anchors) {
    if (anchors.empty()) return separation_index(assign);
    std::size_t hits = 0;
    for (std::size_t q : anchors) {
        const bool friend_wins =
            assign.friend_sqdist[q] < assign.enemy_sqdist[q] ||
            (assign.friend_sqdist[q] == assign.enemy_sqdist[q] &&
             assign.friend_index[q] < assign.enemy_index[q]);
        if (friend_wins) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(anchors.size());
}

inline double gamma2_fraction(const std::vector<double>& gamma) {
    std::size_t twos = 0;
    for (double g : gamma)
        if (g == 2.0) ++twos;
    return static_cast<double>(twos) / static_cast<double>(gamma.size());
}

} // namespace detail

/// Diagnostics of a single step: the metrics of the bank the step started
/// from, plus the norms of the updates it produced.
struct QlsStepResult {
    FilterBank bank;
    double si = 0.0;
    double loss_j = 0.0;
    double gamma2_frac = 0.0;
    std::vector<double> update_norms;
};

/// One quasi-LS iteration: forward pass, friend/enemy search, importance
/// weights, 2M weighted LS solves, parameter update. Self-contained; for
/// multi-iteration training prefer qls_train, which reuses each iterate's
/// neighbor search for both logging and the next update.
inline QlsStepResult qls_step(const PatchMatrix& pm, const std::vector<int>& labels,
                              const FilterBank& bank, const QlsConfig& cfg) {
    cfg.validate();
    QlsStepResult res;
    res.bank = bank;
    const FeatureSet feats = forward(bank, pm, labels);
    const NeighborAssignment assign = friend_enemy(feats);
    const std::vector<double> gamma = gamma_weights(assign);
    const double ridge = cfg.ridge ? *cfg.ridge : default_ridge(pm);
    res.si = separation_index(assign);
    res.loss_j = minimax_loss(feats, assign, gamma);
    res.gamma2_frac = detail::gamma2_fraction(gamma);
    res.update_norms =
        detail::apply_qls_update(pm, feats, assign, gamma, ridge, cfg.step_scale, res.bank);
    return res;
}

struct QlsTrainResult {
    FilterBank bank;
    QlsTrace trace;
    /// Fewer patch samples than patch dimensions: covariance was
    /// rank-deficient. Callers may want to surface a warning.
    bool stats_under_determined = false;
};

/// Full training run: PCA initialization, t_stop quasi-LS iterations with
/// SI recorded at every iterate (t = 0 included), and selection of the
/// returned iterate per cfg.selection. With best-SI selection the returned
/// bank never scores below the initialization — asserted on every run.
inline QlsTrainResult qls_train(const LabeledSet& set, const PatchConfig& patch_cfg,
                                const QlsConfig& cfg) {
    cfg.validate();
    if (!set.channel_stats)
        throw precondition_error("qls_train: set must be standardized first");
    {
        auto hist = set.class_histogram();
        if (hist.size() < 2) throw precondition_error("qls_train: need at least 2 classes");
        for (const auto& [cls, count] : hist)
            if (count < 2)
                throw precondition_error("qls_train: class " + std::to_string(cls) +
                                         " has a single pattern; every class needs at least 2");
    }

    using clock = std::chrono::steady_clock;
    auto tick = clock::now();
    auto lap = [&tick]() {
        auto now = clock::now();
        double s = std::chrono::duration<double>(now - tick).count();
        tick = now;
        return s;
    };

    const PatchMatrix pm = build_patch_matrix(set, patch_cfg);
    const PatchStats stats = patch_stats(pm);
    const double ridge = cfg.ridge ? *cfg.ridge : default_ridge(pm);

    FilterBank bank = pca_filter_init(stats, cfg.filter_count, patch_cfg, cfg.seed);
    bank.channel_stats = set.channel_stats;

    // Fixed anchor subset for SI logging, if requested.
    std::vector<std::size_t> anchors;
    if (cfg.si_subsample && *cfg.si_subsample < set.size()) {
        std::vector<std::size_t> all(set.size());
        for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
        Rng rng(cfg.seed, "si-subsample");
        rng.shuffle(all);
        anchors.assign(all.begin(), all.begin() + static_cast<long>(*cfg.si_subsample));
        std::sort(anchors.begin(), anchors.end());
    }

    QlsTrace trace;
    FeatureSet feats = forward(bank, pm, set.labels, set.class_count);
    NeighborAssignment assign = friend_enemy(feats);
    std::vector<double> gamma = gamma_weights(assign);

    QlsIterate it0;
    it0.t = 0;
    it0.si = detail::logged_si(assign, anchors);
    it0.loss_j = minimax_loss(feats, assign, gamma);
    it0.gamma2_frac = detail::gamma2_fraction(gamma);
    it0.wall_seconds = lap();
    trace.iterates.push_back(std::move(it0));

    FilterBank best_bank = bank;
    double best_si = trace.iterates[0].si;
    std::size_t best_index = 0;

    for (std::size_t t = 1; t <= cfg.t_stop; ++t) {
        QlsIterate rec;
        rec.t = t;
        rec.update_norms =
            detail::apply_qls_update(pm, feats, assign, gamma, ridge, cfg.step_scale, bank);
        feats = forward(bank, pm, set.labels, set.class_count);
        assign = friend_enemy(feats);
        gamma = gamma_weights(assign);
        rec.si = detail::logged_si(assign, anchors);
        rec.loss_j = minimax_loss(feats, assign, gamma);
        rec.gamma2_frac = detail::gamma2_fraction(gamma);
        rec.wall_seconds = lap();
        if (cfg.selection == QlsConfig::Selection::best_si && rec.si >= best_si) {
            best_si = rec.si;  // ties go to the later iterate
            best_bank = bank;
            best_index = t;
        }
        trace.iterates.push_back(std::move(rec));
    }

    QlsTrainResult res;
    res.stats_under_determined = stats.under_determined();
    if (cfg.selection == QlsConfig::Selection::best_si) {
        trace.selected_index = best_index;
        res.bank = std::move(best_bank);
        if (trace.best_si() < trace.initial_si())
            throw numeric_error("qls_train: selected iterate scores below initialization");
    } else {
        trace.selected_index = cfg.t_stop;
        res.bank = std::move(bank);
    }
    res.trace = std::move(trace);
    return res;
}

// ---- trace serialization ----------------------------------------------

namespace detail {

inline std::string fmt_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

} // namespace detail

/// Deterministic CSV: one row per iterate. Wall time is reported in the
/// JSON trace only, so reruns with the same seed are byte-identical.
inline std::string trace_to_csv(const QlsTrace& trace) {
    std::string out = "t,si,loss_j,gamma2_frac,mean_update_norm\n";
    for (const auto& it : trace.iterates) {
        out += std::to_string(it.t);
        out += ',';
        out += detail::fmt_double(it.si);
        out += ',';
        out += detail::fmt_double(it.loss_j);
        out += ',';
        out += detail::fmt_double(it.gamma2_frac);
        out += ',';
        out += detail::fmt_double(it.mean_update_norm());
        out += '\n';
    }
    return out;
}

inline nlohmann::json trace_to_json(const QlsTrace& trace) {
    nlohmann::json j;
    j["selected_index"] = trace.selected_index;
    j["iterates"] = nlohmann::json::array();
    for (const auto& it : trace.iterates) {
        j["iterates"].push_back({{"t", it.t},
                                 {"si", it.si},
                                 {"loss_j", it.loss_j},
                                 {"gamma2_frac", it.gamma2_frac},
                                 {"update_norms", it.update_norms},
                                 {"mean_update_norm", it.mean_update_norm()},
                                 {"wall_seconds", it.wall_seconds}});
    }
    return j;
}

} // namespace sepmax

#endif
