#ifndef SEPMAX_PCA_INIT_HPP
#define SEPMAX_PCA_INIT_HPP

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "sepmax/errors.hpp"
#include "sepmax/filter_bank.hpp"
#include "sepmax/linalg.hpp"
#include "sepmax/patches.hpp"
#include "sepmax/rng.hpp"

namespace sepmax {

/// First and second moments of the training patches (bias column excluded):
/// the mean patch and the patch covariance.
struct PatchStats {
    std::vector<double> mean;  // length n_f
    Matrix covariance;         // n_f x n_f, symmetric PSD
    std::size_t sample_count = 0;  // Q_B = n * Q

    /// True when there are fewer patch samples than patch dimensions, in
    /// which case the covariance is rank-deficient.
    bool under_determined() const { return sample_count < mean.size(); }
};

/// Two-pass mean/covariance over all patch rows.
inline PatchStats patch_stats(const PatchMatrix& pm) {
    const std::size_t rows = pm.x.rows();
    const std::size_t n_f = pm.n_f;
    if (rows < 2) throw precondition_error("patch_stats: need at least 2 patch rows");

    PatchStats stats;
    stats.sample_count = rows;
    stats.mean.assign(n_f, 0.0);
    for (std::size_t r = 0; r < rows; ++r) {
        const double* xr = pm.x.row(r).data();
        for (std::size_t k = 0; k < n_f; ++k) stats.mean[k] += xr[k];
    }
    for (double& v : stats.mean) v /= static_cast<double>(rows);

    stats.covariance = Matrix(n_f, n_f);
    std::vector<double> centered(n_f);
    for (std::size_t r = 0; r < rows; ++r) {
        const double* xr = pm.x.row(r).data();
        for (std::size_t k = 0; k < n_f; ++k) centered[k] = xr[k] - stats.mean[k];
        for (std::size_t i = 0; i < n_f; ++i) {
            const double ci = centered[i];
            double* row = &stats.covariance(i, i);
            for (std::size_t j = i; j < n_f; ++j) row[j - i] += ci * centered[j];
        }
    }
    for (std::size_t i = 0; i < n_f; ++i)
        for (std::size_t j = i; j < n_f; ++j) {
            stats.covariance(i, j) /= static_cast<double>(rows);
            stats.covariance(j, i) = stats.covariance(i, j);
        }
    return stats;
}

namespace detail {

inline std::size_t channels_for(const PatchStats& stats, const PatchConfig& cfg) {
    const std::size_t window = cfg.kernel_h * cfg.kernel_w;
    if (window == 0 || stats.mean.size() % window != 0)
        throw config_error("filter init: patch dimension " + std::to_string(stats.mean.size()) +
                           " is not a multiple of the kernel window " + std::to_string(window));
    return stats.mean.size() / window;
}

inline double neg_mean_dot(const PatchStats& stats, const std::vector<double>& theta) {
    double b = 0.0;
    for (std::size_t k = 0; k < theta.size(); ++k) b -= stats.mean[k] * theta[k];
    return b;
}

inline std::vector<double> random_unit_direction(Rng& rng, std::size_t n_f) {
    std::vector<double> v(n_f);
    const double sigma = 1.0 / std::sqrt(static_cast<double>(n_f));
    double norm2 = 0.0;
    while (norm2 == 0.0) {
        for (double& x : v) x = sigma * rng.gaussian();
        norm2 = 0.0;
        for (double x : v) norm2 += x * x;
    }
    const double inv = 1.0 / std::sqrt(norm2);
    for (double& x : v) x *= inv;
    return v;
}

} // namespace detail

/// Stage-1 filter initialization: filters come in +/- eigenvector pairs of
/// the patch covariance, in descending eigenvalue order; biases center each
/// filter on the mean patch (b = -mean . theta, so the mean patch maps to
/// pre-activation zero). When M exceeds 2 n_F the surplus filters are
/// seeded unit-norm random directions with the same bias rule.
inline FilterBank pca_filter_init(const PatchStats& stats, std::size_t filter_count,
                                  const PatchConfig& cfg, std::uint64_t seed) {
    if (filter_count < 1) throw config_error("pca_filter_init: M must be >= 1");
    const std::size_t n_f = stats.mean.size();

    FilterBank bank;
    bank.filter_count = filter_count;
    bank.channels = detail::channels_for(stats, cfg);
    bank.patch_config = cfg;
    bank.theta.reserve(filter_count);
    bank.bias.reserve(filter_count);

    const EigenResult eig = sym_eig(stats.covariance);
    Rng rng(seed, "random-filters");
    for (std::size_t l = 0; l < filter_count; ++l) {
        std::vector<double> theta(n_f);
        if (l < 2 * n_f) {
            const std::size_t tau = l / 2;
            const double sign = l % 2 == 0 ? 1.0 : -1.0;
            for (std::size_t k = 0; k < n_f; ++k) theta[k] = sign * eig.vectors(k, tau);
        } else {
            theta = detail::random_unit_direction(rng, n_f);
        }
        bank.bias.push_back(detail::neg_mean_dot(stats, theta));
        bank.theta.push_back(std::move(theta));
    }
    return bank;
}

/// Baseline bank for comparisons: seeded unit-norm random directions with
/// the same mean-centering bias rule as the PCA initialization.
inline FilterBank random_filter_bank(const PatchStats& stats, std::size_t filter_count,
                                     const PatchConfig& cfg, std::uint64_t seed) {
    if (filter_count < 1) throw config_error("random_filter_bank: M must be >= 1");
    FilterBank bank;
    bank.filter_count = filter_count;
    bank.channels = detail::channels_for(stats, cfg);
    bank.patch_config = cfg;
    Rng rng(seed, "random-filters");
    for (std::size_t l = 0; l < filter_count; ++l) {
        auto theta = detail::random_unit_direction(rng, stats.mean.size());
        bank.bias.push_back(detail::neg_mean_dot(stats, theta));
        bank.theta.push_back(std::move(theta));
    }
    return bank;
}

} // namespace sepmax

#endif
