#ifndef SEPMAX_PATCHES_HPP
#define SEPMAX_PATCHES_HPP

#include <cstddef>
#include <string>

#include "sepmax/dataset.hpp"
#include "sepmax/errors.hpp"
#include "sepmax/linalg.hpp"
#include "sepmax/parallel.hpp"

namespace sepmax {

/// First-layer convolution geometry. Patches are flattened channel-major,
/// then kernel row, then kernel column — the one vectorization order used
/// everywhere (extraction, PCA init, forward pass, LS solves).
struct PatchConfig {
    std::size_t kernel_h = 5;
    std::size_t kernel_w = 5;
    std::size_t stride = 1;
    std::size_t padding = 0;  // zero padding

    std::size_t out_h(std::size_t height) const {
        return (height + 2 * padding - kernel_h) / stride + 1;
    }
    std::size_t out_w(std::size_t width) const {
        return (width + 2 * padding - kernel_w) / stride + 1;
    }
    /// Patches per pattern.
    std::size_t patches_per_pattern(std::size_t height, std::size_t width) const {
        return out_h(height) * out_w(width);
    }
    /// Filter parameter count without bias.
    std::size_t filter_dim(std::size_t channels) const { return kernel_h * kernel_w * channels; }

    void validate(std::size_t height, std::size_t width) const {
        if (kernel_h < 1 || kernel_w < 1) throw config_error("kernel dims must be >= 1");
        if (stride < 1) throw config_error("stride must be >= 1");
        if (kernel_h > height + 2 * padding || kernel_w > width + 2 * padding)
            throw config_error("kernel " + std::to_string(kernel_h) + "x" +
                               std::to_string(kernel_w) + " larger than padded pattern " +
                               std::to_string(height + 2 * padding) + "x" +
                               std::to_string(width + 2 * padding));
    }
};

/// All receptive-field patches of all patterns, stacked row-wise in pattern
/// order with a trailing column of ones so biases join least-squares solves.
/// Row (q, rho) holds the flattened rho-th patch of pattern q; rho runs
/// row-major over output positions.
struct PatchMatrix {
    Matrix x;                // (n * q_count) x (n_f + 1), last column all ones
    std::size_t q_count = 0;
    std::size_t n = 0;       // patches per pattern
    std::size_t n_f = 0;     // patch dimension without bias
    PatchConfig config;

    std::size_t row_of(std::size_t q, std::size_t rho) const { return q * n + rho; }
};

/// Extract the n x n_f patch matrix of a single pattern (no bias column).
inline Matrix extract_patches(const LabeledSet& set, std::size_t q, const PatchConfig& cfg) {
    cfg.validate(set.height, set.width);
    const std::size_t oh = cfg.out_h(set.height);
    const std::size_t ow = cfg.out_w(set.width);
    const std::size_t n_f = cfg.filter_dim(set.channels);
    Matrix out(oh * ow, n_f);
    const long pad = static_cast<long>(cfg.padding);
    for (std::size_t oi = 0; oi < oh; ++oi) {
        for (std::size_t oj = 0; oj < ow; ++oj) {
            double* dst = out.row(oi * ow + oj).data();
            std::size_t k = 0;
            for (std::size_t c = 0; c < set.channels; ++c)
                for (std::size_t ki = 0; ki < cfg.kernel_h; ++ki) {
                    const long ii = static_cast<long>(oi * cfg.stride + ki) - pad;
                    for (std::size_t kj = 0; kj < cfg.kernel_w; ++kj, ++k) {
                        const long jj = static_cast<long>(oj * cfg.stride + kj) - pad;
                        const bool inside = ii >= 0 && jj >= 0 &&
                                            ii < static_cast<long>(set.height) &&
                                            jj < static_cast<long>(set.width);
                        dst[k] = inside ? set.at(q, c, static_cast<std::size_t>(ii),
                                                 static_cast<std::size_t>(jj))
                                        : 0.0;
                    }
                }
        }
    }
    return out;
}

/// Build the stacked patch matrix over the whole set, bias column included.
inline PatchMatrix build_patch_matrix(const LabeledSet& set, const PatchConfig& cfg) {
    cfg.validate(set.height, set.width);
    PatchMatrix pm;
    pm.q_count = set.size();
    pm.n = cfg.patches_per_pattern(set.height, set.width);
    pm.n_f = cfg.filter_dim(set.channels);
    pm.config = cfg;
    pm.x = Matrix(pm.n * pm.q_count, pm.n_f + 1);
    parallel_for(pm.q_count, [&](std::size_t q) {
        Matrix block = extract_patches(set, q, cfg);
        for (std::size_t rho = 0; rho < pm.n; ++rho) {
            double* dst = pm.x.row(q * pm.n + rho).data();
            const double* src = block.row(rho).data();
            for (std::size_t k = 0; k < pm.n_f; ++k) dst[k] = src[k];
            dst[pm.n_f] = 1.0;
        }
    });
    return pm;
}

} // namespace sepmax

#endif
