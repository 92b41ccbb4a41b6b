#ifndef SEPMAX_SYNTH_HPP
#define SEPMAX_SYNTH_HPP

// Deterministic synthetic datasets: small geometric fixtures for metric
// tests and a harder image-like generator for end-to-end experiments when
// no real archive is on disk.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <vector>

#include "sepmax/dataset.hpp"
#include "sepmax/rng.hpp"

namespace sepmax {

/// Two spherical Gaussian blobs (one per class) of `per_class` points each,
/// rendered as side x side single-channel patterns. Centers sit
/// `separation` standard deviations apart, so with separation >> 1 every
/// nearest neighbor is in-class and SI = 1.
inline LabeledSet make_two_blobs(std::size_t per_class, std::size_t side, double separation,
                                 std::uint64_t seed) {
    const std::size_t dim = side * side;
    LabeledSet set;
    set.channels = 1;
    set.height = side;
    set.width = side;
    set.class_count = 2;
    set.patterns = Matrix(2 * per_class, dim);
    set.labels.resize(2 * per_class);
    Rng rng(seed, "blobs");
    const double offset = separation / std::sqrt(static_cast<double>(dim));
    for (std::size_t q = 0; q < 2 * per_class; ++q) {
        const int label = q < per_class ? 0 : 1;
        set.labels[q] = label;
        double* row = set.patterns.row(q).data();
        for (std::size_t d = 0; d < dim; ++d)
            row[d] = (label == 0 ? 0.0 : offset) + rng.gaussian();
    }
    return set;
}

/// Equally spaced points on a line with alternating labels; every point's
/// nearest neighbor carries the other label, so SI = 0.
inline LabeledSet make_alternating_line(std::size_t count = 6) {
    LabeledSet set;
    set.channels = 1;
    set.height = 1;
    set.width = 1;
    set.class_count = 2;
    set.patterns = Matrix(count, 1);
    set.labels.resize(count);
    for (std::size_t q = 0; q < count; ++q) {
        set.patterns(q, 0) = static_cast<double>(q);
        set.labels[q] = static_cast<int>(q % 2);
    }
    return set;
}

/// Uniformly random patterns with seeded random labels: the hard fixture
/// for oracle comparisons.
inline LabeledSet make_random_labeled(std::size_t count, std::size_t dim, int classes,
                                      std::uint64_t seed) {
    LabeledSet set;
    set.channels = 1;
    set.height = 1;
    set.width = dim;
    set.class_count = classes;
    set.patterns = Matrix(count, dim);
    set.labels.resize(count);
    Rng rng(seed, "random-labeled");
    for (std::size_t q = 0; q < count; ++q) {
        double* row = set.patterns.row(q).data();
        for (std::size_t d = 0; d < dim; ++d) row[d] = rng.uniform();
        set.labels[q] = static_cast<int>(rng.below(static_cast<std::uint64_t>(classes)));
    }
    return set;
}

/// Image-like multi-class generator: each class owns a smooth prototype
/// (a sum of random Gaussian bumps); samples are randomly shifted, scaled
/// and noised copies clipped to [0,1]. With the default noise the classes
/// overlap enough that pixel-space SI sits well below 1.
///
/// The prototypes are drawn from `proto_seed` (defaulting to `seed`), so
/// train and test pools generated with different sample seeds share one
/// class structure when given the same proto_seed.
inline LabeledSet make_image_classes(int classes, std::size_t per_class, std::size_t side,
                                     double noise, std::uint64_t seed, int max_shift = 2,
                                     std::optional<std::uint64_t> proto_seed = std::nullopt) {
    const std::size_t dim = side * side;
    LabeledSet set;
    set.channels = 1;
    set.height = side;
    set.width = side;
    set.class_count = classes;
    set.patterns = Matrix(static_cast<std::size_t>(classes) * per_class, dim);
    set.labels.resize(set.patterns.rows());

    std::vector<std::vector<double>> protos(static_cast<std::size_t>(classes),
                                            std::vector<double>(dim, 0.0));
    Rng proto_rng(proto_seed.value_or(seed), "prototypes");
    for (auto& proto : protos) {
        const int bumps = 3 + static_cast<int>(proto_rng.below(3));
        for (int b = 0; b < bumps; ++b) {
            const double cx = proto_rng.uniform() * static_cast<double>(side);
            const double cy = proto_rng.uniform() * static_cast<double>(side);
            const double amp = 0.5 + proto_rng.uniform();
            const double sigma = 1.5 + 2.5 * proto_rng.uniform();
            for (std::size_t i = 0; i < side; ++i)
                for (std::size_t j = 0; j < side; ++j) {
                    const double dy = static_cast<double>(i) - cy;
                    const double dx = static_cast<double>(j) - cx;
                    proto[i * side + j] += amp * std::exp(-(dx * dx + dy * dy) / (2 * sigma * sigma));
                }
        }
        double mx = 0.0;
        for (double v : proto) mx = std::max(mx, v);
        if (mx > 0.0)
            for (double& v : proto) v /= mx;
    }

    Rng rng(seed, "image-classes");
    for (std::size_t q = 0; q < set.patterns.rows(); ++q) {
        const int label = static_cast<int>(q / per_class);
        set.labels[q] = label;
        const auto& proto = protos[static_cast<std::size_t>(label)];
        const int si = static_cast<int>(rng.below(static_cast<std::uint64_t>(2 * max_shift + 1))) - max_shift;
        const int sj = static_cast<int>(rng.below(static_cast<std::uint64_t>(2 * max_shift + 1))) - max_shift;
        const double scale = 0.7 + 0.6 * rng.uniform();
        double* row = set.patterns.row(q).data();
        for (std::size_t i = 0; i < side; ++i)
            for (std::size_t j = 0; j < side; ++j) {
                const long pi = static_cast<long>(i) + si;
                const long pj = static_cast<long>(j) + sj;
                double v = 0.0;
                if (pi >= 0 && pj >= 0 && pi < static_cast<long>(side) && pj < static_cast<long>(side))
                    v = proto[static_cast<std::size_t>(pi) * side + static_cast<std::size_t>(pj)];
                v = scale * v + noise * rng.gaussian();
                row[i * side + j] = std::clamp(v, 0.0, 1.0);
            }
    }
    return set;
}

} // namespace sepmax

#endif
