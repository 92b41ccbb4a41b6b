#ifndef SEPMAX_DATASET_HPP
#define SEPMAX_DATASET_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "sepmax/errors.hpp"
#include "sepmax/linalg.hpp"
#include "sepmax/rng.hpp"

namespace sepmax {

/// Per-channel standardization statistics, computed once from training data
/// and reused verbatim on test data.
struct ChannelStats {
    std::vector<double> mean;
    std::vector<double> stddev;
};

/// An image-classification dataset. Patterns are stored as one row-major
/// matrix, one row per pattern, flattened channel-major (all of channel 0,
/// then channel 1, ...; rows before columns within a channel).
struct LabeledSet {
    std::size_t channels = 0;
    std::size_t height = 0;
    std::size_t width = 0;
    Matrix patterns;          // Q x (channels*height*width)
    std::vector<int> labels;  // values in [0, class_count)
    int class_count = 0;
    std::optional<ChannelStats> channel_stats;  // present after standardize

    std::size_t size() const { return labels.size(); }
    std::size_t pattern_dim() const { return channels * height * width; }

    double& at(std::size_t q, std::size_t c, std::size_t i, std::size_t j) {
        return patterns(q, (c * height + i) * width + j);
    }
    double at(std::size_t q, std::size_t c, std::size_t i, std::size_t j) const {
        return patterns(q, (c * height + i) * width + j);
    }

    /// Count of patterns per label value.
    std::map<int, std::size_t> class_histogram() const {
        std::map<int, std::size_t> h;
        for (int l : labels) ++h[l];
        return h;
    }
};

namespace detail {

inline std::uint32_t read_be_u32(std::istream& in, const std::string& path) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (!in) throw data_error("truncated file: " + path);
    return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) |
           (std::uint32_t(b[2]) << 8) | std::uint32_t(b[3]);
}

inline std::vector<unsigned char> read_bytes(std::istream& in, std::size_t n,
                                             const std::string& path) {
    std::vector<unsigned char> buf(n);
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(n));
    if (in.gcount() != static_cast<std::streamsize>(n))
        throw data_error("truncated file: " + path);
    return buf;
}

inline int max_label_plus_one(const std::vector<int>& labels) {
    int k = 0;
    for (int l : labels) k = std::max(k, l + 1);
    return k;
}

} // namespace detail

/// Load an IDX image/label file pair (the MNIST family layout: big-endian,
/// magic 0x00000803 for images with count/rows/cols dims, 0x00000801 for
/// labels). Pixel bytes map to reals in [0,1] by division by 255.
inline LabeledSet load_idx(const std::string& image_path, const std::string& label_path) {
    std::ifstream img(image_path, std::ios::binary);
    if (!img) throw data_error("cannot open " + image_path);
    std::ifstream lab(label_path, std::ios::binary);
    if (!lab) throw data_error("cannot open " + label_path);

    const std::uint32_t img_magic = detail::read_be_u32(img, image_path);
    if (img_magic != 0x00000803u)
        throw data_error("bad IDX image magic in " + image_path + " (expected 0x00000803)");
    const std::uint32_t count = detail::read_be_u32(img, image_path);
    const std::uint32_t rows = detail::read_be_u32(img, image_path);
    const std::uint32_t cols = detail::read_be_u32(img, image_path);

    const std::uint32_t lab_magic = detail::read_be_u32(lab, label_path);
    if (lab_magic != 0x00000801u)
        throw data_error("bad IDX label magic in " + label_path + " (expected 0x00000801)");
    const std::uint32_t lab_count = detail::read_be_u32(lab, label_path);
    if (count != lab_count)
        throw data_error("image/label count mismatch: " + std::to_string(count) + " images vs " +
                         std::to_string(lab_count) + " labels");
    if (count == 0) throw data_error("empty dataset: " + image_path);

    LabeledSet set;
    set.channels = 1;
    set.height = rows;
    set.width = cols;
    set.patterns = Matrix(count, std::size_t(rows) * cols);
    set.labels.resize(count);

    const std::size_t px = std::size_t(rows) * cols;
    for (std::uint32_t q = 0; q < count; ++q) {
        auto bytes = detail::read_bytes(img, px, image_path);
        double* out = set.patterns.row(q).data();
        for (std::size_t i = 0; i < px; ++i) out[i] = bytes[i] / 255.0;
    }
    auto lbytes = detail::read_bytes(lab, count, label_path);
    for (std::uint32_t q = 0; q < count; ++q) set.labels[q] = lbytes[q];
    set.class_count = detail::max_label_plus_one(set.labels);
    return set;
}

enum class CifarKind { cifar10, cifar100 };
enum class CifarLabelMode { coarse, fine };

/// Load CIFAR binary batch files: 3073-byte records (1 label byte + 3072
/// channel-planar pixel bytes) for CIFAR-10, 3074-byte records (coarse +
/// fine label bytes) for CIFAR-100. Shape 3x32x32, reals in [0,1].
inline LabeledSet load_cifar(const std::vector<std::string>& paths, CifarKind kind,
                             CifarLabelMode label_mode = CifarLabelMode::fine) {
    const std::size_t pixel_bytes = 3072;
    const std::size_t record = kind == CifarKind::cifar10 ? 3073 : 3074;

    std::vector<std::vector<unsigned char>> records;
    for (const auto& path : paths) {
        std::ifstream in(path, std::ios::binary | std::ios::ate);
        if (!in) throw data_error("cannot open " + path);
        const auto len = static_cast<std::size_t>(in.tellg());
        if (len % record != 0)
            throw data_error("file length " + std::to_string(len) + " of " + path +
                             " is not a multiple of the record size " + std::to_string(record));
        in.seekg(0);
        for (std::size_t r = 0; r < len / record; ++r)
            records.push_back(detail::read_bytes(in, record, path));
    }
    if (records.empty()) throw data_error("empty dataset: no CIFAR records found");

    LabeledSet set;
    set.channels = 3;
    set.height = 32;
    set.width = 32;
    set.patterns = Matrix(records.size(), pixel_bytes);
    set.labels.resize(records.size());
    const std::size_t label_bytes = record - pixel_bytes;
    for (std::size_t q = 0; q < records.size(); ++q) {
        const auto& rec = records[q];
        if (kind == CifarKind::cifar10)
            set.labels[q] = rec[0];
        else
            set.labels[q] = label_mode == CifarLabelMode::coarse ? rec[0] : rec[1];
        double* out = set.patterns.row(q).data();
        // CIFAR stores channel planes in the same channel-major order used here.
        for (std::size_t i = 0; i < pixel_bytes; ++i) out[i] = rec[label_bytes + i] / 255.0;
    }
    set.class_count = detail::max_label_plus_one(set.labels);
    return set;
}

/// Compute per-channel mean/population-stddev over the whole set. Channels
/// with zero variance get stddev clamped to 1 so the transform stays defined.
inline ChannelStats compute_channel_stats(const LabeledSet& set) {
    const std::size_t plane = set.height * set.width;
    const std::size_t q_count = set.size();
    ChannelStats stats;
    stats.mean.assign(set.channels, 0.0);
    stats.stddev.assign(set.channels, 0.0);
    for (std::size_t c = 0; c < set.channels; ++c) {
        double sum = 0.0;
        double lo = set.patterns(0, c * plane), hi = lo;
        for (std::size_t q = 0; q < q_count; ++q) {
            const double* row = set.patterns.row(q).data() + c * plane;
            for (std::size_t i = 0; i < plane; ++i) {
                sum += row[i];
                lo = std::min(lo, row[i]);
                hi = std::max(hi, row[i]);
            }
        }
        if (lo == hi) {
            // Genuinely constant channel: center exactly, clamp stddev to 1.
            stats.mean[c] = lo;
            stats.stddev[c] = 1.0;
            continue;
        }
        const double n = static_cast<double>(q_count * plane);
        const double mean = sum / n;
        double ss = 0.0;
        for (std::size_t q = 0; q < q_count; ++q) {
            const double* row = set.patterns.row(q).data() + c * plane;
            for (std::size_t i = 0; i < plane; ++i) {
                const double d = row[i] - mean;
                ss += d * d;
            }
        }
        double sd = std::sqrt(ss / n);
        if (sd == 0.0) sd = 1.0;
        stats.mean[c] = mean;
        stats.stddev[c] = sd;
    }
    return stats;
}

/// Standardize with externally supplied statistics (test data reuses the
/// training-set stats).
inline LabeledSet standardize(const LabeledSet& set, const ChannelStats& stats) {
    if (stats.mean.size() != set.channels || stats.stddev.size() != set.channels)
        throw precondition_error("standardize: channel stats do not match channel count");
    LabeledSet out = set;
    const std::size_t plane = set.height * set.width;
    for (std::size_t q = 0; q < set.size(); ++q) {
        double* row = out.patterns.row(q).data();
        for (std::size_t c = 0; c < set.channels; ++c) {
            const double m = stats.mean[c], s = stats.stddev[c];
            double* p = row + c * plane;
            for (std::size_t i = 0; i < plane; ++i) p[i] = (p[i] - m) / s;
        }
    }
    out.channel_stats = stats;
    return out;
}

/// Standardize to per-channel mean 0 / stddev 1 computed over the whole set;
/// the statistics are stored on the result for reuse.
inline LabeledSet standardize(const LabeledSet& set) {
    if (set.size() < 2) throw precondition_error("standardize: need at least 2 patterns");
    return standardize(set, compute_channel_stats(set));
}

/// Seeded per-class uniform subsample without replacement. When `classes`
/// is non-empty only those classes are kept and labels are re-mapped to
/// 0..K'-1 in ascending order of the original class ids.
inline LabeledSet subset(const LabeledSet& set, std::size_t per_class, std::uint64_t seed,
                         const std::vector<int>& classes = {}) {
    if (per_class < 2) throw precondition_error("subset: per_class must be at least 2");

    std::vector<int> wanted = classes;
    if (wanted.empty()) {
        auto hist = set.class_histogram();
        for (const auto& [label, count] : hist) wanted.push_back(label);
    } else {
        std::sort(wanted.begin(), wanted.end());
        wanted.erase(std::unique(wanted.begin(), wanted.end()), wanted.end());
    }

    std::vector<std::size_t> chosen;
    Rng rng(seed, "subset");
    std::map<int, int> remap;
    for (std::size_t ci = 0; ci < wanted.size(); ++ci) {
        const int cls = wanted[ci];
        std::vector<std::size_t> members;
        for (std::size_t q = 0; q < set.size(); ++q)
            if (set.labels[q] == cls) members.push_back(q);
        if (members.size() < per_class)
            throw precondition_error("subset: class " + std::to_string(cls) + " has " +
                                     std::to_string(members.size()) + " members, need " +
                                     std::to_string(per_class));
        rng.shuffle(members);
        members.resize(per_class);
        std::sort(members.begin(), members.end());
        chosen.insert(chosen.end(), members.begin(), members.end());
        remap[cls] = static_cast<int>(ci);
    }

    LabeledSet out;
    out.channels = set.channels;
    out.height = set.height;
    out.width = set.width;
    out.channel_stats = set.channel_stats;
    out.patterns = Matrix(chosen.size(), set.pattern_dim());
    out.labels.resize(chosen.size());
    for (std::size_t i = 0; i < chosen.size(); ++i) {
        auto src = set.patterns.row(chosen[i]);
        std::copy(src.begin(), src.end(), out.patterns.row(i).begin());
        const int orig = set.labels[chosen[i]];
        out.labels[i] = classes.empty() ? orig : remap[orig];
    }
    out.class_count = classes.empty() ? set.class_count : static_cast<int>(wanted.size());
    return out;
}

} // namespace sepmax

#endif
