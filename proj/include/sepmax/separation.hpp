#ifndef SEPMAX_SEPARATION_HPP
#define SEPMAX_SEPARATION_HPP

#include <cstddef>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "sepmax/dataset.hpp"
#include "sepmax/errors.hpp"
#include "sepmax/linalg.hpp"
#include "sepmax/parallel.hpp"

namespace sepmax {

/// Per-pattern first-layer feature vectors: row q holds the M feature maps
/// of pattern q concatenated filter-major, each of length map_size. Values
/// are nonnegative when produced by the ReLU forward pass.
struct FeatureSet {
    Matrix values;  // Q x (filter_count * map_size)
    std::vector<int> labels;
    int class_count = 0;
    std::size_t filter_count = 0;  // M
    std::size_t map_size = 0;      // n, units per feature map

    std::size_t size() const { return labels.size(); }
    double at(std::size_t q, std::size_t filter, std::size_t rho) const {
        return values(q, filter * map_size + rho);
    }
};

/// For each pattern: the nearest same-label neighbor (friend), the nearest
/// different-label neighbor (enemy), and their squared L2 distances.
struct NeighborAssignment {
    std::vector<std::size_t> friend_index;
    std::vector<std::size_t> enemy_index;
    std::vector<double> friend_sqdist;
    std::vector<double> enemy_sqdist;

    std::size_t size() const { return friend_index.size(); }
};

namespace detail {

struct Best {
    double d = std::numeric_limits<double>::infinity();
    std::size_t idx = std::numeric_limits<std::size_t>::max();

    // Lexicographic (distance, index) minimum: order-independent, so merges
    // across workers and any visiting order give the same result. Distance
    // ties resolve to the smallest index.
    void consider(double cand_d, std::size_t cand_idx) {
        if (cand_d < d || (cand_d == d && cand_idx < idx)) {
            d = cand_d;
            idx = cand_idx;
        }
    }
    void merge(const Best& other) { consider(other.d, other.idx); }
};

// Exact blocked pairwise squared-L2 engine. Calls update(worker, i, j, d2)
// for row i of `a` against row j of `b`; in symmetric mode (a and b are the
// same matrix) only unordered pairs j > i are visited. Distances accumulate
// per dimension chunk in a fixed lane pattern, so results are bit-identical
// across runs and thread counts.
template <class Update>
void blocked_sqdist(const Matrix& a, const Matrix& b, bool symmetric, Update&& update) {
    constexpr std::size_t BA = 32, BB = 32, DC = 512, LANES = 16;
    const std::size_t na = a.rows(), nb = b.rows(), dim = a.cols();

    const std::size_t a_blocks = (na + BA - 1) / BA;
    const std::size_t b_blocks = (nb + BB - 1) / BB;

    // Enumerate tile coordinates; in symmetric mode only the upper block
    // triangle is needed.
    std::vector<std::pair<std::size_t, std::size_t>> tiles;
    for (std::size_t ab = 0; ab < a_blocks; ++ab)
        for (std::size_t bb = symmetric ? ab : 0; bb < b_blocks; ++bb)
            tiles.emplace_back(ab, bb);

    parallel_for_worker(tiles.size(), [&](std::size_t t, int worker) {
        const std::size_t a0 = tiles[t].first * BA;
        const std::size_t b0 = tiles[t].second * BB;
        const std::size_t ah = std::min(BA, na - a0);
        const std::size_t bh = std::min(BB, nb - b0);

        double tile[BA][BB];
        for (std::size_t i = 0; i < ah; ++i)
            for (std::size_t j = 0; j < bh; ++j) tile[i][j] = 0.0;

        for (std::size_t d0 = 0; d0 < dim; d0 += DC) {
            const std::size_t dc = std::min(DC, dim - d0);
            for (std::size_t i = 0; i < ah; ++i) {
                const double* pa = a.row(a0 + i).data() + d0;
                for (std::size_t j = 0; j < bh; ++j) {
                    const double* pb = b.row(b0 + j).data() + d0;
                    double lanes[LANES] = {};
                    std::size_t k = 0;
                    for (; k + LANES <= dc; k += LANES)
                        for (std::size_t l = 0; l < LANES; ++l) {
                            const double t0 = pa[k + l] - pb[k + l];
                            lanes[l] += t0 * t0;
                        }
                    double s = 0.0;
                    for (std::size_t l = 0; l < LANES; ++l) s += lanes[l];
                    for (; k < dc; ++k) {
                        const double t0 = pa[k] - pb[k];
                        s += t0 * t0;
                    }
                    tile[i][j] += s;
                }
            }
        }

        for (std::size_t i = 0; i < ah; ++i)
            for (std::size_t j = 0; j < bh; ++j) {
                const std::size_t qa = a0 + i, qb = b0 + j;
                if (symmetric && qb <= qa) continue;
                update(worker, qa, qb, tile[i][j]);
            }
    });
}

// Global nearest neighbor (excluding self) for every row.
inline std::vector<Best> nearest_neighbors(const Matrix& rows) {
    const std::size_t q_count = rows.rows();
    const int workers = effective_threads();
    std::vector<std::vector<Best>> local(static_cast<std::size_t>(workers),
                                         std::vector<Best>(q_count));
    blocked_sqdist(rows, rows, true, [&](int w, std::size_t qa, std::size_t qb, double d2) {
        local[w][qa].consider(d2, qb);
        local[w][qb].consider(d2, qa);
    });
    std::vector<Best> best = std::move(local[0]);
    for (std::size_t w = 1; w < local.size(); ++w)
        for (std::size_t q = 0; q < q_count; ++q) best[q].merge(local[w][q]);
    return best;
}

} // namespace detail

/// First-order separation index of a labeled point cloud: the fraction of
/// points whose nearest neighbor (squared L2, self excluded, distance ties
/// to the smallest index) carries the same label. Always in [0, 1].
inline double separation_index(const Matrix& rows, const std::vector<int>& labels) {
    const std::size_t q_count = rows.rows();
    if (q_count < 2) throw precondition_error("separation_index: need at least 2 patterns");
    if (labels.size() != q_count)
        throw precondition_error("separation_index: label count mismatch");
    auto best = detail::nearest_neighbors(rows);
    std::size_t hits = 0;
    for (std::size_t q = 0; q < q_count; ++q)
        if (labels[q] == labels[best[q].idx]) ++hits;
    return static_cast<double>(hits) / static_cast<double>(q_count);
}

inline double separation_index(const FeatureSet& features) {
    return separation_index(features.values, features.labels);
}

/// SI of the raw pixel representation.
inline double separation_index(const LabeledSet& set) {
    return separation_index(set.patterns, set.labels);
}

/// Exact brute-force friend/enemy assignment over all pairs. Requires at
/// least two classes, each with at least two members.
inline NeighborAssignment friend_enemy(const Matrix& rows, const std::vector<int>& labels) {
    const std::size_t q_count = rows.rows();
    if (q_count < 2) throw precondition_error("friend_enemy: need at least 2 patterns");
    if (labels.size() != q_count) throw precondition_error("friend_enemy: label count mismatch");

    std::map<int, std::size_t> hist;
    for (int l : labels) ++hist[l];
    if (hist.size() < 2)
        throw precondition_error("friend_enemy: need at least 2 classes, got " +
                                 std::to_string(hist.size()));
    for (const auto& [cls, count] : hist)
        if (count < 2)
            throw precondition_error("friend_enemy: class " + std::to_string(cls) +
                                     " has a single pattern; every class needs at least 2");

    const int workers = effective_threads();
    std::vector<std::vector<detail::Best>> fr(static_cast<std::size_t>(workers),
                                              std::vector<detail::Best>(q_count));
    std::vector<std::vector<detail::Best>> en(static_cast<std::size_t>(workers),
                                              std::vector<detail::Best>(q_count));
    detail::blocked_sqdist(rows, rows, true,
                           [&](int w, std::size_t qa, std::size_t qb, double d2) {
                               if (labels[qa] == labels[qb]) {
                                   fr[w][qa].consider(d2, qb);
                                   fr[w][qb].consider(d2, qa);
                               } else {
                                   en[w][qa].consider(d2, qb);
                                   en[w][qb].consider(d2, qa);
                               }
                           });

    NeighborAssignment out;
    out.friend_index.resize(q_count);
    out.enemy_index.resize(q_count);
    out.friend_sqdist.resize(q_count);
    out.enemy_sqdist.resize(q_count);
    for (std::size_t q = 0; q < q_count; ++q) {
        detail::Best f = fr[0][q], e = en[0][q];
        for (int w = 1; w < workers; ++w) {
            f.merge(fr[static_cast<std::size_t>(w)][q]);
            e.merge(en[static_cast<std::size_t>(w)][q]);
        }
        out.friend_index[q] = f.idx;
        out.enemy_index[q] = e.idx;
        out.friend_sqdist[q] = f.d;
        out.enemy_sqdist[q] = e.d;
    }
    return out;
}

inline NeighborAssignment friend_enemy(const FeatureSet& features) {
    return friend_enemy(features.values, features.labels);
}

/// Separation index recovered from an existing friend/enemy assignment:
/// the nearest neighbor is the friend iff the friend is strictly nearer,
/// or equally near with the smaller index.
inline double separation_index(const NeighborAssignment& assign) {
    std::size_t hits = 0;
    for (std::size_t q = 0; q < assign.size(); ++q) {
        const bool friend_wins =
            assign.friend_sqdist[q] < assign.enemy_sqdist[q] ||
            (assign.friend_sqdist[q] == assign.enemy_sqdist[q] &&
             assign.friend_index[q] < assign.enemy_index[q]);
        if (friend_wins) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(assign.size());
}

/// Importance weights: 2 when the enemy is at least as near as the friend
/// (the pattern is misclassified by the 1-NN rule), else 1.
inline std::vector<double> gamma_weights(const NeighborAssignment& assign) {
    std::vector<double> gamma(assign.size());
    for (std::size_t q = 0; q < assign.size(); ++q)
        gamma[q] = assign.enemy_sqdist[q] <= assign.friend_sqdist[q] ? 2.0 : 1.0;
    return gamma;
}

/// Diagnostic minimax loss: sum of weighted squared friend distances minus
/// weighted squared enemy distances. May be negative.
inline double minimax_loss(const Matrix& rows, const NeighborAssignment& assign,
                           const std::vector<double>& gamma) {
    if (assign.size() != rows.rows() || gamma.size() != rows.rows())
        throw precondition_error("minimax_loss: size mismatch");
    const std::size_t dim = rows.cols();
    double j = 0.0;
    for (std::size_t q = 0; q < rows.rows(); ++q) {
        const double* zq = rows.row(q).data();
        const double* zf = rows.row(assign.friend_index[q]).data();
        const double* ze = rows.row(assign.enemy_index[q]).data();
        double df = 0.0, de = 0.0;
        for (std::size_t k = 0; k < dim; ++k) {
            const double tf = zq[k] - zf[k];
            const double te = zq[k] - ze[k];
            df += tf * tf;
            de += te * te;
        }
        j += gamma[q] * (df - de);
    }
    return j;
}

inline double minimax_loss(const FeatureSet& features, const NeighborAssignment& assign,
                           const std::vector<double>& gamma) {
    return minimax_loss(features.values, assign, gamma);
}

} // namespace sepmax

#endif
