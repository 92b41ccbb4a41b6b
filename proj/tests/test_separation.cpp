#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <vector>

#include "sepmax/separation.hpp"
#include "sepmax/synth.hpp"
#include "test_util.hpp"

using sepmax::LabeledSet;
using sepmax::Matrix;

namespace {

// Naive O(Q^2) oracle, plain left-to-right summation, no blocking.
double oracle_sqdist(const Matrix& rows, std::size_t a, std::size_t b) {
    double s = 0.0;
    for (std::size_t k = 0; k < rows.cols(); ++k) {
        const double d = rows(a, k) - rows(b, k);
        s += d * d;
    }
    return s;
}

double oracle_si(const Matrix& rows, const std::vector<int>& labels) {
    std::size_t hits = 0;
    for (std::size_t q = 0; q < rows.rows(); ++q) {
        std::size_t arg = q == 0 ? 1 : 0;
        double best = oracle_sqdist(rows, q, arg);
        for (std::size_t h = 0; h < rows.rows(); ++h) {
            if (h == q) continue;
            const double d = oracle_sqdist(rows, q, h);
            if (d < best || (d == best && h < arg)) {
                best = d;
                arg = h;
            }
        }
        if (labels[q] == labels[arg]) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(rows.rows());
}

struct OracleAssign {
    std::vector<std::size_t> fr_idx, en_idx;
    std::vector<double> fr_d, en_d;
};

OracleAssign oracle_friend_enemy(const Matrix& rows, const std::vector<int>& labels) {
    const std::size_t q_count = rows.rows();
    OracleAssign out;
    out.fr_idx.resize(q_count);
    out.en_idx.resize(q_count);
    out.fr_d.resize(q_count);
    out.en_d.resize(q_count);
    for (std::size_t q = 0; q < q_count; ++q) {
        double bf = std::numeric_limits<double>::infinity();
        double be = bf;
        std::size_t af = q_count, ae = q_count;
        for (std::size_t h = 0; h < q_count; ++h) {
            if (h == q) continue;
            const double d = oracle_sqdist(rows, q, h);
            if (labels[h] == labels[q]) {
                if (d < bf || (d == bf && h < af)) {
                    bf = d;
                    af = h;
                }
            } else if (d < be || (d == be && h < ae)) {
                be = d;
                ae = h;
            }
        }
        out.fr_idx[q] = af;
        out.en_idx[q] = ae;
        out.fr_d[q] = bf;
        out.en_d[q] = be;
    }
    return out;
}

LabeledSet random_labeled_balanced(std::size_t count, std::size_t dim, int classes,
                                   std::uint64_t seed) {
    // round-robin labels so every class has >= 2 members
    auto set = sepmax::make_random_labeled(count, dim, classes, seed);
    for (std::size_t q = 0; q < count; ++q) set.labels[q] = static_cast<int>(q) % classes;
    return set;
}

} // namespace

TEST_CASE("separation_index: two points with different labels") {
    Matrix rows(2, 3);
    rows(0, 0) = 0.0;
    rows(1, 0) = 1.0;
    CHECK(sepmax::separation_index(rows, {0, 1}) == 0.0);
}

TEST_CASE("separation_index: two well-separated blobs reach exactly 1") {
    auto set = sepmax::make_two_blobs(50, 4, 20.0, 42);
    const double si = sepmax::separation_index(set);
    CHECK(si == 1.0);
    CHECK(si == oracle_si(set.patterns, set.labels));
}

TEST_CASE("separation_index: alternating line is exactly 0") {
    auto set = sepmax::make_alternating_line(6);
    CHECK(sepmax::separation_index(set) == 0.0);
}

TEST_CASE("separation_index: single-label set scores 1") {
    Matrix rows = testutil::random_matrix(5, 3, 9);
    CHECK(sepmax::separation_index(rows, {2, 2, 2, 2, 2}) == 1.0);
}

TEST_CASE("separation_index: matches the brute-force oracle on random sets") {
    // sizes straddle the 32-row tile and 512-dim chunk boundaries
    for (auto [count, dim] : {std::pair<std::size_t, std::size_t>{30, 7},
                              {33, 16},
                              {64, 512},
                              {70, 513},
                              {200, 24}}) {
        auto set = random_labeled_balanced(count, dim, 4, count * 31 + dim);
        CHECK(sepmax::separation_index(set.patterns, set.labels) ==
              oracle_si(set.patterns, set.labels));
    }
}

TEST_CASE("separation_index: invariances") {
    auto set = random_labeled_balanced(40, 6, 3, 77);
    const double si = sepmax::separation_index(set.patterns, set.labels);
    CHECK(si >= 0.0);
    CHECK(si <= 1.0);

    // permutation of pattern order
    std::vector<std::size_t> perm(40);
    for (std::size_t i = 0; i < 40; ++i) perm[i] = (i * 17 + 5) % 40;
    Matrix permuted(40, 6);
    std::vector<int> plabels(40);
    for (std::size_t i = 0; i < 40; ++i) {
        plabels[i] = set.labels[perm[i]];
        for (std::size_t k = 0; k < 6; ++k) permuted(i, k) = set.patterns(perm[i], k);
    }
    CHECK(sepmax::separation_index(permuted, plabels) == si);

    // positive scaling and constant translation
    Matrix scaled = set.patterns;
    for (double& v : scaled.data()) v = 3.5 * v;
    CHECK(sepmax::separation_index(scaled, set.labels) == si);
    Matrix shifted = set.patterns;
    for (std::size_t q = 0; q < 40; ++q)
        for (std::size_t k = 0; k < 6; ++k) shifted(q, k) += static_cast<double>(k) - 2.0;
    CHECK(sepmax::separation_index(shifted, set.labels) == si);
}

TEST_CASE("separation_index: rejects Q < 2") {
    Matrix rows(1, 3);
    CHECK_THROWS_AS(sepmax::separation_index(rows, {0}), sepmax::precondition_error);
}

TEST_CASE("friend_enemy: block structure of two far pairs") {
    Matrix rows(4, 2);
    rows(0, 0) = 0.0;
    rows(1, 0) = 1.0;
    rows(2, 0) = 100.0;
    rows(3, 0) = 101.0;
    auto assign = sepmax::friend_enemy(rows, {0, 0, 1, 1});
    CHECK(assign.friend_index[0] == 1);
    CHECK(assign.friend_index[1] == 0);
    CHECK(assign.friend_index[2] == 3);
    CHECK(assign.friend_index[3] == 2);
    CHECK(assign.enemy_index[0] == 2);
    CHECK(assign.enemy_index[3] == 1);
    CHECK(assign.friend_sqdist[0] == 1.0);
    CHECK(assign.enemy_sqdist[0] == 100.0 * 100.0);
}

TEST_CASE("friend_enemy: duplicated same-label points have friend distance 0") {
    Matrix rows(4, 3);
    for (std::size_t k = 0; k < 3; ++k) {
        rows(0, k) = 0.5;
        rows(1, k) = 0.5;  // duplicate of row 0
        rows(2, k) = 9.0;
        rows(3, k) = -9.0;
    }
    auto assign = sepmax::friend_enemy(rows, {0, 0, 1, 1});
    CHECK(assign.friend_sqdist[0] == 0.0);
    CHECK(assign.friend_sqdist[1] == 0.0);
    CHECK(assign.friend_index[1] == 0);
}

TEST_CASE("friend_enemy: matches the O(Q^2) oracle") {
    for (auto [count, dim] : {std::pair<std::size_t, std::size_t>{30, 5},
                              {50, 40},
                              {65, 520}}) {
        auto set = random_labeled_balanced(count, dim, 3, 1000 + count);
        auto assign = sepmax::friend_enemy(set.patterns, set.labels);
        auto oracle = oracle_friend_enemy(set.patterns, set.labels);
        for (std::size_t q = 0; q < count; ++q) {
            // indices must agree exactly; distances are the same mathematical
            // value summed in a different order, so ulp-level slack only
            CHECK(assign.friend_index[q] == oracle.fr_idx[q]);
            CHECK(assign.enemy_index[q] == oracle.en_idx[q]);
            CHECK(assign.friend_sqdist[q] == doctest::Approx(oracle.fr_d[q]).epsilon(1e-12));
            CHECK(assign.enemy_sqdist[q] == doctest::Approx(oracle.en_d[q]).epsilon(1e-12));
        }
    }
}

TEST_CASE("friend_enemy: min(friend, enemy) equals the global nearest distance") {
    auto set = random_labeled_balanced(45, 8, 3, 4242);
    auto assign = sepmax::friend_enemy(set.patterns, set.labels);
    auto nearest = sepmax::detail::nearest_neighbors(set.patterns);
    for (std::size_t q = 0; q < set.size(); ++q)
        CHECK(std::min(assign.friend_sqdist[q], assign.enemy_sqdist[q]) == nearest[q].d);
    // and the SI recovered from the assignment matches the direct SI
    CHECK(sepmax::separation_index(assign) ==
          sepmax::separation_index(set.patterns, set.labels));
}

TEST_CASE("friend_enemy: singleton class and single class are errors") {
    Matrix rows(3, 2);
    rows(1, 0) = 1.0;
    rows(2, 0) = 2.0;
    CHECK_THROWS_WITH_AS(sepmax::friend_enemy(rows, {0, 0, 1}),
                         doctest::Contains("class 1"), sepmax::precondition_error);
    CHECK_THROWS_AS(sepmax::friend_enemy(rows, {0, 0, 0}), sepmax::precondition_error);
}

TEST_CASE("gamma_weights: threshold is inclusive") {
    sepmax::NeighborAssignment assign;
    assign.friend_index = {1, 1, 1};
    assign.enemy_index = {2, 2, 2};
    assign.friend_sqdist = {2.0, 1.0, 1.5};
    assign.enemy_sqdist = {1.0, 2.0, 1.5};
    auto gamma = sepmax::gamma_weights(assign);
    CHECK(gamma[0] == 2.0);  // enemy nearer
    CHECK(gamma[1] == 1.0);  // friend nearer
    CHECK(gamma[2] == 2.0);  // tie counts as misclassified
}

TEST_CASE("gamma_weights: SI equals the gamma=1 fraction when no exact ties") {
    auto set = random_labeled_balanced(60, 9, 3, 555);
    auto assign = sepmax::friend_enemy(set.patterns, set.labels);
    auto gamma = sepmax::gamma_weights(assign);
    bool has_tie = false;
    for (std::size_t q = 0; q < set.size(); ++q)
        if (assign.friend_sqdist[q] == assign.enemy_sqdist[q]) has_tie = true;
    REQUIRE_FALSE(has_tie);
    std::size_t ones = 0;
    for (double g : gamma)
        if (g == 1.0) ++ones;
    CHECK(sepmax::separation_index(set.patterns, set.labels) ==
          doctest::Approx(static_cast<double>(ones) / 60.0));
}

TEST_CASE("minimax_loss: coincident friends, unit enemies give -Q") {
    // two duplicated points per class, classes exactly 1 apart
    Matrix rows(4, 1);
    rows(0, 0) = 0.0;
    rows(1, 0) = 0.0;
    rows(2, 0) = 1.0;
    rows(3, 0) = 1.0;
    std::vector<int> labels{0, 0, 1, 1};
    auto assign = sepmax::friend_enemy(rows, labels);
    auto gamma = sepmax::gamma_weights(assign);
    for (double g : gamma) CHECK(g == 1.0);
    CHECK(sepmax::minimax_loss(rows, assign, gamma) == doctest::Approx(-4.0));
}

TEST_CASE("minimax_loss: identical features give 0") {
    Matrix rows(4, 3, 0.25);
    std::vector<int> labels{0, 0, 1, 1};
    auto assign = sepmax::friend_enemy(rows, labels);
    auto gamma = sepmax::gamma_weights(assign);
    CHECK(sepmax::minimax_loss(rows, assign, gamma) == 0.0);
}

TEST_CASE("minimax_loss: matches direct summation oracle") {
    auto set = random_labeled_balanced(10, 7, 2, 31);
    auto assign = sepmax::friend_enemy(set.patterns, set.labels);
    auto gamma = sepmax::gamma_weights(assign);
    double expected = 0.0;
    for (std::size_t q = 0; q < 10; ++q)
        expected += gamma[q] * (oracle_sqdist(set.patterns, q, assign.friend_index[q]) -
                                oracle_sqdist(set.patterns, q, assign.enemy_index[q]));
    CHECK(sepmax::minimax_loss(set.patterns, assign, gamma) ==
          doctest::Approx(expected).epsilon(1e-10));
}

TEST_CASE("friend_enemy: identical results for any thread count") {
    auto set = random_labeled_balanced(90, 130, 4, 2468);
    sepmax::thread_count() = 1;
    auto one = sepmax::friend_enemy(set.patterns, set.labels);
    sepmax::thread_count() = 3;
    auto three = sepmax::friend_enemy(set.patterns, set.labels);
    sepmax::thread_count() = 0;
    CHECK(one.friend_index == three.friend_index);
    CHECK(one.enemy_index == three.enemy_index);
    CHECK(one.friend_sqdist == three.friend_sqdist);
    CHECK(one.enemy_sqdist == three.enemy_sqdist);
}
