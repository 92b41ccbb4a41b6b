#ifndef SEPMAX_PROBE_HPP
#define SEPMAX_PROBE_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "sepmax/errors.hpp"
#include "sepmax/linalg.hpp"
#include "sepmax/parallel.hpp"
#include "sepmax/rng.hpp"
#include "sepmax/separation.hpp"

namespace sepmax {

struct ProbeConfig {
    std::size_t epochs = 200;
    /// Base GD step, halved whenever it would raise the loss. 0 picks a
    /// safe step from the feature spectrum (see default_probe_step).
    double step_size = 0.0;
    double l2 = 1e-4;
    std::uint64_t seed = 0;
};

/// Multinomial logistic probe over frozen features.
struct ProbeModel {
    Matrix weights;  // K x D
    std::vector<double> bias;  // K

    std::size_t class_count() const { return bias.size(); }
};

namespace detail {

// logits -> in-place softmax row; returns log(sum exp) shift-corrected
// cross-entropy contribution for the true class.
inline double softmax_row(double* row, std::size_t k_count, int truth) {
    double mx = row[0];
    for (std::size_t k = 1; k < k_count; ++k) mx = std::max(mx, row[k]);
    double denom = 0.0;
    for (std::size_t k = 0; k < k_count; ++k) denom += std::exp(row[k] - mx);
    const double log_denom = std::log(denom) + mx;
    const double nll = log_denom - row[truth];
    for (std::size_t k = 0; k < k_count; ++k) row[k] = std::exp(row[k] - log_denom);
    return nll;
}

inline void probe_logits(const Matrix& features, const ProbeModel& model, Matrix& logits) {
    const std::size_t k_count = model.class_count();
    const std::size_t dim = features.cols();
    parallel_for(features.rows(), [&](std::size_t q) {
        const double* z = features.row(q).data();
        double* out = logits.row(q).data();
        for (std::size_t k = 0; k < k_count; ++k)
            out[k] = model.bias[k] + sepmax::detail::dot8(model.weights.row(k).data(), z, dim);
    });
}

} // namespace detail

/// Safe GD step for the softmax loss: the Hessian is bounded by
/// (1/2) lambda_max of the second-moment matrix (1/N) Z^T Z (+1 for the
/// bias coordinate) plus the ridge, so the inverse of that bound cannot
/// overshoot. lambda_max comes from seeded power iterations on Z^T Z / N
/// without materializing the D x D matrix.
inline double default_probe_step(const Matrix& features, double l2, std::uint64_t seed) {
    const std::size_t n = features.rows(), dim = features.cols();
    Rng rng(seed, "probe-step");
    std::vector<double> v(dim), u(n);
    double norm2 = 0.0;
    for (double& x : v) {
        x = rng.gaussian();
        norm2 += x * x;
    }
    for (double& x : v) x /= std::sqrt(norm2);
    double lambda = 0.0;
    for (int iter = 0; iter < 16; ++iter) {
        for (std::size_t q = 0; q < n; ++q)
            u[q] = detail::dot8(features.row(q).data(), v.data(), dim);
        std::vector<double> w(dim, 0.0);
        for (std::size_t q = 0; q < n; ++q) {
            const double* z = features.row(q).data();
            const double uq = u[q] / static_cast<double>(n);
            if (uq == 0.0) continue;
            for (std::size_t d = 0; d < dim; ++d) w[d] += uq * z[d];
        }
        lambda = 0.0;
        for (double x : w) lambda += x * x;
        lambda = std::sqrt(lambda);
        if (lambda == 0.0) break;
        for (std::size_t d = 0; d < dim; ++d) v[d] = w[d] / lambda;
    }
    return 1.0 / (0.5 * (lambda + 1.0) + l2);
}

/// Mean cross-entropy plus (l2/2)|W|^2 of a probe on labeled features.
inline double probe_loss(const Matrix& features, const std::vector<int>& labels,
                         const ProbeModel& model, double l2) {
    const std::size_t q_count = features.rows();
    Matrix logits(q_count, model.class_count());
    detail::probe_logits(features, model, logits);
    double nll = 0.0;
    for (std::size_t q = 0; q < q_count; ++q)
        nll += detail::softmax_row(logits.row(q).data(), model.class_count(), labels[q]);
    double reg = 0.0;
    for (double w : model.weights.data()) reg += w * w;
    return nll / static_cast<double>(q_count) + 0.5 * l2 * reg;
}

/// Analytic gradient of probe_loss at the given model. Exposed for the
/// finite-difference checks.
inline void probe_gradient(const Matrix& features, const std::vector<int>& labels,
                           const ProbeModel& model, double l2, Matrix& grad_w,
                           std::vector<double>& grad_b) {
    const std::size_t q_count = features.rows();
    const std::size_t k_count = model.class_count();
    const std::size_t dim = features.cols();
    Matrix probs(q_count, k_count);
    detail::probe_logits(features, model, probs);
    for (std::size_t q = 0; q < q_count; ++q)
        detail::softmax_row(probs.row(q).data(), k_count, labels[q]);

    grad_w = Matrix(k_count, dim);
    grad_b.assign(k_count, 0.0);
    const double inv_q = 1.0 / static_cast<double>(q_count);
    // Per-class accumulation is independent, and each class sums samples in
    // index order, so the result does not depend on the thread count.
    parallel_for(k_count, [&](std::size_t k) {
        double* gw = grad_w.row(k).data();
        double gb = 0.0;
        for (std::size_t q = 0; q < q_count; ++q) {
            const double coeff = (probs(q, k) - (labels[q] == static_cast<int>(k) ? 1.0 : 0.0)) * inv_q;
            if (coeff == 0.0) continue;
            const double* z = features.row(q).data();
            for (std::size_t d = 0; d < dim; ++d) gw[d] += coeff * z[d];
            gb += coeff;
        }
        const double* wk = model.weights.row(k).data();
        for (std::size_t d = 0; d < dim; ++d) gw[d] += l2 * wk[d];
        grad_b[k] = gb;
    });
}

/// Full-batch gradient descent on the multinomial logistic loss. The step
/// size halves whenever a step would raise the loss, which keeps the
/// training loss non-increasing; a non-finite loss aborts with the epoch.
inline ProbeModel linear_probe_train(const FeatureSet& features, const ProbeConfig& cfg) {
    const std::size_t q_count = features.size();
    if (q_count < 2) throw precondition_error("linear_probe_train: need at least 2 patterns");
    if (features.class_count < 2)
        throw precondition_error("linear_probe_train: need at least 2 classes");
    if (!features.values.all_finite())
        throw precondition_error("linear_probe_train: non-finite feature values");

    const std::size_t k_count = static_cast<std::size_t>(features.class_count);
    const std::size_t dim = features.values.cols();

    ProbeModel model;
    model.weights = Matrix(k_count, dim);
    model.bias.assign(k_count, 0.0);
    Rng rng(cfg.seed, "probe-init");
    for (double& w : model.weights.data()) w = 0.01 * rng.gaussian();

    const double base_step = cfg.step_size > 0.0
                                 ? cfg.step_size
                                 : default_probe_step(features.values, cfg.l2, cfg.seed);
    double step = base_step;
    double loss = probe_loss(features.values, features.labels, model, cfg.l2);
    Matrix grad_w;
    std::vector<double> grad_b;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        if (!std::isfinite(loss))
            throw numeric_error("linear_probe_train: loss diverged at epoch " +
                                std::to_string(epoch));
        probe_gradient(features.values, features.labels, model, cfg.l2, grad_w, grad_b);

        // Backtracking halving: shrink until the step no longer raises the
        // loss; after an accepted step, grow back toward the configured step
        // so one hard epoch does not pin the rate near zero for the rest.
        bool accepted = false;
        while (!accepted) {
            ProbeModel trial = model;
            for (std::size_t i = 0; i < trial.weights.data().size(); ++i)
                trial.weights.data()[i] -= step * grad_w.data()[i];
            for (std::size_t k = 0; k < k_count; ++k) trial.bias[k] -= step * grad_b[k];
            const double trial_loss =
                probe_loss(features.values, features.labels, trial, cfg.l2);
            if (std::isfinite(trial_loss) && trial_loss <= loss) {
                model = std::move(trial);
                loss = trial_loss;
                accepted = true;
            } else {
                step *= 0.5;
                if (step < 1e-30) return model;  // gradient no longer improves
            }
        }
        step = std::min(step * 2.0, base_step);
    }
    return model;
}

inline std::vector<int> probe_predict(const ProbeModel& model, const Matrix& features) {
    Matrix logits(features.rows(), model.class_count());
    detail::probe_logits(features, model, logits);
    std::vector<int> pred(features.rows());
    for (std::size_t q = 0; q < features.rows(); ++q) {
        const double* row = logits.row(q).data();
        std::size_t arg = 0;
        for (std::size_t k = 1; k < model.class_count(); ++k)
            if (row[k] > row[arg]) arg = k;
        pred[q] = static_cast<int>(arg);
    }
    return pred;
}

/// Exact k-nearest-neighbor prediction by squared L2: majority vote among
/// the k nearest training points (distance ties to the smallest train
/// index, vote ties to the smallest label).
inline std::vector<int> knn_predict(const Matrix& train_features,
                                    const std::vector<int>& train_labels,
                                    const Matrix& test_features, std::size_t k) {
    if (k < 1) throw precondition_error("knn_predict: k must be >= 1");
    if (k > train_features.rows())
        throw precondition_error("knn_predict: k exceeds the training set size");
    if (train_labels.size() != train_features.rows())
        throw precondition_error("knn_predict: train label count mismatch");
    if (train_features.cols() != test_features.cols())
        throw precondition_error("knn_predict: feature dimension mismatch");

    struct Entry {
        double d;
        std::size_t idx;
        bool operator<(const Entry& o) const { return d < o.d || (d == o.d && idx < o.idx); }
    };
    const std::size_t n_test = test_features.rows();
    const int workers = effective_threads();
    // Per-worker k-best lists; (distance, index) ordering makes the final
    // merge independent of which worker saw which train tile.
    std::vector<std::vector<std::vector<Entry>>> local(
        static_cast<std::size_t>(workers),
        std::vector<std::vector<Entry>>(n_test));

    detail::blocked_sqdist(test_features, train_features, false,
                           [&](int w, std::size_t qt, std::size_t qr, double d2) {
                               auto& lst = local[w][qt];
                               Entry e{d2, qr};
                               auto pos = std::lower_bound(lst.begin(), lst.end(), e);
                               if (lst.size() < k) {
                                   lst.insert(pos, e);
                               } else if (pos != lst.end()) {
                                   lst.insert(pos, e);
                                   lst.pop_back();
                               }
                           });

    std::vector<int> pred(n_test);
    for (std::size_t qt = 0; qt < n_test; ++qt) {
        std::vector<Entry> merged;
        for (int w = 0; w < workers; ++w) {
            auto& lst = local[static_cast<std::size_t>(w)][qt];
            merged.insert(merged.end(), lst.begin(), lst.end());
        }
        std::sort(merged.begin(), merged.end());
        if (merged.size() > k) merged.resize(k);
        std::map<int, std::size_t> votes;
        for (const auto& e : merged) ++votes[train_labels[e.idx]];
        int best_label = -1;
        std::size_t best_votes = 0;
        for (const auto& [label, count] : votes)
            if (count > best_votes) {  // map iterates ascending: ties keep the smallest label
                best_votes = count;
                best_label = label;
            }
        pred[qt] = best_label;
    }
    return pred;
}

/// Fraction of correct predictions.
inline double accuracy(const std::vector<int>& predicted, const std::vector<int>& truth) {
    if (predicted.size() != truth.size())
        throw precondition_error("accuracy: length mismatch (" + std::to_string(predicted.size()) +
                                 " vs " + std::to_string(truth.size()) + ")");
    if (predicted.empty()) throw precondition_error("accuracy: empty input");
    std::size_t hits = 0;
    for (std::size_t i = 0; i < predicted.size(); ++i)
        if (predicted[i] == truth[i]) ++hits;
    return static_cast<double>(hits) / static_cast<double>(predicted.size());
}

} // namespace sepmax

#endif
