#ifndef SEPMAX_LINALG_HPP
#define SEPMAX_LINALG_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "sepmax/errors.hpp"

namespace sepmax {

/// Dense row-major matrix of doubles.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    static Matrix identity(std::size_t n) {
        Matrix m(n, n);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }

    double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

    /// Row i as a contiguous span.
    std::span<const double> row(std::size_t i) const {
        return {data_.data() + i * cols_, cols_};
    }
    std::span<double> row(std::size_t i) {
        return {data_.data() + i * cols_, cols_};
    }

    const std::vector<double>& data() const { return data_; }
    std::vector<double>& data() { return data_; }

    bool all_finite() const {
        for (double v : data_)
            if (!std::isfinite(v)) return false;
        return true;
    }

    double max_abs() const {
        double m = 0.0;
        for (double v : data_) m = std::max(m, std::abs(v));
        return m;
    }

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

/// Eigendecomposition of a symmetric matrix. Column i of `vectors` pairs
/// with `values[i]`; values are sorted descending. Signs are normalized so
/// that in each eigenvector the entry of largest magnitude is positive
/// (ties decided by the lowest index), which makes runs reproducible.
struct EigenResult {
    std::vector<double> values;
    Matrix vectors;
};

namespace detail {

// Multi-accumulator dot product: the fixed lane pattern breaks the
// loop-carried dependency so the compiler can vectorize without
// reassociation flags, and the summation order never varies.
inline double dot8(const double* a, const double* b, std::size_t n) {
    double lanes[8] = {};
    std::size_t k = 0;
    for (; k + 8 <= n; k += 8)
        for (std::size_t l = 0; l < 8; ++l) lanes[l] += a[k + l] * b[k + l];
    double s = ((lanes[0] + lanes[1]) + (lanes[2] + lanes[3])) +
               ((lanes[4] + lanes[5]) + (lanes[6] + lanes[7]));
    for (; k < n; ++k) s += a[k] * b[k];
    return s;
}

inline void check_symmetric(const Matrix& s) {
    if (s.rows() != s.cols())
        throw precondition_error("sym_eig: matrix is not square (" + std::to_string(s.rows()) +
                                 "x" + std::to_string(s.cols()) + ")");
    const double scale = std::max(s.max_abs(), 1e-300);
    for (std::size_t i = 0; i < s.rows(); ++i)
        for (std::size_t j = i + 1; j < s.cols(); ++j)
            if (std::abs(s(i, j) - s(j, i)) > 1e-10 * scale)
                throw precondition_error("sym_eig: matrix is not symmetric at (" +
                                         std::to_string(i) + "," + std::to_string(j) + ")");
}

inline void fix_eigenvector_signs(Matrix& v) {
    const std::size_t d = v.rows();
    for (std::size_t col = 0; col < v.cols(); ++col) {
        std::size_t arg = 0;
        double best = std::abs(v(0, col));
        for (std::size_t i = 1; i < d; ++i) {
            double a = std::abs(v(i, col));
            if (a > best) {  // strict: ties keep the lowest index
                best = a;
                arg = i;
            }
        }
        if (v(arg, col) < 0.0)
            for (std::size_t i = 0; i < d; ++i) v(i, col) = -v(i, col);
    }
}

} // namespace detail

/// Eigendecomposition of a symmetric (PSD in all intended uses) matrix by
/// cyclic Jacobi rotations. Deterministic; adequate for the patch
/// dimensions this library works with (d up to a few hundred).
inline EigenResult sym_eig(const Matrix& s) {
    detail::check_symmetric(s);
    const std::size_t d = s.rows();
    Matrix a = s;
    Matrix v = Matrix::identity(d);

    const double scale = std::max(a.max_abs(), 1e-300);
    const double tol = 1e-15 * scale;

    for (int sweep = 0; sweep < 64; ++sweep) {
        double off = 0.0;
        for (std::size_t p = 0; p < d; ++p)
            for (std::size_t q = p + 1; q < d; ++q) off = std::max(off, std::abs(a(p, q)));
        if (off <= tol) break;

        for (std::size_t p = 0; p < d; ++p) {
            for (std::size_t q = p + 1; q < d; ++q) {
                const double apq = a(p, q);
                if (std::abs(apq) <= tol) continue;
                const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
                const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double sn = t * c;

                for (std::size_t k = 0; k < d; ++k) {
                    const double akp = a(k, p), akq = a(k, q);
                    a(k, p) = c * akp - sn * akq;
                    a(k, q) = sn * akp + c * akq;
                }
                for (std::size_t k = 0; k < d; ++k) {
                    const double apk = a(p, k), aqk = a(q, k);
                    a(p, k) = c * apk - sn * aqk;
                    a(q, k) = sn * apk + c * aqk;
                }
                for (std::size_t k = 0; k < d; ++k) {
                    const double vkp = v(k, p), vkq = v(k, q);
                    v(k, p) = c * vkp - sn * vkq;
                    v(k, q) = sn * vkp + c * vkq;
                }
            }
        }
    }

    std::vector<std::size_t> order(d);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t i, std::size_t j) { return a(i, i) > a(j, j); });

    EigenResult res;
    res.values.resize(d);
    res.vectors = Matrix(d, d);
    for (std::size_t col = 0; col < d; ++col) {
        res.values[col] = a(order[col], order[col]);
        for (std::size_t i = 0; i < d; ++i) res.vectors(i, col) = v(i, order[col]);
    }
    detail::fix_eigenvector_signs(res.vectors);
    return res;
}

/// Solve A x = b for symmetric positive definite A by Cholesky. A is
/// consumed. Throws numeric_error with `hint` appended when a pivot is not
/// positive.
inline std::vector<double> cholesky_solve(Matrix a, std::vector<double> b,
                                          const std::string& hint = "") {
    const std::size_t d = a.rows();
    if (a.cols() != d || b.size() != d)
        throw precondition_error("cholesky_solve: dimension mismatch");
    // In-place lower factor.
    for (std::size_t j = 0; j < d; ++j) {
        double diag = a(j, j);
        for (std::size_t k = 0; k < j; ++k) diag -= a(j, k) * a(j, k);
        if (!(diag > 0.0) || !std::isfinite(diag))
            throw numeric_error("cholesky_solve: matrix is not positive definite" +
                                (hint.empty() ? "" : " (" + hint + ")"));
        const double ljj = std::sqrt(diag);
        a(j, j) = ljj;
        for (std::size_t i = j + 1; i < d; ++i) {
            double s = a(i, j);
            for (std::size_t k = 0; k < j; ++k) s -= a(i, k) * a(j, k);
            a(i, j) = s / ljj;
        }
    }
    // Forward then backward substitution.
    for (std::size_t i = 0; i < d; ++i) {
        double s = b[i];
        for (std::size_t k = 0; k < i; ++k) s -= a(i, k) * b[k];
        b[i] = s / a(i, i);
    }
    for (std::size_t ii = d; ii-- > 0;) {
        double s = b[ii];
        for (std::size_t k = ii + 1; k < d; ++k) s -= a(k, ii) * b[k];
        b[ii] = s / a(ii, ii);
    }
    return b;
}

/// Weighted ridge least squares: returns psi minimizing
/// sum_r w_r (x_r . psi - z_r)^2 + lambda |psi|^2, i.e. the solution of
/// (X^T diag(w) X + lambda I) psi = X^T diag(w) z. The weight diagonal is
/// never materialized. Weights of zero drop their rows entirely.
inline std::vector<double> weighted_ridge_ls(const Matrix& x, std::span<const double> w,
                                             std::span<const double> z, double lambda) {
    const std::size_t n = x.rows();
    const std::size_t d = x.cols();
    if (w.size() != n || z.size() != n)
        throw precondition_error("weighted_ridge_ls: weight/target length must equal row count");
    if (lambda < 0.0)
        throw precondition_error("weighted_ridge_ls: ridge must be nonnegative");
    for (double wi : w)
        if (wi < 0.0) throw precondition_error("weighted_ridge_ls: negative weight");

    Matrix g(d, d);
    std::vector<double> rhs(d, 0.0);
    for (std::size_t r = 0; r < n; ++r) {
        const double wr = w[r];
        if (wr == 0.0) continue;
        const double* xr = x.row(r).data();
        const double wz = wr * z[r];
        for (std::size_t i = 0; i < d; ++i) {
            const double wxi = wr * xr[i];
            double* gi = &g(i, i);
            for (std::size_t j = i; j < d; ++j) gi[j - i] += wxi * xr[j];
            rhs[i] += wz * xr[i];
        }
    }
    for (std::size_t i = 0; i < d; ++i) {
        g(i, i) += lambda;
        for (std::size_t j = i + 1; j < d; ++j) g(j, i) = g(i, j);
    }
    return cholesky_solve(std::move(g), std::move(rhs),
                          lambda == 0.0 ? "singular normal equations; raise the ridge lambda"
                                        : "ill-conditioned normal equations");
}

} // namespace sepmax

#endif
