// Test-only reference implementations, deliberately independent of the
// library code paths they are used to check.
#ifndef KOPPA_TESTS_ORACLES_HPP
#define KOPPA_TESTS_ORACLES_HPP

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <vector>

#include "koppa/matrix.hpp"

namespace oracles {

using koppa::Matrix;
using koppa::Vector;

// Eigenvalues of a symmetric matrix by the classic cyclic Jacobi eigenvalue
// iteration (two-sided), sorted descending.
inline Vector symmetric_eigenvalues(Matrix a) {
    const std::size_t n = a.rows();
    for (int sweep = 0; sweep < 200; ++sweep) {
        double off = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = i + 1; j < n; ++j) off += a(i, j) * a(i, j);
        }
        if (off < 1e-26) break;
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                if (std::abs(a(p, q)) < 1e-300) continue;
                const double theta = (a(q, q) - a(p, p)) / (2.0 * a(p, q));
                const double t = (theta >= 0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(1.0 + theta * theta));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = t * c;
                for (std::size_t k = 0; k < n; ++k) {
                    const double akp = a(k, p), akq = a(k, q);
                    a(k, p) = c * akp - s * akq;
                    a(k, q) = s * akp + c * akq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double apk = a(p, k), aqk = a(q, k);
                    a(p, k) = c * apk - s * aqk;
                    a(q, k) = s * apk + c * aqk;
                }
            }
        }
    }
    Vector eig(n);
    for (std::size_t i = 0; i < n; ++i) eig[i] = a(i, i);
    std::sort(eig.begin(), eig.end(), std::greater<>());
    return eig;
}

// Singular values of an arbitrary matrix through the eigen-decomposition of
// the smaller Gram matrix.
inline Vector singular_values_via_gram(const Matrix& a) {
    const Matrix gram =
        a.rows() <= a.cols() ? a * a.transpose() : a.transpose() * a;
    Vector eig = symmetric_eigenvalues(gram);
    for (double& x : eig) x = std::sqrt(std::max(x, 0.0));
    return eig;
}

// Residual of v against a list of vectors via modified Gram-Schmidt.
inline double gram_schmidt_residual(Vector v, const std::vector<Vector>& basis) {
    std::vector<Vector> ortho;
    for (Vector b : basis) {
        for (const Vector& u : ortho) {
            const double proj = koppa::dot(b, u);
            for (std::size_t i = 0; i < b.size(); ++i) b[i] -= proj * u[i];
        }
        const double n = koppa::norm2(b);
        if (n > 1e-12) {
            koppa::scale(1.0 / n, b);
            ortho.push_back(std::move(b));
        }
    }
    for (int pass = 0; pass < 2; ++pass) {
        for (const Vector& u : ortho) {
            const double proj = koppa::dot(v, u);
            for (std::size_t i = 0; i < v.size(); ++i) v[i] -= proj * u[i];
        }
    }
    return koppa::norm2(v);
}

// Exact 2-Wasserstein by exhausting every assignment (n <= 8).
inline double brute_force_wasserstein(const std::vector<Vector>& a,
                                      const std::vector<Vector>& b) {
    const std::size_t n = a.size();
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    double best = std::numeric_limits<double>::infinity();
    do {
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double d2 = 0.0;
            for (std::size_t k = 0; k < a[i].size(); ++k) {
                const double diff = a[i][k] - b[perm[i]][k];
                d2 += diff * diff;
            }
            total += d2;
        }
        best = std::min(best, total);
    } while (std::next_permutation(perm.begin(), perm.end()));
    return std::sqrt(best / static_cast<double>(n));
}

// Brute-force minimum assignment cost (n <= 8).
inline double brute_force_assignment(const Matrix& cost) {
    const std::size_t n = cost.rows();
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    double best = std::numeric_limits<double>::infinity();
    do {
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) total += cost(i, perm[i]);
        best = std::min(best, total);
    } while (std::next_permutation(perm.begin(), perm.end()));
    return best;
}

// Central finite difference of a scalar function of one coordinate.
inline double central_difference(const std::function<double(double)>& f, double x0,
                                 double h = 1e-5) {
    return (f(x0 + h) - f(x0 - h)) / (2.0 * h);
}

// Nearest-class-mean classifier accuracy (the closed-form optimum for
// identity-covariance Gaussian classes with equal priors).
inline double nearest_mean_accuracy(const Matrix& train_x, const std::vector<int>& train_y,
                                    const Matrix& test_x, const std::vector<int>& test_y) {
    const int n_classes = *std::max_element(train_y.begin(), train_y.end()) + 1;
    Matrix means(static_cast<std::size_t>(n_classes), train_x.cols());
    std::vector<std::size_t> counts(static_cast<std::size_t>(n_classes), 0);
    for (std::size_t r = 0; r < train_x.rows(); ++r) {
        auto row = means.row(static_cast<std::size_t>(train_y[r]));
        const auto src = train_x.row(r);
        for (std::size_t c = 0; c < src.size(); ++c) row[c] += src[c];
        counts[static_cast<std::size_t>(train_y[r])]++;
    }
    for (int cl = 0; cl < n_classes; ++cl) {
        auto row = means.row(static_cast<std::size_t>(cl));
        for (double& x : row) x /= static_cast<double>(std::max<std::size_t>(counts[cl], 1));
    }
    std::size_t hits = 0;
    for (std::size_t r = 0; r < test_x.rows(); ++r) {
        double best = std::numeric_limits<double>::infinity();
        int arg = 0;
        for (int cl = 0; cl < n_classes; ++cl) {
            double d2 = 0.0;
            const auto m = means.row(static_cast<std::size_t>(cl));
            const auto x = test_x.row(r);
            for (std::size_t c = 0; c < x.size(); ++c) {
                const double diff = x[c] - m[c];
                d2 += diff * diff;
            }
            if (d2 < best) {
                best = d2;
                arg = cl;
            }
        }
        if (arg == test_y[r]) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(test_x.rows());
}

// Metric formulas re-derived directly from their definitions.
inline double naive_average_accuracy(const Matrix& acc) {
    const std::size_t t_count = acc.rows();
    double s = 0.0;
    for (std::size_t t = 0; t < t_count; ++t) s += acc(t, t_count - 1);
    return s / static_cast<double>(t_count);
}

inline double naive_average_forgetting(const Matrix& acc) {
    const std::size_t t_count = acc.rows();
    double s = 0.0;
    for (std::size_t t = 0; t + 1 < t_count; ++t) {
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t i = t; i + 1 < t_count; ++i) {
            mx = std::max(mx, acc(t, i) - acc(t, t_count - 1));
        }
        s += mx;
    }
    return s / static_cast<double>(t_count - 1);
}

} // namespace oracles

#endif
