#include "koppa/svd.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "koppa/error.hpp"

namespace koppa {

namespace {

constexpr int kMaxSweeps = 100;
constexpr double kOrthTol = 1e-14;

// One-sided Jacobi on a tall-or-square working copy (rows >= cols).
// Columns of `w` are rotated until mutually orthogonal; `v` accumulates the
// right-hand rotations.
void jacobi_orthogonalize(Matrix& w, Matrix& v) {
    const std::size_t m = w.rows();
    const std::size_t n = w.cols();
    v = Matrix::identity(n);
    if (n < 2) return;

    for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
        bool rotated = false;
        for (std::size_t i = 0; i + 1 < n; ++i) {
            for (std::size_t j = i + 1; j < n; ++j) {
                double dii = 0.0, djj = 0.0, dij = 0.0;
                for (std::size_t r = 0; r < m; ++r) {
                    const double wi = w(r, i);
                    const double wj = w(r, j);
                    dii += wi * wi;
                    djj += wj * wj;
                    dij += wi * wj;
                }
                if (std::abs(dij) <= kOrthTol * std::sqrt(dii * djj)) continue;
                rotated = true;

                // Classic two-by-two symmetric Schur rotation.
                double c, s;
                const double diff = djj - dii;
                if (std::abs(diff) < 1e-30 * (dii + djj)) {
                    c = std::numbers::sqrt2 / 2.0;
                    s = (dij > 0.0) ? c : -c;
                } else {
                    const double zeta = diff / (2.0 * dij);
                    const double sign = (zeta >= 0.0) ? 1.0 : -1.0;
                    const double t = sign / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
                    c = 1.0 / std::sqrt(1.0 + t * t);
                    s = c * t;
                }
                for (std::size_t r = 0; r < m; ++r) {
                    const double wi = w(r, i);
                    const double wj = w(r, j);
                    w(r, i) = c * wi - s * wj;
                    w(r, j) = s * wi + c * wj;
                }
                for (std::size_t r = 0; r < n; ++r) {
                    const double vi = v(r, i);
                    const double vj = v(r, j);
                    v(r, i) = c * vi - s * vj;
                    v(r, j) = s * vi + c * vj;
                }
            }
        }
        if (!rotated) return;
    }
    throw NumericalError("svd: Jacobi sweeps did not converge within the iteration cap");
}

// Fill columns of `u` whose singular value vanished with vectors orthonormal
// to every other column, so u keeps orthonormal columns even for
// rank-deficient input.
void complete_zero_columns(Matrix& u, const std::vector<std::size_t>& zero_cols) {
    const std::size_t m = u.rows();
    const std::size_t n = u.cols();
    std::size_t next_axis = 0;
    for (std::size_t zc : zero_cols) {
        Vector cand;
        double nrm = 0.0;
        while (next_axis < m) {
            cand.assign(m, 0.0);
            cand[next_axis++] = 1.0;
            // Two Gram-Schmidt passes against the existing columns.
            for (int pass = 0; pass < 2; ++pass) {
                for (std::size_t c = 0; c < n; ++c) {
                    if (c == zc) continue;
                    double proj = 0.0;
                    for (std::size_t r = 0; r < m; ++r) proj += cand[r] * u(r, c);
                    for (std::size_t r = 0; r < m; ++r) cand[r] -= proj * u(r, c);
                }
            }
            nrm = norm2(cand);
            if (nrm > 1e-6) break;
        }
        if (nrm <= 1e-6) {
            throw NumericalError("svd: failed to complete an orthonormal basis");
        }
        scale(1.0 / nrm, cand);
        u.set_col(zc, cand);
    }
}

SvdResult svd_tall(const Matrix& a) {
    Matrix w = a;
    Matrix v;
    jacobi_orthogonalize(w, v);

    const std::size_t m = w.rows();
    const std::size_t n = w.cols();
    Vector sigma(n, 0.0);
    for (std::size_t j = 0; j < n; ++j) {
        double s = 0.0;
        for (std::size_t r = 0; r < m; ++r) s += w(r, j) * w(r, j);
        sigma[j] = std::sqrt(s);
    }

    // Order singular values descending.
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t i, std::size_t j) { return sigma[i] > sigma[j]; });

    SvdResult out;
    out.u = Matrix(m, n);
    out.vt = Matrix(n, n);
    out.sigma.resize(n);
    const double floor = sigma.empty() ? 0.0 : sigma[order[0]] * 1e-300;
    std::vector<std::size_t> zero_cols;
    for (std::size_t k = 0; k < n; ++k) {
        const std::size_t src = order[k];
        out.sigma[k] = sigma[src];
        if (sigma[src] > floor && sigma[src] > 0.0) {
            for (std::size_t r = 0; r < m; ++r) out.u(r, k) = w(r, src) / sigma[src];
        } else {
            out.sigma[k] = 0.0;
            zero_cols.push_back(k);
        }
        for (std::size_t r = 0; r < n; ++r) out.vt(k, r) = v(r, src);
    }
    complete_zero_columns(out.u, zero_cols);
    return out;
}

void apply_sign_convention(SvdResult& r) {
    for (std::size_t c = 0; c < r.u.cols(); ++c) {
        std::size_t arg = 0;
        double best = 0.0;
        for (std::size_t row = 0; row < r.u.rows(); ++row) {
            const double mag = std::abs(r.u(row, c));
            if (mag > best) {
                best = mag;
                arg = row;
            }
        }
        if (r.u(arg, c) < 0.0) {
            for (std::size_t row = 0; row < r.u.rows(); ++row) r.u(row, c) = -r.u(row, c);
            for (std::size_t col = 0; col < r.vt.cols(); ++col) r.vt(c, col) = -r.vt(c, col);
        }
    }
}

} // namespace

Matrix SvdResult::reconstruct() const {
    Matrix scaled = u;
    for (std::size_t c = 0; c < scaled.cols(); ++c) {
        for (std::size_t r = 0; r < scaled.rows(); ++r) scaled(r, c) *= sigma[c];
    }
    return scaled * vt;
}

SvdResult svd(const Matrix& a) {
    if (a.rows() == 0 || a.cols() == 0) {
        throw DimensionError("svd: matrix must have at least one row and column");
    }
    if (!a.all_finite()) {
        throw NumericalError("svd: input contains NaN or Inf");
    }
    SvdResult out;
    if (a.rows() >= a.cols()) {
        out = svd_tall(a);
    } else {
        SvdResult t = svd_tall(a.transpose());
        out.u = t.vt.transpose();
        out.sigma = std::move(t.sigma);
        out.vt = t.u.transpose();
    }
    apply_sign_convention(out);
    return out;
}

Matrix k_rank_basis(const Matrix& a, double epsilon) {
    if (!(epsilon > 0.0 && epsilon < 1.0)) {
        throw DimensionError("k_rank_basis: epsilon must lie in (0,1)");
    }
    const SvdResult dec = svd(a);
    double total = 0.0;
    for (double s : dec.sigma) total += s * s;
    if (total == 0.0) {
        throw NumericalError("k_rank_basis: input is all zero, no basis representable");
    }
    const double target = epsilon * total;
    double cum = 0.0;
    std::size_t k = 0;
    while (k < dec.sigma.size() && cum < target) {
        cum += dec.sigma[k] * dec.sigma[k];
        ++k;
    }
    Matrix basis(a.rows(), k);
    for (std::size_t c = 0; c < k; ++c) {
        for (std::size_t r = 0; r < a.rows(); ++r) basis(r, c) = dec.u(r, c);
    }
    return basis;
}

Matrix project_onto_complement(const Matrix& k, const Matrix& q) {
    if (q.cols() == 0 || q.empty()) return k;
    if (k.cols() != q.rows()) {
        throw DimensionError("project_onto_complement: key dim does not match basis dim");
    }
    const Matrix coeff = k * q;           // rows x basis_cols
    Matrix out = k;
    for (std::size_t r = 0; r < k.rows(); ++r) {
        for (std::size_t c = 0; c < q.cols(); ++c) {
            const double coef = coeff(r, c);
            if (coef == 0.0) continue;
            for (std::size_t d = 0; d < k.cols(); ++d) {
                out(r, d) -= coef * q(d, c);
            }
        }
    }
    return out;
}

} // namespace koppa
