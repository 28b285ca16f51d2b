#include "koppa/subspace.hpp"

#include <cmath>

#include "koppa/error.hpp"
#include "koppa/svd.hpp"

namespace koppa {

namespace {

// Component of each query column outside the current span.
Matrix residual_columns(const Matrix& basis, const Matrix& queries) {
    if (basis.cols() == 0) return queries;
    Matrix out = queries;
    for (std::size_t c = 0; c < queries.cols(); ++c) {
        Vector q = out.col(c);
        // Two projection passes keep the residual orthogonal to the basis
        // even when q lies almost entirely inside the span.
        for (int pass = 0; pass < 2; ++pass) {
            const Vector coeff = matvec_t(basis, q);
            for (std::size_t r = 0; r < basis.rows(); ++r) {
                double acc = 0.0;
                for (std::size_t b = 0; b < basis.cols(); ++b) acc += basis(r, b) * coeff[b];
                q[r] -= acc;
            }
        }
        out.set_col(c, q);
    }
    return out;
}

} // namespace

SubspaceBasis update(const SubspaceBasis& basis, const Matrix& queries, double epsilon) {
    if (queries.rows() != basis.dim) {
        throw DimensionError("subspace update: query dimension does not match basis dimension");
    }
    if (queries.cols() == 0) {
        throw DimensionError("subspace update: need at least one query column");
    }

    SubspaceBasis next = basis;
    next.task_count = basis.task_count + 1;

    if (basis.columns() == 0) {
        next.basis = k_rank_basis(queries, epsilon);
        return next;
    }
    if (basis.columns() >= basis.dim) {
        // Span is already the whole space; nothing can be added.
        return next;
    }

    const Matrix residual = residual_columns(basis.basis, queries);
    // Queries fully inside the span leave only rounding noise behind.
    const double rel = residual.frobenius_norm() /
                       std::max(queries.frobenius_norm(), 1e-300);
    if (rel < 1e-12) return next;

    Matrix fresh = k_rank_basis(residual, epsilon);
    // The singular directions of the residual are orthogonal to the old span
    // up to rounding; one cleanup pass removes that.
    fresh = residual_columns(basis.basis, fresh);
    for (std::size_t c = 0; c < fresh.cols(); ++c) {
        Vector v = fresh.col(c);
        const double n = norm2(v);
        if (n > 0.0) scale(1.0 / n, v);
        fresh.set_col(c, v);
    }

    const std::size_t room = basis.dim - basis.columns();
    if (fresh.cols() > room) {
        Matrix trimmed(fresh.rows(), room);
        for (std::size_t c = 0; c < room; ++c) {
            for (std::size_t r = 0; r < fresh.rows(); ++r) trimmed(r, c) = fresh(r, c);
        }
        fresh = trimmed;
    }
    next.basis = basis.basis.hcat(fresh);
    return next;
}

double residual_norm(const SubspaceBasis& basis, std::span<const double> v) {
    if (v.size() != basis.dim) {
        throw DimensionError("residual_norm: vector dimension does not match basis");
    }
    if (basis.columns() == 0) return norm2(v);
    Vector r(v.begin(), v.end());
    const Vector coeff = matvec_t(basis.basis, r);
    for (std::size_t row = 0; row < basis.basis.rows(); ++row) {
        double acc = 0.0;
        for (std::size_t b = 0; b < basis.basis.cols(); ++b) acc += basis.basis(row, b) * coeff[b];
        r[row] -= acc;
    }
    return norm2(r);
}

} // namespace koppa
