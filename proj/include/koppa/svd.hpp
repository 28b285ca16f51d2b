#ifndef KOPPA_SVD_HPP
#define KOPPA_SVD_HPP

#include "koppa/matrix.hpp"

namespace koppa {

// Thin singular value decomposition a = u * diag(sigma) * vt with
// k = min(rows, cols) retained components.
//   u     : rows x k, column-orthonormal
//   sigma : k values, sorted descending, all >= 0
//   vt    : k x cols, row-orthonormal
struct SvdResult {
    Matrix u;
    Vector sigma;
    Matrix vt;

    Matrix reconstruct() const;
};

// One-sided Jacobi SVD. Deterministic for identical input bytes; throws
// NumericalError if the sweep cap is reached before convergence and
// DimensionError on empty or non-finite input. The largest-magnitude entry
// of every left singular vector is forced non-negative so results are
// reproducible across runs.
SvdResult svd(const Matrix& a);

// First k left singular vectors of `a`, where k is minimal with
//   sum_{i<=k} sigma_i^2 >= epsilon * sum_i sigma_i^2.
// Throws on all-zero input (no direction to represent) and on epsilon
// outside (0,1).
Matrix k_rank_basis(const Matrix& a, double epsilon);

// Removes from every row of `k` its component inside the column span of the
// orthonormal basis `q`:  k * (I - q q^T).  An empty basis returns `k`
// unchanged.
Matrix project_onto_complement(const Matrix& k, const Matrix& q);

} // namespace koppa

#endif
