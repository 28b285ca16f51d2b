#ifndef KOPPA_SUBSPACE_HPP
#define KOPPA_SUBSPACE_HPP

#include "koppa/matrix.hpp"

namespace koppa {

// Orthonormal basis of the query subspace accumulated over all closed tasks.
// Immutable: update() returns a new value. Old basis columns are carried over
// verbatim, so the span can only grow and earlier-task guarantees stay valid
// at machine precision.
struct SubspaceBasis {
    Matrix basis;        // dim x m, column-orthonormal (m may be 0)
    std::size_t dim = 0;
    std::size_t task_count = 0;

    std::size_t columns() const { return basis.cols(); }

    static SubspaceBasis empty(std::size_t dim) { return {Matrix(dim, 0), dim, 0}; }
};

// Absorbs one task's query sample (columns of `queries`, dim x n) into the
// basis. The directions of the queries not already covered are extracted by
// SVD and truncated with the k-rank energy criterion at `epsilon`; the
// surviving ones are appended to the basis.
SubspaceBasis update(const SubspaceBasis& basis, const Matrix& queries, double epsilon);

// ||v - Q Q^T v||_2: distance of v from the stored span.
double residual_norm(const SubspaceBasis& basis, std::span<const double> v);

} // namespace koppa

#endif
