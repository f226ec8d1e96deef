#pragma once

#include <vector>

#include "nwp/matrix.hpp"

namespace nwp {

// Full singular value decomposition, w = u * diag(sigma) * vt.
//   u:     m x m, orthonormal columns
//   sigma: min(m,n) singular values, descending, non-negative
//   vt:    min(m,n) x n, orthonormal rows
struct SvdResult {
    Matrix u;
    std::vector<float> sigma;
    Matrix vt;
};

// One-sided Jacobi (Hestenes) SVD. The sweep orthogonalizes the columns of w
// (or of w transposed when m <= n, so u always comes out square) with plane
// rotations chosen in a fixed cyclic order; the iteration runs in double
// precision and the result is rounded to f32 once. Throws DomainError on
// non-finite input.
SvdResult svd(const Matrix& w);

// Rank-truncated factors from a decomposition: a = U * Sigma restricted to the
// top `rank` singular values (m x rank), b = the matching leading rows of Vt
// (rank x n). By Eckart-Young, a*b is the best rank-`rank` approximation and
// the Frobenius error equals sqrt(sum of the squared discarded sigmas).
void truncated_factors(const SvdResult& s, int rank, Matrix& a, Matrix& b);

} // namespace nwp
