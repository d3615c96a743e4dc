#pragma once

#include "dyad/skeleton.hpp"

namespace dyad::codec {

// Orthonormal DCT-II basis of size n: basis(k, t) = alpha_k cos(pi (2t + 1) k / 2n).
// Rows are frequencies; the matrix is orthogonal.
const Matrix& dct_basis(int n);

// seq is K x T with one time series per row. Returns K x T coefficients.
Matrix dct_forward(const Matrix& seq);
Matrix dct_inverse(const Matrix& coeffs);

// Extends a T_l x K window to (T_l + future) x K by repeating its last row.
Matrix pad_replicate(const Matrix& last_window, int future);

// DCT coefficients (K x L) of an L x K sub-sequence, L = expected_length.
Matrix make_value(const Matrix& sub_sequence, int expected_length);

}  // namespace dyad::codec
