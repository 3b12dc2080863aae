#pragma once

#include "w2r/common.hpp"

namespace w2r::linalg {

// Symmetric part (A + Aᵀ)/2.
Matrix symmetrize(const Matrix& a);

// Smallest eigenvalue of the symmetric part of `a`.
double min_eigenvalue(const Matrix& a);

// Symmetrize, then raise every eigenvalue below `floor` to `floor`.
Matrix eigen_clamp(const Matrix& a, double floor);

// Principal square root of a symmetric PSD matrix. Eigenvalues are clamped at
// zero before the root so slightly indefinite round-off does not produce NaNs.
Matrix sqrt_psd(const Matrix& a);

// Inverse principal square root; throws ValidationError if `a` is not SPD.
Matrix inv_sqrt_spd(const Matrix& a);

bool is_symmetric(const Matrix& a, double tol);

}  // namespace w2r::linalg
