#pragma once

#include <vector>

#include "bilinear/types.hpp"

namespace bilinear::linalg {

/// Thin SVD with singular values sorted descending and a fixed sign
/// convention: the first nonzero entry of each left singular vector is
/// nonnegative (the matching right vector flips with it).
struct Svd {
  Matrix u;
  Vector s;
  Matrix v;
};

Svd svd(const Matrix& m);

/// Orthonormal basis for the orthogonal complement of the column space of
/// `basis` (assumed orthonormal), of size n x (n - basis.cols()).
Matrix orthonormal_complement(const Matrix& basis);

/// Haar-random n x k matrix with orthonormal columns.
Matrix random_orthonormal(int n, int k, Rng& rng);

/// Principal angles (radians, ascending) between the column spaces of two
/// matrices with orthonormal columns.
Vector principal_angles(const Matrix& a, const Matrix& b);

double max_principal_angle(const Matrix& a, const Matrix& b);

/// Column-major vectorization.
Vector vec(const Matrix& m);
Matrix unvec(const Vector& v, int rows, int cols);

/// log det of a symmetric positive definite matrix via Cholesky.
double logdet_spd(const Matrix& m);

}  // namespace bilinear::linalg
