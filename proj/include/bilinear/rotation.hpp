#pragma once

#include <vector>

#include "bilinear/types.hpp"

namespace bilinear {

/// Estimated singular bases plus complements for one phase. Rotated
/// vectors use the block order [head-head; tail-head; head-tail; tail-tail]
/// (column-major vec within each block) so that the last
/// (d1 - r)(d2 - r) coordinates live in the complementary subspaces.
struct RotationMap {
  Matrix u_hat;
  Matrix u_perp;
  Matrix v_hat;
  Matrix v_perp;
  int r = 1;
  int k_eff = 1;
  bool degenerate = false;

  int d1() const { return static_cast<int>(u_hat.rows()); }
  int d2() const { return static_cast<int>(v_hat.rows()); }
  int p_dim() const { return d1() * d2(); }
  Matrix left_basis() const;
  Matrix right_basis() const;
};

/// k = d1 d2 - (d1 - r)(d2 - r).
int effective_dimension(int d1, int d2, int r);

RotationMap build_rotation(const Matrix& theta_hat, int r);
/// Rotation whose bases are the identity (u_hat = first r columns of I).
RotationMap identity_rotation(int d1, int d2, int r);

/// Reorders vec(M) of a rotated d1 x d2 matrix into the four-block layout.
Vector block_reorder(const Matrix& rotated, int r);
/// Inverse of block_reorder.
Matrix block_unorder(const Vector& v, int d1, int d2, int r);

Vector rotate_pair(const RotationMap& map, const Vector& x, const Vector& z);
Vector rotate_theta(const RotationMap& map, const Matrix& theta);
double tail_energy(const RotationMap& map, const Matrix& theta);

}  // namespace bilinear
