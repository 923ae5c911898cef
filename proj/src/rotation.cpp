#include "bilinear/rotation.hpp"

#include <algorithm>

#include "bilinear/linalg.hpp"

namespace bilinear {

Matrix RotationMap::left_basis() const {
  Matrix b(u_hat.rows(), u_hat.cols() + u_perp.cols());
  b << u_hat, u_perp;
  return b;
}

Matrix RotationMap::right_basis() const {
  Matrix b(v_hat.rows(), v_hat.cols() + v_perp.cols());
  b << v_hat, v_perp;
  return b;
}

int effective_dimension(int d1, int d2, int r) { return d1 * d2 - (d1 - r) * (d2 - r); }

RotationMap build_rotation(const Matrix& theta_hat, int r) {
  const int d1 = static_cast<int>(theta_hat.rows());
  const int d2 = static_cast<int>(theta_hat.cols());
  require(r >= 1 && r <= std::min(d1, d2), "build_rotation: rank must be in [1, min(d1,d2)]");
  const linalg::Svd s = linalg::svd(theta_hat);
  RotationMap map;
  map.r = r;
  map.k_eff = effective_dimension(d1, d2, r);
  map.u_hat = s.u.leftCols(r);
  map.u_perp = s.u.rightCols(d1 - r);
  map.v_hat = s.v.leftCols(r);
  map.v_perp = s.v.rightCols(d2 - r);
  const double next = r < s.s.size() ? s.s(r) : 0.0;
  map.degenerate = s.s(r - 1) - next < 1e-12;
  return map;
}

RotationMap identity_rotation(int d1, int d2, int r) {
  RotationMap map;
  map.r = r;
  map.k_eff = effective_dimension(d1, d2, r);
  const Matrix i1 = Matrix::Identity(d1, d1);
  const Matrix i2 = Matrix::Identity(d2, d2);
  map.u_hat = i1.leftCols(r);
  map.u_perp = i1.rightCols(d1 - r);
  map.v_hat = i2.leftCols(r);
  map.v_perp = i2.rightCols(d2 - r);
  return map;
}

Vector block_reorder(const Matrix& m, int r) {
  const int d1 = static_cast<int>(m.rows());
  const int d2 = static_cast<int>(m.cols());
  Vector out(d1 * d2);
  int pos = 0;
  auto emit = [&](int r0, int nr, int c0, int nc) {
    for (int c = 0; c < nc; ++c)
      for (int i = 0; i < nr; ++i) out(pos++) = m(r0 + i, c0 + c);
  };
  emit(0, r, 0, r);
  emit(r, d1 - r, 0, r);
  emit(0, r, r, d2 - r);
  emit(r, d1 - r, r, d2 - r);
  return out;
}

Matrix block_unorder(const Vector& v, int d1, int d2, int r) {
  require(v.size() == d1 * d2, "block_unorder: length mismatch");
  Matrix m(d1, d2);
  int pos = 0;
  auto take = [&](int r0, int nr, int c0, int nc) {
    for (int c = 0; c < nc; ++c)
      for (int i = 0; i < nr; ++i) m(r0 + i, c0 + c) = v(pos++);
  };
  take(0, r, 0, r);
  take(r, d1 - r, 0, r);
  take(0, r, r, d2 - r);
  take(r, d1 - r, r, d2 - r);
  return m;
}

Vector rotate_pair(const RotationMap& map, const Vector& x, const Vector& z) {
  require(x.size() == map.d1() && z.size() == map.d2(), "rotate_pair: dimension mismatch");
  const Vector xr = map.left_basis().transpose() * x;
  const Vector zr = map.right_basis().transpose() * z;
  return block_reorder(xr * zr.transpose(), map.r);
}

Vector rotate_theta(const RotationMap& map, const Matrix& theta) {
  require(theta.rows() == map.d1() && theta.cols() == map.d2(), "rotate_theta: dimension mismatch");
  const Matrix h = map.left_basis().transpose() * theta * map.right_basis();
  return block_reorder(h, map.r);
}

double tail_energy(const RotationMap& map, const Matrix& theta) {
  const Vector v = rotate_theta(map, theta);
  const int tail = (map.d1() - map.r) * (map.d2() - map.r);
  return v.tail(tail).norm();
}

}  // namespace bilinear
