#include "bilinear/linalg.hpp"

#include <algorithm>
#include <cmath>

namespace bilinear::linalg {

Svd svd(const Matrix& m) {
  Eigen::JacobiSVD<Matrix> solver(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  // JacobiSVD already returns singular values sorted descending.
  Svd out{solver.matrixU(), solver.singularValues(), solver.matrixV()};
  const int rank_cols = static_cast<int>(out.s.size());
  for (int j = 0; j < out.u.cols(); ++j) {
    double first = 0.0;
    for (int i = 0; i < out.u.rows(); ++i) {
      if (std::abs(out.u(i, j)) > 1e-14) {
        first = out.u(i, j);
        break;
      }
    }
    if (first < 0.0) {
      out.u.col(j) *= -1.0;
      if (j < rank_cols) out.v.col(j) *= -1.0;
    }
  }
  return out;
}

Matrix orthonormal_complement(const Matrix& basis) {
  const int n = static_cast<int>(basis.rows());
  const int k = static_cast<int>(basis.cols());
  if (k >= n) return Matrix(n, 0);
  // Projector onto the complement; its top eigenvectors span it.
  Matrix proj = Matrix::Identity(n, n) - basis * basis.transpose();
  Eigen::SelfAdjointEigenSolver<Matrix> es(proj);
  // Eigenvalues ascending: the last n-k are ~1.
  Matrix comp = es.eigenvectors().rightCols(n - k);
  // Re-orthonormalize against the basis for numerical hygiene.
  comp -= basis * (basis.transpose() * comp);
  Eigen::HouseholderQR<Matrix> qr(comp);
  Matrix q = qr.householderQ() * Matrix::Identity(n, n - k);
  return q;
}

Matrix random_orthonormal(int n, int k, Rng& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  Matrix g(n, k);
  for (int j = 0; j < k; ++j)
    for (int i = 0; i < n; ++i) g(i, j) = gauss(rng);
  Eigen::HouseholderQR<Matrix> qr(g);
  Matrix q = qr.householderQ() * Matrix::Identity(n, k);
  // Fix the QR sign ambiguity so the distribution is Haar.
  Matrix r = qr.matrixQR().topRows(k).triangularView<Eigen::Upper>();
  for (int j = 0; j < k; ++j)
    if (r(j, j) < 0.0) q.col(j) *= -1.0;
  return q;
}

Vector principal_angles(const Matrix& a, const Matrix& b) {
  if (a.cols() < b.cols()) return principal_angles(b, a);
  // Cosines lose precision near zero angle, so small angles come from the
  // sines of the residual of b after projecting onto span(a).
  Eigen::JacobiSVD<Matrix> cs(a.transpose() * b);
  const Vector cosv = cs.singularValues();  // descending
  Eigen::JacobiSVD<Matrix> ss(b - a * (a.transpose() * b));
  Vector sinv = ss.singularValues();  // descending
  std::sort(sinv.data(), sinv.data() + sinv.size());
  Vector ang(cosv.size());
  for (int i = 0; i < cosv.size(); ++i) {
    const double c = std::clamp(cosv(i), -1.0, 1.0);
    ang(i) = c * c > 0.5 ? std::asin(std::clamp(sinv(i), 0.0, 1.0)) : std::acos(c);
  }
  std::sort(ang.data(), ang.data() + ang.size());
  return ang;
}

double max_principal_angle(const Matrix& a, const Matrix& b) {
  Vector ang = principal_angles(a, b);
  return ang.size() ? ang.maxCoeff() : 0.0;
}

Vector vec(const Matrix& m) {
  return Eigen::Map<const Vector>(m.data(), m.size());
}

Matrix unvec(const Vector& v, int rows, int cols) {
  return Eigen::Map<const Matrix>(v.data(), rows, cols);
}

double logdet_spd(const Matrix& m) {
  Eigen::LLT<Matrix> llt(m);
  if (llt.info() != Eigen::Success) throw Error("logdet_spd: matrix not positive definite");
  const Matrix& l = llt.matrixL();
  double acc = 0.0;
  for (int i = 0; i < l.rows(); ++i) acc += std::log(l(i, i));
  return 2.0 * acc;
}

}  // namespace bilinear::linalg
