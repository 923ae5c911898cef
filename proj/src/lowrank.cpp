#include "bilinear/lowrank.hpp"

#include <cmath>

#include "bilinear/linalg.hpp"

namespace bilinear {

void SampleBatch::validate() const {
  require(!rewards.empty(), "SampleBatch: empty batch");
  if (features.size() != rewards.size()) throw LengthMismatch("SampleBatch: features/rewards length mismatch");
  const auto rows = features.front().rows();
  const auto cols = features.front().cols();
  for (const auto& f : features)
    require(f.rows() == rows && f.cols() == cols, "SampleBatch: ragged feature shapes");
  if (density) {
    if (density->centers.size() != rewards.size())
      throw LengthMismatch("SampleBatch: density centers length mismatch");
    require(density->variance > 0.0, "SampleBatch: dither variance must be positive");
  }
}

double default_gamma(int d1, int d2, std::size_t n, const EstimatorParams& p) {
  require(n > 0, "default_gamma: empty batch");
  return 4.0 * std::sqrt(2.0 * (4.0 + p.s0 * p.s0) * p.score_bound_c * d1 * d2 *
                         std::log(2.0 * (d1 + d2) / p.delta) / static_cast<double>(n));
}

double default_nu(int d1, int d2, std::size_t n, const EstimatorParams& p) {
  require(n > 0, "default_nu: empty batch");
  return std::sqrt(2.0 * std::log(2.0 * (d1 + d2) / p.delta) /
                   ((4.0 + p.s0 * p.s0) * p.tasks * static_cast<double>(n) * d1 * d2));
}

double psi_scalar(double x) {
  if (x >= 0.0) return std::log1p(x + 0.5 * x * x);
  return -std::log1p(-x + 0.5 * x * x);
}

Matrix psi_tilde(const Matrix& a, double nu) {
  require(nu > 0.0, "psi_tilde: nu must be positive");
  const auto d1 = a.rows();
  const auto d2 = a.cols();
  if (a.isZero(0.0)) return Matrix::Zero(d1, d2);
  Matrix h = Matrix::Zero(d1 + d2, d1 + d2);
  h.topRightCorner(d1, d2) = nu * a;
  h.bottomLeftCorner(d2, d1) = nu * a.transpose();
  Eigen::SelfAdjointEigenSolver<Matrix> es(h);
  Vector mapped = es.eigenvalues().unaryExpr([](double x) { return psi_scalar(x); });
  const Matrix& q = es.eigenvectors();
  const Matrix full = q * mapped.asDiagonal() * q.transpose();
  return full.topRightCorner(d1, d2) / nu;
}

Matrix score_gaussian(const Matrix& x, const Matrix& mean, double var) {
  require(var > 0.0, "score_gaussian: variance must be positive");
  return (x - mean) / var;
}

Matrix svt(const Matrix& m, double threshold) {
  require(threshold >= 0.0, "svt: threshold must be nonnegative");
  if (threshold == 0.0) return m;
  Eigen::JacobiSVD<Matrix> s(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
  Vector shrunk = (s.singularValues().array() - threshold).max(0.0);
  return s.matrixU() * shrunk.asDiagonal() * s.matrixV().transpose();
}

Matrix stein_moment(const SampleBatch& batch, double nu) {
  batch.validate();
  if (!batch.density) throw BackendMismatch("stein estimator needs a batch collected with a sampling density");
  const auto& dens = *batch.density;
  Matrix acc = Matrix::Zero(batch.features.front().rows(), batch.features.front().cols());
  for (std::size_t s = 0; s < batch.size(); ++s) {
    const Matrix q = score_gaussian(batch.features[s], dens.centers[s], dens.variance);
    acc += psi_tilde(batch.rewards[s] * q, nu);
  }
  return acc / static_cast<double>(batch.size());
}

Matrix stein_estimate(const SampleBatch& batch, const SteinConfig& cfg) {
  require(cfg.nu > 0.0, "stein_estimate: nu must be positive");
  require(cfg.gamma >= 0.0, "stein_estimate: gamma must be nonnegative");
  return svt(stein_moment(batch, cfg.nu), cfg.gamma / 2.0);
}

Matrix averaged_stein_estimate(std::span<const SampleBatch> batches, const SteinConfig& cfg) {
  require(!batches.empty(), "averaged_stein_estimate: no task batches");
  const auto len = batches.front().size();
  for (const auto& b : batches)
    if (b.size() != len) throw LengthMismatch("averaged_stein_estimate: task batches differ in length");
  Matrix acc = stein_moment(batches.front(), cfg.nu);
  for (std::size_t m = 1; m < batches.size(); ++m) acc += stein_moment(batches[m], cfg.nu);
  acc /= static_cast<double>(batches.size());
  return svt(acc, cfg.gamma / 2.0);
}

double stein_objective(const Matrix& theta, const Matrix& moment, double gamma) {
  Eigen::JacobiSVD<Matrix> s(theta);
  return theta.squaredNorm() - 2.0 * (moment.array() * theta.array()).sum() + gamma * s.singularValues().sum();
}

QuadraticLoss QuadraticLoss::from_batch(const SampleBatch& batch) {
  batch.validate();
  QuadraticLoss q;
  q.rows = static_cast<int>(batch.features.front().rows());
  q.cols = static_cast<int>(batch.features.front().cols());
  const int p = q.rows * q.cols;
  q.gram = Matrix::Zero(p, p);
  q.linear = Vector::Zero(p);
  for (std::size_t s = 0; s < batch.size(); ++s) {
    const Vector x = linalg::vec(batch.features[s]);
    q.gram.selfadjointView<Eigen::Lower>().rankUpdate(x, 1.0);
    q.linear += x * batch.rewards[s];
    q.constant += batch.rewards[s] * batch.rewards[s];
  }
  q.n = batch.size();
  const double inv = 1.0 / static_cast<double>(q.n);
  q.gram = Matrix(q.gram.selfadjointView<Eigen::Lower>()) * inv;
  q.linear *= inv;
  q.constant *= inv;
  return q;
}

double QuadraticLoss::value(const Matrix& theta) const {
  const Vector t = linalg::vec(theta);
  return std::max(0.0, constant - 2.0 * linear.dot(t) + t.dot(gram * t));
}

Matrix QuadraticLoss::gradient(const Matrix& theta) const {
  const Vector t = linalg::vec(theta);
  return linalg::unvec(2.0 * (gram * t - linear), rows, cols);
}

double QuadraticLoss::lipschitz() const {
  Eigen::SelfAdjointEigenSolver<Matrix> es(gram, Eigen::EigenvaluesOnly);
  return 2.0 * es.eigenvalues().maxCoeff();
}

double prox_ls_objective(const QuadraticLoss& loss, const Matrix& theta, double gamma) {
  Eigen::JacobiSVD<Matrix> s(theta);
  return loss.value(theta) + gamma * s.singularValues().sum();
}

ProxLsResult prox_ls_estimate(const QuadraticLoss& loss, double gamma, const ProxLsOptions& opts) {
  require(gamma >= 0.0, "prox_ls_estimate: gamma must be nonnegative");
  ProxLsResult out;
  out.lipschitz = loss.lipschitz();
  out.theta = Matrix::Zero(loss.rows, loss.cols);
  out.objective = prox_ls_objective(loss, out.theta, gamma);
  if (opts.trace) opts.trace->push_back(out.objective);
  if (out.lipschitz <= 0.0) {
    out.converged = true;
    return out;
  }
  const double step = opts.step > 0.0 ? opts.step : 1.0 / out.lipschitz;
  require(step <= 1.0 / out.lipschitz * (1.0 + 1e-12), "prox_ls_estimate: step exceeds 1/L");
  for (int it = 0; it < opts.iters; ++it) {
    const Matrix next = svt(out.theta - step * loss.gradient(out.theta), step * gamma);
    const double obj = prox_ls_objective(loss, next, gamma);
    const double prev = out.objective;
    // A rise can only be rounding noise at a fixed point; keep the better iterate.
    if (obj > prev) {
      out.iterations = it + 1;
      out.converged = true;
      break;
    }
    out.theta = next;
    out.objective = obj;
    out.iterations = it + 1;
    if (opts.trace) opts.trace->push_back(obj);
    if (std::abs(prev - obj) <= opts.tol * std::max(1.0, std::abs(prev))) {
      out.converged = true;
      break;
    }
  }
  return out;
}

ProxLsResult prox_ls_estimate(const SampleBatch& batch, double gamma, const ProxLsOptions& opts) {
  return prox_ls_estimate(QuadraticLoss::from_batch(batch), gamma, opts);
}

}  // namespace bilinear
