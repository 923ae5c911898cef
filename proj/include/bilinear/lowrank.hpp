#pragma once

#include <optional>
#include <span>
#include <vector>

#include "bilinear/types.hpp"

namespace bilinear {

/// Entrywise-independent Gaussian sampling density around per-sample centers.
struct DitherDensity {
  std::vector<Matrix> centers;  // one per sample, the undithered design atom
  double variance = 1.0;
};

struct SampleBatch {
  std::vector<Matrix> features;
  std::vector<double> rewards;
  std::optional<DitherDensity> density;

  std::size_t size() const { return rewards.size(); }
  void validate() const;
};

struct SteinConfig {
  double nu = 1.0;
  double gamma = 0.0;
};

/// Tuning constants shared by both estimator backends.
struct EstimatorParams {
  double delta = 0.1;
  double s0 = 1.0;
  double score_bound_c = 1.0;  // C, bound on the score's second moment
  int tasks = 1;               // M in the nu schedule
};

/// gamma = 4 sqrt(2 (4 + S0^2) C d1 d2 log(2 (d1 + d2) / delta) / n).
double default_gamma(int d1, int d2, std::size_t n, const EstimatorParams& p);
/// nu = sqrt(2 log(2 (d1 + d2) / delta) / ((4 + S0^2) M n d1 d2)).
double default_nu(int d1, int d2, std::size_t n, const EstimatorParams& p);

double psi_scalar(double x);

/// Applies psi to the spectrum of nu * H(A) and returns the off-diagonal block / nu.
Matrix psi_tilde(const Matrix& a, double nu);

/// Entrywise Gaussian score (X - mean) / var.
Matrix score_gaussian(const Matrix& x, const Matrix& mean, double var);

/// Singular-value soft-thresholding.
Matrix svt(const Matrix& m, double threshold);

/// (1/n) sum_s psi_tilde(r_s * Q(X_s), nu).
Matrix stein_moment(const SampleBatch& batch, double nu);

Matrix stein_estimate(const SampleBatch& batch, const SteinConfig& cfg);

/// Averages the truncated Stein moments over tasks and rounds, then thresholds.
Matrix averaged_stein_estimate(std::span<const SampleBatch> batches, const SteinConfig& cfg);

/// Loss minimized by stein_estimate: <T,T> - 2 <Mbar,T> + gamma ||T||_nuc.
double stein_objective(const Matrix& theta, const Matrix& moment, double gamma);

struct ProxLsOptions {
  int iters = 2000;
  double step = 0.0;  // 0 selects 1/L
  double tol = 1e-9;
  std::vector<double>* trace = nullptr;
};

struct ProxLsResult {
  Matrix theta;
  bool converged = false;
  int iterations = 0;
  double objective = 0.0;
  double lipschitz = 0.0;
};

/// Sufficient statistics of the squared loss: G = (1/n) sum vec(X) vec(X)^T,
/// h = (1/n) sum vec(X) r, and c = (1/n) sum r^2.
struct QuadraticLoss {
  Matrix gram;
  Vector linear;
  double constant = 0.0;
  int rows = 0;
  int cols = 0;
  std::size_t n = 0;

  static QuadraticLoss from_batch(const SampleBatch& batch);
  double value(const Matrix& theta) const;
  Matrix gradient(const Matrix& theta) const;
  double lipschitz() const;
};

/// Proximal gradient on (1/n) sum (r - <X,T>)^2 + gamma ||T||_nuc.
ProxLsResult prox_ls_estimate(const QuadraticLoss& loss, double gamma, const ProxLsOptions& opts = {});
ProxLsResult prox_ls_estimate(const SampleBatch& batch, double gamma, const ProxLsOptions& opts = {});

double prox_ls_objective(const QuadraticLoss& loss, const Matrix& theta, double gamma);

}  // namespace bilinear
