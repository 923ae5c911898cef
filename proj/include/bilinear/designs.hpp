#pragma once

#include <span>
#include <vector>

#include "bilinear/types.hpp"

namespace bilinear {

/// Probability vector over a finite atom list.
struct Design {
  Vector weights;
  bool converged = true;
  int iterations = 0;
  double objective = 0.0;

  std::size_t support_size(double threshold = 0.0) const;
  void validate() const;
};

/// Diagonal regularizer diag(lam x k_eff, lam_perp x (p_dim - k_eff)).
struct RegularizerSpec {
  double lam = 1.0;
  double lam_perp = 1.0;
  int k_eff = 1;
  int p_dim = 1;

  Vector diagonal() const;
  double log_det() const;
  /// Same structure with every entry divided by n.
  RegularizerSpec scaled(double n) const;
  void validate() const;
};

RegularizerSpec lambda_regularizer(int k, int p, double lam, double tau_prev);

/// sum_w b_w w w^T.
Matrix information_matrix(std::span<const Vector> atoms, const Vector& weights);

// ---- E-optimal ------------------------------------------------------------

struct EOptimalOptions {
  int iters = 400;    // cap on Newton steps across all barrier rounds
  double tol = 1e-6;  // relative duality gap
};

double min_eigenvalue_objective(std::span<const Vector> atoms, const Vector& weights);

/// Maximizes lambda_min(sum_w b_w w w^T) over the simplex with a log-barrier interior-point method.
/// Throws SpanDeficient when the atoms do not span R^q.
Design e_optimal(std::span<const Vector> atoms, const EOptimalOptions& opts = {});

// ---- Regularized D/G-optimal via Frank-Wolfe ------------------------------

/// Direction set Y for the G-criterion: either an explicit list, or all
/// pairwise differences of the atoms (evaluated without materializing them).
class DirectionSet {
 public:
  static DirectionSet pairwise();
  static DirectionSet explicit_list(std::vector<Vector> dirs);

  bool is_pairwise() const { return pairwise_; }
  const std::vector<Vector>& vectors() const { return dirs_; }

  /// max_y y^T a_inv y.
  double max_norm_sq(std::span<const Vector> atoms, const Matrix& a_inv) const;

 private:
  bool pairwise_ = false;
  std::vector<Vector> dirs_;
};

std::vector<Vector> pairwise_differences(std::span<const Vector> atoms);

struct FrankWolfeOptions {
  int max_iters = 5000;
  /// Relative duality-gap tolerance: stop once max_w ||w||^2_{A^-1} <= (1+eps) * (p - tr(A^-1 Lambda)).
  double eps = 0.05;
  bool line_search = false;
  /// When false, only the directions-vs-target rule can stop the iteration.
  bool use_gap_rule = true;
  /// If non-null, g(b_j) is appended per iteration.
  std::vector<double>* trace = nullptr;
};

/// g(b) = log det(sum b_w w w^T + Lambda) - log det Lambda.
double logdet_objective(std::span<const Vector> atoms, const Vector& weights, const RegularizerSpec& reg);

Design frank_wolfe_logdet(std::span<const Vector> atoms, const RegularizerSpec& reg,
                          const DirectionSet& directions, double target,
                          const FrankWolfeOptions& opts = {});

/// max_y ||y||^2 under (sum b_w w w^T + Lambda / n_scale)^-1.
double rho_g(const Design& design, std::span<const Vector> atoms, const RegularizerSpec& reg,
             const DirectionSet& directions, double n_scale);

// ---- Allocation -----------------------------------------------------------

/// ceil(b_w tau) pulls for every atom with positive weight.
std::vector<long> round_allocation(const Design& design, double tau);

Design prune_support(const Design& design, double threshold);

/// Caratheodory reduction: moves weight along null directions of
/// w -> sum_i w_i a_i a_i^T until at most p(p+1)/2 atoms remain (p = atom dimension).
/// The information sum_i w_i a_i a_i^T never decreases in Loewner order, so
/// every leverage and the log-det objective are no worse than before.
Design reduce_support(std::span<const Vector> atoms, const Design& design);

}  // namespace bilinear
