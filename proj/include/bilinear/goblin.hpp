#pragma once

#include <span>
#include <string>
#include <vector>

#include "bilinear/designs.hpp"
#include "bilinear/instances.hpp"
#include "bilinear/lowrank.hpp"
#include "bilinear/rotation.hpp"

namespace bilinear {

enum class EstimatorBackend { prox_ls, stein };

std::string to_string(EstimatorBackend b);
EstimatorBackend backend_from_string(const std::string& s);

struct GoblinConfig {
  double delta = 0.1;
  /// Multiplier on both phase lengths.
  double c_tau = 1.0;
  /// Multiplier on the subspace-exploration length; 0 follows c_tau.
  double c_tau_e = 0.0;

  double stage1_scale() const { return c_tau_e > 0.0 ? c_tau_e : c_tau; }
  double lam = 1.0;
  double tau_g_constant = 64.0;
  /// 0 selects the exact effective dimension d1 d2 - (d1 - r)(d2 - r).
  int k_override = 0;

  EstimatorBackend backend = EstimatorBackend::prox_ls;
  /// Score-moment constant in gamma. Atoms have unit Frobenius norm, so the
  /// loss curvature is about 1/(d1 d2) of the isotropic case and C = 1 zeroes the estimate.
  double score_bound_c = 1e-5;
  double dither_variance = 1.0;
  int prox_iters = 300;

  EOptimalOptions e_opts{};
  FrankWolfeOptions fw_opts{};
  /// Stop Frank-Wolfe at the 8 k log(1 + tau_prev / lam) direction bound
  /// instead of running to the duality-gap tolerance.
  bool fw_bound_target = false;
  /// Fixed-point refinements of the design scale n in Lambda / n.
  int rho_refinements = 2;
  double prune_relative = 1e-5;

  double delta_floor = 9.5367431640625e-07;  // 2^-20
  int phase_slack = 2;
  /// Hard stop on total reward draws; 0 disables the check.
  double max_total_samples = 1e15;
};

/// Dimensions and bounds entering the phase schedule.
struct ScheduleContext {
  int d1 = 1;         // row dimension of the estimated matrix
  int d2 = 1;         // column dimension
  int r = 1;
  double s_r = 1.0;
  std::size_t num_pairs = 1;
  double s_norm = 1.0;  // bound on ||theta||_2
  int k_eff = 1;
  int p_dim = 1;
};

struct PhaseParams {
  int ell = 1;
  double eps = 0.5;
  double delta_ell = 0.05;
  double tau_e = 0.0;
  double tau_g = 0.0;
  RegularizerSpec reg{};
  double b_star = 0.0;
  double s_perp = 0.0;
};

/// log(4 l^2 |W| / delta_l).
double phase_log_term(int ell, std::size_t num_pairs, double delta_ell);
double tau_g_seed(std::size_t num_pairs, double delta);
double tau_e_length(int ell, const ScheduleContext& ctx, double delta, double c_tau_e);

/// Every phase quantity; tau_g uses `rho_g_value` and the regularizer uses `tau_g_prev`.
PhaseParams schedule_phase(int ell, const ScheduleContext& ctx, const GoblinConfig& cfg, double rho_g_value,
                           double tau_g_prev);

int phase_cap(const GoblinConfig& cfg);

struct PhaseLog {
  int ell = 0;
  std::size_t active_before = 0;
  std::size_t active_after = 0;
  double rho = 0.0;
  double tau_e = 0.0;
  double tau_g = 0.0;
  double tau_g_prev = 0.0;
  double lam_perp = 0.0;
  double b_star = 0.0;
  double s_perp = 0.0;
  long samples_stage1 = 0;
  long samples_stage2 = 0;
  double logdet_ratio = 0.0;
  double logdet_bound = 0.0;
  double tail_energy = 0.0;
  std::size_t support = 0;
  bool fw_converged = true;
};

struct RunRecord {
  PairIndex identified{};
  bool success = false;
  int phases = 0;
  long samples_stage1 = 0;
  long samples_stage2 = 0;
  long samples_stage3 = 0;  // multi-task runs only
  long total = 0;
  long oracle_draws = 0;
  bool cap_exceeded = false;
  std::vector<PhaseLog> per_phase_log;
};

/// (Lambda + sum w w^T)^-1 sum w r.
Vector regularized_ls(std::span<const Vector> features, std::span<const double> rewards, const RegularizerSpec& reg);

/// Drops every pair whose score trails the best active score by more than 2 eps.
std::vector<PairIndex> eliminate(std::span<const PairIndex> active, std::span<const Vector> rotated,
                                 const Vector& theta_hat, double eps);

// ---- building blocks shared with the multi-task and baseline runners ------

/// Arms as seen by the elimination stage (ambient or latent coordinates).
struct ArmView {
  std::vector<Vector> left;
  std::vector<Vector> right;
};

ArmView ambient_view(const ArmSet& arms);

/// vec(x z^T) for every pair, in all_pairs order.
std::vector<Vector> outer_atoms(const ArmView& view, std::span<const PairIndex> pairs);

struct EliminationOutcome {
  std::vector<PairIndex> survivors;
  Vector theta_hat;
  PairIndex leader{};  // empirical argmax over the active set
  long samples = 0;
  /// The scheduled length exceeded max_total_samples; nothing was sampled.
  bool truncated = false;
  PhaseLog log;
};

/// One rotated G-design round: design, schedule, sample, fit, eliminate.
/// `s_perp` and `tau_e` come from this phase's exploration stage.
EliminationOutcome rotated_elimination_step(const ArmView& view, const RotationMap& map,
                                            std::span<const PairIndex> active, const ScheduleContext& ctx,
                                            const GoblinConfig& cfg, int ell, double tau_g_prev, double tau_e,
                                            double s_perp, RewardOracle& oracle, Rng& rng,
                                            const Matrix* truth_for_diagnostics = nullptr);

/// Explores all pairs of `view` by the E-optimal design for `tau` rounds and
/// fits a low-rank matrix in the view's coordinates.
struct ExplorationOutcome {
  Matrix estimate;
  long samples = 0;
};

class SubspaceExplorer {
 public:
  SubspaceExplorer(ArmView view, const GoblinConfig& cfg);

  const std::vector<PairIndex>& pairs() const { return pairs_; }
  const Design& design() const { return design_; }
  int rows() const { return rows_; }
  int cols() const { return cols_; }

  /// Pull allocation for budget tau (aligned with pairs()).
  std::vector<long> allocation(double tau) const;

  /// Non-empty embeddings map view-coordinate features back to the ambient
  /// space for dithered pulls (x_ambient = E1 x E2^T).
  ExplorationOutcome explore(double tau, RewardOracle& oracle, Rng& rng, const EstimatorParams& params,
                             const Matrix& embed_left = Matrix(), const Matrix& embed_right = Matrix()) const;

  /// Data only (no fit). Used when several tasks share one estimator.
  QuadraticLoss collect_loss(std::span<const long> alloc, RewardOracle& oracle, Rng& rng, double* sq_sum) const;
  SampleBatch collect_dithered(std::span<const long> alloc, RewardOracle& oracle, Rng& rng,
                               const Matrix& embed_left, const Matrix& embed_right) const;

 private:
  ArmView view_;
  GoblinConfig cfg_;
  std::vector<PairIndex> pairs_;
  std::vector<Vector> atoms_;
  Design design_;
  int rows_ = 0;
  int cols_ = 0;
};

Matrix fit_lowrank(const QuadraticLoss& loss, double gamma, int iters);

RunRecord run_single(const BilinearInstance& instance, const GoblinConfig& cfg, Rng& rng);

}  // namespace bilinear
