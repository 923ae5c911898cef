#include "bilinear/goblin.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "bilinear/linalg.hpp"

namespace bilinear {

std::string to_string(EstimatorBackend b) { return b == EstimatorBackend::stein ? "stein" : "prox-ls"; }

EstimatorBackend backend_from_string(const std::string& s) {
  if (s == "prox-ls" || s == "prox_ls") return EstimatorBackend::prox_ls;
  if (s == "stein") return EstimatorBackend::stein;
  throw InvalidArgument("unknown estimator backend '" + s + "' (expected prox-ls or stein)");
}

double phase_log_term(int ell, std::size_t num_pairs, double delta_ell) {
  return std::log(4.0 * ell * ell * static_cast<double>(num_pairs) / delta_ell);
}

double tau_g_seed(std::size_t num_pairs, double delta) {
  return std::log(4.0 * static_cast<double>(num_pairs) / delta);
}

double tau_e_length(int ell, const ScheduleContext& ctx, double delta, double c_tau_e) {
  const double delta_ell = delta / (2.0 * ell * ell);
  return c_tau_e * std::sqrt(8.0 * ctx.d1 * ctx.d2 * ctx.r * phase_log_term(ell, ctx.num_pairs, delta_ell)) / ctx.s_r;
}

PhaseParams schedule_phase(int ell, const ScheduleContext& ctx, const GoblinConfig& cfg, double rho_g_value,
                           double tau_g_prev) {
  require(ell >= 1, "schedule_phase: ell must be >= 1");
  require(rho_g_value > 0.0, "schedule_phase: rho must be positive");
  require(tau_g_prev > 0.0, "schedule_phase: tau_g_prev must be positive");
  require(ctx.s_r > 0.0, "schedule_phase: S_r must be positive");
  PhaseParams p;
  p.ell = ell;
  p.eps = std::ldexp(1.0, -ell);
  p.delta_ell = cfg.delta / (2.0 * ell * ell);
  p.tau_e = tau_e_length(ell, ctx, cfg.delta, cfg.stage1_scale());
  p.s_perp = 8.0 * ctx.d1 * ctx.d2 * ctx.r * std::log((ctx.d1 + ctx.d2) / p.delta_ell) /
             (p.tau_e * ctx.s_r * ctx.s_r);
  p.reg = lambda_regularizer(ctx.k_eff, ctx.p_dim, cfg.lam, tau_g_prev);
  p.b_star = 8.0 * std::sqrt(cfg.lam) * ctx.s_norm + std::sqrt(p.reg.lam_perp) * p.s_perp;
  const double log_term = phase_log_term(ell, ctx.num_pairs, p.delta_ell);
  p.tau_g = std::ceil(cfg.c_tau * cfg.tau_g_constant * p.b_star * rho_g_value * log_term / (p.eps * p.eps));
  return p;
}

int phase_cap(const GoblinConfig& cfg) {
  require(cfg.delta_floor > 0.0 && cfg.delta_floor < 4.0, "phase_cap: delta_floor must be in (0, 4)");
  return static_cast<int>(std::ceil(std::log2(4.0 / cfg.delta_floor))) + cfg.phase_slack;
}

Vector regularized_ls(std::span<const Vector> features, std::span<const double> rewards, const RegularizerSpec& reg) {
  require(!features.empty(), "regularized_ls: no features");
  if (features.size() != rewards.size()) throw LengthMismatch("regularized_ls: features/rewards length mismatch");
  const auto p = features.front().size();
  require(p == reg.p_dim, "regularized_ls: feature length != p_dim");
  Matrix v = Matrix::Zero(p, p);
  Vector u = Vector::Zero(p);
  for (std::size_t s = 0; s < features.size(); ++s) {
    require(features[s].size() == p, "regularized_ls: ragged features");
    v.selfadjointView<Eigen::Lower>().rankUpdate(features[s], 1.0);
    u += features[s] * rewards[s];
  }
  Matrix full = v.selfadjointView<Eigen::Lower>();
  full.diagonal() += reg.diagonal();
  return Eigen::LLT<Matrix>(full).solve(u);
}

std::vector<PairIndex> eliminate(std::span<const PairIndex> active, std::span<const Vector> rotated,
                                 const Vector& theta_hat, double eps) {
  require(!active.empty(), "eliminate: empty active set");
  if (active.size() != rotated.size()) throw LengthMismatch("eliminate: active/rotated length mismatch");
  std::vector<double> score(active.size());
  for (std::size_t i = 0; i < active.size(); ++i) score[i] = rotated[i].dot(theta_hat);
  const double best = *std::max_element(score.begin(), score.end());
  std::vector<PairIndex> out;
  for (std::size_t i = 0; i < active.size(); ++i)
    if (best - score[i] <= 2.0 * eps) out.push_back(active[i]);
  return out;
}

ArmView ambient_view(const ArmSet& arms) { return {arms.left, arms.right}; }

std::vector<Vector> outer_atoms(const ArmView& view, std::span<const PairIndex> pairs) {
  std::vector<Vector> out;
  out.reserve(pairs.size());
  for (const auto& pr : pairs) out.push_back(linalg::vec(view.left[pr.left] * view.right[pr.right].transpose()));
  return out;
}

namespace {

Design pruned(const Design& d, double relative) {
  return prune_support(d, relative * d.weights.maxCoeff());
}

}  // namespace

EliminationOutcome rotated_elimination_step(const ArmView& view, const RotationMap& map,
                                            std::span<const PairIndex> active, const ScheduleContext& ctx,
                                            const GoblinConfig& cfg, int ell, double tau_g_prev, double tau_e,
                                            double s_perp, RewardOracle& oracle, Rng& rng,
                                            const Matrix* truth_for_diagnostics) {
  require(active.size() >= 2, "rotated_elimination_step: need at least two active pairs");
  std::vector<Vector> rot;
  rot.reserve(active.size());
  for (const auto& pr : active) rot.push_back(rotate_pair(map, view.left[pr.left], view.right[pr.right]));

  PhaseParams pp = schedule_phase(ell, ctx, cfg, 1.0, tau_g_prev);
  pp.tau_e = tau_e;
  pp.s_perp = s_perp;
  pp.b_star = 8.0 * std::sqrt(cfg.lam) * ctx.s_norm + std::sqrt(pp.reg.lam_perp) * s_perp;
  const double log_term = phase_log_term(ell, ctx.num_pairs, pp.delta_ell);
  const double target = cfg.fw_bound_target ? 8.0 * ctx.k_eff * std::log1p(tau_g_prev / cfg.lam) : 0.0;
  const DirectionSet dirs = DirectionSet::pairwise();

  // The design sees Lambda / n with n the phase length it produces; a few
  // fixed-point passes starting from the previous length settle n.
  double n_scale = tau_g_prev;
  Design design;
  double rho = 0.0;
  for (int it = 0; it <= cfg.rho_refinements; ++it) {
    design = pruned(frank_wolfe_logdet(rot, pp.reg.scaled(n_scale), dirs, target, cfg.fw_opts), cfg.prune_relative);
    rho = rho_g(design, rot, pp.reg, dirs, n_scale);
    pp.tau_g = std::ceil(cfg.c_tau * cfg.tau_g_constant * pp.b_star * rho * log_term / (pp.eps * pp.eps));
    if (pp.tau_g == n_scale) break;
    n_scale = pp.tau_g;
  }

  EliminationOutcome out;
  PhaseLog& log = out.log;
  log.ell = ell;
  log.active_before = active.size();
  log.rho = rho;
  log.tau_e = tau_e;
  log.tau_g = pp.tau_g;
  log.tau_g_prev = tau_g_prev;
  log.lam_perp = pp.reg.lam_perp;
  log.b_star = pp.b_star;
  log.s_perp = s_perp;
  log.support = design.support_size();
  log.fw_converged = design.converged;
  if (truth_for_diagnostics) log.tail_energy = tail_energy(map, *truth_for_diagnostics);

  if (cfg.max_total_samples > 0.0 && pp.tau_g > cfg.max_total_samples) {
    out.truncated = true;
    out.survivors.assign(active.begin(), active.end());
    out.leader = active.front();
    log.active_after = active.size();
    return out;
  }

  const std::vector<long> alloc = round_allocation(design, pp.tau_g);
  const auto p = static_cast<Eigen::Index>(ctx.p_dim);
  Matrix v = Matrix::Zero(p, p);
  Vector u = Vector::Zero(p);
  for (std::size_t i = 0; i < active.size(); ++i) {
    const long n = alloc[i];
    if (n == 0) continue;
    const double sum = oracle.pull_sum(active[i], n, rng);
    v.selfadjointView<Eigen::Lower>().rankUpdate(rot[i], static_cast<double>(n));
    u += rot[i] * sum;
    out.samples += n;
  }
  Matrix full = v.selfadjointView<Eigen::Lower>();
  full.diagonal() += pp.reg.diagonal();
  out.theta_hat = Eigen::LLT<Matrix>(full).solve(u);
  log.samples_stage2 = out.samples;
  log.logdet_ratio = linalg::logdet_spd(full) - pp.reg.log_det();
  log.logdet_bound = 8.0 * ctx.k_eff * std::log1p(tau_g_prev / cfg.lam);

  out.survivors = eliminate(active, rot, out.theta_hat, pp.eps);
  log.active_after = out.survivors.size();
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < active.size(); ++i) {
    const double s = rot[i].dot(out.theta_hat);
    if (s > best) {
      best = s;
      out.leader = active[i];
    }
  }
  return out;
}

// ---- subspace exploration ---------------------------------------------------

SubspaceExplorer::SubspaceExplorer(ArmView view, const GoblinConfig& cfg) : view_(std::move(view)), cfg_(cfg) {
  require(!view_.left.empty() && !view_.right.empty(), "SubspaceExplorer: empty arm view");
  rows_ = static_cast<int>(view_.left.front().size());
  cols_ = static_cast<int>(view_.right.front().size());
  for (std::size_t i = 0; i < view_.left.size(); ++i)
    for (std::size_t j = 0; j < view_.right.size(); ++j) pairs_.push_back({i, j});
  atoms_ = outer_atoms(view_, pairs_);
  design_ = pruned(e_optimal(atoms_, cfg_.e_opts), cfg_.prune_relative);
}

std::vector<long> SubspaceExplorer::allocation(double tau) const { return round_allocation(design_, tau); }

QuadraticLoss SubspaceExplorer::collect_loss(std::span<const long> alloc, RewardOracle& oracle, Rng& rng,
                                             double* sq_sum) const {
  QuadraticLoss q;
  q.rows = rows_;
  q.cols = cols_;
  const int p = rows_ * cols_;
  q.gram = Matrix::Zero(p, p);
  q.linear = Vector::Zero(p);
  double sq = 0.0;
  for (std::size_t i = 0; i < pairs_.size(); ++i) {
    const long n = alloc[i];
    if (n == 0) continue;
    const double sum = oracle.pull_sum(pairs_[i], n, rng, &sq);
    q.gram.selfadjointView<Eigen::Lower>().rankUpdate(atoms_[i], static_cast<double>(n));
    q.linear += atoms_[i] * sum;
    q.n += static_cast<std::size_t>(n);
  }
  require(q.n > 0, "collect_loss: empty allocation");
  const double inv = 1.0 / static_cast<double>(q.n);
  q.gram = Matrix(q.gram.selfadjointView<Eigen::Lower>()) * inv;
  q.linear *= inv;
  q.constant = sq * inv;
  if (sq_sum) *sq_sum += sq;
  return q;
}

SampleBatch SubspaceExplorer::collect_dithered(std::span<const long> alloc, RewardOracle& oracle, Rng& rng,
                                               const Matrix& embed_left, const Matrix& embed_right) const {
  SampleBatch batch;
  DitherDensity dens;
  dens.variance = cfg_.dither_variance;
  std::normal_distribution<double> gauss(0.0, std::sqrt(cfg_.dither_variance));
  const bool ambient = embed_left.size() == 0;
  for (std::size_t i = 0; i < pairs_.size(); ++i) {
    const Matrix center = view_.left[pairs_[i].left] * view_.right[pairs_[i].right].transpose();
    for (long s = 0; s < alloc[i]; ++s) {
      Matrix x = center;
      for (Eigen::Index k = 0; k < x.size(); ++k) x.data()[k] += gauss(rng);
      const double r = ambient ? oracle.pull_feature(x, rng)
                               : oracle.pull_feature(embed_left * x * embed_right.transpose(), rng);
      batch.features.push_back(std::move(x));
      batch.rewards.push_back(r);
      dens.centers.push_back(center);
    }
  }
  batch.density = std::move(dens);
  return batch;
}

Matrix fit_lowrank(const QuadraticLoss& loss, double gamma, int iters) {
  ProxLsOptions opts;
  opts.iters = iters;
  return prox_ls_estimate(loss, gamma, opts).theta;
}

ExplorationOutcome SubspaceExplorer::explore(double tau, RewardOracle& oracle, Rng& rng,
                                             const EstimatorParams& params, const Matrix& embed_left,
                                             const Matrix& embed_right) const {
  const std::vector<long> alloc = allocation(tau);
  ExplorationOutcome out;
  if (cfg_.backend == EstimatorBackend::prox_ls) {
    const QuadraticLoss loss = collect_loss(alloc, oracle, rng, nullptr);
    out.samples = static_cast<long>(loss.n);
    out.estimate = fit_lowrank(loss, default_gamma(rows_, cols_, loss.n, params), cfg_.prox_iters);
  } else {
    const SampleBatch batch = collect_dithered(alloc, oracle, rng, embed_left, embed_right);
    out.samples = static_cast<long>(batch.size());
    const SteinConfig sc{default_nu(rows_, cols_, batch.size(), params),
                         default_gamma(rows_, cols_, batch.size(), params)};
    out.estimate = stein_estimate(batch, sc);
  }
  return out;
}

// ---- Algorithm driver -------------------------------------------------------

RunRecord run_single(const BilinearInstance& instance, const GoblinConfig& cfg, Rng& rng) {
  instance.validate();
  require(cfg.delta > 0.0 && cfg.delta < 1.0, "run_single: delta must be in (0,1)");
  require(cfg.c_tau > 0.0 && cfg.c_tau_e >= 0.0, "run_single: c_tau must be positive");
  RunRecord rec;
  RewardOracle oracle(instance);
  std::vector<PairIndex> active = all_pairs(instance.arms);
  const PairIndex truth = best_pair(instance);
  rec.phases = 1;
  if (active.size() == 1) {
    rec.identified = active.front();
    rec.success = rec.identified == truth;
    return rec;
  }

  const int d1 = instance.arms.d1();
  const int d2 = instance.arms.d2();
  const int r = instance.rank;
  ScheduleContext ctx;
  ctx.d1 = d1;
  ctx.d2 = d2;
  ctx.r = r;
  ctx.s_r = instance.s_r;
  ctx.num_pairs = active.size();
  ctx.s_norm = instance.s0;
  ctx.k_eff = cfg.k_override > 0 ? cfg.k_override : effective_dimension(d1, d2, r);
  ctx.p_dim = d1 * d2;

  const ArmView view = ambient_view(instance.arms);
  const SubspaceExplorer explorer(view, cfg);
  double tau_prev = tau_g_seed(active.size(), cfg.delta);
  PairIndex leader = active.front();
  const int cap = phase_cap(cfg);
  int ell = 1;
  for (; ell <= cap && active.size() > 1; ++ell) {
    if (cfg.max_total_samples > 0.0 && static_cast<double>(rec.total) >= cfg.max_total_samples) break;
    const PhaseParams pp = schedule_phase(ell, ctx, cfg, 1.0, tau_prev);
    const EstimatorParams ep{pp.delta_ell, instance.s0, cfg.score_bound_c, 1};
    const ExplorationOutcome ex = explorer.explore(pp.tau_e, oracle, rng, ep);
    const double s_perp = 8.0 * d1 * d2 * r * std::log((d1 + d2) / pp.delta_ell) /
                          (static_cast<double>(ex.samples) * ctx.s_r * ctx.s_r);
    const RotationMap map = build_rotation(ex.estimate, r);
    EliminationOutcome step = rotated_elimination_step(view, map, active, ctx, cfg, ell, tau_prev,
                                                       static_cast<double>(ex.samples), s_perp, oracle, rng,
                                                       &instance.theta);
    step.log.samples_stage1 = ex.samples;
    rec.samples_stage1 += ex.samples;
    rec.samples_stage2 += step.samples;
    rec.total = rec.samples_stage1 + rec.samples_stage2;
    rec.per_phase_log.push_back(step.log);
    rec.phases = ell;
    active = std::move(step.survivors);
    leader = step.leader;
    tau_prev = step.log.tau_g;
    if (step.truncated) break;
  }
  rec.cap_exceeded = active.size() > 1;
  rec.identified = active.size() == 1 ? active.front() : leader;
  rec.success = rec.identified == truth;
  rec.oracle_draws = oracle.count();
  return rec;
}

}  // namespace bilinear
