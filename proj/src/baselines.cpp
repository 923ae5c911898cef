#include "bilinear/baselines.hpp"

#include "bilinear/multitask_impl.hpp"

namespace bilinear {

RunRecord run_rage_ambient(const BilinearInstance& instance, const GoblinConfig& cfg, Rng& rng) {
  instance.validate();
  require(cfg.delta > 0.0 && cfg.delta < 1.0, "run_rage_ambient: delta must be in (0,1)");
  require(cfg.c_tau > 0.0, "run_rage_ambient: c_tau must be positive");
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
  ScheduleContext ctx;
  ctx.d1 = d1;
  ctx.d2 = d2;
  ctx.r = instance.rank;
  ctx.s_r = instance.s_r;
  ctx.num_pairs = active.size();
  ctx.s_norm = instance.s0;
  ctx.k_eff = d1 * d2;
  ctx.p_dim = d1 * d2;

  const ArmView view = ambient_view(instance.arms);
  const RotationMap map = identity_rotation(d1, d2, instance.rank);
  double tau_prev = tau_g_seed(active.size(), cfg.delta);
  PairIndex leader = active.front();
  const int cap = phase_cap(cfg);
  for (int ell = 1; ell <= cap && active.size() > 1; ++ell) {
    if (cfg.max_total_samples > 0.0 && static_cast<double>(rec.total) >= cfg.max_total_samples) break;
    EliminationOutcome step =
        rotated_elimination_step(view, map, active, ctx, cfg, ell, tau_prev, 0.0, 0.0, oracle, rng, nullptr);
    rec.samples_stage2 += step.samples;
    rec.total = rec.samples_stage2;
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

MultiRunRecord run_doubexpdes_like(const MultiTaskInstance& instance, const MultiTaskConfig& cfg, Rng& rng) {
  return detail::run_multi_impl(instance, cfg, rng, false);
}

}  // namespace bilinear
