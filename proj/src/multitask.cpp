#include "bilinear/multitask.hpp"

#include <algorithm>
#include <cmath>
#include <optional>

#include "bilinear/linalg.hpp"
#include "bilinear/multitask_impl.hpp"

namespace bilinear {

Extractors learn_extractors(const Matrix& z_hat, int k1, int k2) {
  const int d1 = static_cast<int>(z_hat.rows());
  const int d2 = static_cast<int>(z_hat.cols());
  require(k1 >= 1 && k1 <= d1 && k2 >= 1 && k2 <= d2, "learn_extractors: need 1 <= k1 <= d1 and 1 <= k2 <= d2");
  const linalg::Svd s = linalg::svd(z_hat);
  Extractors e;
  e.b1 = s.u.leftCols(k1);
  e.b2 = s.v.leftCols(k2);
  auto sv = [&](int i) { return i < s.s.size() ? s.s(i) : 0.0; };
  e.degenerate = sv(k1 - 1) - sv(k1) < 1e-12 || sv(k2 - 1) - sv(k2) < 1e-12;
  return e;
}

LatentArmSet latent_arms(const Matrix& b1_hat, const Matrix& b2_hat, const ArmSet& arms) {
  require(b1_hat.rows() == arms.d1() && b2_hat.rows() == arms.d2(), "latent_arms: extractor/arm dimension mismatch");
  LatentArmSet out;
  for (std::size_t i = 0; i < arms.left.size(); ++i) {
    out.left.push_back(b1_hat.transpose() * arms.left[i]);
    out.source_left.push_back(i);
  }
  for (std::size_t j = 0; j < arms.right.size(); ++j) {
    out.right.push_back(b2_hat.transpose() * arms.right[j]);
    out.source_right.push_back(j);
  }
  return out;
}

Matrix estimate_s_m(const SampleBatch& batch, EstimatorBackend backend, const EstimatorParams& params,
                    int prox_iters) {
  batch.validate();
  const int k1 = static_cast<int>(batch.features.front().rows());
  const int k2 = static_cast<int>(batch.features.front().cols());
  const double gamma = default_gamma(k1, k2, batch.size(), params);
  if (backend == EstimatorBackend::stein)
    return stein_estimate(batch, {default_nu(k1, k2, batch.size(), params), gamma});
  return fit_lowrank(QuadraticLoss::from_batch(batch), gamma, prox_iters);
}

bool MultiRunRecord::all_success() const {
  return std::all_of(per_task.begin(), per_task.end(), [](const RunRecord& r) { return r.success; });
}

Rng task_stream(std::uint64_t master, std::size_t task, int ell, int stage) {
  return Rng(derive_seed(master, task, static_cast<std::uint64_t>(ell), static_cast<std::uint64_t>(stage)));
}

Matrix shared_estimate(const SubspaceExplorer& explorer, std::span<const long> alloc,
                       std::vector<RewardOracle>& oracles, std::uint64_t master, int ell,
                       const GoblinConfig& cfg, const EstimatorParams& params) {
  const std::size_t tasks = oracles.size();
  if (cfg.backend == EstimatorBackend::stein) {
    std::vector<SampleBatch> batches;
    for (std::size_t m = 0; m < tasks; ++m) {
      Rng rng = task_stream(master, m, ell, 1);
      batches.push_back(explorer.collect_dithered(alloc, oracles[m], rng, Matrix(), Matrix()));
    }
    const std::size_t n = batches.front().size();
    const SteinConfig sc{default_nu(explorer.rows(), explorer.cols(), n, params),
                         default_gamma(explorer.rows(), explorer.cols(), n, params)};
    return averaged_stein_estimate(batches, sc);
  }
  // Every task shares the allocation, so the pooled loss keeps the common
  // Gram matrix and averages the per-task linear terms.
  QuadraticLoss pooled;
  for (std::size_t m = 0; m < tasks; ++m) {
    Rng rng = task_stream(master, m, ell, 1);
    const QuadraticLoss q = explorer.collect_loss(alloc, oracles[m], rng, nullptr);
    if (m == 0) {
      pooled = q;
    } else {
      pooled.linear += q.linear;
      pooled.constant += q.constant;
    }
  }
  pooled.linear /= static_cast<double>(tasks);
  pooled.constant /= static_cast<double>(tasks);
  const std::size_t n_total = pooled.n * tasks;
  return fit_lowrank(pooled, default_gamma(explorer.rows(), explorer.cols(), n_total, params), cfg.prox_iters);
}

namespace detail {

MultiRunRecord run_multi_impl(const MultiTaskInstance& instance, const MultiTaskConfig& mcfg, Rng& rng,
                              bool rotate_latent) {
  instance.validate();
  const GoblinConfig& cfg = mcfg.base;
  require(cfg.delta > 0.0 && cfg.delta < 1.0, "run_multi: delta must be in (0,1)");
  require(cfg.c_tau > 0.0 && cfg.c_tau_e >= 0.0, "run_multi: c_tau must be positive");
  const std::size_t tasks = instance.num_tasks();
  const int d1 = instance.arms.d1();
  const int d2 = instance.arms.d2();
  const int k1 = instance.k1();
  const int k2 = instance.k2();
  const int r = instance.rank;
  const std::uint64_t master = rng();

  std::vector<BilinearInstance> task_inst;
  task_inst.reserve(tasks);
  for (std::size_t m = 0; m < tasks; ++m) task_inst.push_back(instance.task(m));
  std::vector<RewardOracle> oracles;
  oracles.reserve(tasks);
  for (const auto& t : task_inst) oracles.emplace_back(t);

  MultiRunRecord rec;
  rec.per_task.resize(tasks);
  const std::vector<PairIndex> pairs = all_pairs(instance.arms);
  std::vector<std::vector<PairIndex>> active(tasks, pairs);
  std::vector<PairIndex> leader(tasks, pairs.front());
  std::vector<double> tau_prev(tasks, tau_g_seed(pairs.size(), cfg.delta));
  std::vector<PairIndex> truth(tasks);
  for (std::size_t m = 0; m < tasks; ++m) {
    truth[m] = best_pair(task_inst[m]);
    rec.per_task[m].phases = 1;
  }

  ScheduleContext amb;
  amb.d1 = d1;
  amb.d2 = d2;
  amb.r = r;
  amb.s_r = instance.s_r;
  amb.num_pairs = pairs.size();
  amb.s_norm = instance.s0;
  amb.k_eff = effective_dimension(d1, d2, r);
  amb.p_dim = d1 * d2;

  ScheduleContext lat = amb;
  lat.d1 = k1;
  lat.d2 = k2;
  lat.p_dim = k1 * k2;
  lat.k_eff = rotate_latent ? (cfg.k_override > 0 ? cfg.k_override : effective_dimension(k1, k2, r)) : k1 * k2;

  std::optional<SubspaceExplorer> ambient;
  if (!mcfg.inject_exact_extractors) ambient.emplace(ambient_view(instance.arms), cfg);

  auto any_active = [&] {
    return std::any_of(active.begin(), active.end(), [](const auto& a) { return a.size() > 1; });
  };
  const int cap = phase_cap(cfg);
  bool truncated = false;
  for (int ell = 1; ell <= cap && any_active() && !truncated; ++ell) {
    if (cfg.max_total_samples > 0.0 && static_cast<double>(rec.total) >= cfg.max_total_samples) break;
    const PhaseParams pp = schedule_phase(ell, amb, cfg, 1.0, 1.0);
    const EstimatorParams ep{pp.delta_ell, instance.s0, cfg.score_bound_c, static_cast<int>(tasks)};

    // Shared stage: every task receives the same rounded allocation.
    Extractors ext;
    if (mcfg.inject_exact_extractors) {
      ext.b1 = instance.b1;
      ext.b2 = instance.b2;
      rec.stage1_per_task_by_phase.push_back(0);
    } else {
      const std::vector<long> alloc = ambient->allocation(pp.tau_e);
      long per_task = 0;
      for (long n : alloc) per_task += n;
      const Matrix z_hat = shared_estimate(*ambient, alloc, oracles, master, ell, cfg, ep);
      ext = learn_extractors(z_hat, k1, k2);
      for (auto& t : rec.per_task) t.samples_stage1 += per_task;
      rec.samples_stage1_shared += per_task * static_cast<long>(tasks);
      rec.stage1_per_task_by_phase.push_back(per_task);
    }
    const LatentArmSet latent = latent_arms(ext.b1, ext.b2, instance.arms);
    const ArmView view = latent.view();

    // Latent designs depend only on the shared arms and extractors.
    std::optional<SubspaceExplorer> latent_explorer;
    double tau_tilde = 0.0;
    if (rotate_latent) {
      latent_explorer.emplace(view, cfg);
      tau_tilde = tau_e_length(ell, lat, cfg.delta, cfg.stage1_scale());
    }
    const EstimatorParams lat_ep{pp.delta_ell, instance.s0, cfg.score_bound_c, 1};

    for (std::size_t m = 0; m < tasks; ++m) {
      if (active[m].size() <= 1) continue;
      RunRecord& tr = rec.per_task[m];
      RotationMap map;
      double s_perp = 0.0;
      double tau_e_actual = 0.0;
      if (rotate_latent) {
        Rng rng2 = task_stream(master, m, ell, 2);
        const ExplorationOutcome ex = latent_explorer->explore(tau_tilde, oracles[m], rng2, lat_ep, ext.b1, ext.b2);
        tr.samples_stage2 += ex.samples;
        rec.samples_stage2 += ex.samples;
        tau_e_actual = static_cast<double>(ex.samples);
        s_perp = 8.0 * k1 * k2 * r * std::log((k1 + k2) / pp.delta_ell) /
                 (tau_e_actual * instance.s_r * instance.s_r);
        map = build_rotation(ex.estimate, r);
      } else {
        map = identity_rotation(k1, k2, r);
      }
      const Matrix latent_truth = ext.b1.transpose() * instance.theta(m) * ext.b2;
      Rng rng3 = task_stream(master, m, ell, 3);
      EliminationOutcome step = rotated_elimination_step(view, map, active[m], lat, cfg, ell, tau_prev[m],
                                                         tau_e_actual, s_perp, oracles[m], rng3, &latent_truth);
      step.log.samples_stage1 = rec.stage1_per_task_by_phase.back();
      tr.samples_stage3 += step.samples;
      rec.samples_stage3 += step.samples;
      tr.per_phase_log.push_back(step.log);
      tr.phases = ell;
      active[m] = std::move(step.survivors);
      leader[m] = step.leader;
      tau_prev[m] = step.log.tau_g;
      truncated = truncated || step.truncated;
    }
    rec.phases = ell;
    rec.total = rec.samples_stage1_shared + rec.samples_stage2 + rec.samples_stage3;
  }

  for (std::size_t m = 0; m < tasks; ++m) {
    RunRecord& tr = rec.per_task[m];
    tr.cap_exceeded = active[m].size() > 1;
    tr.identified = active[m].size() == 1 ? active[m].front() : leader[m];
    tr.success = tr.identified == truth[m];
    tr.total = tr.samples_stage1 + tr.samples_stage2 + tr.samples_stage3;
    tr.oracle_draws = oracles[m].count();
    rec.oracle_draws += tr.oracle_draws;
  }
  rec.total = rec.samples_stage1_shared + rec.samples_stage2 + rec.samples_stage3;
  return rec;
}

}  // namespace detail

MultiRunRecord run_multi(const MultiTaskInstance& instance, const MultiTaskConfig& cfg, Rng& rng) {
  return detail::run_multi_impl(instance, cfg, rng, true);
}

}  // namespace bilinear
