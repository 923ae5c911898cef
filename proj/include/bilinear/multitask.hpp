#pragma once

#include <vector>

#include "bilinear/goblin.hpp"

namespace bilinear {

struct Extractors {
  Matrix b1;  // d1 x k1
  Matrix b2;  // d2 x k2
  /// sigma_k - sigma_{k+1} < 1e-12 on either side; the subspace is not unique.
  bool degenerate = false;
};

Extractors learn_extractors(const Matrix& z_hat, int k1, int k2);

struct LatentArmSet {
  std::vector<Vector> left;   // b1^T x
  std::vector<Vector> right;  // b2^T z
  std::vector<std::size_t> source_left;
  std::vector<std::size_t> source_right;

  ArmView view() const { return {left, right}; }
};

LatentArmSet latent_arms(const Matrix& b1_hat, const Matrix& b2_hat, const ArmSet& arms);

/// Low-rank estimate at latent dimension from latent features g v^T.
Matrix estimate_s_m(const SampleBatch& batch, EstimatorBackend backend, const EstimatorParams& params,
                    int prox_iters = 300);

struct MultiTaskConfig {
  GoblinConfig base{};
  /// Test hook: use the instance's true extractors and skip the shared stage.
  bool inject_exact_extractors = false;
};

struct MultiRunRecord {
  std::vector<RunRecord> per_task;
  long samples_stage1_shared = 0;
  long samples_stage2 = 0;
  long samples_stage3 = 0;
  long total = 0;
  long oracle_draws = 0;
  int phases = 0;
  /// Stage-1 pulls per task in each executed phase.
  std::vector<long> stage1_per_task_by_phase;

  bool all_success() const;
};

/// Pooled stage-1 estimate of the task-average matrix.
Matrix shared_estimate(const SubspaceExplorer& explorer, std::span<const long> alloc,
                       std::vector<RewardOracle>& oracles, std::uint64_t master, int ell,
                       const GoblinConfig& cfg, const EstimatorParams& params);

MultiRunRecord run_multi(const MultiTaskInstance& instance, const MultiTaskConfig& cfg, Rng& rng);

/// Stream for (task, phase, stage); serial and parallel execution share it.
Rng task_stream(std::uint64_t master, std::size_t task, int ell, int stage);

}  // namespace bilinear
