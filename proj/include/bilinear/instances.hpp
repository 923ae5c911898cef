#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "bilinear/types.hpp"

namespace bilinear {

struct ArmSet {
  std::vector<Vector> left;
  std::vector<Vector> right;

  int d1() const { return left.empty() ? 0 : static_cast<int>(left.front().size()); }
  int d2() const { return right.empty() ? 0 : static_cast<int>(right.front().size()); }
  std::size_t num_pairs() const { return left.size() * right.size(); }

  /// Throws InvalidArgument on empty lists, ragged dimensions, or arms with
  /// norm above one (tolerance 1e-9).
  void validate() const;
};

/// Stable identity of an (x, z) pair, independent of any rotation.
struct PairIndex {
  std::size_t left = 0;
  std::size_t right = 0;
  auto operator<=>(const PairIndex&) const = default;
};

/// Enumerates X x Z in lexicographic (left, right) order.
std::vector<PairIndex> all_pairs(const ArmSet& arms);

enum class NoiseKind { gaussian, rademacher };

struct BilinearInstance {
  ArmSet arms;
  Matrix theta;
  int rank = 1;
  double noise_sigma = 1.0;
  NoiseKind noise = NoiseKind::gaussian;
  double s_r = 0.0;  // r-th largest singular value of theta
  double s0 = 0.0;   // Frobenius bound on theta
  std::uint64_t seed = 0;

  double mean_reward(PairIndex p) const;
  double mean_reward(const Matrix& feature) const;
  void validate() const;
};

/// Fills s_r and s0 from theta and checks the rank invariant.
BilinearInstance make_instance(ArmSet arms, Matrix theta, int rank, double noise_sigma = 1.0);

std::vector<Vector> gen_unit_ball_arms(std::size_t count, std::size_t dim, Rng& rng);

/// U diag(D) V^T with Haar U, V; D_r = s_r_target exactly, D_i in
/// [s_r_target, 2 s_r_target] for i < r.
Matrix gen_low_rank_theta(int d1, int d2, int r, double s_r_target, Rng& rng);

struct UnitBallSpec {
  int d1 = 6;
  int d2 = 6;
  int rank = 2;
  std::size_t n_left = 10;
  std::size_t n_right = 10;
  double s_r = 0.7071067811865476;
  double noise_sigma = 1.0;
  NoiseKind noise = NoiseKind::gaussian;
};

/// Unit-sphere arms on both sides and a random rank-r theta, all drawn from `seed`.
BilinearInstance gen_unit_ball_instance(const UnitBallSpec& spec, std::uint64_t seed);

struct MultiTaskInstance {
  ArmSet arms;
  Matrix b1;  // d1 x k1, orthonormal columns
  Matrix b2;  // d2 x k2, orthonormal columns
  std::vector<Matrix> s_stars;
  int rank = 1;
  double noise_sigma = 1.0;
  NoiseKind noise = NoiseKind::gaussian;
  double s_r = 0.0;
  double s0 = 0.0;
  double c0 = 0.1;
  std::uint64_t seed = 0;

  std::size_t num_tasks() const { return s_stars.size(); }
  int k1() const { return static_cast<int>(b1.cols()); }
  int k2() const { return static_cast<int>(b2.cols()); }
  Matrix theta(std::size_t m) const { return b1 * s_stars[m] * b2.transpose(); }
  Matrix mean_theta() const;
  /// Single-task view of task m (shares the arm set).
  BilinearInstance task(std::size_t m) const;
  void validate() const;
};

/// Smallest singular value among the leading min(k1, k2, M r) of the task
/// average; the quantity the task-diversity check bounds below by c0 / S_r.
double diversity_value(const MultiTaskInstance& inst);

struct MultiTaskOptions {
  std::size_t n_left = 10;
  std::size_t n_right = 10;
  double s_r = 0.7071067811865476;
  double noise_sigma = 1.0;
  double c0 = 0.1;
  int max_retries = 200;
};

MultiTaskInstance gen_multitask(std::size_t tasks, int d1, int d2, int k1, int k2, int r,
                                Rng& rng, const MultiTaskOptions& opts = {});

/// Lexicographically smallest maximizer of x^T Theta z.
PairIndex best_pair(const BilinearInstance& inst);
double gap(const BilinearInstance& inst, PairIndex p);
/// Smallest gap over non-best pairs; +inf for a single pair.
double min_gap(const BilinearInstance& inst);

double draw_noise(NoiseKind kind, double sigma, Rng& rng);
double sample_reward(const BilinearInstance& inst, PairIndex p, Rng& rng);

/// Reward oracle that counts every draw; run records are audited against it.
class RewardOracle {
 public:
  explicit RewardOracle(const BilinearInstance& inst) : inst_(&inst) {}

  double pull(PairIndex p, Rng& rng);
  /// Reward at an arbitrary feature matrix (used by the dithered sampling mode).
  double pull_feature(const Matrix& feature, Rng& rng);
  /// Pulls `p` n times and returns the reward sum; adds the squared rewards to *sq_sum if given.
  double pull_sum(PairIndex p, long n, Rng& rng, double* sq_sum = nullptr);

  long count() const { return count_; }
  const BilinearInstance& instance() const { return *inst_; }

 private:
  const BilinearInstance* inst_;
  long count_ = 0;
};

}  // namespace bilinear
