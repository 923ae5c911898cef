#include "bilinear/instances.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "bilinear/linalg.hpp"

namespace bilinear {

void ArmSet::validate() const {
  require(!left.empty(), "ArmSet: left arm list is empty");
  require(!right.empty(), "ArmSet: right arm list is empty");
  const auto d1v = left.front().size();
  const auto d2v = right.front().size();
  require(d1v > 0 && d2v > 0, "ArmSet: zero-dimensional arms");
  for (const auto& x : left) {
    require(x.size() == d1v, "ArmSet: ragged left arm dimensions");
    require(x.norm() <= 1.0 + 1e-9, "ArmSet: left arm with norm > 1");
  }
  for (const auto& z : right) {
    require(z.size() == d2v, "ArmSet: ragged right arm dimensions");
    require(z.norm() <= 1.0 + 1e-9, "ArmSet: right arm with norm > 1");
  }
}

std::vector<PairIndex> all_pairs(const ArmSet& arms) {
  std::vector<PairIndex> out;
  out.reserve(arms.num_pairs());
  for (std::size_t i = 0; i < arms.left.size(); ++i)
    for (std::size_t j = 0; j < arms.right.size(); ++j) out.push_back({i, j});
  return out;
}

double BilinearInstance::mean_reward(PairIndex p) const {
  return arms.left[p.left].dot(theta * arms.right[p.right]);
}

double BilinearInstance::mean_reward(const Matrix& feature) const {
  return (feature.array() * theta.array()).sum();
}

void BilinearInstance::validate() const {
  arms.validate();
  require(theta.rows() == arms.d1() && theta.cols() == arms.d2(),
          "BilinearInstance: theta shape does not match arm dimensions");
  require(rank >= 1 && rank <= std::min(theta.rows(), theta.cols()),
          "BilinearInstance: rank out of range");
  require(noise_sigma >= 0.0, "BilinearInstance: negative noise_sigma");
  const Vector s = linalg::svd(theta).s;
  require(s(rank - 1) > 1e-10, "BilinearInstance: r-th singular value is not positive");
  if (rank < s.size())
    require(s(rank) <= 1e-10 * std::max(1.0, s(0)), "BilinearInstance: theta rank exceeds r");
  require(theta.norm() <= s0 + 1e-9, "BilinearInstance: ||theta||_F exceeds S0");
}

BilinearInstance make_instance(ArmSet arms, Matrix theta, int rank, double noise_sigma) {
  BilinearInstance inst;
  inst.arms = std::move(arms);
  inst.theta = std::move(theta);
  inst.rank = rank;
  inst.noise_sigma = noise_sigma;
  const Vector s = linalg::svd(inst.theta).s;
  require(rank >= 1 && rank <= s.size(), "make_instance: rank out of range");
  inst.s_r = s(rank - 1);
  inst.s0 = inst.theta.norm();
  inst.validate();
  return inst;
}

std::vector<Vector> gen_unit_ball_arms(std::size_t count, std::size_t dim, Rng& rng) {
  require(count >= 1 && dim >= 1, "gen_unit_ball_arms: count and dim must be positive");
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<Vector> out;
  out.reserve(count);
  while (out.size() < count) {
    Vector v(static_cast<Eigen::Index>(dim));
    for (auto& e : v) e = gauss(rng);
    const double n = v.norm();
    if (n < 1e-12) continue;
    out.push_back(v / n);
  }
  return out;
}

Matrix gen_low_rank_theta(int d1, int d2, int r, double s_r_target, Rng& rng) {
  require(d1 >= 1 && d2 >= 1, "gen_low_rank_theta: dimensions must be positive");
  require(r >= 1 && r <= std::min(d1, d2), "gen_low_rank_theta: rank must be in [1, min(d1,d2)]");
  require(s_r_target > 0.0, "gen_low_rank_theta: s_r_target must be positive");
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const Matrix u = linalg::random_orthonormal(d1, r, rng);
  const Matrix v = linalg::random_orthonormal(d2, r, rng);
  Vector d(r);
  for (int i = 0; i < r - 1; ++i) d(i) = s_r_target * (1.0 + unif(rng));
  d(r - 1) = s_r_target;
  std::sort(d.data(), d.data() + r, std::greater<>());
  return u * d.asDiagonal() * v.transpose();
}

BilinearInstance gen_unit_ball_instance(const UnitBallSpec& spec, std::uint64_t seed) {
  Rng rng(seed);
  ArmSet arms;
  arms.left = gen_unit_ball_arms(spec.n_left, static_cast<std::size_t>(spec.d1), rng);
  arms.right = gen_unit_ball_arms(spec.n_right, static_cast<std::size_t>(spec.d2), rng);
  Matrix theta = gen_low_rank_theta(spec.d1, spec.d2, spec.rank, spec.s_r, rng);
  BilinearInstance inst = make_instance(std::move(arms), std::move(theta), spec.rank, spec.noise_sigma);
  inst.noise = spec.noise;
  inst.s_r = spec.s_r;
  inst.seed = seed;
  return inst;
}

Matrix MultiTaskInstance::mean_theta() const {
  Matrix acc = Matrix::Zero(b1.rows(), b2.rows());
  for (std::size_t m = 0; m < s_stars.size(); ++m) acc += theta(m);
  return acc / static_cast<double>(s_stars.size());
}

BilinearInstance MultiTaskInstance::task(std::size_t m) const {
  BilinearInstance inst;
  inst.arms = arms;
  inst.theta = theta(m);
  inst.rank = rank;
  inst.noise_sigma = noise_sigma;
  inst.noise = noise;
  inst.s_r = s_r;
  inst.s0 = s0;
  inst.seed = seed;
  return inst;
}

double diversity_value(const MultiTaskInstance& inst) {
  Matrix mean_s = Matrix::Zero(inst.k1(), inst.k2());
  for (const auto& s : inst.s_stars) mean_s += s;
  mean_s /= static_cast<double>(inst.s_stars.size());
  const Vector sv = linalg::svd(mean_s).s;
  const auto q = std::min<std::size_t>(static_cast<std::size_t>(sv.size()),
                                       inst.s_stars.size() * static_cast<std::size_t>(inst.rank));
  return sv(static_cast<Eigen::Index>(q) - 1);
}

void MultiTaskInstance::validate() const {
  arms.validate();
  require(!s_stars.empty(), "MultiTaskInstance: no tasks");
  require(b1.rows() == arms.d1() && b2.rows() == arms.d2(), "MultiTaskInstance: extractor shape mismatch");
  require((b1.transpose() * b1 - Matrix::Identity(k1(), k1())).norm() < 1e-10,
          "MultiTaskInstance: b1 columns not orthonormal");
  require((b2.transpose() * b2 - Matrix::Identity(k2(), k2())).norm() < 1e-10,
          "MultiTaskInstance: b2 columns not orthonormal");
  for (const auto& s : s_stars) {
    require(s.rows() == k1() && s.cols() == k2(), "MultiTaskInstance: S_m shape mismatch");
    const Vector sv = linalg::svd(s).s;
    require(sv(rank - 1) > 1e-10, "MultiTaskInstance: S_m rank below r");
    if (rank < sv.size()) require(sv(rank) < 1e-10, "MultiTaskInstance: S_m rank above r");
  }
  require(diversity_value(*this) >= c0 / s_r - 1e-12, "MultiTaskInstance: task diversity check fails");
}

namespace {

// S_m = P diag(D) Q^T with Q correlated to P, so task averages stay
// well-conditioned as the number of tasks grows.
Matrix draw_task_matrix(int k1, int k2, int r, double s_r, Rng& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const Matrix p = linalg::random_orthonormal(k1, r, rng);
  Matrix e = Matrix::Zero(k2, k1);
  for (int i = 0; i < std::min(k1, k2); ++i) e(i, i) = 1.0;
  Matrix q0 = e * p;
  for (int j = 0; j < r; ++j)
    for (int i = 0; i < k2; ++i) q0(i, j) += 0.3 * gauss(rng);
  Eigen::HouseholderQR<Matrix> qr(q0);
  Matrix q = qr.householderQ() * Matrix::Identity(k2, r);
  Matrix rr = qr.matrixQR().topRows(r).triangularView<Eigen::Upper>();
  for (int j = 0; j < r; ++j)
    if (rr(j, j) < 0.0) q.col(j) *= -1.0;
  Vector d(r);
  for (int i = 0; i < r - 1; ++i) d(i) = s_r * (1.0 + unif(rng));
  d(r - 1) = s_r;
  std::sort(d.data(), d.data() + r, std::greater<>());
  return p * d.asDiagonal() * q.transpose();
}

}  // namespace

MultiTaskInstance gen_multitask(std::size_t tasks, int d1, int d2, int k1, int k2, int r, Rng& rng,
                                const MultiTaskOptions& opts) {
  require(tasks >= 1, "gen_multitask: need at least one task");
  require(r >= 1 && r <= std::min(k1, k2), "gen_multitask: rank must be in [1, min(k1,k2)]");
  require(k1 <= d1 && k2 <= d2, "gen_multitask: latent dims exceed ambient dims");
  require(opts.c0 > 0.0, "gen_multitask: c0 must be positive");
  MultiTaskInstance inst;
  inst.arms.left = gen_unit_ball_arms(opts.n_left, static_cast<std::size_t>(d1), rng);
  inst.arms.right = gen_unit_ball_arms(opts.n_right, static_cast<std::size_t>(d2), rng);
  inst.b1 = linalg::random_orthonormal(d1, k1, rng);
  inst.b2 = linalg::random_orthonormal(d2, k2, rng);
  inst.rank = r;
  inst.noise_sigma = opts.noise_sigma;
  inst.s_r = opts.s_r;
  inst.c0 = opts.c0;
  for (int attempt = 0; attempt < opts.max_retries; ++attempt) {
    inst.s_stars.clear();
    for (std::size_t m = 0; m < tasks; ++m) inst.s_stars.push_back(draw_task_matrix(k1, k2, r, opts.s_r, rng));
    if (diversity_value(inst) >= opts.c0 / opts.s_r) {
      inst.s0 = 0.0;
      for (const auto& s : inst.s_stars) inst.s0 = std::max(inst.s0, s.norm());
      inst.validate();
      return inst;
    }
  }
  throw InfeasibleInstance("gen_multitask: task diversity check failed after " +
                           std::to_string(opts.max_retries) + " attempts");
}

PairIndex best_pair(const BilinearInstance& inst) {
  PairIndex best{0, 0};
  double best_val = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < inst.arms.left.size(); ++i) {
    const Vector tx = inst.theta.transpose() * inst.arms.left[i];
    for (std::size_t j = 0; j < inst.arms.right.size(); ++j) {
      const double v = tx.dot(inst.arms.right[j]);
      if (v > best_val) {
        best_val = v;
        best = {i, j};
      }
    }
  }
  return best;
}

double gap(const BilinearInstance& inst, PairIndex p) {
  const PairIndex b = best_pair(inst);
  if (b == p) return 0.0;
  return std::max(0.0, inst.mean_reward(b) - inst.mean_reward(p));
}

double min_gap(const BilinearInstance& inst) {
  const PairIndex b = best_pair(inst);
  const double top = inst.mean_reward(b);
  double g = std::numeric_limits<double>::infinity();
  for (const auto& p : all_pairs(inst.arms))
    if (p != b) g = std::min(g, top - inst.mean_reward(p));
  return g;
}

double draw_noise(NoiseKind kind, double sigma, Rng& rng) {
  if (sigma == 0.0) return 0.0;
  if (kind == NoiseKind::rademacher) {
    std::bernoulli_distribution coin(0.5);
    return coin(rng) ? sigma : -sigma;
  }
  std::normal_distribution<double> gauss(0.0, sigma);
  return gauss(rng);
}

double sample_reward(const BilinearInstance& inst, PairIndex p, Rng& rng) {
  return inst.mean_reward(p) + draw_noise(inst.noise, inst.noise_sigma, rng);
}

double RewardOracle::pull(PairIndex p, Rng& rng) {
  ++count_;
  return sample_reward(*inst_, p, rng);
}

double RewardOracle::pull_feature(const Matrix& feature, Rng& rng) {
  ++count_;
  return inst_->mean_reward(feature) + draw_noise(inst_->noise, inst_->noise_sigma, rng);
}

double RewardOracle::pull_sum(PairIndex p, long n, Rng& rng, double* sq_sum) {
  require(n >= 0, "pull_sum: negative pull count");
  count_ += n;
  if (n == 0) return 0.0;
  const double mean = inst_->mean_reward(p);
  const double sigma = inst_->noise_sigma;
  const double dn = static_cast<double>(n);
  // Draw the noise sum and sum of squares from their exact joint law
  // instead of n individual draws.
  double s = 0.0;
  double q = 0.0;
  if (sigma > 0.0 && inst_->noise == NoiseKind::gaussian) {
    s = std::normal_distribution<double>(0.0, sigma * std::sqrt(dn))(rng);
    if (sq_sum) {
      // Sum of squares = n * mean^2 of the noise plus an independent chi-square(n-1) part.
      const double chi = n > 1 ? std::gamma_distribution<double>(0.5 * (dn - 1.0), 2.0)(rng) : 0.0;
      q = s * s / dn + sigma * sigma * chi;
    }
  } else if (sigma > 0.0) {
    const long heads = std::binomial_distribution<long>(n, 0.5)(rng);
    s = sigma * static_cast<double>(2 * heads - n);
    q = dn * sigma * sigma;
  }
  if (sq_sum) *sq_sum += dn * mean * mean + 2.0 * mean * s + q;
  return dn * mean + s;
}

}  // namespace bilinear
