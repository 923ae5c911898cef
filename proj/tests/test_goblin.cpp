#include <gtest/gtest.h>

#include <cmath>

#include "bilinear/goblin.hpp"
#include "oracles.hpp"

using namespace bilinear;

namespace {

ScheduleContext reference_ctx() {
  ScheduleContext c;
  c.d1 = 6;
  c.d2 = 6;
  c.r = 2;
  c.s_r = 1.0 / std::sqrt(2.0);
  c.num_pairs = 100;
  c.s_norm = 1.0;
  c.k_eff = 20;
  c.p_dim = 36;
  return c;
}

BilinearInstance basis_instance(double a, double b, double sigma) {
  ArmSet arms{{Vector::Unit(2, 0), Vector::Unit(2, 1)}, {Vector::Unit(2, 0), Vector::Unit(2, 1)}};
  Matrix t = Matrix::Zero(2, 2);
  t(0, 0) = a;
  t(1, 1) = b;
  return make_instance(arms, t, 2, sigma);
}

GoblinConfig quick() {
  GoblinConfig c;
  c.c_tau = 1e-4;
  return c;
}

}  // namespace

TEST(Schedule, EpsAndDelta) {
  const GoblinConfig cfg;
  EXPECT_EQ(schedule_phase(1, reference_ctx(), cfg, 1.0, 1.0).eps, 0.5);
  EXPECT_NEAR(schedule_phase(3, reference_ctx(), cfg, 1.0, 1.0).delta_ell, 0.1 / 18.0, 1e-15);
  EXPECT_NEAR(schedule_phase(3, reference_ctx(), cfg, 1.0, 1.0).delta_ell, 0.005556, 1e-6);
}

TEST(Schedule, ExplorationLengthMatchesHandComputation) {
  // sqrt(8 * 36 * 2 * log(4 * 100 / 0.05)) * sqrt(2), evaluated separately.
  EXPECT_NEAR(schedule_phase(1, reference_ctx(), GoblinConfig{}, 1.0, 1.0).tau_e, 101.750925, 1e-5);
}

TEST(Schedule, EliminationLengthAndBStar) {
  GoblinConfig cfg;
  cfg.c_tau = 0.5;
  const double rho = 3.0, prev = 500.0;
  const PhaseParams p = schedule_phase(2, reference_ctx(), cfg, rho, prev);
  const double d_l = 0.1 / 8.0;
  const double tau_e = 0.5 * std::sqrt(8.0 * 72 * std::log(16.0 * 100 / d_l)) * std::sqrt(2.0);
  EXPECT_NEAR(p.tau_e, tau_e, 1e-9);
  const double s_perp = 8.0 * 72 * std::log(12.0 / d_l) / (tau_e * 0.5);
  EXPECT_NEAR(p.s_perp, s_perp, 1e-9);
  const double lam_perp = std::max(1.0, prev / (8.0 * 20 * std::log1p(prev)));
  EXPECT_NEAR(p.reg.lam_perp, lam_perp, 1e-12);
  const double b = 8.0 + std::sqrt(lam_perp) * s_perp;
  EXPECT_NEAR(p.b_star, b, 1e-9);
  EXPECT_EQ(p.tau_g, std::ceil(0.5 * 64.0 * b * rho * std::log(16.0 * 100 / d_l) / 0.0625));
}

TEST(Schedule, PhaseCap) {
  GoblinConfig cfg;
  EXPECT_EQ(phase_cap(cfg), 22 + 2);
  cfg.delta_floor = 0.25;
  cfg.phase_slack = 0;
  EXPECT_EQ(phase_cap(cfg), 4);
}

TEST(RegularizedLs, SingleSampleShermanMorrison) {
  Rng rng(1);
  const Vector w = oracle::random_vector(4, rng);
  const RegularizerSpec reg{0.5, 2.0, 2, 4};
  Vector lam(4);
  lam << 0.5, 0.5, 2.0, 2.0;
  const Vector li = lam.cwiseInverse();
  // (L + w w^T)^-1 = L^-1 - L^-1 w w^T L^-1 / (1 + w^T L^-1 w)
  const Matrix inv = Matrix(li.asDiagonal()) - (li.asDiagonal() * w) * (li.asDiagonal() * w).transpose() /
                                                   (1.0 + w.dot(li.asDiagonal() * w));
  const double r = 1.7;
  const std::vector<Vector> f{w};
  const std::vector<double> y{r};
  EXPECT_LT((regularized_ls(f, y, reg) - inv * w * r).norm(), 1e-12);
}

TEST(RegularizedLs, NoiselessRecoveryAndZeroRewards) {
  Rng rng(2);
  const Vector theta = oracle::random_vector(5, rng);
  std::vector<Vector> f;
  std::vector<double> y, zero;
  for (int i = 0; i < 30; ++i) {
    f.push_back(oracle::random_vector(5, rng));
    y.push_back(f.back().dot(theta));
    zero.push_back(0.0);
  }
  const RegularizerSpec tiny{1e-8, 1e-8, 5, 5};
  EXPECT_LT((regularized_ls(f, y, tiny) - theta).norm(), 1e-5);
  EXPECT_EQ(regularized_ls(f, zero, tiny).norm(), 0.0);
  y.pop_back();
  EXPECT_THROW(regularized_ls(f, y, tiny), LengthMismatch);
}

TEST(Eliminate, ThresholdAndTies) {
  const double eps = 0.1;
  const std::vector<PairIndex> act{{0, 0}, {0, 1}};
  const std::vector<Vector> rot{Vector::Constant(1, 3 * eps), Vector::Zero(1)};
  const Vector th = Vector::Ones(1);
  EXPECT_EQ(eliminate(act, rot, th, eps), (std::vector<PairIndex>{{0, 0}}));
  const std::vector<Vector> same{Vector::Ones(1), Vector::Ones(1)};
  EXPECT_EQ(eliminate(act, same, th, eps), act);
}

TEST(Eliminate, MatchesBruteForceDoubleLoop) {
  Rng rng(3);
  for (int rep = 0; rep < 20; ++rep) {
    std::vector<PairIndex> act;
    std::vector<Vector> rot;
    for (std::size_t i = 0; i < 10; ++i) {
      act.push_back({i / 3, i % 3});
      rot.push_back(oracle::random_vector(3, rng));
    }
    const Vector th = oracle::random_vector(3, rng);
    const double eps = 0.2;
    std::vector<PairIndex> keep;
    for (std::size_t i = 0; i < 10; ++i) {
      bool dominated = false;
      for (std::size_t j = 0; j < 10; ++j)
        if ((rot[j] - rot[i]).dot(th) > 2 * eps) dominated = true;
      if (!dominated) keep.push_back(act[i]);
    }
    EXPECT_EQ(eliminate(act, rot, th, eps), keep);
  }
}

TEST(RunSingle, SingletonReturnsImmediately) {
  ArmSet arms{{Vector::Unit(2, 0)}, {Vector::Unit(2, 1)}};
  const BilinearInstance inst = make_instance(arms, Matrix::Identity(2, 2), 2);
  Rng rng(1);
  const RunRecord rec = run_single(inst, quick(), rng);
  EXPECT_TRUE(rec.success);
  EXPECT_EQ(rec.total, 0);
  EXPECT_EQ(rec.oracle_draws, 0);
}

TEST(RunSingle, NoiselessDiagonalBasis) {
  const BilinearInstance inst = basis_instance(1.0, 0.2, 0.0);
  Rng rng(2);
  const RunRecord rec = run_single(inst, quick(), rng);
  EXPECT_TRUE(rec.success);
  EXPECT_EQ(rec.identified, (PairIndex{0, 0}));
  EXPECT_EQ(rec.total, rec.oracle_draws);
}

TEST(RunSingle, SteinBackendOnNoiselessInstance) {
  const BilinearInstance inst = basis_instance(1.0, 0.2, 0.0);
  GoblinConfig cfg = quick();
  cfg.backend = EstimatorBackend::stein;
  Rng rng(3);
  EXPECT_TRUE(run_single(inst, cfg, rng).success);
}

TEST(RunSingle, DeterministicAndAudited) {
  UnitBallSpec spec;
  spec.d1 = spec.d2 = 4;
  spec.rank = 1;
  spec.n_left = spec.n_right = 5;
  const BilinearInstance inst = gen_unit_ball_instance(spec, 9);
  Rng a(5), b(5);
  const RunRecord ra = run_single(inst, quick(), a);
  const RunRecord rb = run_single(inst, quick(), b);
  EXPECT_EQ(ra.total, rb.total);
  EXPECT_EQ(ra.identified, rb.identified);
  EXPECT_EQ(ra.phases, rb.phases);
  EXPECT_EQ(ra.total, ra.oracle_draws);
  EXPECT_EQ(ra.total, ra.samples_stage1 + ra.samples_stage2);
  ASSERT_EQ(static_cast<int>(ra.per_phase_log.size()), ra.phases);
  long s1 = 0, s2 = 0;
  for (const auto& l : ra.per_phase_log) {
    s1 += l.samples_stage1;
    s2 += l.samples_stage2;
  }
  EXPECT_EQ(s1, ra.samples_stage1);
  EXPECT_EQ(s2, ra.samples_stage2);
}

TEST(RunSingle, NoiselessNeverEliminatesTruth) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    UnitBallSpec spec;
    spec.d1 = spec.d2 = 3;
    spec.rank = 1;
    spec.n_left = spec.n_right = 4;
    spec.noise_sigma = 0.0;
    const BilinearInstance inst = gen_unit_ball_instance(spec, seed);
    Rng rng(seed);
    const RunRecord rec = run_single(inst, quick(), rng);
    EXPECT_TRUE(rec.success) << "seed " << seed;
  }
}

TEST(RunSingle, LogDetStaysUnderEffectiveDimensionBound) {
  UnitBallSpec spec;
  spec.d1 = spec.d2 = 4;
  spec.rank = 1;
  spec.n_left = spec.n_right = 6;
  const BilinearInstance inst = gen_unit_ball_instance(spec, 21);
  Rng rng(4);
  const RunRecord rec = run_single(inst, quick(), rng);
  for (const auto& l : rec.per_phase_log) EXPECT_LE(l.logdet_ratio, l.logdet_bound);
}

TEST(RunSingle, RejectsBadConfig) {
  GoblinConfig cfg;
  cfg.delta = 1.5;
  Rng rng(1);
  EXPECT_THROW(run_single(basis_instance(1, 0.2, 0), cfg, rng), InvalidArgument);
}

TEST(SubspaceExplorer, AllocationFollowsDesign) {
  const ArmView view = ambient_view(basis_instance(1, 0.2, 0).arms);
  const SubspaceExplorer ex(view, GoblinConfig{});
  EXPECT_EQ(ex.pairs().size(), 4u);
  const auto alloc = ex.allocation(40.0);
  long total = 0;
  for (long n : alloc) total += n;
  EXPECT_GE(total, 40);
  // Four orthogonal atoms give a uniform E-optimal design.
  for (long n : alloc) EXPECT_EQ(n, 10);
}

TEST(OuterAtoms, VecOfOuterProducts) {
  Rng rng(6);
  ArmView v{{oracle::random_vector(2, rng)}, {oracle::random_vector(3, rng)}};
  const std::vector<PairIndex> p{{0, 0}};
  const Vector a = outer_atoms(v, p).front();
  const Matrix o = v.left[0] * v.right[0].transpose();
  EXPECT_LT((a - Eigen::Map<const Vector>(o.data(), 6)).norm(), 1e-15);
}
