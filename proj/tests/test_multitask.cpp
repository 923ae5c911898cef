#include <gtest/gtest.h>

#include <cmath>

#include "bilinear/linalg.hpp"
#include "bilinear/multitask.hpp"
#include "oracles.hpp"

using namespace bilinear;

namespace {

GoblinConfig quick() {
  GoblinConfig c;
  c.c_tau = 1e-4;
  return c;
}

MultiTaskInstance small_instance(std::size_t tasks, std::uint64_t seed, double sigma) {
  MultiTaskOptions o;
  o.n_left = o.n_right = 4;
  o.noise_sigma = sigma;
  Rng rng(seed);
  return gen_multitask(tasks, 4, 4, 2, 2, 1, rng, o);
}

SampleBatch latent_batch(const Matrix& s, std::size_t n, Rng& rng) {
  SampleBatch b;
  for (std::size_t i = 0; i < n; ++i) {
    const Matrix x = oracle::random_matrix(static_cast<int>(s.rows()), static_cast<int>(s.cols()), rng);
    b.features.push_back(x);
    b.rewards.push_back((x.array() * s.array()).sum());
  }
  return b;
}

}  // namespace

TEST(Extractors, DiagonalGivesLeadingIdentityColumns) {
  Matrix z = Matrix::Zero(3, 3);
  z.diagonal() << 3, 2, 1;
  const Extractors e = learn_extractors(z, 2, 2);
  EXPECT_LT((e.b1 - Matrix::Identity(3, 2)).norm(), 1e-12);
  EXPECT_LT((e.b2 - Matrix::Identity(3, 2)).norm(), 1e-12);
  EXPECT_FALSE(e.degenerate);
}

TEST(Extractors, ExactFactorizationRecoversSpans) {
  Rng rng(1);
  const Matrix b1 = linalg::random_orthonormal(6, 3, rng), b2 = linalg::random_orthonormal(5, 2, rng);
  const Matrix s = oracle::random_matrix(3, 2, rng) + 2.0 * Matrix::Identity(3, 2);
  const Extractors e = learn_extractors(b1 * s * b2.transpose(), 2, 2);
  // With k1 = 2 < rank-3 column space only the top two directions are kept.
  EXPECT_LT(linalg::max_principal_angle(e.b2, b2), 1e-8);
  const Extractors full = learn_extractors(b1 * Matrix::Identity(3, 3) * linalg::random_orthonormal(5, 3, rng).transpose(), 3, 3);
  EXPECT_LT(linalg::max_principal_angle(full.b1, b1), 1e-8);
}

TEST(Extractors, AngleGrowsWithPerturbation) {
  Rng rng(2);
  const Matrix b1 = linalg::random_orthonormal(6, 2, rng), b2 = linalg::random_orthonormal(6, 2, rng);
  const Matrix z = b1 * Vector::LinSpaced(2, 1.0, 0.8).asDiagonal() * b2.transpose();
  const Matrix e = oracle::random_matrix(6, 6, rng).normalized();
  double prev = -1.0;
  for (double eps : {0.0, 0.02, 0.05, 0.1, 0.2}) {
    const double a = linalg::max_principal_angle(learn_extractors(z + eps * e, 2, 2).b1, b1);
    EXPECT_GE(a, prev - 1e-12);
    prev = a;
  }
}

TEST(Extractors, FlagsTiedSpectrum) {
  EXPECT_TRUE(learn_extractors(Matrix::Identity(3, 3), 1, 1).degenerate);
  EXPECT_THROW(learn_extractors(Matrix::Identity(3, 3), 4, 1), InvalidArgument);
}

TEST(LatentArms, ProjectionExamples) {
  ArmSet arms{{Vector::Unit(3, 0), Vector::Unit(3, 2)}, {Vector::Unit(3, 1)}};
  const LatentArmSet l = latent_arms(Matrix::Identity(3, 2), Matrix::Identity(3, 2), arms);
  EXPECT_EQ(l.left[0], Vector::Unit(2, 0));
  EXPECT_EQ(l.left[1].norm(), 0.0);
  EXPECT_EQ(l.source_left[1], 1u);
  Rng rng(3);
  const Matrix b = linalg::random_orthonormal(5, 2, rng);
  for (int k = 0; k < 20; ++k) {
    Vector x = oracle::random_vector(5, rng);
    x /= std::max(1.0, x.norm());
    ArmSet a{{x}, {Vector::Unit(5, 0)}};
    EXPECT_LE(latent_arms(b, b, a).left[0].norm(), x.norm() + 1e-12);
  }
}

TEST(EstimateS, ZeroRewardsGiveZero) {
  Rng rng(4);
  SampleBatch b = latent_batch(Matrix::Identity(2, 2), 30, rng);
  std::fill(b.rewards.begin(), b.rewards.end(), 0.0);
  EXPECT_EQ(estimate_s_m(b, EstimatorBackend::prox_ls, {0.1, 1.0, 1e-5, 1}).norm(), 0.0);
}

TEST(EstimateS, NoiselessDenseRecoversSubspaces) {
  Rng rng(5);
  const Matrix s = linalg::random_orthonormal(4, 2, rng) * Vector::LinSpaced(2, 1.0, 0.7).asDiagonal() *
                   linalg::random_orthonormal(4, 2, rng).transpose();
  const SampleBatch b = latent_batch(s, 2000, rng);
  const Matrix est = estimate_s_m(b, EstimatorBackend::prox_ls, {0.1, 1.0, 1e-8, 1}, 2000);
  const auto se = linalg::svd(est), st = linalg::svd(s);
  EXPECT_LT(linalg::max_principal_angle(se.u.leftCols(2), st.u.leftCols(2)), 0.05);
  EXPECT_LT(linalg::max_principal_angle(se.v.leftCols(2), st.v.leftCols(2)), 0.05);
}

TEST(EstimateS, MatchesGridOracleOnTinyCase) {
  Rng rng(6);
  const Matrix s = oracle::random_vector(2, rng).normalized() * oracle::random_vector(2, rng).normalized().transpose();
  SampleBatch b = latent_batch(s, 40, rng);
  std::normal_distribution<double> nd;
  for (auto& r : b.rewards) r += 0.2 * nd(rng);
  const EstimatorParams p{0.1, 1.0, 1e-2, 1};
  const double gamma = default_gamma(2, 2, b.size(), p);
  const QuadraticLoss loss = QuadraticLoss::from_batch(b);
  auto obj = [&](const Matrix& t) {
    double sse = 0;
    for (std::size_t i = 0; i < b.size(); ++i) {
      const double e = b.rewards[i] - (b.features[i].array() * t.array()).sum();
      sse += e * e;
    }
    return sse / static_cast<double>(b.size()) + gamma * oracle::nuclear_norm(t);
  };
  Matrix g = oracle::grid_argmin_2x2(obj, -2.0, 2.0, 20);
  g = oracle::refine_2x2(obj, g, 0.25, 14);
  const Matrix est = estimate_s_m(b, EstimatorBackend::prox_ls, p, 5000);
  // The grid value bounds the optimum from above.
  EXPECT_LE(obj(est), obj(g) + 1e-9);
  EXPECT_LT((est - g).cwiseAbs().maxCoeff(), 1e-2);
  // Optimality certificate at the solver tolerance: -grad/gamma = U V^T + W with W orthogonal to the
  // active singular pairs and ||W||_2 <= 1.
  Matrix grad = Matrix::Zero(2, 2);
  for (std::size_t i = 0; i < b.size(); ++i) {
    const double e = b.rewards[i] - (b.features[i].array() * est.array()).sum();
    grad -= 2.0 * e * b.features[i] / static_cast<double>(b.size());
  }
  const Matrix sub = -grad / gamma;
  Eigen::JacobiSVD<Matrix> sv(est, Eigen::ComputeFullU | Eigen::ComputeFullV);
  int k = 0;
  while (k < 2 && sv.singularValues()(k) > 1e-6) ++k;
  const Matrix u = sv.matrixU().leftCols(k), v = sv.matrixV().leftCols(k);
  const Matrix w = sub - u * v.transpose();
  EXPECT_LT((u.transpose() * w).norm(), 1e-4);
  EXPECT_LT((w * v).norm(), 1e-4);
  EXPECT_LE(Eigen::JacobiSVD<Matrix>(w).singularValues()(0), 1.0 + 1e-4);
}

TEST(RunMulti, SingleTaskMatchesSingleTaskRunnerOnNoiselessInstance) {
  const MultiTaskInstance mt = small_instance(1, 7, 0.0);
  MultiTaskConfig cfg{quick(), false};
  Rng a(1), b(1);
  const MultiRunRecord multi = run_multi(mt, cfg, a);
  const RunRecord single = run_single(mt.task(0), quick(), b);
  ASSERT_EQ(multi.per_task.size(), 1u);
  EXPECT_EQ(multi.per_task[0].identified, single.identified);
  EXPECT_TRUE(multi.all_success());
}

TEST(RunMulti, NoiselessTwoTasksBothSucceed) {
  // Two rank-1 tasks on a shared 2-d subspace of R^3 with unit gaps.
  MultiTaskInstance mt;
  for (int i = 0; i < 3; ++i) {
    mt.arms.left.push_back(Vector::Unit(3, i));
    mt.arms.right.push_back(Vector::Unit(3, i));
  }
  mt.b1 = mt.b2 = Matrix::Identity(3, 2);
  mt.s_stars = {Matrix::Zero(2, 2), Matrix::Zero(2, 2)};
  mt.s_stars[0](0, 0) = 1.0;
  mt.s_stars[1](1, 1) = 0.8;
  mt.noise_sigma = 0.0;
  mt.s_r = 0.8;
  mt.s0 = 1.0;
  Rng rng(2);
  const MultiRunRecord rec = run_multi(mt, {quick(), false}, rng);
  EXPECT_TRUE(rec.all_success());
  EXPECT_EQ(rec.total, rec.oracle_draws);
  long sum = 0;
  for (const auto& t : rec.per_task) sum += t.total;
  EXPECT_EQ(sum, rec.total);
}

TEST(RunMulti, StageOnePerTaskDoesNotDependOnTaskCount) {
  Rng r1(3), r2(3);
  const MultiTaskInstance m2 = small_instance(2, 9, 1.0);
  const MultiTaskInstance m4 = small_instance(4, 9, 1.0);
  GoblinConfig cfg = quick();
  cfg.delta_floor = 0.25;
  cfg.phase_slack = 0;
  const MultiRunRecord a = run_multi(m2, {cfg, false}, r1);
  const MultiRunRecord b = run_multi(m4, {cfg, false}, r2);
  const std::size_t n = std::min(a.stage1_per_task_by_phase.size(), b.stage1_per_task_by_phase.size());
  ASSERT_GE(n, 1u);
  for (std::size_t i = 0; i < n; ++i) EXPECT_EQ(a.stage1_per_task_by_phase[i], b.stage1_per_task_by_phase[i]);
}

TEST(RunMulti, InjectedExtractorsSkipSharedStage) {
  const MultiTaskInstance mt = small_instance(2, 10, 0.0);
  Rng rng(4);
  const MultiRunRecord rec = run_multi(mt, {quick(), true}, rng);
  EXPECT_EQ(rec.samples_stage1_shared, 0);
  EXPECT_TRUE(rec.all_success());
}

TEST(RunMulti, Deterministic) {
  const MultiTaskInstance mt = small_instance(3, 11, 1.0);
  GoblinConfig cfg = quick();
  cfg.delta_floor = 0.1;
  Rng a(5), b(5);
  const MultiRunRecord x = run_multi(mt, {cfg, false}, a), y = run_multi(mt, {cfg, false}, b);
  EXPECT_EQ(x.total, y.total);
  for (std::size_t m = 0; m < 3; ++m) EXPECT_EQ(x.per_task[m].identified, y.per_task[m].identified);
}

TEST(TaskStream, IndependentOfCallOrder) {
  Rng a = task_stream(42, 1, 2, 3);
  Rng b = task_stream(42, 1, 2, 3);
  Rng c = task_stream(42, 2, 2, 3);
  const auto va = a();
  EXPECT_EQ(va, b());
  EXPECT_NE(va, c());
}
