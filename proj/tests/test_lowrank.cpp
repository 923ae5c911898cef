#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "bilinear/linalg.hpp"
#include "bilinear/lowrank.hpp"
#include "oracles.hpp"

using namespace bilinear;

namespace {

Matrix rank_r(int d1, int d2, int r, Rng& rng) {
  return linalg::random_orthonormal(d1, r, rng) * Vector::LinSpaced(r, 1.0, 0.7).asDiagonal() *
         linalg::random_orthonormal(d2, r, rng).transpose();
}

// Gaussian-dithered pulls around random centers, reward <X, theta> + noise.
SampleBatch dithered_batch(const Matrix& theta, std::size_t n, double var, double sigma, Rng& rng) {
  std::normal_distribution<double> nd;
  SampleBatch b;
  DitherDensity dens;
  dens.variance = var;
  for (std::size_t s = 0; s < n; ++s) {
    Matrix c = oracle::random_matrix(static_cast<int>(theta.rows()), static_cast<int>(theta.cols()), rng) * 0.1;
    Matrix x = c;
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] += std::sqrt(var) * nd(rng);
    b.features.push_back(x);
    b.rewards.push_back((x.array() * theta.array()).sum() + sigma * nd(rng));
    dens.centers.push_back(c);
  }
  b.density = std::move(dens);
  return b;
}

SampleBatch gaussian_batch(const Matrix& theta, std::size_t n, double sigma, Rng& rng) {
  std::normal_distribution<double> nd;
  SampleBatch b;
  for (std::size_t s = 0; s < n; ++s) {
    const Matrix x = oracle::random_matrix(static_cast<int>(theta.rows()), static_cast<int>(theta.cols()), rng);
    b.features.push_back(x);
    b.rewards.push_back((x.array() * theta.array()).sum() + sigma * nd(rng));
  }
  return b;
}

Matrix top_left(const Matrix& m, int r) { return linalg::svd(m).u.leftCols(r); }
Matrix top_right(const Matrix& m, int r) { return linalg::svd(m).v.leftCols(r); }

double subspace_angle(const Matrix& est, const Matrix& truth, int r) {
  return std::max(linalg::max_principal_angle(top_left(est, r), top_left(truth, r)),
                  linalg::max_principal_angle(top_right(est, r), top_right(truth, r)));
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

TEST(Psi, ScalarValues) {
  EXPECT_EQ(psi_scalar(0.0), 0.0);
  EXPECT_NEAR(psi_scalar(1.0), std::log(2.5), 1e-15);
  EXPECT_NEAR(psi_scalar(1.0), 0.9162907, 1e-7);
  EXPECT_NEAR(psi_scalar(-1.0), -std::log(2.5), 1e-15);
}

TEST(Psi, TildeOfZeroAndRankOne) {
  EXPECT_EQ(psi_tilde(Matrix::Zero(3, 2), 1.0).norm(), 0.0);
  Rng rng(1);
  const Vector u = oracle::random_vector(3, rng).normalized();
  const Vector v = oracle::random_vector(4, rng).normalized();
  const Matrix out = psi_tilde(u * v.transpose(), 1.0);
  EXPECT_LT((out - std::log(2.5) * u * v.transpose()).norm(), 1e-12);
}

TEST(Psi, TildeTaylorRemainder) {
  Rng rng(2);
  for (int k = 0; k < 20; ++k) {
    Matrix a = oracle::random_matrix(3, 3, rng);
    Eigen::JacobiSVD<Matrix> s(a);
    a *= 0.01 * (k + 1) / 20.0 / s.singularValues()(0);
    const double nu = 0.01;
    EXPECT_LE((psi_tilde(a, nu) - a).norm(), 10.0 * nu * a.squaredNorm() + 1e-15);
  }
}

TEST(Score, GaussianExamples) {
  const Matrix m = Matrix::Constant(2, 2, 0.3);
  EXPECT_EQ(score_gaussian(m, m, 1.0).norm(), 0.0);
  Matrix e11 = Matrix::Zero(2, 2);
  e11(0, 0) = 1.0;
  EXPECT_LT((score_gaussian(m + e11, m, 1.0) - e11).norm(), 1e-15);
  EXPECT_LT((score_gaussian(m + 0.5 * e11, m, 0.25) - 2.0 * e11).norm(), 1e-15);
}

TEST(Svt, Examples) {
  Matrix d = Matrix::Zero(2, 2);
  d(0, 0) = 3;
  d(1, 1) = 1;
  Matrix want = Matrix::Zero(2, 2);
  want(0, 0) = 1;
  EXPECT_LT((svt(d, 2.0) - want).norm(), 1e-12);
  Rng rng(3);
  const Matrix m = oracle::random_matrix(3, 4, rng);
  EXPECT_EQ(svt(m, 0.0), m);
}

TEST(Svt, MatchesGridSearchProx) {
  Rng rng(4);
  for (int k = 0; k < 10; ++k) {
    const Matrix m = oracle::random_matrix(2, 2, rng);
    auto obj = [&](const Matrix& t) { return (t - m).squaredNorm() + oracle::nuclear_norm(t); };
    Matrix g = oracle::grid_argmin_2x2(obj, -3.0, 3.0, 24);
    g = oracle::refine_2x2(obj, g, 0.25, 14);
    EXPECT_LT((svt(m, 0.5) - g).cwiseAbs().maxCoeff(), 1e-3);
  }
}

TEST(Svt, MatchesReducedCoordinateProxOracle) {
  Rng rng(41);
  for (int k = 0; k < 20; ++k) {
    const Matrix m = oracle::random_matrix(2, 2, rng);
    const double t = std::uniform_real_distribution<double>(0.1, 1.5)(rng);
    auto obj = [&](const Matrix& x) { return 0.5 * (x - m).squaredNorm() + t * oracle::nuclear_norm(x); };
    const Matrix g = oracle::prox_nuclear_2x2_oracle(m, t, 400);
    // The reduced oracle must beat a plain 4-d grid, which cannot exploit the structure.
    EXPECT_LE(obj(g), obj(oracle::grid_argmin_2x2(obj, -3.0, 3.0, 16)) + 1e-12);
    EXPECT_LT((svt(m, t) - g).cwiseAbs().maxCoeff(), 1e-3);
  }
}

TEST(ProxLs, ObjectiveTraceNeverRises) {
  Rng rng(42);
  const Matrix theta = rank_r(3, 4, 1, rng);
  SampleBatch b;
  std::normal_distribution<double> gauss;
  for (int i = 0; i < 100; ++i) {
    const Matrix x = oracle::random_matrix(3, 4, rng);
    b.features.push_back(x);
    b.rewards.push_back((x.array() * theta.array()).sum() + gauss(rng));
  }
  std::vector<double> trace;
  ProxLsOptions o;
  o.iters = 1000;
  o.tol = 0.0;
  o.trace = &trace;
  const ProxLsResult r = prox_ls_estimate(b, 0.2, o);
  ASSERT_GT(trace.size(), 2u);
  for (std::size_t i = 1; i < trace.size(); ++i) EXPECT_LE(trace[i], trace[i - 1]) << "iteration " << i;
  EXPECT_DOUBLE_EQ(r.objective, trace.back());
}

TEST(Stein, ZeroRewardsGiveZero) {
  Rng rng(5);
  SampleBatch b = dithered_batch(Matrix::Zero(3, 3), 50, 1.0, 0.0, rng);
  std::fill(b.rewards.begin(), b.rewards.end(), 0.0);
  EXPECT_EQ(stein_estimate(b, {0.1, 0.5}).norm(), 0.0);
}

TEST(Stein, RequiresDensity) {
  Rng rng(6);
  EXPECT_THROW(stein_estimate(gaussian_batch(Matrix::Identity(2, 2), 10, 0.0, rng), {0.1, 0.0}), BackendMismatch);
}

TEST(Stein, RecoversSubspacesAtTenThousandSamples) {
  Rng rng(7);
  const Matrix theta = rank_r(6, 6, 2, rng);
  const SampleBatch b = dithered_batch(theta, 10000, 1.0, 0.0, rng);
  const Matrix est = stein_estimate(b, {1e-4, 0.0});
  EXPECT_LT(subspace_angle(est, theta, 2), 0.1);
}

TEST(Stein, MatchesGridSearchOnObjective) {
  Rng rng(8);
  const Matrix theta = rank_r(2, 2, 1, rng);
  const SampleBatch b = dithered_batch(theta, 200, 1.0, 0.1, rng);
  const double nu = 0.05, gamma = 0.3;
  const Matrix moment = stein_moment(b, nu);
  auto obj = [&](const Matrix& t) { return stein_objective(t, moment, gamma); };
  Matrix g = oracle::grid_argmin_2x2(obj, -3.0, 3.0, 24);
  g = oracle::refine_2x2(obj, g, 0.25, 20);
  const Matrix est = stein_estimate(b, {nu, gamma});
  EXPECT_LE(obj(est), obj(g) + 1e-6);
  EXPECT_LT((est - g).cwiseAbs().maxCoeff(), 1e-3);
}

TEST(Stein, AveragedIdenticalTasksEqualsSingle) {
  Rng rng(9);
  const SampleBatch b = dithered_batch(rank_r(3, 3, 1, rng), 100, 1.0, 0.1, rng);
  const std::vector<SampleBatch> three{b, b, b};
  const SteinConfig cfg{0.05, 0.1};
  EXPECT_LT((averaged_stein_estimate(three, cfg) - stein_estimate(b, cfg)).norm(), 1e-12);
}

TEST(Stein, AveragedZeroRewardsAndLengthCheck) {
  Rng rng(10);
  SampleBatch b = dithered_batch(Matrix::Zero(2, 2), 20, 1.0, 0.0, rng);
  std::fill(b.rewards.begin(), b.rewards.end(), 0.0);
  const std::vector<SampleBatch> two{b, b};
  EXPECT_EQ(averaged_stein_estimate(two, {0.1, 0.1}).norm(), 0.0);
  SampleBatch shorter = b;
  shorter.features.pop_back();
  shorter.rewards.pop_back();
  shorter.density->centers.pop_back();
  const std::vector<SampleBatch> bad{b, shorter};
  EXPECT_THROW(averaged_stein_estimate(bad, {0.1, 0.1}), LengthMismatch);
}

TEST(Stein, AveragedAnglesShrinkWithBudget) {
  const std::vector<std::size_t> budgets{200, 1000, 5000};
  std::vector<double> med;
  for (std::size_t n : budgets) {
    std::vector<double> angles;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      Rng rng(100 + seed);
      const Matrix b1 = linalg::random_orthonormal(5, 2, rng);
      const Matrix b2 = linalg::random_orthonormal(5, 2, rng);
      std::vector<SampleBatch> tasks;
      Matrix mean = Matrix::Zero(5, 5);
      for (int m = 0; m < 3; ++m) {
        const Matrix t = b1 * (Matrix::Identity(2, 2) + 0.3 * oracle::random_matrix(2, 2, rng)) * b2.transpose();
        mean += t / 3.0;
        tasks.push_back(dithered_batch(t, n, 1.0, 1.0, rng));
      }
      const Matrix est = averaged_stein_estimate(tasks, {1e-3, 0.0});
      angles.push_back(subspace_angle(est, mean, 2));
    }
    med.push_back(median(angles));
  }
  EXPECT_GT(med[0], med[1]);
  EXPECT_GT(med[1], med[2]);
}

TEST(ProxLs, UnregularizedNoiselessRecoversExactly) {
  Rng rng(11);
  const Matrix theta = rank_r(3, 3, 2, rng);
  const SampleBatch b = gaussian_batch(theta, 60, 0.0, rng);
  ProxLsOptions o;
  o.iters = 20000;
  o.tol = 0.0;
  EXPECT_LT((prox_ls_estimate(b, 0.0, o).theta - theta).norm(), 1e-6);
}

TEST(ProxLs, HugeGammaGivesZero) {
  Rng rng(12);
  const SampleBatch b = gaussian_batch(rank_r(3, 3, 1, rng), 40, 0.1, rng);
  Matrix h = Matrix::Zero(3, 3);
  for (std::size_t s = 0; s < b.size(); ++s) h += b.features[s] * b.rewards[s];
  h /= static_cast<double>(b.size());
  Eigen::JacobiSVD<Matrix> svd(h);
  const double gamma = 2.0 * svd.singularValues()(0);
  EXPECT_LT(prox_ls_estimate(b, gamma).theta.norm(), 1e-12);
}

TEST(ProxLs, ObjectiveNeverIncreases) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Rng rng(seed);
    const SampleBatch b = gaussian_batch(rank_r(4, 4, 2, rng), 100, 0.5, rng);
    std::vector<double> trace;
    ProxLsOptions o;
    o.trace = &trace;
    o.iters = 300;
    prox_ls_estimate(b, 0.2, o);
    for (std::size_t i = 1; i < trace.size(); ++i) EXPECT_LE(trace[i], trace[i - 1] + 1e-12);
  }
}

TEST(ProxLs, ErrorShrinksAsBudgetDoubles) {
  std::vector<double> a, b;
  for (std::uint64_t seed = 0; seed < 21; ++seed) {
    Rng rng(500 + seed);
    const Matrix theta = rank_r(3, 3, 1, rng);
    EstimatorParams p;
    p.s0 = theta.norm();
    p.score_bound_c = 1e-5;
    const SampleBatch big = gaussian_batch(theta, 1000, 0.1, rng);
    SampleBatch half = big;
    half.features.resize(500);
    half.rewards.resize(500);
    a.push_back((prox_ls_estimate(half, default_gamma(3, 3, 500, p)).theta - theta).squaredNorm());
    b.push_back((prox_ls_estimate(big, default_gamma(3, 3, 1000, p)).theta - theta).squaredNorm());
  }
  EXPECT_LE(median(b) / median(a), 0.7);
}

TEST(Schedules, GammaAndNuFormulas) {
  EstimatorParams p{0.1, 2.0, 1.0, 3};
  EXPECT_NEAR(default_gamma(6, 6, 100, p), 4.0 * std::sqrt(2.0 * 8.0 * 36.0 * std::log(2.0 * 12 / 0.1) / 100.0),
              1e-12);
  EXPECT_NEAR(default_nu(6, 6, 100, p), std::sqrt(2.0 * std::log(240.0) / (8.0 * 3 * 100 * 36.0)), 1e-15);
}

TEST(Batch, ValidateRejectsMismatch) {
  SampleBatch b;
  b.features.push_back(Matrix::Zero(2, 2));
  EXPECT_THROW(b.validate(), Error);
}
