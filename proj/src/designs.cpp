#include "bilinear/designs.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "bilinear/linalg.hpp"

namespace bilinear {

std::size_t Design::support_size(double threshold) const {
  std::size_t n = 0;
  for (double w : weights)
    if (w > threshold) ++n;
  return n;
}

void Design::validate() const {
  require(weights.size() > 0, "Design: empty weight vector");
  require(weights.minCoeff() >= -1e-15, "Design: negative weight");
  require(std::abs(weights.sum() - 1.0) <= 1e-9, "Design: weights do not sum to one");
}

Vector RegularizerSpec::diagonal() const {
  Vector d(p_dim);
  for (int i = 0; i < p_dim; ++i) d(i) = i < k_eff ? lam : lam_perp;
  return d;
}

double RegularizerSpec::log_det() const {
  return k_eff * std::log(lam) + (p_dim - k_eff) * std::log(lam_perp);
}

RegularizerSpec RegularizerSpec::scaled(double n) const {
  require(n > 0.0, "RegularizerSpec::scaled: n must be positive");
  return {lam / n, lam_perp / n, k_eff, p_dim};
}

void RegularizerSpec::validate() const {
  require(lam > 0.0 && lam_perp > 0.0, "RegularizerSpec: entries must be positive");
  require(lam_perp >= lam * (1.0 - 1e-12), "RegularizerSpec: lam_perp must be >= lam");
  require(k_eff >= 1 && k_eff <= p_dim, "RegularizerSpec: need 1 <= k_eff <= p_dim");
}

RegularizerSpec lambda_regularizer(int k, int p, double lam, double tau_prev) {
  require(k >= 1 && k <= p, "lambda_regularizer: need 1 <= k <= p");
  require(lam > 0.0 && tau_prev > 0.0, "lambda_regularizer: lam and tau_prev must be positive");
  const double formula = tau_prev / (8.0 * k * std::log1p(tau_prev / lam));
  return {lam, std::max(lam, formula), k, p};
}

Matrix information_matrix(std::span<const Vector> atoms, const Vector& weights) {
  require(!atoms.empty(), "information_matrix: no atoms");
  const auto q = atoms.front().size();
  Matrix m = Matrix::Zero(q, q);
  for (std::size_t i = 0; i < atoms.size(); ++i) {
    const double w = weights(static_cast<Eigen::Index>(i));
    if (w > 0.0) m.selfadjointView<Eigen::Lower>().rankUpdate(atoms[i], w);
  }
  return m.selfadjointView<Eigen::Lower>();
}

// ---- E-optimal ------------------------------------------------------------

double min_eigenvalue_objective(std::span<const Vector> atoms, const Vector& weights) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(information_matrix(atoms, weights), Eigen::EigenvaluesOnly);
  return es.eigenvalues()(0);
}

Design e_optimal(std::span<const Vector> atoms, const EOptimalOptions& opts) {
  require(!atoms.empty(), "e_optimal: no atoms");
  require(opts.iters >= 1 && opts.tol > 0.0, "e_optimal: need iters >= 1 and tol > 0");
  const auto n = static_cast<Eigen::Index>(atoms.size());
  const auto q = atoms.front().size();
  Matrix w(q, n);
  for (Eigen::Index i = 0; i < n; ++i) w.col(i) = atoms[static_cast<std::size_t>(i)];
  const Vector uniform = Vector::Constant(n, 1.0 / static_cast<double>(n));
  const double lmin0 = min_eigenvalue_objective(atoms, uniform);
  if (lmin0 <= 1e-10 * std::max(1e-300, (w * uniform.asDiagonal() * w.transpose()).trace()))
    throw SpanDeficient("e_optimal: atoms do not span the design space");
  if (n == 1) return {uniform, true, 0, lmin0};

  // Barrier method on  max t  s.t.  A(b) - t I >= 0,  b in the simplex:
  //   phi_s(b, t) = s t + log det(A(b) - t I) + sum log b_i.
  // Newton steps keep sum b = 1 through the KKT system.
  Vector b = uniform;
  double t = 0.5 * lmin0;
  double s = static_cast<double>(q + n) / lmin0;
  const double m = static_cast<double>(q + n);
  auto phi = [&](const Vector& bb, double tt, double ss, double& out) {
    if (bb.minCoeff() <= 0.0) return false;
    Matrix sm = w * bb.asDiagonal() * w.transpose();
    sm.diagonal().array() -= tt;
    Eigen::LLT<Matrix> llt(sm);
    if (llt.info() != Eigen::Success) return false;
    const Matrix& l = llt.matrixL();
    out = ss * tt + 2.0 * l.diagonal().array().log().sum() + bb.array().log().sum();
    return std::isfinite(out);
  };

  Design best{uniform, false, 0, lmin0};
  int used = 0;
  Matrix kkt(n + 2, n + 2);
  Vector rhs(n + 2);
  bool stalled = false;
  while (used < opts.iters && !stalled) {
    bool centered = false;
    for (int inner = 0; inner < 100 && used < opts.iters; ++inner) {
      ++used;
      Matrix sm = w * b.asDiagonal() * w.transpose();
      sm.diagonal().array() -= t;
      const Eigen::LLT<Matrix> llt(sm);
      const Matrix s_inv_w = llt.solve(w);
      const Matrix s_inv = llt.solve(Matrix::Identity(q, q));
      const Matrix g = w.transpose() * s_inv_w;
      // d/dt of w_i^T S^-1 w_i is w_i^T S^-2 w_i.
      const Vector cross = s_inv_w.colwise().squaredNorm().transpose();
      kkt.setZero();
      kkt.topLeftCorner(n, n) = -(g.array().square()).matrix();
      kkt.topLeftCorner(n, n).diagonal().array() -= b.array().square().inverse();
      kkt.block(0, n, n, 1) = cross;
      kkt.block(n, 0, 1, n) = cross.transpose();
      kkt(n, n) = -s_inv.squaredNorm();
      kkt.block(0, n + 1, n, 1).setOnes();
      kkt.block(n + 1, 0, 1, n).setOnes();
      rhs.head(n) = -(g.diagonal().array() + b.array().inverse()).matrix();
      rhs(n) = -(s - s_inv.trace());
      rhs(n + 1) = 0.0;
      const Vector step = kkt.fullPivLu().solve(rhs);
      const Vector db = step.head(n);
      const double dt = step(n);
      const double decrement = -(db.dot(rhs.head(n)) + dt * rhs(n));
      // Round-off in the decrement grows with s t.
      const double noise = 1e-9 * (1.0 + s * std::abs(t));
      if (!std::isfinite(decrement) || decrement < -1e3 * noise) {
        // Round-off dominates the Newton system; the current iterate is as good as it gets.
        stalled = true;
        break;
      }
      if (decrement < noise) {
        centered = true;
        break;
      }
      double f0 = 0.0;
      phi(b, t, s, f0);
      double alpha = 1.0;
      double f1 = 0.0;
      // Armijo test with slack for cancellation in s t, which dominates phi at large s.
      const double slack = 64.0 * std::numeric_limits<double>::epsilon() * std::abs(f0);
      while (alpha > 1e-12 &&
             !(phi(b + alpha * db, t + alpha * dt, s, f1) && f1 >= f0 + 0.25 * alpha * decrement - slack))
        alpha *= 0.5;
      if (alpha <= 1e-12) {
        stalled = true;
        break;
      }
      b += alpha * db;
      b /= b.sum();
      t += alpha * dt;
      const double lmin = min_eigenvalue_objective(atoms, b);
      if (lmin > best.objective) {
        best.weights = b;
        best.objective = lmin;
      }
    }
    if (centered && m / s <= opts.tol * best.objective) {
      best.converged = true;
      break;
    }
    s *= 16.0;
  }
  best.iterations = used;
  best.weights = best.weights.array().max(0.0).matrix();
  best.weights /= best.weights.sum();
  return best;
}

// ---- Frank-Wolfe ----------------------------------------------------------

DirectionSet DirectionSet::pairwise() {
  DirectionSet d;
  d.pairwise_ = true;
  return d;
}

DirectionSet DirectionSet::explicit_list(std::vector<Vector> dirs) {
  require(!dirs.empty(), "DirectionSet: empty direction list");
  DirectionSet d;
  d.dirs_ = std::move(dirs);
  return d;
}

double DirectionSet::max_norm_sq(std::span<const Vector> atoms, const Matrix& a_inv) const {
  double best = 0.0;
  if (pairwise_) {
    const auto n = static_cast<Eigen::Index>(atoms.size());
    Matrix w(a_inv.rows(), n);
    for (Eigen::Index i = 0; i < n; ++i) w.col(i) = atoms[static_cast<std::size_t>(i)];
    const Matrix q = w.transpose() * a_inv * w;
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = i + 1; j < n; ++j) best = std::max(best, q(i, i) + q(j, j) - 2.0 * q(i, j));
    return best;
  }
  for (const auto& y : dirs_) best = std::max(best, y.dot(a_inv * y));
  return best;
}

std::vector<Vector> pairwise_differences(std::span<const Vector> atoms) {
  std::vector<Vector> out;
  for (std::size_t i = 0; i < atoms.size(); ++i)
    for (std::size_t j = i + 1; j < atoms.size(); ++j) out.push_back(atoms[i] - atoms[j]);
  if (out.empty() && !atoms.empty()) out.push_back(Vector::Zero(atoms.front().size()));
  return out;
}

double logdet_objective(std::span<const Vector> atoms, const Vector& weights, const RegularizerSpec& reg) {
  Matrix a = information_matrix(atoms, weights);
  a.diagonal() += reg.diagonal();
  return linalg::logdet_spd(a) - reg.log_det();
}

Design frank_wolfe_logdet(std::span<const Vector> atoms, const RegularizerSpec& reg,
                          const DirectionSet& directions, double target, const FrankWolfeOptions& opts) {
  require(!atoms.empty(), "frank_wolfe_logdet: no atoms");
  reg.validate();
  require(static_cast<int>(atoms.front().size()) == reg.p_dim, "frank_wolfe_logdet: atom dimension != p_dim");
  const auto n = static_cast<Eigen::Index>(atoms.size());
  const Vector lam_diag = reg.diagonal();

  Design d;
  d.weights = Vector::Constant(n, 1.0 / static_cast<double>(n));
  d.converged = false;
  if (n == 1) {
    d.weights(0) = 1.0;
    d.converged = true;
    d.objective = logdet_objective(atoms, d.weights, reg);
    if (opts.trace) opts.trace->push_back(d.objective);
    return d;
  }

  auto eval = [&](const Vector& b) { return logdet_objective(atoms, b, reg); };
  double g = eval(d.weights);
  if (opts.trace) opts.trace->push_back(g);

  Vector grad(n);
  for (int j = 0; j < opts.max_iters; ++j) {
    Matrix a = information_matrix(atoms, d.weights);
    a.diagonal() += lam_diag;
    const Matrix a_inv = Eigen::LLT<Matrix>(a).solve(Matrix::Identity(a.rows(), a.cols()));
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto& w = atoms[static_cast<std::size_t>(i)];
      grad(i) = w.dot(a_inv * w);
    }
    Eigen::Index top = 0;
    const double gmax = grad.maxCoeff(&top);
    const double gmean = d.weights.dot(grad);
    d.iterations = j;

    if (target > 0.0 && directions.max_norm_sq(atoms, a_inv) <= target) {
      d.converged = true;
      break;
    }
    if (opts.use_gap_rule && gmax <= (1.0 + opts.eps) * gmean) {
      d.converged = true;
      break;
    }

    Vector vertex = Vector::Zero(n);
    vertex(top) = 1.0;
    double step = 1.0 / (j + 2.0);
    if (opts.line_search) {
      // Golden-section search on the concave 1-D restriction.
      double lo = 0.0, hi = 1.0;
      const double phi = 0.5 * (std::sqrt(5.0) - 1.0);
      double x1 = hi - phi * (hi - lo), x2 = lo + phi * (hi - lo);
      double f1 = eval((1 - x1) * d.weights + x1 * vertex), f2 = eval((1 - x2) * d.weights + x2 * vertex);
      for (int it = 0; it < 40; ++it) {
        if (f1 < f2) {
          lo = x1; x1 = x2; f1 = f2;
          x2 = lo + phi * (hi - lo);
          f2 = eval((1 - x2) * d.weights + x2 * vertex);
        } else {
          hi = x2; x2 = x1; f2 = f1;
          x1 = hi - phi * (hi - lo);
          f1 = eval((1 - x1) * d.weights + x1 * vertex);
        }
      }
      step = 0.5 * (lo + hi);
    }
    // Backtrack so g never decreases.
    Vector next = (1 - step) * d.weights + step * vertex;
    double g_next = eval(next);
    int halvings = 0;
    while (g_next < g && halvings < 40) {
      step *= 0.5;
      next = (1 - step) * d.weights + step * vertex;
      g_next = eval(next);
      ++halvings;
    }
    if (g_next < g) {
      // No ascent available at machine precision; the iterate is optimal.
      d.converged = true;
      break;
    }
    d.weights = next;
    g = g_next;
    if (opts.trace) opts.trace->push_back(g);
    d.iterations = j + 1;
  }
  d.weights /= d.weights.sum();
  d.objective = g;
  return d;
}

double rho_g(const Design& design, std::span<const Vector> atoms, const RegularizerSpec& reg,
             const DirectionSet& directions, double n_scale) {
  require(n_scale > 0.0, "rho_g: n_scale must be positive");
  Matrix a = information_matrix(atoms, design.weights);
  a.diagonal() += reg.diagonal() / n_scale;
  Eigen::LLT<Matrix> llt(a);
  if (llt.info() != Eigen::Success) throw Error("rho_g: singular design matrix");
  const Matrix a_inv = llt.solve(Matrix::Identity(a.rows(), a.cols()));
  return directions.max_norm_sq(atoms, a_inv);
}

// ---- Allocation -----------------------------------------------------------

std::vector<long> round_allocation(const Design& design, double tau) {
  require(tau > 0.0, "round_allocation: tau must be positive");
  std::vector<long> out(static_cast<std::size_t>(design.weights.size()), 0);
  for (Eigen::Index i = 0; i < design.weights.size(); ++i) {
    const double w = design.weights(i);
    if (w <= 0.0) continue;
    const double x = w * tau;
    // Absorb representation error so 0.3 * 10 rounds to 3, not 4.
    out[static_cast<std::size_t>(i)] =
        std::max<long>(1, static_cast<long>(std::ceil(x - 1e-9 * std::max(1.0, x))));
  }
  return out;
}

Design prune_support(const Design& design, double threshold) {
  require(threshold >= 0.0 && threshold < 1.0, "prune_support: threshold must be in [0, 1)");
  Design out = design;
  for (auto& w : out.weights)
    if (w < threshold) w = 0.0;
  const double mass = out.weights.sum();
  if (mass <= 0.0) throw AllPruned("prune_support: every weight fell below the threshold");
  out.weights /= mass;
  return out;
}

Design reduce_support(std::span<const Vector> atoms, const Design& design) {
  require(!atoms.empty() && static_cast<Eigen::Index>(atoms.size()) == design.weights.size(),
          "reduce_support: atom count must match the weights");
  const Eigen::Index p = atoms.front().size();
  const Eigen::Index sym = p * (p + 1) / 2;
  Design out = design;
  Vector& w = out.weights;
  for (;;) {
    std::vector<Eigen::Index> supp;
    for (Eigen::Index i = 0; i < w.size(); ++i)
      if (w(i) > 0.0) supp.push_back(i);
    const auto n = static_cast<Eigen::Index>(supp.size());
    if (n <= sym) break;
    Matrix m(sym, n);
    for (Eigen::Index j = 0; j < n; ++j) {
      const Vector& a = atoms[supp[j]];
      require(a.size() == p, "reduce_support: atoms differ in dimension");
      Eigen::Index row = 0;
      for (Eigen::Index r = 0; r < p; ++r)
        for (Eigen::Index c = r; c < p; ++c) m(row++, j) = a(r) * a(c);
    }
    Eigen::JacobiSVD<Matrix> svd(m, Eigen::ComputeFullV);
    // n > sym guarantees a null direction; the last right singular vector is one.
    Vector v = svd.matrixV().col(n - 1);
    // Moving against the mass keeps the total at or below one.
    if (v.sum() > 0.0) v = -v;
    double step = std::numeric_limits<double>::infinity();
    Eigen::Index hit = -1;
    for (Eigen::Index j = 0; j < n; ++j)
      if (v(j) < 0.0 && w(supp[j]) / -v(j) < step) {
        step = w(supp[j]) / -v(j);
        hit = j;
      }
    if (hit < 0) break;
    for (Eigen::Index j = 0; j < n; ++j) w(supp[j]) = std::max(0.0, w(supp[j]) + step * v(j));
    w(supp[hit]) = 0.0;
  }
  const double mass = w.sum();
  require(mass > 0.0, "reduce_support: design lost all mass");
  w /= mass;
  return out;
}

}  // namespace bilinear
