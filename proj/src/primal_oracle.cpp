#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include "uvdro/objectives.hpp"

namespace uvdro {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Largest feasible point below h: Lipschitz envelope over shortest-path
// bounds, then scaled into the ball. Exact feasibility for the returned
// witness regardless of solver accuracy.
Vector repair(const Vector& h, const Matrix& bound) {
  const Index n = h.size();
  Vector out = h.cwiseMax(0.0);
  Matrix sp = bound;
  for (Index k = 0; k < n; ++k)
    for (Index i = 0; i < n; ++i)
      for (Index j = 0; j < n; ++j) sp(i, j) = std::min(sp(i, j), sp(i, k) + sp(k, j));
  Vector env(n);
  for (Index i = 0; i < n; ++i) {
    double m = out[i];
    for (Index j = 0; j < n; ++j)
      if (std::isfinite(sp(i, j))) m = std::min(m, out[j] + sp(i, j));
    env[i] = m;
  }
  const double radius = std::sqrt(static_cast<double>(n));
  const double norm = env.norm();
  if (norm > radius) env *= radius / norm;
  return env;
}

// Indices joined by a zero bound in both directions must share one value.
std::vector<Index> merge_groups(const Matrix& bound, Index& groups) {
  const Index n = bound.rows();
  std::vector<Index> parent(static_cast<std::size_t>(n));
  std::iota(parent.begin(), parent.end(), Index{0});
  auto find = [&](Index x) {
    while (parent[static_cast<std::size_t>(x)] != x) x = parent[static_cast<std::size_t>(x)];
    return x;
  };
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j)
      if (i != j && bound(i, j) <= 0.0) parent[static_cast<std::size_t>(find(i))] = find(j);
  std::vector<Index> label(static_cast<std::size_t>(n), -1), group(static_cast<std::size_t>(n));
  groups = 0;
  for (Index i = 0; i < n; ++i) {
    const Index r = find(i);
    if (label[static_cast<std::size_t>(r)] < 0) label[static_cast<std::size_t>(r)] = groups++;
    group[static_cast<std::size_t>(i)] = label[static_cast<std::size_t>(r)];
  }
  return group;
}

// max g.h  s.t. h >= 0, sum size_k h_k^2 <= n, h_a - h_b <= bound_ab,
// by a log-barrier path-following Newton method over the merged groups.
PrimalWitness solve_primal(const Vector& losses, const DistanceMatrix& cost, double lipschitz,
                           double eta, const PrimalOracleOptions& options) {
  const Index n = losses.size();
  if (n > options.max_size) throw DimensionError("primal oracle size limit", options.max_size, n);
  if (cost.size() != n) throw DimensionError("cost matrix size", n, cost.size());
  if (!(lipschitz >= 0.0)) throw Error("lipschitz must be >= 0");
  const Vector g = (losses.array() - eta).matrix() / static_cast<double>(n);
  if (g.norm() == 0.0) return {Vector::Zero(n), 0.0};

  Matrix bound = Matrix::Constant(n, n, kInf);
  if (std::isfinite(lipschitz))
    for (Index i = 0; i < n; ++i)
      for (Index j = 0; j < n; ++j)
        if (i != j) bound(i, j) = lipschitz * cost(i, j);
  for (Index i = 0; i < n; ++i) bound(i, i) = 0.0;

  Index m = 0;
  const std::vector<Index> group = merge_groups(bound, m);
  Vector gg = Vector::Zero(m), size = Vector::Zero(m);
  Matrix gb = Matrix::Constant(m, m, kInf);
  for (Index i = 0; i < n; ++i) {
    const Index a = group[static_cast<std::size_t>(i)];
    gg[a] += g[i];
    size[a] += 1.0;
    for (Index j = 0; j < n; ++j) {
      const Index b = group[static_cast<std::size_t>(j)];
      if (a != b) gb(a, b) = std::min(gb(a, b), bound(i, j));
    }
  }
  struct Cut {
    Index a, b;
    double bound;
  };
  std::vector<Cut> cuts;
  for (Index a = 0; a < m; ++a)
    for (Index b = 0; b < m; ++b)
      if (a != b && std::isfinite(gb(a, b))) cuts.push_back({a, b, gb(a, b)});
  const double radius_sq = static_cast<double>(n);

  auto barrier = [&](const Vector& x) {
    double phi = 0.0;
    for (Index a = 0; a < m; ++a) {
      if (x[a] <= 0.0) return kInf;
      phi -= std::log(x[a]);
    }
    for (const Cut& c : cuts) {
      const double s = c.bound - x[c.a] + x[c.b];
      if (s <= 0.0) return kInf;
      phi -= std::log(s);
    }
    const double ball = radius_sq - size.dot(x.cwiseProduct(x));
    if (ball <= 0.0) return kInf;
    return phi - std::log(ball);
  };

  Vector x = Vector::Constant(m, 0.5);
  const double nu = static_cast<double>(m + cuts.size() + 1);
  double tau = 1.0 / std::max(gg.cwiseAbs().maxCoeff(), 1e-300);
  int newton = 0;
  bool converged = false;
  while (newton < options.max_iterations) {
    for (int inner = 0; inner < 200 && newton < options.max_iterations; ++inner, ++newton) {
      Vector grad = -tau * gg;
      Matrix hess = Matrix::Zero(m, m);
      for (Index a = 0; a < m; ++a) {
        grad[a] -= 1.0 / x[a];
        hess(a, a) += 1.0 / (x[a] * x[a]);
      }
      for (const Cut& c : cuts) {
        const double s = c.bound - x[c.a] + x[c.b];
        const double inv = 1.0 / s, inv2 = inv * inv;
        grad[c.a] += inv;
        grad[c.b] -= inv;
        hess(c.a, c.a) += inv2;
        hess(c.b, c.b) += inv2;
        hess(c.a, c.b) -= inv2;
        hess(c.b, c.a) -= inv2;
      }
      const double ball = radius_sq - size.dot(x.cwiseProduct(x));
      const Vector dball = -2.0 * size.cwiseProduct(x);
      grad -= dball / ball;
      hess += dball * dball.transpose() / (ball * ball);
      hess.diagonal() += 2.0 * size / ball;

      const Vector step = -hess.ldlt().solve(grad);
      const double decrement = -grad.dot(step);
      if (!(decrement >= 0.0) || decrement / 2.0 <= 1e-13) break;
      const double f0 = -tau * gg.dot(x) + barrier(x);
      double lr = 1.0;
      Vector next = x + step;
      for (int bt = 0; bt < 80; ++bt) {
        next = x + lr * step;
        const double f1 = -tau * gg.dot(next) + barrier(next);
        if (std::isfinite(f1) && f1 <= f0 - 0.25 * lr * decrement) break;
        lr *= 0.5;
      }
      if (!std::isfinite(barrier(next))) break;
      x = next;
    }
    if (nu / tau <= options.tolerance * std::max(std::abs(gg.dot(x)), 1e-12)) {
      converged = true;
      break;
    }
    tau *= 8.0;
  }

  Vector h(n);
  for (Index i = 0; i < n; ++i) h[i] = x[group[static_cast<std::size_t>(i)]];
  const Vector repaired = repair(h, bound);
  PrimalWitness w{repaired, g.dot(repaired)};
  if (!converged) throw PrimalConvergenceError("primal barrier method did not converge", w);
  return w;
}

}  // namespace

PrimalWitness primal_inner_sup_oracle(const Vector& losses, const DistanceMatrix& cost,
                                      double alpha, double lipschitz, double eta,
                                      const PrimalOracleOptions& options) {
  if (!(alpha > 0.0 && alpha <= 1.0)) throw ConfigError("alpha must lie in (0, 1]");
  return solve_primal(losses, cost, alpha * lipschitz, eta, options);
}

PrimalRobustValue primal_robust_value(const Vector& losses, const DistanceMatrix& cost,
                                      double alpha, double lipschitz,
                                      const PrimalOracleOptions& options) {
  if (!(alpha > 0.0 && alpha <= 1.0)) throw ConfigError("alpha must lie in (0, 1]");
  const double top = std::max(0.0, losses.size() ? losses.maxCoeff() : 0.0);
  auto phi = [&](double eta) {
    return solve_primal(losses, cost, alpha * lipschitz, eta, options).value / alpha + eta;
  };
  const double ratio = (std::sqrt(5.0) - 1.0) / 2.0;
  double lo = 0.0;
  double hi = top;
  double x1 = hi - ratio * (hi - lo);
  double x2 = lo + ratio * (hi - lo);
  double f1 = phi(x1);
  double f2 = phi(x2);
  for (int it = 0; it < 80 && hi - lo > 1e-10 * std::max(1.0, top); ++it) {
    if (f1 <= f2) {
      hi = x2;
      x2 = x1;
      f2 = f1;
      x1 = hi - ratio * (hi - lo);
      f1 = phi(x1);
    } else {
      lo = x1;
      x1 = x2;
      f1 = f2;
      x2 = lo + ratio * (hi - lo);
      f2 = phi(x2);
    }
  }
  PrimalRobustValue best{f1, x1};
  if (f2 < best.value) best = {f2, x2};
  for (double edge : {0.0, top}) {
    const double v = phi(edge);
    if (v < best.value) best = {v, edge};
  }
  return best;
}

}  // namespace uvdro
