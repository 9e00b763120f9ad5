#include "uvdro/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include "uvdro/kernels.hpp"

namespace uvdro {

std::string to_string(Objective objective) {
  switch (objective) {
    case Objective::erm: return "erm";
    case Objective::cvar_dro: return "cvar_dro";
    case Objective::covshift_dro: return "covshift_dro";
    case Objective::uv_dro: return "uv_dro";
  }
  return "unknown";
}

Objective objective_from_string(const std::string& name) {
  if (name == "erm") return Objective::erm;
  if (name == "cvar_dro") return Objective::cvar_dro;
  if (name == "covshift_dro") return Objective::covshift_dro;
  if (name == "uv_dro") return Objective::uv_dro;
  throw ConfigError("unknown objective '" + name + "'");
}

bool uses_transport(Objective objective) {
  return objective == Objective::covshift_dro || objective == Objective::uv_dro;
}

void RobustnessConfig::validate() const {
  if (!(alpha > 0.0 && alpha <= 1.0))
    throw ConfigError("alpha must lie in (0, 1], got " + std::to_string(alpha));
  if (!(lipschitz >= 0.0)) throw ConfigError("lipschitz must be >= 0");
  if (!(ridge >= 0.0)) throw ConfigError("ridge must be >= 0");
}

DualState DualState::zeros(Index n) { return {Matrix::Zero(n, n), 0.0}; }

void DualState::validate() const {
  const Index n = transport.rows();
  if (transport.cols() != n) throw DimensionError("transport columns", n, transport.cols());
  if (!(eta >= 0.0) || !std::isfinite(eta)) throw Error("eta must be finite and >= 0");
  for (Index i = 0; i < n; ++i) {
    if (transport(i, i) != 0.0) throw Error("transport diagonal must be zero");
    for (Index j = 0; j < n; ++j)
      if (!(transport(i, j) >= 0.0) || !std::isfinite(transport(i, j)))
        throw Error("transport entry (" + std::to_string(i) + ", " + std::to_string(j) +
                    ") is negative or non-finite");
  }
}

double ridge_penalty(const ModelParams& params, double ridge) {
  return ridge == 0.0 ? 0.0 : ridge * params.weights.squaredNorm();
}

ObjectiveValue erm_objective(const Vector& losses, const ModelParams& params, double ridge) {
  ObjectiveValue v;
  v.robust_term = losses.size() ? losses.mean() : 0.0;
  v.ridge_term = ridge_penalty(params, ridge);
  v.total = v.robust_term + v.ridge_term;
  return v;
}

CvarValue cvar_objective(const Vector& losses, double alpha) {
  if (!(alpha > 0.0 && alpha <= 1.0)) throw ConfigError("alpha must lie in (0, 1]");
  const Index n = losses.size();
  if (n == 0) throw Error("cvar_objective needs at least one loss");
  std::vector<double> s(losses.data(), losses.data() + n);
  std::sort(s.begin(), s.end());
  // The objective is convex and piecewise linear with kinks at the sorted
  // losses, so the infimum is attained at one of them.
  std::vector<double> suffix(static_cast<std::size_t>(n) + 1, 0.0);
  for (Index k = n - 1; k >= 0; --k)
    suffix[static_cast<std::size_t>(k)] = suffix[static_cast<std::size_t>(k) + 1] + s[static_cast<std::size_t>(k)];
  const double scale = 1.0 / (alpha * static_cast<double>(n));
  std::vector<double> value(static_cast<std::size_t>(n));
  for (Index k = 0; k < n; ++k) {
    const auto kk = static_cast<std::size_t>(k);
    const double above = suffix[kk + 1] - static_cast<double>(n - k - 1) * s[kk];
    value[kk] = s[kk] + scale * std::max(0.0, above);
  }
  const double best = *std::min_element(value.begin(), value.end());
  const double slack = 4.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(best));
  for (Index k = 0; k < n; ++k)
    if (value[static_cast<std::size_t>(k)] <= best + slack)
      return {best, s[static_cast<std::size_t>(k)]};
  return {best, s.back()};
}

Vector adjusted_losses(const Vector& losses, const Matrix& transport) {
  if (transport.rows() != losses.size())
    throw DimensionError("transport size", losses.size(), transport.rows());
  Vector flow;
  kernels::parallel::net_flow(transport, flow);
  return losses - flow;
}

namespace {

struct HingeSums {
  double sum = 0.0;
  double sum_sq = 0.0;
};

HingeSums hinge_sums(const Vector& a, double eta) {
  HingeSums h;
  for (Index i = 0; i < a.size(); ++i) {
    const double r = a[i] - eta;
    if (r > 0.0) {
      h.sum += r;
      h.sum_sq += r * r;
    }
  }
  return h;
}

// d/d eta of robust_term + eta.
double eta_slope(const Vector& a, double eta, double alpha) {
  const HingeSums h = hinge_sums(a, eta);
  if (h.sum_sq <= 0.0) return 1.0;
  return 1.0 - h.sum / (alpha * std::sqrt(static_cast<double>(a.size()) * h.sum_sq));
}

}  // namespace

double robust_term(const Vector& adjusted, double eta, double alpha) {
  const HingeSums h = hinge_sums(adjusted, eta);
  if (h.sum_sq <= 0.0) return 0.0;
  return std::sqrt(h.sum_sq / static_cast<double>(adjusted.size())) / alpha;
}

double solve_eta(const Vector& adjusted, double alpha) {
  if (adjusted.size() == 0) return 0.0;
  double hi = adjusted.maxCoeff();
  if (hi <= 0.0) return 0.0;
  double lo = 0.0;
  if (eta_slope(adjusted, lo, alpha) >= 0.0) return 0.0;
  // Just below the maximum only the tied top entries are active; if the slope
  // is still negative there, the minimizer is the maximum itself.
  const auto top = static_cast<double>((adjusted.array() == hi).count());
  if (1.0 - std::sqrt(top / static_cast<double>(adjusted.size())) / alpha < 0.0) return hi;
  const double tol = 1e-12 * std::max(1.0, hi);
  for (int it = 0; it < 200 && hi - lo > tol; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (eta_slope(adjusted, mid, alpha) < 0.0)
      lo = mid;
    else
      hi = mid;
  }
  return 0.5 * (lo + hi);
}

Vector hinge_weights(const Vector& adjusted, double eta) {
  const HingeSums h = hinge_sums(adjusted, eta);
  Vector w = Vector::Zero(adjusted.size());
  if (h.sum_sq <= 0.0) return w;
  const double denom = std::sqrt(static_cast<double>(adjusted.size()) * h.sum_sq);
  for (Index i = 0; i < adjusted.size(); ++i) {
    const double r = adjusted[i] - eta;
    if (r > 0.0) w[i] = r / denom;
  }
  return w;
}

Vector robust_weights(const Vector& adjusted, double eta, double alpha) {
  Vector w = hinge_weights(adjusted, eta);
  if (w.sum() > 0.0 || adjusted.size() == 0 || eta <= 0.0) return w;
  const double hi = adjusted.maxCoeff();
  const auto top = static_cast<double>((adjusted.array() == hi).count());
  for (Index i = 0; i < adjusted.size(); ++i)
    if (adjusted[i] == hi) w[i] = alpha / top;
  return w;
}

ObjectiveValue uvdro_objective(const Vector& losses, const DistanceMatrix& cost,
                               const DualState& dual, const RobustnessConfig& cfg,
                               const ModelParams& params) {
  cfg.validate();
  const Index n = losses.size();
  if (cost.size() != n) throw DimensionError("cost matrix size", n, cost.size());
  if (dual.transport.rows() != n) throw DimensionError("transport size", n, dual.transport.rows());
  dual.validate();
  ObjectiveValue v;
  const Vector a = adjusted_losses(losses, dual.transport);
  v.robust_term = robust_term(a, dual.eta, cfg.alpha);
  v.transport_cost = cfg.lipschitz == 0.0
                         ? 0.0
                         : cfg.lipschitz / static_cast<double>(n) *
                               kernels::parallel::transport_cost(cost.matrix(), dual.transport);
  v.eta_term = dual.eta;
  v.ridge_term = ridge_penalty(params, cfg.ridge);
  v.total = v.robust_term + v.transport_cost + v.eta_term + v.ridge_term;
  return v;
}

ObjectiveValue uvdro_objective(const Vector& losses, const DistanceMatrix& dx,
                               const DistanceMatrix& dc, const DualState& dual,
                               const RobustnessConfig& cfg, const ModelParams& params) {
  return uvdro_objective(losses, dx + dc, dual, cfg, params);
}

namespace {

Matrix transport_gradient(const Vector& w, const Matrix& cost, double alpha, double lipschitz) {
  const Index n = w.size();
  const double cost_scale = lipschitz / static_cast<double>(n);
  Matrix g(n, n);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j)
      g(i, j) = i == j ? 0.0 : (w[j] - w[i]) / alpha + cost_scale * cost(i, j);
  return g;
}

}  // namespace

UvdroGradients uvdro_gradients(const Dataset& data, const ModelParams& params,
                               const DistanceMatrix& dx, const DistanceMatrix& dc,
                               const DualState& dual, const RobustnessConfig& cfg, LossKind kind) {
  cfg.validate();
  dual.validate();
  const Index n = data.size();
  if (dx.size() != n) throw DimensionError("D_x size", n, dx.size());
  if (dc.size() != n) throw DimensionError("D_c size", n, dc.size());
  const LossAndScoreGrad lg = loss_and_score_grad(params, data, kind);
  const Vector a = adjusted_losses(lg.losses, dual.transport);
  const Vector w = hinge_weights(a, dual.eta);
  UvdroGradients out;
  out.theta = weighted_param_gradient(data.features, lg.score_grad, w / cfg.alpha);
  out.theta.weights += 2.0 * cfg.ridge * params.weights;
  out.transport = transport_gradient(w, (dx + dc).matrix(), cfg.alpha, cfg.lipschitz);
  return out;
}

DualSolution minimize_dual(const Vector& losses, const DistanceMatrix& cost, double alpha,
                           double lipschitz, const DualSolveOptions& options) {
  RobustnessConfig cfg{alpha, lipschitz, 0.0, Objective::uv_dro};
  cfg.validate();
  const Index n = losses.size();
  if (cost.size() != n) throw DimensionError("cost matrix size", n, cost.size());
  if (n > options.max_size) throw DimensionError("dual solver size limit", options.max_size, n);
  if (n == 0) throw DimensionError("losses must be nonempty", 1, 0);

  auto finish = [&](Matrix b, int iterations) {
    const Vector a = adjusted_losses(losses, b);
    const double eta = solve_eta(a, alpha);
    const double value = robust_term(a, eta, alpha) + eta +
                         lipschitz / static_cast<double>(n) *
                             kernels::serial::transport_cost(cost.matrix(), b);
    return DualSolution{DualState{std::move(b), eta}, value, iterations};
  };
  if (n == 1) return finish(Matrix::Zero(1, 1), 0);

  // Second-order cone form in z = [B off-diagonal, eta, s, t]:
  //   min t / (alpha sqrt n) + eta + (L/n) sum D_ij B_ij
  //   s.t. s >= 0, s >= a(B) - eta, |s| <= t, eta >= 0, 0 <= B <= cap.
  // Solved with a log-barrier path-following Newton method.
  const Index pairs = n * (n - 1);
  const Index k_eta = pairs, k_s = pairs + 1, k_t = pairs + 1 + n, dim = pairs + n + 2;
  std::vector<std::pair<Index, Index>> pair_of(static_cast<std::size_t>(pairs));
  Matrix pair_index = Matrix::Constant(n, n, -1.0);
  for (Index i = 0, k = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j)
      if (i != j) {
        pair_of[static_cast<std::size_t>(k)] = {i, j};
        pair_index(i, j) = static_cast<double>(k++);
      }
  const double range = losses.maxCoeff() - losses.minCoeff();
  const double cap = static_cast<double>(n) * range + 1.0;

  Vector c = Vector::Zero(dim);
  for (Index k = 0; k < pairs; ++k) {
    const auto [i, j] = pair_of[static_cast<std::size_t>(k)];
    c[k] = lipschitz / static_cast<double>(n) * cost(i, j);
  }
  c[k_eta] = 1.0;
  c[k_t] = 1.0 / (alpha * std::sqrt(static_cast<double>(n)));

  auto adjusted = [&](const Vector& z) {
    Vector a = losses;
    for (Index k = 0; k < pairs; ++k) {
      const auto [i, j] = pair_of[static_cast<std::size_t>(k)];
      a[i] -= z[k];
      a[j] += z[k];
    }
    return a;
  };
  // Barrier value; +inf outside the interior.
  auto barrier = [&](const Vector& z) {
    double phi = 0.0;
    for (Index k = 0; k < pairs; ++k) {
      if (z[k] <= 0.0 || z[k] >= cap) return std::numeric_limits<double>::infinity();
      phi -= std::log(z[k]) + std::log(cap - z[k]);
    }
    if (z[k_eta] <= 0.0) return std::numeric_limits<double>::infinity();
    phi -= std::log(z[k_eta]);
    const Vector a = adjusted(z);
    double ss = 0.0;
    for (Index i = 0; i < n; ++i) {
      const double si = z[k_s + i];
      const double gap = si - a[i] + z[k_eta];
      if (si <= 0.0 || gap <= 0.0) return std::numeric_limits<double>::infinity();
      phi -= std::log(si) + std::log(gap);
      ss += si * si;
    }
    const double t = z[k_t];
    if (t <= 0.0 || t * t - ss <= 0.0) return std::numeric_limits<double>::infinity();
    return phi - std::log(t) - std::log(t * t - ss);
  };

  Vector z(dim);
  for (Index k = 0; k < pairs; ++k) z[k] = std::min(1.0, 0.5 * cap);
  z[k_eta] = 1.0;
  {
    const Vector a = adjusted(z);
    for (Index i = 0; i < n; ++i) z[k_s + i] = std::max(0.0, a[i] - 1.0) + 1.0;
    z[k_t] = z.segment(k_s, n).norm() + 1.0;
  }
  const double nu = static_cast<double>(2 * pairs + 2 * n + 4);
  double tau = 1.0;
  int newton = 0;
  for (; newton < options.max_iterations;) {
    // Centering.
    for (int inner = 0; inner < 200 && newton < options.max_iterations; ++inner, ++newton) {
      Vector g = tau * c;
      Matrix h = Matrix::Zero(dim, dim);
      for (Index k = 0; k < pairs; ++k) {
        g[k] += -1.0 / z[k] + 1.0 / (cap - z[k]);
        h(k, k) += 1.0 / (z[k] * z[k]) + 1.0 / ((cap - z[k]) * (cap - z[k]));
      }
      g[k_eta] -= 1.0 / z[k_eta];
      h(k_eta, k_eta) += 1.0 / (z[k_eta] * z[k_eta]);
      const Vector a = adjusted(z);
      std::vector<Index> idx;
      std::vector<double> coef;
      for (Index i = 0; i < n; ++i) {
        const double si = z[k_s + i];
        g[k_s + i] -= 1.0 / si;
        h(k_s + i, k_s + i) += 1.0 / (si * si);
        // gap_i = s_i + eta - l_i + sum_j B_ij - sum_j B_ji
        const double gap = si - a[i] + z[k_eta];
        idx.assign({k_s + i, k_eta});
        coef.assign({1.0, 1.0});
        for (Index j = 0; j < n; ++j) {
          if (j == i) continue;
          idx.push_back(static_cast<Index>(pair_index(i, j)));
          coef.push_back(1.0);
          idx.push_back(static_cast<Index>(pair_index(j, i)));
          coef.push_back(-1.0);
        }
        const double inv = 1.0 / gap;
        for (std::size_t p = 0; p < idx.size(); ++p) {
          g[idx[p]] -= coef[p] * inv;
          for (std::size_t q = 0; q < idx.size(); ++q) h(idx[p], idx[q]) += coef[p] * coef[q] * inv * inv;
        }
      }
      const double t = z[k_t];
      g[k_t] -= 1.0 / t;
      h(k_t, k_t) += 1.0 / (t * t);
      const Vector s_vec = z.segment(k_s, n);
      const double soc = t * t - s_vec.squaredNorm();
      Vector dsoc = Vector::Zero(dim);
      dsoc[k_t] = 2.0 * t;
      dsoc.segment(k_s, n) = -2.0 * s_vec;
      g -= dsoc / soc;
      h += dsoc * dsoc.transpose() / (soc * soc);
      h(k_t, k_t) -= 2.0 / soc;
      for (Index i = 0; i < n; ++i) h(k_s + i, k_s + i) += 2.0 / soc;

      const Vector step = -h.ldlt().solve(g);
      const double decrement = -g.dot(step);
      if (!(decrement >= 0.0) || decrement / 2.0 <= 1e-12) break;
      const double f0 = tau * c.dot(z) + barrier(z);
      double lr = 1.0;
      Vector next = z + step;
      for (int bt = 0; bt < 80; ++bt) {
        next = z + lr * step;
        const double f1 = tau * c.dot(next) + barrier(next);
        if (std::isfinite(f1) && f1 <= f0 - 0.25 * lr * decrement) break;
        lr *= 0.5;
      }
      if (!std::isfinite(barrier(next))) break;
      z = next;
    }
    if (nu / tau <= options.tolerance * std::max(1.0, std::abs(c.dot(z)))) break;
    tau *= 8.0;
  }

  Matrix b = Matrix::Zero(n, n);
  for (Index k = 0; k < pairs; ++k) {
    const auto [i, j] = pair_of[static_cast<std::size_t>(k)];
    b(i, j) = z[k] <= 1e-12 * cap ? 0.0 : z[k];
  }
  return finish(std::move(b), newton);
}

}  // namespace uvdro
