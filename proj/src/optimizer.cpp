#include "uvdro/optimizer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <string>

#include "uvdro/errors.hpp"
#include "uvdro/kernels.hpp"

namespace uvdro {

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
  if (steps < 1) throw ConfigError("steps must be >= 1");
  if (!(adagrad_epsilon > 0.0)) throw ConfigError("adagrad_epsilon must be > 0");
  if (transport_learning_rate && !(*transport_learning_rate > 0.0))
    throw ConfigError("transport_learning_rate must be > 0");
  if (convergence_tol && !(*convergence_tol >= 0.0))
    throw ConfigError("convergence_tol must be >= 0");
}

void adagrad_step(std::span<double> params, std::span<const double> grad,
                  std::span<double> accum, double learning_rate, double epsilon) {
  if (grad.size() != params.size())
    throw DimensionError("gradient length", static_cast<long>(params.size()),
                         static_cast<long>(grad.size()));
  if (accum.size() != params.size())
    throw DimensionError("accumulator length", static_cast<long>(params.size()),
                         static_cast<long>(accum.size()));
  for (std::size_t k = 0; k < params.size(); ++k) {
    accum[k] += grad[k] * grad[k];
    params[k] -= learning_rate * grad[k] / (std::sqrt(accum[k]) + epsilon);
  }
}

namespace {

// Per-step robust weights on the losses and the objective decomposition.
struct StepWeights {
  Vector coeff;  // d objective / d loss_i (before ridge)
  double value = 0.0;
  Vector hinge;  // w_i for the transport update
  double eta = 0.0;
};

StepWeights robust_step(const Vector& losses, const Vector& flow, const RobustnessConfig& cfg) {
  StepWeights s;
  const Index n = losses.size();
  switch (cfg.objective) {
    case Objective::erm:
      s.coeff = Vector::Constant(n, 1.0 / static_cast<double>(n));
      s.value = losses.mean();
      break;
    case Objective::cvar_dro: {
      const CvarValue cv = cvar_objective(losses, cfg.alpha);
      s.eta = cv.eta;
      s.value = cv.value;
      // Subgradient that spreads mass alpha*n over the largest losses, with a
      // fractional weight at the boundary; stays nonzero when losses tie.
      s.coeff = Vector::Zero(n);
      std::vector<Index> order(static_cast<std::size_t>(n));
      std::iota(order.begin(), order.end(), Index{0});
      std::stable_sort(order.begin(), order.end(),
                       [&](Index x, Index y) { return losses[x] > losses[y]; });
      const double scale = 1.0 / (cfg.alpha * static_cast<double>(n));
      double mass = cfg.alpha * static_cast<double>(n);
      for (Index k = 0; k < n && mass > 0.0; ++k) {
        const double take = std::min(1.0, mass);
        s.coeff[order[static_cast<std::size_t>(k)]] = take * scale;
        mass -= take;
      }
      break;
    }
    case Objective::covshift_dro:
    case Objective::uv_dro: {
      const Vector a = losses - flow;
      s.eta = solve_eta(a, cfg.alpha);
      s.hinge = robust_weights(a, s.eta, cfg.alpha);
      s.coeff = s.hinge / cfg.alpha;
      s.value = robust_term(a, s.eta, cfg.alpha) + s.eta;
      break;
    }
  }
  return s;
}

}  // namespace

TrainTrace train(const Dataset& data, const DistanceMatrix* dx, const DistanceMatrix* dc,
                 const RobustnessConfig& cfg, const TrainConfig& tcfg, LossKind kind) {
  const auto start = std::chrono::steady_clock::now();
  cfg.validate();
  tcfg.validate();
  data.validate();
  const Index n = data.size();
  const bool transport = uses_transport(cfg.objective);

  Matrix cost;
  if (transport) {
    if (!dx) throw ConfigError(to_string(cfg.objective) + " needs a feature distance matrix");
    if (dx->size() != n) throw DimensionError("D_x size", n, dx->size());
    if (n > kMaxTransportSize)
      throw ConfigError("transport training is limited to n <= " +
                        std::to_string(kMaxTransportSize) + ", got " + std::to_string(n));
    if (cfg.objective == Objective::uv_dro && dc) {
      if (dc->size() != n) throw DimensionError("D_c size", n, dc->size());
      cost = (*dx + *dc).matrix();
    } else {
      cost = dx->matrix();
    }
  }

  const Index outputs = kind == LossKind::log ? data.num_classes : 1;
  TrainTrace trace;
  trace.params = ModelParams::zeros(data.dim(), outputs);
  trace.dual = DualState::zeros(transport ? n : 0);
  trace.objective.reserve(static_cast<std::size_t>(tcfg.steps));

  std::vector<double> theta = trace.params.flatten();
  std::vector<double> theta_accum(theta.size(), 0.0);
  Matrix transport_accum = transport ? Matrix::Zero(n, n) : Matrix();
  Vector flow = Vector::Zero(n);
  const double cost_scale = cfg.lipschitz / static_cast<double>(n);
  const kernels::TransportStepParams tparams{
      1.0 / cfg.alpha, cost_scale, tcfg.transport_learning_rate.value_or(tcfg.learning_rate),
      tcfg.adagrad_epsilon};

  for (int step = 0; step < tcfg.steps; ++step) {
    const LossAndScoreGrad lg = loss_and_score_grad(trace.params, data, kind);
    const StepWeights sw = robust_step(lg.losses, flow, cfg);
    double value = sw.value + ridge_penalty(trace.params, cfg.ridge);
    trace.dual.eta = sw.eta;

    ModelParams grad = weighted_param_gradient(data.features, lg.score_grad, sw.coeff);
    grad.weights += 2.0 * cfg.ridge * trace.params.weights;
    const std::vector<double> gflat = grad.flatten();

    if (transport) {
      // One fused pass: reads the incoming B for the cost term, updates B and
      // its accumulator, and leaves the new net flow for the next step.
      const auto r = kernels::parallel::transport_adagrad_step(
          trace.dual.transport, transport_accum, cost, sw.hinge, tparams, flow);
      value += cost_scale * r.cost_before;
    }
    if (!std::isfinite(value))
      throw NumericalError("non-finite " + to_string(cfg.objective) + " objective", step);
    trace.objective.push_back(value);

    adagrad_step(theta, gflat, theta_accum, tcfg.learning_rate, tcfg.adagrad_epsilon);
    trace.params.assign_flat(theta);

    if (tcfg.convergence_tol && step > 0) {
      const double prev = trace.objective[trace.objective.size() - 2];
      if (std::abs(value - prev) <= *tcfg.convergence_tol * std::max(std::abs(prev), 1e-12)) break;
    }
  }
  if (transport) trace.dual.eta = solve_eta(loss_vector(trace.params, data, kind) - flow, cfg.alpha);
  trace.wall_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  return trace;
}

}  // namespace uvdro
