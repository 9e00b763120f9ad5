#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "uvdro/dataset.hpp"
#include "uvdro/distances.hpp"
#include "uvdro/model.hpp"
#include "uvdro/objectives.hpp"

namespace uvdro {

struct TrainConfig {
  double learning_rate = 1e-3;
  int steps = 3000;
  double adagrad_epsilon = 1e-8;
  std::uint64_t seed = 0;
  /// Stop early once |f_t - f_{t-1}| / |f_{t-1}| falls below this.
  std::optional<double> convergence_tol;
  /// Step size for the transport matrix; defaults to learning_rate.
  std::optional<double> transport_learning_rate;

  void validate() const;
};

struct TrainTrace {
  std::vector<double> objective;  ///< value at the start of every step
  DualState dual;
  ModelParams params;
  double wall_ms = 0.0;
};

/// accum += grad^2; params -= lr * grad / (sqrt(accum) + eps), element-wise.
void adagrad_step(std::span<double> params, std::span<const double> grad,
                  std::span<double> accum, double learning_rate, double epsilon);

/// Largest n for which uv_dro / covshift_dro training will allocate B.
inline constexpr Index kMaxTransportSize = 5000;

/// Batch training from zero initialization. `dx` is required for covshift_dro
/// and uv_dro; `dc` is used only by uv_dro (absent means zero).
TrainTrace train(const Dataset& data, const DistanceMatrix* dx, const DistanceMatrix* dc,
                 const RobustnessConfig& cfg, const TrainConfig& tcfg, LossKind kind);

}  // namespace uvdro
