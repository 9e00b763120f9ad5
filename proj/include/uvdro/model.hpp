#pragma once

#include <optional>
#include <span>
#include <vector>

#include "uvdro/dataset.hpp"
#include "uvdro/types.hpp"

namespace uvdro {

/// Linear (K = 1) or multinomial-logistic predictor.
struct ModelParams {
  Matrix weights;  ///< d x K
  Vector bias;     ///< K

  static ModelParams zeros(Index dim, Index outputs);

  Index input_dim() const { return weights.rows(); }
  Index outputs() const { return weights.cols(); }
  Index flat_size() const { return weights.size() + bias.size(); }

  /// Weights (row-major) followed by bias.
  std::vector<double> flatten() const;
  void assign_flat(std::span<const double> values);
};

struct Metrics {
  double mean_loss = 0.0;
  std::optional<double> accuracy;  ///< classification only
  std::optional<double> mse;       ///< regression only
  /// |w_i| / sum_j |w_j| over the regression weights (bias excluded).
  std::optional<std::vector<double>> relative_weights;
};

/// Log-loss probabilities are clipped to [kProbClamp, 1 - kProbClamp].
inline constexpr double kProbClamp = 1e-12;

LossKind default_loss_kind(const Dataset& data);

/// Row-wise softmax with max subtraction.
Matrix softmax_rows(const Matrix& scores);

/// Raw scores x W + b, n x K.
Matrix linear_scores(const ModelParams& params, const Matrix& features);

/// Regression: n x 1 affine predictions. Classification: n x K softmax
/// probabilities.
Matrix predict(const ModelParams& params, const Matrix& features, LossKind kind);

Vector loss_vector(const ModelParams& params, const Dataset& data, LossKind kind);

/// Per-example losses together with d loss_i / d score_i, computed from a
/// single forward pass.
struct LossAndScoreGrad {
  Vector losses;
  Matrix score_grad;  ///< n x K
};
LossAndScoreGrad loss_and_score_grad(const ModelParams& params, const Dataset& data,
                                     LossKind kind);

/// Gradient of sum_i coeff_i * loss_i with respect to (weights, bias), given the
/// score gradients from loss_and_score_grad.
ModelParams weighted_param_gradient(const Matrix& features, const Matrix& score_grad,
                                    const Vector& coeff);

Metrics evaluate(const ModelParams& params, const Dataset& data, LossKind kind);

std::vector<double> relative_weights(const ModelParams& params);

}  // namespace uvdro
