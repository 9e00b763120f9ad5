#include "uvdro/model.hpp"

#include <algorithm>
#include <cmath>

#include "uvdro/errors.hpp"

namespace uvdro {

ModelParams ModelParams::zeros(Index dim, Index outputs) {
  return {Matrix::Zero(dim, outputs), Vector::Zero(outputs)};
}

std::vector<double> ModelParams::flatten() const {
  std::vector<double> out(static_cast<std::size_t>(flat_size()));
  std::copy(weights.data(), weights.data() + weights.size(), out.begin());
  std::copy(bias.data(), bias.data() + bias.size(), out.begin() + weights.size());
  return out;
}

void ModelParams::assign_flat(std::span<const double> values) {
  if (static_cast<Index>(values.size()) != flat_size())
    throw DimensionError("flat parameter length", flat_size(), static_cast<long>(values.size()));
  std::copy(values.begin(), values.begin() + weights.size(), weights.data());
  std::copy(values.begin() + weights.size(), values.end(), bias.data());
}

LossKind default_loss_kind(const Dataset& data) {
  return data.is_classification() ? LossKind::log : LossKind::squared;
}

Matrix softmax_rows(const Matrix& scores) {
  Matrix p(scores.rows(), scores.cols());
  for (Index i = 0; i < scores.rows(); ++i) {
    const double m = scores.row(i).maxCoeff();
    p.row(i) = (scores.row(i).array() - m).exp();
    p.row(i) /= p.row(i).sum();
  }
  return p;
}

Matrix linear_scores(const ModelParams& params, const Matrix& features) {
  if (features.cols() != params.input_dim())
    throw DimensionError("feature dimension", params.input_dim(), features.cols());
  Matrix s = features * params.weights;
  s.rowwise() += params.bias.transpose();
  return s;
}

Matrix predict(const ModelParams& params, const Matrix& features, LossKind kind) {
  Matrix s = linear_scores(params, features);
  if (kind == LossKind::log) return softmax_rows(s);
  return s;
}

namespace {

void check_kind(const Dataset& data, const ModelParams& params, LossKind kind) {
  if (kind == LossKind::log) {
    if (!data.is_classification()) throw Error("log loss requires class labels");
    if (params.outputs() != data.num_classes)
      throw DimensionError("model output count", data.num_classes, params.outputs());
  } else {
    if (data.is_classification()) throw Error("squared loss requires real-valued labels");
    if (params.outputs() != 1) throw DimensionError("regression output count", 1, params.outputs());
  }
}

}  // namespace

LossAndScoreGrad loss_and_score_grad(const ModelParams& params, const Dataset& data,
                                     LossKind kind) {
  check_kind(data, params, kind);
  const Index n = data.size();
  LossAndScoreGrad out{Vector(n), Matrix()};
  Matrix s = linear_scores(params, data.features);
  if (kind == LossKind::squared) {
    const Vector resid = s.col(0) - data.labels;
    out.losses = resid.array().square();
    out.score_grad = 2.0 * resid;
    return out;
  }
  Matrix p = softmax_rows(s);
  for (Index i = 0; i < n; ++i) {
    const auto y = static_cast<Index>(data.labels[i]);
    const double py = std::clamp(p(i, y), kProbClamp, 1.0 - kProbClamp);
    out.losses[i] = -std::log(py);
    p(i, y) -= 1.0;
  }
  out.score_grad = std::move(p);
  return out;
}

Vector loss_vector(const ModelParams& params, const Dataset& data, LossKind kind) {
  return loss_and_score_grad(params, data, kind).losses;
}

ModelParams weighted_param_gradient(const Matrix& features, const Matrix& score_grad,
                                    const Vector& coeff) {
  Matrix g = score_grad;
  for (Index i = 0; i < g.rows(); ++i) g.row(i) *= coeff[i];
  return {features.transpose() * g, g.colwise().sum().transpose()};
}

std::vector<double> relative_weights(const ModelParams& params) {
  std::vector<double> out(static_cast<std::size_t>(params.weights.size()));
  const double total = params.weights.cwiseAbs().sum();
  for (Index i = 0; i < params.weights.size(); ++i)
    out[static_cast<std::size_t>(i)] = total > 0 ? std::abs(params.weights.data()[i]) / total : 0.0;
  return out;
}

Metrics evaluate(const ModelParams& params, const Dataset& data, LossKind kind) {
  const Vector losses = loss_vector(params, data, kind);
  Metrics m;
  m.mean_loss = losses.mean();
  if (kind == LossKind::squared) {
    m.mse = m.mean_loss;
    m.relative_weights = relative_weights(params);
    return m;
  }
  const Matrix s = linear_scores(params, data.features);
  Index correct = 0;
  for (Index i = 0; i < data.size(); ++i) {
    Index arg = 0;
    s.row(i).maxCoeff(&arg);
    if (arg == static_cast<Index>(data.labels[i])) ++correct;
  }
  m.accuracy = static_cast<double>(correct) / static_cast<double>(data.size());
  return m;
}

}  // namespace uvdro
