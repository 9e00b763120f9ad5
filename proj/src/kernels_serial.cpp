#include <algorithm>
#include <cmath>

#include "uvdro/kernels.hpp"

namespace uvdro::kernels::serial {

void pairwise_euclidean(const Matrix& x, Matrix& out) {
  const Index n = x.rows();
  out.setZero(n, n);
  for (Index i = 0; i < n; ++i) {
    for (Index j = i + 1; j < n; ++j) {
      const double d = (x.row(i) - x.row(j)).norm();
      out(i, j) = d;
      out(j, i) = d;
    }
  }
}

void mean_cosine_distance(const std::vector<Matrix>& unit, Matrix& out) {
  const auto n = static_cast<Index>(unit.size());
  out.setZero(n, n);
  for (Index i = 0; i < n; ++i) {
    const Matrix& ui = unit[static_cast<std::size_t>(i)];
    for (Index j = i + 1; j < n; ++j) {
      const Matrix& uj = unit[static_cast<std::size_t>(j)];
      double total = 0.0;
      for (Index a = 0; a < ui.rows(); ++a)
        for (Index b = 0; b < uj.rows(); ++b) total += 1.0 - ui.row(a).dot(uj.row(b));
      const double d = std::max(0.0, total / static_cast<double>(ui.rows() * uj.rows()));
      out(i, j) = d;
      out(j, i) = d;
    }
  }
}

void net_flow(const Matrix& transport, Vector& flow) {
  const Index n = transport.rows();
  flow.setZero(n);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j) {
      flow[i] += transport(i, j);
      flow[j] -= transport(i, j);
    }
}

double transport_cost(const Matrix& cost, const Matrix& transport) {
  double total = 0.0;
  for (Index i = 0; i < cost.rows(); ++i)
    for (Index j = 0; j < cost.cols(); ++j) total += cost(i, j) * transport(i, j);
  return total;
}

TransportStepResult transport_adagrad_step(Matrix& transport, Matrix& accum, const Matrix& cost,
                                           const Vector& w, const TransportStepParams& p,
                                           Vector& flow_after) {
  const Index n = transport.rows();
  TransportStepResult result;
  result.cost_before = transport_cost(cost, transport);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < n; ++j) {
      if (i == j) continue;
      const double g = (w[j] - w[i]) * p.inv_alpha + p.cost_scale * cost(i, j);
      accum(i, j) += g * g;
      const double step = p.learning_rate * g / (std::sqrt(accum(i, j)) + p.epsilon);
      transport(i, j) = std::max(0.0, transport(i, j) - step);
    }
  }
  net_flow(transport, flow_after);
  return result;
}

}  // namespace uvdro::kernels::serial
