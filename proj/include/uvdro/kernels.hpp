#pragma once

// Hot loops over n x n matrices. Every kernel has a plain serial reference
// and an OpenMP version with the same signature. The parallel versions split
// work into fixed-size row blocks and combine partial sums in block order, so
// their output does not depend on the thread count.

#include <vector>

#include "uvdro/types.hpp"

namespace uvdro::kernels {

/// Rows per block for the parallel reductions.
inline constexpr Index kRowBlock = 64;

/// One projected AdaGrad step on the transport matrix:
///   g_ij   = (w_j - w_i) * inv_alpha + cost_scale * D_ij
///   acc_ij += g_ij^2
///   B_ij   = max(0, B_ij - lr * g_ij / (sqrt(acc_ij) + eps)),   i != j
struct TransportStepParams {
  double inv_alpha = 1.0;
  double cost_scale = 0.0;
  double learning_rate = 1e-3;
  double epsilon = 1e-8;
};

struct TransportStepResult {
  double cost_before = 0.0;  ///< sum_ij D_ij B_ij for the incoming B
};

namespace serial {

void pairwise_euclidean(const Matrix& x, Matrix& out);
/// `unit` holds the normalized replicate rows for every example.
void mean_cosine_distance(const std::vector<Matrix>& unit, Matrix& out);
/// flow_i = sum_j B_ij - sum_j B_ji
void net_flow(const Matrix& transport, Vector& flow);
double transport_cost(const Matrix& cost, const Matrix& transport);
/// Updates B and acc in place; writes the net flow of the updated B.
TransportStepResult transport_adagrad_step(Matrix& transport, Matrix& accum, const Matrix& cost,
                                           const Vector& w, const TransportStepParams& p,
                                           Vector& flow_after);

}  // namespace serial

namespace parallel {

void pairwise_euclidean(const Matrix& x, Matrix& out);
void mean_cosine_distance(const std::vector<Matrix>& unit, Matrix& out);
void net_flow(const Matrix& transport, Vector& flow);
double transport_cost(const Matrix& cost, const Matrix& transport);
TransportStepResult transport_adagrad_step(Matrix& transport, Matrix& accum, const Matrix& cost,
                                           const Vector& w, const TransportStepParams& p,
                                           Vector& flow_after);

}  // namespace parallel

/// Number of threads the parallel kernels will use (1 without OpenMP).
int max_threads();

}  // namespace uvdro::kernels
