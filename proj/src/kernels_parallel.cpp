#include <algorithm>
#include <cmath>

#include "uvdro/kernels.hpp"

#ifdef UVDRO_HAVE_OPENMP
#include <omp.h>
#endif

namespace uvdro::kernels {

int max_threads() {
#ifdef UVDRO_HAVE_OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

namespace parallel {

namespace {

Index block_count(Index n) { return (n + kRowBlock - 1) / kRowBlock; }

}  // namespace

void pairwise_euclidean(const Matrix& x, Matrix& out) {
  const Index n = x.rows();
  const Index d = x.cols();
  out.setZero(n, n);
  const double* data = x.data();
  // Upper triangle, mirrored; each entry written by exactly one thread.
#pragma omp parallel for schedule(dynamic, 16)
  for (Index i = 0; i < n; ++i) {
    const double* xi = data + i * d;
    for (Index j = i + 1; j < n; ++j) {
      const double* xj = data + j * d;
      double s = 0.0;
      for (Index k = 0; k < d; ++k) {
        const double t = xi[k] - xj[k];
        s += t * t;
      }
      const double dist = std::sqrt(s);
      out(i, j) = dist;
      out(j, i) = dist;
    }
  }
}

void mean_cosine_distance(const std::vector<Matrix>& unit, Matrix& out) {
  const auto n = static_cast<Index>(unit.size());
  out.setZero(n, n);
#pragma omp parallel for schedule(dynamic, 16)
  for (Index i = 0; i < n; ++i) {
    const Matrix& ui = unit[static_cast<std::size_t>(i)];
    for (Index j = i + 1; j < n; ++j) {
      const Matrix& uj = unit[static_cast<std::size_t>(j)];
      double total = 0.0;
      for (Index a = 0; a < ui.rows(); ++a)
        for (Index b = 0; b < uj.rows(); ++b) total += 1.0 - ui.row(a).dot(uj.row(b));
      const double dist = std::max(0.0, total / static_cast<double>(ui.rows() * uj.rows()));
      out(i, j) = dist;
      out(j, i) = dist;
    }
  }
}

void net_flow(const Matrix& transport, Vector& flow) {
  const Index n = transport.rows();
  const Index blocks = block_count(n);
  Matrix col_partial = Matrix::Zero(blocks, n);
  Vector row_sum(n);
#pragma omp parallel for schedule(static)
  for (Index b = 0; b < blocks; ++b) {
    double* cp = col_partial.row(b).data();
    const Index end = std::min(n, (b + 1) * kRowBlock);
    for (Index i = b * kRowBlock; i < end; ++i) {
      const double* bi = transport.row(i).data();
      double rs = 0.0;
      for (Index j = 0; j < n; ++j) {
        rs += bi[j];
        cp[j] += bi[j];
      }
      row_sum[i] = rs;
    }
  }
  flow = row_sum;
  for (Index b = 0; b < blocks; ++b) flow -= col_partial.row(b).transpose();
}

double transport_cost(const Matrix& cost, const Matrix& transport) {
  const Index n = cost.rows();
  Vector row_cost(n);
#pragma omp parallel for schedule(static)
  for (Index i = 0; i < n; ++i) {
    const double* ci = cost.row(i).data();
    const double* bi = transport.row(i).data();
    double s = 0.0;
    for (Index j = 0; j < n; ++j) s += ci[j] * bi[j];
    row_cost[i] = s;
  }
  double total = 0.0;
  for (Index i = 0; i < n; ++i) total += row_cost[i];
  return total;
}

namespace {

// Updates columns [begin, end) of row i; returns the new row sum and adds the
// incoming cost to `cost`.
inline double update_span(double* bi, double* ai, const double* ci, const double* w, double wi,
                          double* col, Index begin, Index end, const TransportStepParams& p,
                          double& cost) {
  double rs = 0.0;
  double cs = 0.0;
#pragma omp simd reduction(+ : rs, cs)
  for (Index j = begin; j < end; ++j) {
    const double old = bi[j];
    cs += ci[j] * old;
    const double g = (w[j] - wi) * p.inv_alpha + p.cost_scale * ci[j];
    const double a = ai[j] + g * g;
    ai[j] = a;
    const double next = std::max(0.0, old - p.learning_rate * g / (std::sqrt(a) + p.epsilon));
    bi[j] = next;
    rs += next;
    col[j] += next;
  }
  cost += cs;
  return rs;
}

}  // namespace

TransportStepResult transport_adagrad_step(Matrix& transport, Matrix& accum, const Matrix& cost,
                                           const Vector& w, const TransportStepParams& p,
                                           Vector& flow_after) {
  const Index n = transport.rows();
  const Index blocks = block_count(n);
  Matrix col_partial = Matrix::Zero(blocks, n);
  Vector row_sum(n);
  Vector block_cost = Vector::Zero(blocks);
  const double* wd = w.data();
#pragma omp parallel for schedule(static)
  for (Index b = 0; b < blocks; ++b) {
    double* cp = col_partial.row(b).data();
    const Index end = std::min(n, (b + 1) * kRowBlock);
    double bc = 0.0;
    for (Index i = b * kRowBlock; i < end; ++i) {
      double* bi = transport.row(i).data();
      double* ai = accum.row(i).data();
      const double* ci = cost.row(i).data();
      double row_cost = 0.0;
      double rs = update_span(bi, ai, ci, wd, wd[i], cp, 0, i, p, row_cost);
      rs += update_span(bi, ai, ci, wd, wd[i], cp, i + 1, n, p, row_cost);
      row_sum[i] = rs;
      bc += row_cost;
    }
    block_cost[b] = bc;
  }
  TransportStepResult result;
  for (Index b = 0; b < blocks; ++b) result.cost_before += block_cost[b];
  flow_after = row_sum;
  for (Index b = 0; b < blocks; ++b) flow_after -= col_partial.row(b).transpose();
  return result;
}

}  // namespace parallel
}  // namespace uvdro::kernels
