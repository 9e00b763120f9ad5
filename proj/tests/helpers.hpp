#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "uvdro/dataset.hpp"
#include "uvdro/distances.hpp"
#include "uvdro/types.hpp"

namespace testutil {

using uvdro::Index;
using uvdro::Matrix;
using uvdro::Vector;

inline Vector random_vector(Index n, double lo, double hi, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(lo, hi);
  Vector v(n);
  for (Index i = 0; i < n; ++i) v[i] = u(rng);
  return v;
}

inline Matrix random_matrix(Index r, Index c, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  Matrix m(r, c);
  for (Index i = 0; i < r; ++i)
    for (Index j = 0; j < c; ++j) m(i, j) = g(rng);
  return m;
}

// Euclidean distances between random points: always a metric.
inline uvdro::DistanceMatrix random_metric(Index n, Index dim, std::mt19937_64& rng) {
  return uvdro::pairwise_euclidean(random_matrix(n, dim, rng));
}

// Exact CVaR as the upper-tail mean with a fractional boundary element.
inline double cvar_sort_oracle(const Vector& losses, double alpha) {
  std::vector<double> v(losses.data(), losses.data() + losses.size());
  std::sort(v.begin(), v.end(), std::greater<>());
  double mass = alpha * static_cast<double>(v.size());
  double total = 0.0;
  for (double x : v) {
    const double take = std::min(1.0, mass);
    if (take <= 0.0) break;
    total += take * x;
    mass -= take;
  }
  return total / (alpha * static_cast<double>(v.size()));
}

// Direct evaluation of (1/alpha) sqrt(mean((a - eta)_+^2)) + eta.
inline double eta_objective(const Vector& a, double eta, double alpha) {
  double s = 0.0;
  for (Index i = 0; i < a.size(); ++i) {
    const double r = std::max(0.0, a[i] - eta);
    s += r * r;
  }
  return std::sqrt(s / static_cast<double>(a.size())) / alpha + eta;
}

inline double eta_grid_min(const Vector& a, double alpha, int points = 200001) {
  const double hi = std::max(0.0, a.maxCoeff());
  double best = eta_objective(a, 0.0, alpha);
  for (int k = 1; k < points; ++k)
    best = std::min(best, eta_objective(a, hi * k / (points - 1), alpha));
  return best;
}

inline uvdro::Dataset small_regression(Index n, Index d, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  uvdro::Dataset data;
  data.features = random_matrix(n, d, rng);
  data.labels = random_vector(n, -2.0, 2.0, rng);
  return data;
}

inline uvdro::Dataset small_classification(Index n, Index d, int k, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  uvdro::Dataset data;
  data.features = random_matrix(n, d, rng);
  data.labels.resize(n);
  for (Index i = 0; i < n; ++i) data.labels[i] = static_cast<double>(i % k);
  data.num_classes = k;
  return data;
}

}  // namespace testutil
