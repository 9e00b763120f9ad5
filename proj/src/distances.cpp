#include "uvdro/distances.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include "uvdro/errors.hpp"
#include "uvdro/kernels.hpp"

namespace uvdro {

DistanceMatrix::DistanceMatrix(Matrix values) : values_(std::move(values)) {
  const Index n = values_.rows();
  if (values_.cols() != n) throw DimensionError("distance matrix columns", n, values_.cols());
  for (Index i = 0; i < n; ++i) {
    if (values_(i, i) != 0.0)
      throw Error("distance matrix has nonzero diagonal at " + std::to_string(i));
    for (Index j = 0; j < n; ++j) {
      const double v = values_(i, j);
      if (!std::isfinite(v) || v < 0.0)
        throw Error("distance matrix entry (" + std::to_string(i) + ", " + std::to_string(j) +
                    ") is negative or non-finite");
      if (std::abs(v - values_(j, i)) > kSymmetryTol * std::max(1.0, std::abs(v)))
        throw Error("distance matrix is not symmetric at (" + std::to_string(i) + ", " +
                    std::to_string(j) + ")");
    }
  }
}

DistanceMatrix DistanceMatrix::zeros(Index n) { return DistanceMatrix(Matrix::Zero(n, n)); }

double DistanceMatrix::off_diagonal_mean() const {
  const Index n = size();
  if (n < 2) return 0.0;
  return values_.sum() / static_cast<double>(n * (n - 1));
}

DistanceMatrix operator+(const DistanceMatrix& a, const DistanceMatrix& b) {
  if (a.size() != b.size()) throw DimensionError("distance matrix size", a.size(), b.size());
  return DistanceMatrix(a.matrix() + b.matrix());
}

DistanceMatrix rescale_unit_mean(const DistanceMatrix& d) {
  const double m = d.off_diagonal_mean();
  if (m <= 0.0) return d;
  return DistanceMatrix(d.matrix() / m);
}

DistanceMatrix pairwise_euclidean(const Matrix& features) {
  if (!features.allFinite()) throw Error("features contain non-finite values");
  Matrix out;
  kernels::parallel::pairwise_euclidean(features, out);
  return DistanceMatrix(std::move(out));
}

DistanceMatrix annotation_distance(const std::vector<Matrix>& embeddings) {
  if (embeddings.empty()) return DistanceMatrix(Matrix(0, 0));
  const Index k = embeddings.front().cols();
  std::vector<Matrix> unit;
  unit.reserve(embeddings.size());
  for (std::size_t i = 0; i < embeddings.size(); ++i) {
    const Matrix& reps = embeddings[i];
    if (reps.rows() < 1) throw Error("example " + std::to_string(i) + " has no replicates");
    if (reps.cols() != k) throw DimensionError("embedding dimension", k, reps.cols());
    Matrix u = reps;
    for (Index r = 0; r < u.rows(); ++r) {
      const double norm = u.row(r).norm();
      if (!(norm > 0.0) || !std::isfinite(norm))
        throw Error("zero-norm embedding for example " + std::to_string(i) + ", replicate " +
                    std::to_string(r));
      u.row(r) /= norm;
    }
    unit.push_back(std::move(u));
  }
  Matrix out;
  kernels::parallel::mean_cosine_distance(unit, out);
  return DistanceMatrix(std::move(out));
}

DistanceMatrix oracle_distance(const Vector& values, bool categorical) {
  const Index n = values.size();
  Matrix out = Matrix::Zero(n, n);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j)
      out(i, j) = categorical ? (values[i] != values[j] ? 1.0 : 0.0) : std::abs(values[i] - values[j]);
  return DistanceMatrix(std::move(out));
}

std::vector<Index> shuffle_permutation(Index n, double fraction, std::uint64_t seed) {
  if (!(fraction >= 0.0 && fraction <= 1.0))
    throw Error("shuffle fraction must lie in [0, 1], got " + std::to_string(fraction));
  std::vector<Index> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), Index{0});
  const auto count = static_cast<Index>(std::floor(fraction * static_cast<double>(n)));
  if (count < 2) return perm;
  std::mt19937_64 rng(seed);
  std::vector<Index> chosen = perm;
  std::shuffle(chosen.begin(), chosen.end(), rng);
  chosen.resize(static_cast<std::size_t>(count));
  std::vector<Index> targets = chosen;
  std::shuffle(targets.begin(), targets.end(), rng);
  for (std::size_t k = 0; k < chosen.size(); ++k)
    perm[static_cast<std::size_t>(chosen[k])] = targets[k];
  return perm;
}

DistanceMatrix permute_distances(const DistanceMatrix& d, std::span<const Index> perm) {
  const Index n = d.size();
  if (static_cast<Index>(perm.size()) != n)
    throw DimensionError("permutation length", n, static_cast<long>(perm.size()));
  Matrix out(n, n);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j)
      out(i, j) = d(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(j)]);
  return DistanceMatrix(std::move(out));
}

DistanceMatrix shuffle_distances(const DistanceMatrix& d, double fraction, std::uint64_t seed) {
  const auto perm = shuffle_permutation(d.size(), fraction, seed);
  return permute_distances(d, perm);
}

double wasserstein_1d(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) throw Error("wasserstein_1d needs nonempty samples");
  std::vector<double> sa(a.begin(), a.end());
  std::vector<double> sb(b.begin(), b.end());
  std::sort(sa.begin(), sa.end());
  std::sort(sb.begin(), sb.end());
  if (sa.size() == sb.size()) {
    double total = 0.0;
    for (std::size_t i = 0; i < sa.size(); ++i) total += std::abs(sa[i] - sb[i]);
    return total / static_cast<double>(sa.size());
  }
  // Both quantile functions are step functions; walk the merged breakpoints
  // k/na and k/nb.
  const double na = static_cast<double>(sa.size());
  const double nb = static_cast<double>(sb.size());
  std::size_t ia = 0;
  std::size_t ib = 0;
  double t = 0.0;
  double total = 0.0;
  while (ia < sa.size() && ib < sb.size()) {
    const double next_a = static_cast<double>(ia + 1) / na;
    const double next_b = static_cast<double>(ib + 1) / nb;
    const double next = std::min(next_a, next_b);
    total += (next - t) * std::abs(sa[ia] - sb[ib]);
    t = next;
    if (next_a <= next) ++ia;
    if (next_b <= next) ++ib;
  }
  return total;
}

}  // namespace uvdro
