#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "uvdro/types.hpp"

namespace uvdro {

/// Symmetric, nonnegative, zero-diagonal n x n cost matrix.
class DistanceMatrix {
 public:
  DistanceMatrix() = default;
  /// Validates the invariants (symmetry within kSymmetryTol).
  explicit DistanceMatrix(Matrix values);

  static DistanceMatrix zeros(Index n);

  Index size() const { return values_.rows(); }
  const Matrix& matrix() const { return values_; }
  double operator()(Index i, Index j) const { return values_(i, j); }

  /// Mean of the off-diagonal entries (0 for n < 2).
  double off_diagonal_mean() const;

  static constexpr double kSymmetryTol = 1e-12;

 private:
  Matrix values_;
};

/// Element-wise sum; the transport cost only ever sees D_x + D_c.
DistanceMatrix operator+(const DistanceMatrix& a, const DistanceMatrix& b);

/// Returns a copy divided by its off-diagonal mean (unchanged if that is 0).
DistanceMatrix rescale_unit_mean(const DistanceMatrix& d);

DistanceMatrix pairwise_euclidean(const Matrix& features);

/// Mean cosine distance 1 - u.v / (|u||v|) over all cross pairs of replicate
/// embeddings. Cosine distance is not a metric; the estimator only needs
/// pairwise costs. Throws on zero-norm replicates.
DistanceMatrix annotation_distance(const std::vector<Matrix>& embeddings);

/// |c_i - c_j| for numeric values, 0/1 disagreement for category codes.
DistanceMatrix oracle_distance(const Vector& values, bool categorical);

/// Indices chosen for shuffling are floor(fraction * n) distinct examples
/// drawn uniformly; they are permuted among themselves, all others fixed.
std::vector<Index> shuffle_permutation(Index n, double fraction, std::uint64_t seed);

/// D'(i, j) = D(perm[i], perm[j]).
DistanceMatrix permute_distances(const DistanceMatrix& d, std::span<const Index> perm);

DistanceMatrix shuffle_distances(const DistanceMatrix& d, double fraction, std::uint64_t seed);

/// W1 between two empirical distributions on the line. Equal sizes use the
/// sorted-sample formula; unequal sizes integrate |F_a^-1 - F_b^-1|.
double wasserstein_1d(std::span<const double> a, std::span<const double> b);

}  // namespace uvdro
