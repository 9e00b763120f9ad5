#pragma once

#include <optional>
#include <string>
#include <vector>

#include "uvdro/types.hpp"

namespace uvdro {

/// Observed features, labels and whatever is known about the unmeasured
/// variable for each example.
struct Dataset {
  Matrix features;  ///< n x d
  /// Real targets for regression, class indices 0..K-1 (stored as doubles)
  /// for classification.
  Vector labels;
  /// 0 for regression, K >= 2 for classification.
  int num_classes = 0;
  /// Ground-truth unmeasured variable, when the generator knows it.
  std::optional<Vector> uv_oracle;
  /// Whether uv_oracle holds category codes (0/1 metric) or real values.
  bool uv_categorical = false;
  /// Per-example replicate annotation embeddings, one row per replicate.
  std::optional<std::vector<Matrix>> uv_embeddings;
  /// Reporting-only group tags (e.g. 1 = minority source).
  std::optional<std::vector<int>> source_flags;
  /// Original label strings for classification data loaded from text.
  std::vector<std::string> class_names;

  Index size() const { return features.rows(); }
  Index dim() const { return features.cols(); }
  bool is_classification() const { return num_classes > 0; }

  /// Throws uvdro::Error when any invariant is violated.
  void validate() const;

  /// Copy of the given rows, in order, carrying every optional field along.
  Dataset subset(const std::vector<Index>& rows) const;
};

}  // namespace uvdro
