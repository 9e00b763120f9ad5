#include "uvdro/dataset.hpp"

#include <cmath>
#include <string>

#include "uvdro/errors.hpp"

namespace uvdro {

void Dataset::validate() const {
  const Index n = size();
  if (n < 1) throw Error("dataset is empty");
  if (dim() < 1) throw Error("dataset has no feature columns");
  if (labels.size() != n) throw DimensionError("label count", n, labels.size());
  if (!features.allFinite()) throw Error("features contain non-finite values");
  if (num_classes == 1 || num_classes < 0)
    throw Error("classification needs at least 2 classes, got " + std::to_string(num_classes));
  if (is_classification()) {
    for (Index i = 0; i < n; ++i) {
      const double y = labels[i];
      if (y != std::floor(y) || y < 0 || y >= num_classes)
        throw Error("label " + std::to_string(y) + " of example " + std::to_string(i) +
                    " is outside 0.." + std::to_string(num_classes - 1));
    }
  } else if (!labels.allFinite()) {
    throw Error("regression labels contain non-finite values");
  }
  if (uv_oracle && uv_oracle->size() != n)
    throw DimensionError("uv_oracle length", n, uv_oracle->size());
  if (uv_embeddings) {
    if (static_cast<Index>(uv_embeddings->size()) != n)
      throw DimensionError("embedding list length", n, static_cast<long>(uv_embeddings->size()));
    const Index k = uv_embeddings->front().cols();
    for (Index i = 0; i < n; ++i) {
      const Matrix& reps = (*uv_embeddings)[static_cast<std::size_t>(i)];
      if (reps.rows() < 1)
        throw Error("example " + std::to_string(i) + " has no annotation replicates");
      if (reps.cols() != k) throw DimensionError("embedding dimension", k, reps.cols());
    }
  }
  if (source_flags && static_cast<Index>(source_flags->size()) != n)
    throw DimensionError("source_flags length", n, static_cast<long>(source_flags->size()));
}

Dataset Dataset::subset(const std::vector<Index>& rows) const {
  Dataset out;
  const auto m = static_cast<Index>(rows.size());
  out.features.resize(m, dim());
  out.labels.resize(m);
  for (Index r = 0; r < m; ++r) {
    out.features.row(r) = features.row(rows[static_cast<std::size_t>(r)]);
    out.labels[r] = labels[rows[static_cast<std::size_t>(r)]];
  }
  out.num_classes = num_classes;
  out.uv_categorical = uv_categorical;
  out.class_names = class_names;
  if (uv_oracle) {
    Vector c(m);
    for (Index r = 0; r < m; ++r) c[r] = (*uv_oracle)[rows[static_cast<std::size_t>(r)]];
    out.uv_oracle = std::move(c);
  }
  if (uv_embeddings) {
    std::vector<Matrix> e;
    e.reserve(rows.size());
    for (Index r : rows) e.push_back((*uv_embeddings)[static_cast<std::size_t>(r)]);
    out.uv_embeddings = std::move(e);
  }
  if (source_flags) {
    std::vector<int> f;
    f.reserve(rows.size());
    for (Index r : rows) f.push_back((*source_flags)[static_cast<std::size_t>(r)]);
    out.source_flags = std::move(f);
  }
  return out;
}

}  // namespace uvdro
