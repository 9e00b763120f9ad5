#pragma once

#include <Eigen/Dense>

namespace uvdro {

using Index = Eigen::Index;
using Vector = Eigen::VectorXd;
/// Row-major so that per-example rows are contiguous.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class LossKind { squared, log };

}  // namespace uvdro
