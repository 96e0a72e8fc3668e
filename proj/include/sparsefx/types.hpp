#pragma once

#include <Eigen/Dense>
#include <vector>

namespace sparsefx {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

/// Zero-based outcome (or covariate) column indices.
using IndexSet = std::vector<Index>;

}  // namespace sparsefx
