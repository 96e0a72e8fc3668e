#pragma once

// Internal helpers shared by the estimator, solver and selection code.

#include <string>

#include "sparsefx/error.hpp"
#include "sparsefx/types.hpp"

namespace sparsefx::detail {

/// Least-squares solution of A * X = B by column-pivoted QR. Throws
/// NumericalError naming `what` when A is rank deficient.
inline Matrix least_squares(const Matrix& a, const Matrix& b, const std::string& what) {
  if (a.cols() == 0) return Matrix::Zero(0, b.cols());
  Eigen::ColPivHouseholderQR<Matrix> qr(a);
  if (qr.rank() < a.cols()) {
    throw NumericalError(what + " is singular (rank " + std::to_string(qr.rank()) + " < " +
                         std::to_string(a.cols()) + ")");
  }
  return qr.solve(b);
}

/// Rows of `m` scaled by sqrt(w).
inline Matrix row_scaled(const Matrix& m, const Vector& sqrt_w) {
  return sqrt_w.asDiagonal() * m;
}

}  // namespace sparsefx::detail
