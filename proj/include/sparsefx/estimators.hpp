#pragma once

#include <optional>
#include <string_view>

#include "sparsefx/data.hpp"
#include "sparsefx/types.hpp"

namespace sparsefx {

enum class EstimatorKind { DiM, CUPED, Lin };

std::string_view to_string(EstimatorKind kind);
EstimatorKind parse_estimator(std::string_view name);

/// Treatment-effect estimate over an outcome index set together with the
/// estimated asymptotic covariance of sqrt(n) * (tau_hat - tau).
struct EffectEstimate {
  Vector tau_hat;
  Matrix sigma_hat;
  Index n_treated = 0;
  Index n_control = 0;
  Index n = 0;
  EstimatorKind method = EstimatorKind::DiM;
  IndexSet index_set;
};

/// Covariate-adjusted outcome matrix Y~ and the regression coefficients that
/// produced it.
struct AdjustedOutcomes {
  Matrix y_tilde;
  Matrix theta;          ///< CUPED: pooled m x p coefficients. Lin: treated-arm coefficients.
  Matrix theta_control;  ///< Lin only: control-arm coefficients (empty for CUPED).
  EstimatorKind method = EstimatorKind::CUPED;
};

/// Difference in arm means with the arm-wise plug-in covariance
/// (n/n_t)(1/n_t) S_1 + (n/n_c)(1/n_c) S_0. Requires >= 2 units per arm.
EffectEstimate diff_in_means(const TrialDataset& ds, const std::optional<IndexSet>& subset = {});

/// Same estimator applied to an explicit outcome matrix (rows aligned with
/// `treatments`); `index_set` labels the columns of `outcomes`.
EffectEstimate diff_in_means(const Vector& treatments, const Matrix& outcomes, IndexSet index_set,
                             EstimatorKind method = EstimatorKind::DiM);

/// Pooled OLS of each outcome on the covariates (intercept via centering);
/// Y~_ij = Y_ij - theta_j' X_i.
AdjustedOutcomes cuped_adjust(const TrialDataset& ds);

/// Separate per-arm OLS fits; Y~_ij = Y_ij - (n_c/n) theta1_j' X_i - (n_t/n) theta0_j' X_i.
AdjustedOutcomes lin_adjust(const TrialDataset& ds);

/// Difference in means of the adjusted outcomes. With a subset the outcome
/// columns are restricted before adjustment.
EffectEstimate adjusted_estimate(const TrialDataset& ds, EstimatorKind method,
                                 const std::optional<IndexSet>& subset = {});

/// Dispatches to diff_in_means or adjusted_estimate.
EffectEstimate estimate_effect(const TrialDataset& ds, EstimatorKind method,
                               const std::optional<IndexSet>& subset = {});

}  // namespace sparsefx
