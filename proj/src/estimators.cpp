#include "sparsefx/estimators.hpp"

#include <stdexcept>
#include <string>

#include "linalg.hpp"
#include "sparsefx/error.hpp"

namespace sparsefx {

std::string_view to_string(EstimatorKind kind) {
  switch (kind) {
    case EstimatorKind::DiM: return "dim";
    case EstimatorKind::CUPED: return "cuped";
    case EstimatorKind::Lin: return "lin";
  }
  return "unknown";
}

EstimatorKind parse_estimator(std::string_view name) {
  if (name == "dim" || name == "DiM") return EstimatorKind::DiM;
  if (name == "cuped" || name == "CUPED") return EstimatorKind::CUPED;
  if (name == "lin" || name == "Lin") return EstimatorKind::Lin;
  throw std::invalid_argument("unknown estimator '" + std::string(name) + "'");
}

namespace {

// Arm-wise sum of outer products of within-arm deviations, divided by the arm size.
Matrix arm_covariance(const Matrix& y, const std::vector<Index>& rows, const Vector& mean) {
  Matrix dev(static_cast<Index>(rows.size()), y.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    dev.row(static_cast<Index>(r)) = y.row(rows[r]) - mean.transpose();
  }
  Matrix cov = Matrix::Zero(y.cols(), y.cols());
  cov.selfadjointView<Eigen::Lower>().rankUpdate(dev.transpose());
  cov.triangularView<Eigen::StrictlyUpper>() = cov.transpose();
  return cov / static_cast<double>(rows.size());
}

void arm_rows(const Vector& t, std::vector<Index>& treated, std::vector<Index>& control) {
  for (Index i = 0; i < t.size(); ++i) (t[i] == 1.0 ? treated : control).push_back(i);
}

void require_covariates(const TrialDataset& ds, const char* who) {
  if (!ds.has_covariates()) {
    throw std::invalid_argument(std::string(who) + " adjustment requires covariates");
  }
}

IndexSet all_columns(Index p) {
  IndexSet s(static_cast<std::size_t>(p));
  for (Index j = 0; j < p; ++j) s[static_cast<std::size_t>(j)] = j;
  return s;
}

// OLS slopes of `y` on `x` with intercept, using only `rows`.
Matrix arm_slopes(const Matrix& x, const Matrix& y, const std::vector<Index>& rows,
                  const std::string& arm) {
  Matrix xa = x(rows, Eigen::all);
  Matrix ya = y(rows, Eigen::all);
  xa.rowwise() -= xa.colwise().mean();
  ya.rowwise() -= ya.colwise().mean();
  return detail::least_squares(xa, ya, arm + " covariate Gram matrix");
}

}  // namespace

EffectEstimate diff_in_means(const Vector& treatments, const Matrix& outcomes, IndexSet index_set,
                             EstimatorKind method) {
  std::vector<Index> treated;
  std::vector<Index> control;
  arm_rows(treatments, treated, control);
  const auto nt = static_cast<Index>(treated.size());
  const auto nc = static_cast<Index>(control.size());
  if (nt < 2 || nc < 2) {
    throw DataError("difference in means needs >= 2 units per arm (treated " +
                    std::to_string(nt) + ", control " + std::to_string(nc) + ")");
  }
  const Index n = nt + nc;
  const Vector mean1 = outcomes(treated, Eigen::all).colwise().mean().transpose();
  const Vector mean0 = outcomes(control, Eigen::all).colwise().mean().transpose();

  EffectEstimate est;
  est.tau_hat = mean1 - mean0;
  est.sigma_hat = (static_cast<double>(n) / static_cast<double>(nt)) *
                      arm_covariance(outcomes, treated, mean1) +
                  (static_cast<double>(n) / static_cast<double>(nc)) *
                      arm_covariance(outcomes, control, mean0);
  est.n_treated = nt;
  est.n_control = nc;
  est.n = n;
  est.method = method;
  est.index_set = std::move(index_set);
  return est;
}

EffectEstimate diff_in_means(const TrialDataset& ds, const std::optional<IndexSet>& subset) {
  if (subset) return diff_in_means(ds.treatments(), ds.outcomes()(Eigen::all, *subset), *subset);
  return diff_in_means(ds.treatments(), ds.outcomes(), all_columns(ds.p()));
}

AdjustedOutcomes cuped_adjust(const TrialDataset& ds) {
  require_covariates(ds, "CUPED");
  if (ds.m() >= ds.n()) throw NumericalError("CUPED needs m < n covariates");
  const Matrix xc = ds.covariates().rowwise() - ds.covariates().colwise().mean();
  const Matrix yc = ds.outcomes().rowwise() - ds.outcomes().colwise().mean();

  AdjustedOutcomes out;
  out.theta = detail::least_squares(xc, yc, "pooled covariate Gram matrix");
  out.y_tilde = ds.outcomes() - ds.covariates() * out.theta;
  out.method = EstimatorKind::CUPED;
  return out;
}

AdjustedOutcomes lin_adjust(const TrialDataset& ds) {
  require_covariates(ds, "Lin");
  std::vector<Index> treated;
  std::vector<Index> control;
  arm_rows(ds.treatments(), treated, control);
  const auto nt = static_cast<double>(treated.size());
  const auto nc = static_cast<double>(control.size());
  const double n = nt + nc;

  AdjustedOutcomes out;
  out.theta = arm_slopes(ds.covariates(), ds.outcomes(), treated, "treated-arm");
  out.theta_control = arm_slopes(ds.covariates(), ds.outcomes(), control, "control-arm");
  out.y_tilde = ds.outcomes() - (nc / n) * (ds.covariates() * out.theta) -
                (nt / n) * (ds.covariates() * out.theta_control);
  out.method = EstimatorKind::Lin;
  return out;
}

EffectEstimate adjusted_estimate(const TrialDataset& ds, EstimatorKind method,
                                 const std::optional<IndexSet>& subset) {
  if (method == EstimatorKind::DiM) return diff_in_means(ds, subset);
  if (subset) {
    EffectEstimate est = adjusted_estimate(ds.select_outcomes(*subset), method);
    est.index_set = *subset;
    return est;
  }
  const AdjustedOutcomes adj =
      method == EstimatorKind::CUPED ? cuped_adjust(ds) : lin_adjust(ds);
  return diff_in_means(ds.treatments(), adj.y_tilde, all_columns(ds.p()), method);
}

EffectEstimate estimate_effect(const TrialDataset& ds, EstimatorKind method,
                               const std::optional<IndexSet>& subset) {
  return adjusted_estimate(ds, method, subset);
}

}  // namespace sparsefx
