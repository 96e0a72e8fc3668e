#pragma once

#include <optional>
#include <vector>

#include "sparsefx/data.hpp"
#include "sparsefx/types.hpp"

namespace sparsefx {

/// Inverse-squared-propensity weights: 1/pi^2 for treated units and
/// 1/(1-pi)^2 for controls, with pi = n_t / n. Under these weights the RSS of
/// regressing T on centered outcomes is a decreasing function of the
/// Hotelling statistic of the regressors.
struct RegressionWeights {
  Vector w;
  double pi_hat = 0.5;
};

RegressionWeights propensity_weights(const Vector& treatments);

/// Penalty 2 * lambda * (l1_ratio * |b|_1 + (1 - l1_ratio) * |b|_2^2).
struct EnetConfig {
  double lambda = 0.0;
  double l1_ratio = 1.0;  ///< 1 = Lasso
  double tol = 1e-7;      ///< max coordinate change, in units of the column's weighted scale
  int max_iter = 10000;   ///< coordinate-descent sweeps (full or active-set)
  bool standardize = false;
  bool record_objective = false;
};

struct EnetFit {
  Vector beta;       ///< outcome coefficients (original column scale)
  Vector alpha_cov;  ///< unpenalized covariate coefficients
  IndexSet active_set;
  double weighted_rss = 0.0;  ///< (1/n) sum W_i r_i^2
  double lambda = 0.0;
  int iterations = 0;
  bool converged = false;
  std::vector<double> objective_trace;  ///< per sweep, when requested
};

struct EnetPath {
  std::vector<double> lambdas;
  std::vector<EnetFit> fits;
  double lambda_max = 0.0;
  /// Every index that was ever active, in order of first entry along the
  /// path. Indices entering at the same lambda are ordered by |beta| at that
  /// lambda (descending), then by index.
  IndexSet entry_order;
};

double soft_threshold(double x, double t);

/// Centered outcome/covariate design under fixed weights, with the
/// unpenalized covariate block profiled out. Build once and fit at many
/// lambdas; const member functions are safe to call concurrently.
class WeightedEnetProblem {
 public:
  WeightedEnetProblem(const TrialDataset& ds, const RegressionWeights& weights,
                      bool standardize = false);

  EnetFit fit(const EnetConfig& config, const Vector* warm_start = nullptr) const;

  /// Smallest lambda at which beta = 0 satisfies the optimality conditions.
  double lambda_max(double l1_ratio = 1.0) const;

  Index n() const { return yc_.rows(); }
  Index p() const { return yc_.cols(); }
  Index m() const { return xc_.cols(); }
  bool standardized() const { return standardize_; }

  /// Columns with zero weighted variance after covariate adjustment; their
  /// coefficients are fixed at zero.
  const std::vector<bool>& degenerate() const { return degenerate_; }

 private:
  Matrix yc_;      // centered outcomes
  Matrix xc_;      // centered covariates
  Vector t_;       // treatments
  Vector w_;       // weights
  Matrix gamma_;   // weighted LS of yc on xc (m x p)
  Vector gamma_t_; // weighted LS of t on xc
  Matrix z_;       // working columns: (yc - xc gamma) / scale
  Matrix wz_;      // (w / n) .* z
  Vector t_res_;   // t - xc gamma_t
  Vector h_;       // (1/n) sum w z^2
  Vector scale_;
  std::vector<bool> degenerate_;
  bool standardize_ = false;
};

EnetFit fit_weighted_enet(const TrialDataset& ds, const RegressionWeights& weights,
                          const EnetConfig& config,
                          const std::optional<Vector>& warm_start = {});

double lambda_max(const TrialDataset& ds, const RegressionWeights& weights,
                  double l1_ratio = 1.0, bool standardize = false);

struct PathOptions {
  int n_lambdas = 100;
  /// <= 0 selects the default: 0.01 when p > n, 1e-4 otherwise.
  double lambda_min_ratio = 0.0;
  /// Stop early once this many distinct indices have entered (0 = full path).
  Index stop_at_entries = 0;
};

EnetPath regularization_path(const TrialDataset& ds, const RegressionWeights& weights,
                             const PathOptions& options, const EnetConfig& config);

EnetPath regularization_path(const WeightedEnetProblem& problem, const PathOptions& options,
                             const EnetConfig& config);

/// Unpenalized minimum of (1/n) sum W_i (T_i - (Y_i^S - Ybar^S)' b)^2. When the
/// dataset has covariates the outcome columns are first replaced by their
/// weighted-regression residuals on the centered covariates, so the empty-set
/// value (1/n) sum W_i T_i^2 = n / n_t is common to every outcome grouping.
double subset_weighted_rss(const TrialDataset& ds, const RegressionWeights& weights,
                           const IndexSet& subset);

}  // namespace sparsefx
