#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "sparsefx/data.hpp"
#include "sparsefx/estimators.hpp"
#include "sparsefx/selection.hpp"

namespace sparsefx {

struct HotellingResult {
  double statistic = 0.0;  ///< n * tau' Sigma^{-1} tau
  Index df = 0;
  double p_value = 1.0;
};

struct PValueReport {
  IndexSet subset;
  std::vector<double> per_dim;  ///< aligned with `subset`
  HotellingResult group;
  EffectEstimate estimate;
  Index correction_factor = 0;
};

/// Standard normal upper tail 1 - Phi(z).
double normal_upper_tail(double z);

/// Upper tail P(chi^2(df) >= x).
double chi_squared_upper_tail(double x, Index df);

/// p_j = min(1, (1 - Phi(sqrt(n) |tau_j| / sqrt(Sigma_jj))) * correction).
/// `two_sided` doubles the tail before the correction.
std::vector<double> z_pvalues(const EffectEstimate& est, Index correction,
                              bool two_sided = false);

/// Group test on the estimate's index set; an empty set gives p = 1.
/// Throws NumericalError for a singular covariance estimate.
HotellingResult hotelling_test(const EffectEstimate& est);

double hotelling_pvalue(const EffectEstimate& est);

/// How the first split chooses the outcome subset.
struct SelectionSpec {
  SelectionMode mode = BySize{1};
  EnetConfig config{};
  PathOptions path{};
};

/// Estimate on `data` restricted to `subset` with per-dimension (correction
/// |subset|) and group p-values.
PValueReport infer_on_subset(const TrialDataset& data, EstimatorKind method,
                             const IndexSet& subset, bool two_sided = false);

/// Select on split.first with the weighted elastic net, infer on split.second.
PValueReport single_split_pipeline(const SplitPair& split, EstimatorKind method,
                                   const SelectionSpec& selection, bool two_sided = false);

/// Per column of a B x k matrix: min(1, empirical gamma-quantile of p / gamma),
/// the quantile being the order statistic at position ceil(gamma * B).
Vector aggregate_pvalues(const Matrix& p_values, double gamma);

struct MultiSplitOptions {
  int B = 50;
  double gamma = 0.05;
  double fraction = 0.5;
  std::uint64_t seed = 0;
  int jobs = 1;
};

struct MultiSplitReport {
  Vector per_dim_aggregated;
  double group_aggregated = 1.0;
  double gamma = 0.05;
  int B = 0;
  std::vector<IndexSet> per_split_subsets;
  Matrix per_split_pvalues;  ///< B x k, 1 outside the split's subset
  Vector per_split_group;    ///< B
};

/// Seed of the row split for split number b.
std::uint64_t split_seed(std::uint64_t master, std::size_t b);

/// Result of one split of a custom split-select-infer procedure.
struct SplitOutcome {
  Vector per_dim;  ///< length k; 1 for dimensions outside `subset`
  double group = 1.0;
  IndexSet subset;
};

using SplitProcedure = std::function<SplitOutcome(
    std::span<const Index> first_rows, std::span<const Index> second_rows)>;

/// Repeats `procedure` over B seeded row splits of n units and aggregates
/// the k per-dimension and the group p-values. A failing split aborts the
/// run with the split index in the message.
MultiSplitReport multi_split_generic(Index n, Index k, const MultiSplitOptions& options,
                                     const SplitProcedure& procedure);

MultiSplitReport multi_split(const TrialDataset& ds, EstimatorKind method,
                             const SelectionSpec& selection, const MultiSplitOptions& options,
                             bool two_sided = false);

}  // namespace sparsefx
