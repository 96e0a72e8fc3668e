#pragma once

#include <limits>
#include <span>
#include <string_view>
#include <variant>

#include "sparsefx/data.hpp"
#include "sparsefx/estimators.hpp"
#include "sparsefx/wlasso.hpp"

namespace sparsefx {

enum class SelectionMethod { Baseline, Lasso, Enet, HardThreshold };

std::string_view to_string(SelectionMethod method);

/// Ordered selected outcome set plus what produced it.
struct SelectionResult {
  IndexSet selected;  ///< selection priority order
  SelectionMethod method = SelectionMethod::Baseline;
  double tuning = 0.0;   ///< s, lambda or threshold
  Vector scores;         ///< aligned with `selected`: studentized effects or |beta|
  double weighted_rss = std::numeric_limits<double>::quiet_NaN();
};

struct BySize {
  Index s = 1;
};
struct ByLambda {
  double lambda = 0.0;
};
using SelectionMode = std::variant<BySize, ByLambda>;

/// Top-s outcomes by |tau_j| / sqrt(Sigma_jj); ties go to the lower index.
SelectionResult baseline_select(const EffectEstimate& est, Index s);

/// Weighted elastic-net selection. ByLambda returns the active set of a
/// single fit; BySize walks the regularization path from lambda_max down and
/// returns the first s indices in path-entry order. `config.lambda` is
/// ignored. `path` controls the lambda grid for BySize.
SelectionResult sparse_select(const TrialDataset& ds, const SelectionMode& mode,
                              const EnetConfig& config, const PathOptions& path = {});

/// Indices with |beta_j| > threshold, ordered by |beta_j| descending.
SelectionResult hard_threshold_select(const EnetFit& fit, double threshold);

/// Population regression target of the weighted Lasso.
struct PopulationTarget {
  Vector beta_star;
  IndexSet s_star;
  Index s_star_size = 0;
  Vector tau;
  Matrix sigma_z;
};

/// beta* = ((1-pi)/pi) (Sigma_Z + c tau tau')^{-1} tau with
/// c = (1-pi)/pi + pi/(1-pi) - 1. Checks that beta* is parallel to
/// Sigma_Z^{-1} tau. Support uses |beta*_j| > 1e-12 * max_k |beta*_k|.
PopulationTarget population_beta_star(const Vector& tau, const Matrix& sigma_z, double pi);

struct LevelSelection {
  std::size_t level = 0;
  SelectionResult selection;
  std::vector<double> level_rss;  ///< subset weighted RSS per level
};

/// Runs sparse_select on each level (levels ordered coarse to fine, all
/// sharing the same units and treatments) and keeps the level whose selected
/// subset has the smallest subset_weighted_rss. Ties go to the coarser level.
LevelSelection select_resolution_level(std::span<const TrialDataset> levels,
                                       const SelectionMode& mode, const EnetConfig& config,
                                       const PathOptions& path = {});

}  // namespace sparsefx
