#include "sparsefx/selection.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "sparsefx/error.hpp"

namespace sparsefx {

std::string_view to_string(SelectionMethod method) {
  switch (method) {
    case SelectionMethod::Baseline: return "baseline";
    case SelectionMethod::Lasso: return "lasso";
    case SelectionMethod::Enet: return "enet";
    case SelectionMethod::HardThreshold: return "hard_threshold";
  }
  return "unknown";
}

SelectionResult baseline_select(const EffectEstimate& est, Index s) {
  const Index p = est.tau_hat.size();
  if (s < 1 || s > p) throw std::invalid_argument("baseline selection size must lie in [1, p]");
  Vector score(p);
  for (Index j = 0; j < p; ++j) {
    const double var = est.sigma_hat(j, j);
    if (!(var > 0.0)) {
      throw DataError("zero variance estimate for outcome index " +
                      std::to_string(est.index_set[static_cast<std::size_t>(j)]));
    }
    score[j] = std::abs(est.tau_hat[j]) / std::sqrt(var);
  }
  std::vector<Index> order(static_cast<std::size_t>(p));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Index a, Index b) { return score[a] > score[b]; });

  SelectionResult out;
  out.method = SelectionMethod::Baseline;
  out.tuning = static_cast<double>(s);
  out.scores.resize(s);
  for (Index k = 0; k < s; ++k) {
    const Index local = order[static_cast<std::size_t>(k)];
    out.selected.push_back(est.index_set[static_cast<std::size_t>(local)]);
    out.scores[k] = score[local];
  }
  return out;
}

namespace {

SelectionMethod enet_tag(const EnetConfig& config) {
  return config.l1_ratio == 1.0 ? SelectionMethod::Lasso : SelectionMethod::Enet;
}

void attach_rss(SelectionResult& out, const TrialDataset& ds, const RegressionWeights& weights) {
  try {
    out.weighted_rss = subset_weighted_rss(ds, weights, out.selected);
  } catch (const std::invalid_argument&) {
    // subset larger than an unpenalized fit supports; leave NaN
  } catch (const NumericalError&) {
  }
}

}  // namespace

SelectionResult sparse_select(const TrialDataset& ds, const SelectionMode& mode,
                              const EnetConfig& config, const PathOptions& path) {
  const RegressionWeights weights = propensity_weights(ds.treatments());
  const WeightedEnetProblem problem(ds, weights, config.standardize);

  SelectionResult out;
  out.method = enet_tag(config);

  if (const auto* by_lambda = std::get_if<ByLambda>(&mode)) {
    EnetConfig cfg = config;
    cfg.lambda = by_lambda->lambda;
    const EnetFit fit = problem.fit(cfg);
    out.tuning = by_lambda->lambda;
    out.selected = fit.active_set;
    std::stable_sort(out.selected.begin(), out.selected.end(), [&](Index a, Index b) {
      return std::abs(fit.beta[a]) > std::abs(fit.beta[b]);
    });
    out.scores.resize(static_cast<Index>(out.selected.size()));
    for (std::size_t k = 0; k < out.selected.size(); ++k) {
      out.scores[static_cast<Index>(k)] = std::abs(fit.beta[out.selected[k]]);
    }
    attach_rss(out, ds, weights);
    return out;
  }

  const Index s = std::get<BySize>(mode).s;
  if (s < 1 || s > ds.p()) throw std::invalid_argument("selection size must lie in [1, p]");
  PathOptions opts = path;
  opts.stop_at_entries = s;
  const EnetPath full = regularization_path(problem, opts, config);
  if (static_cast<Index>(full.entry_order.size()) < s) {
    throw DataError("requested " + std::to_string(s) +
                    " outcomes but the regularization path only reached " +
                    std::to_string(full.entry_order.size()));
  }
  const EnetFit& last = full.fits.back();
  out.tuning = static_cast<double>(s);
  out.selected.assign(full.entry_order.begin(), full.entry_order.begin() + s);
  out.scores.resize(s);
  for (Index k = 0; k < s; ++k) out.scores[k] = std::abs(last.beta[out.selected[k]]);
  attach_rss(out, ds, weights);
  return out;
}

SelectionResult hard_threshold_select(const EnetFit& fit, double threshold) {
  if (!(threshold > 0.0)) throw std::invalid_argument("threshold must be positive");
  SelectionResult out;
  out.method = SelectionMethod::HardThreshold;
  out.tuning = threshold;
  for (Index j = 0; j < fit.beta.size(); ++j) {
    if (std::abs(fit.beta[j]) > threshold) out.selected.push_back(j);
  }
  std::stable_sort(out.selected.begin(), out.selected.end(), [&](Index a, Index b) {
    return std::abs(fit.beta[a]) > std::abs(fit.beta[b]);
  });
  out.scores.resize(static_cast<Index>(out.selected.size()));
  for (std::size_t k = 0; k < out.selected.size(); ++k) {
    out.scores[static_cast<Index>(k)] = std::abs(fit.beta[out.selected[k]]);
  }
  return out;
}

PopulationTarget population_beta_star(const Vector& tau, const Matrix& sigma_z, double pi) {
  const Index p = tau.size();
  if (!(pi > 0.0 && pi < 1.0)) throw std::invalid_argument("pi must lie in (0, 1)");
  if (sigma_z.rows() != p || sigma_z.cols() != p) {
    throw std::invalid_argument("sigma_z must be p x p");
  }
  const double sym_tol = 1e-10 * std::max(1.0, sigma_z.cwiseAbs().maxCoeff());
  if ((sigma_z - sigma_z.transpose()).cwiseAbs().maxCoeff() > sym_tol) {
    throw NumericalError("sigma_z is not symmetric");
  }
  Eigen::LLT<Matrix> sigma_llt(sigma_z);
  if (sigma_llt.info() != Eigen::Success) throw NumericalError("sigma_z is not positive definite");

  const double odds = (1.0 - pi) / pi;
  const double c = odds + pi / (1.0 - pi) - 1.0;
  const Matrix shifted = sigma_z + c * tau * tau.transpose();
  Eigen::LLT<Matrix> shifted_llt(shifted);
  if (shifted_llt.info() != Eigen::Success) throw NumericalError("sigma_z + c tau tau' is not SPD");

  PopulationTarget out;
  out.tau = tau;
  out.sigma_z = sigma_z;
  out.beta_star = odds * shifted_llt.solve(tau);

  const double norm = out.beta_star.norm();
  if (norm > 0.0) {
    const Vector direction = sigma_llt.solve(tau);
    const double cosine = out.beta_star.dot(direction) / (norm * direction.norm());
    if (!(cosine >= 1.0 - 1e-8)) {
      throw NumericalError("beta* is not parallel to Sigma_Z^{-1} tau (cosine " +
                           std::to_string(cosine) + ")");
    }
    const double cutoff = 1e-12 * out.beta_star.cwiseAbs().maxCoeff();
    for (Index j = 0; j < p; ++j) {
      if (std::abs(out.beta_star[j]) > cutoff) out.s_star.push_back(j);
    }
  }
  out.s_star_size = static_cast<Index>(out.s_star.size());
  return out;
}

LevelSelection select_resolution_level(std::span<const TrialDataset> levels,
                                       const SelectionMode& mode, const EnetConfig& config,
                                       const PathOptions& path) {
  if (levels.empty()) throw std::invalid_argument("at least one resolution level required");
  for (const auto& level : levels) {
    if (level.n() != levels[0].n() || level.treatments() != levels[0].treatments()) {
      throw std::invalid_argument("resolution levels must share units and treatments");
    }
  }
  const RegressionWeights weights = propensity_weights(levels[0].treatments());

  LevelSelection out;
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < levels.size(); ++k) {
    SelectionResult sel = sparse_select(levels[k], mode, config, path);
    const double rss = subset_weighted_rss(levels[k], weights, sel.selected);
    sel.weighted_rss = rss;
    out.level_rss.push_back(rss);
    // Strictly smaller (beyond rounding) is needed to move to a finer level.
    if (k == 0 || rss < best - 1e-12 * std::abs(best)) {
      best = rss;
      out.level = k;
      out.selection = std::move(sel);
    }
  }
  return out;
}

}  // namespace sparsefx
