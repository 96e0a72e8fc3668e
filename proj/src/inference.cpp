#include "sparsefx/inference.hpp"

#include <algorithm>
#include <boost/math/special_functions/gamma.hpp>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "sparsefx/error.hpp"
#include "sparsefx/parallel.hpp"
#include "sparsefx/rng.hpp"

namespace sparsefx {

double normal_upper_tail(double z) { return 0.5 * std::erfc(z / std::sqrt(2.0)); }

double chi_squared_upper_tail(double x, Index df) {
  if (df < 1) throw std::invalid_argument("chi-squared needs df >= 1");
  if (x <= 0.0) return 1.0;
  return boost::math::gamma_q(0.5 * static_cast<double>(df), 0.5 * x);
}

std::vector<double> z_pvalues(const EffectEstimate& est, Index correction, bool two_sided) {
  if (correction < 1) throw std::invalid_argument("correction factor must be positive");
  const double root_n = std::sqrt(static_cast<double>(est.n));
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(est.tau_hat.size()));
  for (Index j = 0; j < est.tau_hat.size(); ++j) {
    const double var = est.sigma_hat(j, j);
    if (!(var > 0.0)) {
      throw DataError("zero variance estimate for outcome index " +
                    std::to_string(est.index_set[static_cast<std::size_t>(j)]));
    }
    const double z = root_n * std::abs(est.tau_hat[j]) / std::sqrt(var);
    const double tail = (two_sided ? 2.0 : 1.0) * normal_upper_tail(z);
    out.push_back(std::min(1.0, tail * static_cast<double>(correction)));
  }
  return out;
}

HotellingResult hotelling_test(const EffectEstimate& est) {
  HotellingResult out;
  const Index k = est.tau_hat.size();
  out.df = k;
  if (k == 0) return out;
  if (k >= est.n) throw std::invalid_argument("Hotelling test needs |subset| < n");

  Eigen::SelfAdjointEigenSolver<Matrix> eig(est.sigma_hat);
  const double hi = eig.eigenvalues().maxCoeff();
  const double lo = eig.eigenvalues().minCoeff();
  if (!(hi > 0.0) || lo <= 1e-12 * hi) {
    std::ostringstream msg;
    msg << "singular covariance estimate on the selected subset (condition estimate "
        << (lo > 0.0 ? hi / lo : std::numeric_limits<double>::infinity())
        << "); use a smaller subset size or more second-split data";
    throw NumericalError(msg.str());
  }
  const Vector v = eig.eigenvectors().transpose() * est.tau_hat;
  out.statistic = static_cast<double>(est.n) * (v.cwiseAbs2().cwiseQuotient(eig.eigenvalues())).sum();
  out.p_value = chi_squared_upper_tail(out.statistic, k);
  return out;
}

double hotelling_pvalue(const EffectEstimate& est) { return hotelling_test(est).p_value; }

PValueReport infer_on_subset(const TrialDataset& data, EstimatorKind method,
                             const IndexSet& subset, bool two_sided) {
  PValueReport report;
  report.subset = subset;
  report.correction_factor = static_cast<Index>(subset.size());
  if (subset.empty()) {
    report.estimate.n = data.n();
    report.estimate.n_treated = data.n_treated();
    report.estimate.n_control = data.n_control();
    report.estimate.method = method;
    return report;
  }
  report.estimate = estimate_effect(data, method, subset);
  report.per_dim = z_pvalues(report.estimate, report.correction_factor, two_sided);
  report.group = hotelling_test(report.estimate);
  return report;
}

PValueReport single_split_pipeline(const SplitPair& split, EstimatorKind method,
                                   const SelectionSpec& selection, bool two_sided) {
  const SelectionResult sel = sparse_select(split.first, selection.mode, selection.config,
                                            selection.path);
  return infer_on_subset(split.second, method, sel.selected, two_sided);
}

Vector aggregate_pvalues(const Matrix& p_values, double gamma) {
  if (!(gamma > 0.0 && gamma < 1.0)) throw std::invalid_argument("gamma must lie in (0, 1)");
  const Index b_count = p_values.rows();
  if (b_count < 1) throw std::invalid_argument("need at least one split");
  if ((p_values.array() < 0.0).any() || (p_values.array() > 1.0).any()) {
    throw std::invalid_argument("p-values must lie in [0, 1]");
  }
  // 1-based order statistic ceil(gamma * B); the small slack keeps e.g.
  // 0.05 * 60 from rounding up to 4.
  auto position = static_cast<Index>(std::ceil(gamma * static_cast<double>(b_count) - 1e-9));
  position = std::clamp<Index>(position, 1, b_count);

  Vector out(p_values.cols());
  std::vector<double> column(static_cast<std::size_t>(b_count));
  for (Index j = 0; j < p_values.cols(); ++j) {
    for (Index b = 0; b < b_count; ++b) column[static_cast<std::size_t>(b)] = p_values(b, j) / gamma;
    std::nth_element(column.begin(), column.begin() + (position - 1), column.end());
    out[j] = std::min(1.0, column[static_cast<std::size_t>(position - 1)]);
  }
  return out;
}

std::uint64_t split_seed(std::uint64_t master, std::size_t b) { return derive_seed(master, b); }

namespace {

template <typename E>
[[noreturn]] void rethrow_with_split(const E& e, std::size_t b) {
  throw E("split " + std::to_string(b) + ": " + e.what());
}

}  // namespace

MultiSplitReport multi_split_generic(Index n, Index k, const MultiSplitOptions& options,
                                     const SplitProcedure& procedure) {
  if (options.B < 1) throw std::invalid_argument("B must be >= 1");
  if (!(options.gamma > 0.0 && options.gamma < 1.0)) {
    throw std::invalid_argument("gamma must lie in (0, 1)");
  }
  const auto b_count = static_cast<std::size_t>(options.B);
  MultiSplitReport report;
  report.gamma = options.gamma;
  report.B = options.B;
  report.per_split_subsets.resize(b_count);
  report.per_split_pvalues = Matrix::Ones(options.B, k);
  report.per_split_group = Vector::Ones(options.B);

  parallel_for(b_count, options.jobs, [&](std::size_t b) {
    try {
      const auto [first, second] = split_rows(n, options.fraction, split_seed(options.seed, b));
      SplitOutcome outcome = procedure(first, second);
      if (outcome.per_dim.size() != k) throw std::logic_error("split procedure returned wrong length");
      report.per_split_pvalues.row(static_cast<Index>(b)) = outcome.per_dim.transpose();
      report.per_split_group[static_cast<Index>(b)] = outcome.group;
      report.per_split_subsets[b] = std::move(outcome.subset);
    } catch (const DataError& e) {
      rethrow_with_split(e, b);
    } catch (const NumericalError& e) {
      rethrow_with_split(e, b);
    } catch (const std::invalid_argument& e) {
      rethrow_with_split(e, b);
    }
  });

  report.per_dim_aggregated = aggregate_pvalues(report.per_split_pvalues, options.gamma);
  report.group_aggregated = aggregate_pvalues(report.per_split_group, options.gamma)[0];
  return report;
}

MultiSplitReport multi_split(const TrialDataset& ds, EstimatorKind method,
                             const SelectionSpec& selection, const MultiSplitOptions& options,
                             bool two_sided) {
  const Index p = ds.p();
  return multi_split_generic(
      ds.n(), p, options,
      [&](std::span<const Index> first, std::span<const Index> second) {
        const SelectionResult sel =
            sparse_select(ds.rows(first), selection.mode, selection.config, selection.path);
        const PValueReport rep = infer_on_subset(ds.rows(second), method, sel.selected, two_sided);
        SplitOutcome out;
        out.per_dim = Vector::Ones(p);
        for (std::size_t k = 0; k < rep.subset.size(); ++k) out.per_dim[rep.subset[k]] = rep.per_dim[k];
        out.group = rep.group.p_value;
        out.subset = rep.subset;
        return out;
      });
}

}  // namespace sparsefx
