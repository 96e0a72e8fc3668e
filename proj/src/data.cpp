#include "sparsefx/data.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "sparsefx/error.hpp"
#include "sparsefx/rng.hpp"

namespace sparsefx {

namespace {

std::vector<std::string> default_labels(const std::string& prefix, Index count) {
  std::vector<std::string> labels;
  labels.reserve(static_cast<std::size_t>(count));
  for (Index j = 0; j < count; ++j) labels.push_back(prefix + std::to_string(j + 1));
  return labels;
}

void check_finite(const Matrix& m, const char* what) {
  for (Index j = 0; j < m.cols(); ++j) {
    for (Index i = 0; i < m.rows(); ++i) {
      if (!std::isfinite(m(i, j))) {
        throw DataError(std::string("non-finite ") + what + " value at row " +
                        std::to_string(i + 1) + ", column " + std::to_string(j + 1));
      }
    }
  }
}

}  // namespace

TrialDataset TrialDataset::create(Vector treatments, Matrix outcomes, Matrix covariates,
                                  std::vector<std::string> outcome_labels,
                                  std::vector<std::string> covariate_labels,
                                  std::string treatment_label) {
  const Index n = treatments.size();
  if (n < 2) throw DataError("n >= 2 required (got " + std::to_string(n) + " rows)");
  if (outcomes.rows() != n) {
    throw DataError("outcome matrix has " + std::to_string(outcomes.rows()) +
                    " rows, expected " + std::to_string(n));
  }
  if (outcomes.cols() < 1) throw DataError("at least one outcome column required");
  if (covariates.size() == 0) covariates.resize(n, 0);
  if (covariates.rows() != n) {
    throw DataError("covariate matrix has " + std::to_string(covariates.rows()) +
                    " rows, expected " + std::to_string(n));
  }

  Index treated = 0;
  for (Index i = 0; i < n; ++i) {
    const double t = treatments[i];
    if (t != 0.0 && t != 1.0) {
      throw DataError("treatment at row " + std::to_string(i + 1) + " is not 0/1");
    }
    treated += t == 1.0 ? 1 : 0;
  }
  check_finite(outcomes, "outcome");
  check_finite(covariates, "covariate");

  if (outcome_labels.empty()) outcome_labels = default_labels("y", outcomes.cols());
  if (covariate_labels.empty()) covariate_labels = default_labels("x", covariates.cols());
  if (static_cast<Index>(outcome_labels.size()) != outcomes.cols() ||
      static_cast<Index>(covariate_labels.size()) != covariates.cols()) {
    throw DataError("label count does not match column count");
  }

  TrialDataset ds;
  ds.treatments_ = std::move(treatments);
  ds.outcomes_ = std::move(outcomes);
  ds.covariates_ = std::move(covariates);
  ds.outcome_labels_ = std::move(outcome_labels);
  ds.covariate_labels_ = std::move(covariate_labels);
  ds.treatment_label_ = std::move(treatment_label);
  ds.n_treated_ = treated;
  return ds;
}

TrialDataset TrialDataset::rows(std::span<const Index> row_indices) const {
  const Index k = static_cast<Index>(row_indices.size());
  Vector t(k);
  Matrix y(k, p());
  Matrix x(k, m());
  for (Index r = 0; r < k; ++r) {
    const Index src = row_indices[static_cast<std::size_t>(r)];
    if (src < 0 || src >= n()) throw std::out_of_range("row index out of range");
    t[r] = treatments_[src];
    y.row(r) = outcomes_.row(src);
    if (m() > 0) x.row(r) = covariates_.row(src);
  }
  return create(std::move(t), std::move(y), std::move(x), outcome_labels_, covariate_labels_,
                treatment_label_);
}

TrialDataset TrialDataset::select_outcomes(const IndexSet& columns) const {
  std::vector<std::string> labels;
  labels.reserve(columns.size());
  for (Index j : columns) {
    if (j < 0 || j >= p()) throw std::out_of_range("outcome index out of range");
    labels.push_back(outcome_labels_[static_cast<std::size_t>(j)]);
  }
  return create(treatments_, outcomes_(Eigen::all, columns), covariates_, std::move(labels),
                covariate_labels_, treatment_label_);
}

TrialDataset TrialDataset::with_outcomes(Matrix outcomes, std::vector<std::string> labels) const {
  return create(treatments_, std::move(outcomes), covariates_, std::move(labels),
                covariate_labels_, treatment_label_);
}

TrialDataset TrialDataset::with_covariates(Matrix covariates,
                                           std::vector<std::string> labels) const {
  return create(treatments_, outcomes_, std::move(covariates), outcome_labels_,
                std::move(labels), treatment_label_);
}

std::pair<std::vector<Index>, std::vector<Index>> split_rows(Index n, double fraction,
                                                             std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0)) {
    throw std::invalid_argument("split fraction must lie in (0, 1)");
  }
  const Index n1 = static_cast<Index>(std::llround(fraction * static_cast<double>(n)));
  const Index n2 = n - n1;
  if (n1 < 2 || n2 < 2) {
    throw std::invalid_argument("split of " + std::to_string(n) + " rows at fraction " +
                                std::to_string(fraction) + " leaves a part with < 2 rows (n1=" +
                                std::to_string(n1) + ", n2=" + std::to_string(n2) + ")");
  }

  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  Rng rng(seed);
  // Partial Fisher-Yates: the first n1 slots are a uniform sample.
  for (Index i = 0; i < n1; ++i) {
    std::uniform_int_distribution<Index> pick(i, n - 1);
    std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(pick(rng))]);
  }
  std::vector<Index> first(order.begin(), order.begin() + n1);
  std::vector<Index> second(order.begin() + n1, order.end());
  std::sort(first.begin(), first.end());
  std::sort(second.begin(), second.end());
  return {std::move(first), std::move(second)};
}

SplitPair random_split(const TrialDataset& ds, double fraction, std::uint64_t seed) {
  auto [first_rows, second_rows] = split_rows(ds.n(), fraction, seed);
  SplitPair split{ds.rows(first_rows), ds.rows(second_rows), std::move(first_rows),
                  std::move(second_rows), seed};
  return split;
}

CenteredColumns center_columns(const Matrix& m, const std::optional<Vector>& weights) {
  if (m.rows() < 1) throw std::invalid_argument("center_columns needs at least one row");
  Vector means;
  if (weights) {
    if (weights->size() != m.rows()) throw std::invalid_argument("weight length mismatch");
    if ((weights->array() < 0.0).any()) throw std::invalid_argument("weights must be nonnegative");
    const double total = weights->sum();
    if (!(total > 0.0)) throw std::invalid_argument("weights must have a positive sum");
    means = (m.transpose() * *weights) / total;
  } else {
    means = m.colwise().mean().transpose();
  }
  Matrix centered = m.rowwise() - means.transpose();
  return {std::move(centered), std::move(means)};
}

}  // namespace sparsefx
