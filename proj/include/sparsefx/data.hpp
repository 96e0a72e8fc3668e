#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "sparsefx/types.hpp"

namespace sparsefx {

/// One row per unit: binary treatment, optional pre-treatment covariates and
/// the p-dimensional outcome summary. Immutable once created.
class TrialDataset {
 public:
  /// Validates and builds a dataset. Throws DataError when n < 2, when a
  /// treatment is not 0/1, when any outcome or covariate is non-finite, or
  /// when dimensions disagree. An empty (n x 0) covariate matrix means "no
  /// covariates". Missing labels are generated as y1..yp / x1..xm.
  static TrialDataset create(Vector treatments, Matrix outcomes,
                             Matrix covariates = Matrix(),
                             std::vector<std::string> outcome_labels = {},
                             std::vector<std::string> covariate_labels = {},
                             std::string treatment_label = "T");

  Index n() const { return treatments_.size(); }
  Index p() const { return outcomes_.cols(); }
  Index m() const { return covariates_.cols(); }
  bool has_covariates() const { return m() > 0; }

  Index n_treated() const { return n_treated_; }
  Index n_control() const { return n() - n_treated_; }

  const Vector& treatments() const { return treatments_; }
  const Matrix& outcomes() const { return outcomes_; }
  const Matrix& covariates() const { return covariates_; }

  const std::vector<std::string>& outcome_labels() const { return outcome_labels_; }
  const std::vector<std::string>& covariate_labels() const { return covariate_labels_; }
  const std::string& treatment_label() const { return treatment_label_; }

  /// Dataset made of the given rows, in the given order.
  TrialDataset rows(std::span<const Index> row_indices) const;

  /// Same units and covariates restricted to a subset of outcome columns.
  TrialDataset select_outcomes(const IndexSet& columns) const;

  /// Same units and treatments with a different outcome block.
  TrialDataset with_outcomes(Matrix outcomes, std::vector<std::string> labels = {}) const;

  /// Same units, treatments and outcomes with a different covariate block.
  TrialDataset with_covariates(Matrix covariates, std::vector<std::string> labels = {}) const;

 private:
  TrialDataset() = default;

  Vector treatments_;
  Matrix outcomes_;
  Matrix covariates_;
  std::vector<std::string> outcome_labels_;
  std::vector<std::string> covariate_labels_;
  std::string treatment_label_;
  Index n_treated_ = 0;
};

/// Two disjoint row sets of a parent dataset: one for selection, one for
/// inference. Row index vectors refer to the parent and are ascending.
struct SplitPair {
  TrialDataset first;
  TrialDataset second;
  std::vector<Index> first_rows;
  std::vector<Index> second_rows;
  std::uint64_t split_seed = 0;
};

/// Column roles for CSV ingestion. An entry ending in '*' matches every
/// header column with that prefix, in header order.
struct CsvSchema {
  std::string treatment;
  std::vector<std::string> outcomes;
  std::vector<std::string> covariates;
};

TrialDataset load_csv(const std::filesystem::path& path, const CsvSchema& schema);

/// Writes treatment, covariate and outcome columns (in that order) with
/// round-trip precision.
void write_csv(const std::filesystem::path& path, const TrialDataset& ds);

/// Uniform row split without replacement; n1 = round(fraction * n).
SplitPair random_split(const TrialDataset& ds, double fraction, std::uint64_t seed);

/// Uniform split of 0..n-1 into ascending index vectors of sizes
/// round(fraction * n) and the remainder. Shared by random_split and by
/// callers that split several aligned datasets the same way.
std::pair<std::vector<Index>, std::vector<Index>> split_rows(Index n, double fraction,
                                                             std::uint64_t seed);

struct CenteredColumns {
  Matrix centered;
  Vector means;
};

/// Subtracts the (optionally weighted) column means.
CenteredColumns center_columns(const Matrix& m, const std::optional<Vector>& weights = {});

}  // namespace sparsefx
