#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "sparsefx/data.hpp"
#include "sparsefx/estimators.hpp"
#include "sparsefx/rng.hpp"

namespace sparsefx {

// ---------------------------------------------------------------- generators

/// Y_ij = X_i'b_j + T_i (alpha + X_i'd_j) I(j < s_tau) + e_ij with
/// X ~ N(0, I_m), T ~ Bernoulli(pi), e ~ N(0, 1), b_j ~ Unif(-1, 1)^m and
/// d_j ~ Unif(0, 1)^m.
struct LinearModelConfig {
  Index n = 200;
  Index p = 500;
  Index m = 50;
  Index s_tau = 5;
  double alpha = 0.4;
  double pi = 0.3;
  std::uint64_t seed = 0;
  Index observe_covariates = -1;  ///< columns of X exposed; negative means all m
};

/// Y_ij = alpha T_i I(j < s_star) + e_ij.
struct IndependentOutcomesConfig {
  Index n = 200;
  Index d = 500;
  Index s_star = 5;
  double alpha = 0.4;
  double pi = 0.5;
  std::uint64_t seed = 0;
};

using GeneratorSpec = std::variant<LinearModelConfig, IndependentOutcomesConfig>;

/// Coefficients of one draw of the linear model (m x p each).
struct LinearModel {
  Matrix beta;
  Matrix delta;
  Index s_tau = 0;
  double alpha = 0.0;
};

struct GeneratedData {
  TrialDataset data;
  IndexSet support;  ///< 0-based true effect support {0, ..., s - 1}
};

void validate(const LinearModelConfig& cfg);
void validate(const IndependentOutcomesConfig& cfg);

LinearModel draw_linear_model(const LinearModelConfig& cfg, Rng& rng);

/// n units from fixed coefficients; the dataset exposes the first
/// `observe_covariates` columns of X.
TrialDataset sample_linear_model(const LinearModel& model, Index n, double pi,
                                 Index observe_covariates, Rng& rng);

/// Draws coefficients then n units, all from cfg.seed.
GeneratedData gen_linear_model(const LinearModelConfig& cfg);

GeneratedData gen_independent_outcomes(const IndependentOutcomesConfig& cfg);
GeneratedData gen_independent_outcomes(Index n, Index d, Index s_star, double alpha, double pi,
                                       std::uint64_t seed);

// ------------------------------------------------------------ glucose traces

struct TraceExperimentConfig {
  Index n = 1000;
  Index points_per_day = 288;
  double effect_magnitude = 0.0;  ///< glucose units subtracted inside the effect window
  Index effect_duration_minutes = 120;
  double range_lo = 70.0;
  double range_hi = 180.0;
  std::vector<Index> levels{240, 120, 60};  ///< window minutes, coarse to fine
  std::uint64_t seed = 0;
};

void validate(const TraceExperimentConfig& cfg);

/// Day-averaged traces (n x points_per_day) for the week before and the week
/// after treatment.
struct GlucoseTraces {
  Matrix week1;
  Matrix week2;
};

/// Baseline level, three meal bumps (07:30, 12:30, 18:30) and smooth AR(1)
/// noise, part of it shared between the two weeks of a unit. Values are
/// clipped to [40, 400].
GlucoseTraces gen_glucose_traces(const TraceExperimentConfig& cfg, Rng& rng);
GlucoseTraces gen_glucose_traces(const TraceExperimentConfig& cfg);

/// Subtracts alpha from the week-2 points of treated units whose time lies in
/// [start_minute, end_minute). Throws DataError unless both ends sit on the
/// sampling grid inside [0, 1440].
GlucoseTraces apply_window_effect(GlucoseTraces traces, Index start_minute, Index end_minute,
                                  double alpha, const Vector& treatments);

/// Fraction of values v with lo <= v <= hi.
double time_in_range(std::span<const double> values, double lo, double hi);

/// Per-window TIR of a one-day trace sampled evenly over 1440 minutes.
/// Length 1440 / window_minutes.
Vector compute_tir(std::span<const double> trace, Index window_minutes, double lo, double hi);

/// Row-wise compute_tir: n x (1440 / window_minutes).
Matrix tir_matrix(const Matrix& traces, Index window_minutes, double lo, double hi);

// --------------------------------------------------------------- experiments

/// A ranking method maps a dataset to an ordered list of s_max outcome
/// indices; S(s) is its length-s prefix.
struct RankingMethod {
  std::string name;
  std::function<IndexSet(const TrialDataset&, Index s_max)> rank;
};

/// Ranks by studentized effect size of the given estimator.
RankingMethod baseline_ranking(EstimatorKind estimator, std::string name);

/// Ranks by first entry along the weighted elastic-net path.
RankingMethod sparse_ranking(double l1_ratio, std::string name);

/// baseline_dim, baseline_cuped, lasso and enet (l1_ratio 0.5).
std::vector<RankingMethod> default_ranking_methods();

struct ExperimentMetrics {
  std::string method;
  std::map<Index, double> recovery_rate_by_size;
  std::map<Index, double> power_by_size;
  double power = 0.0;  ///< single-figure power (semi-synthetic runs)
  Index replicates = 0;
  Index failures = 0;
};

/// Replicate r draws from derive_seed(seed, r); the generator config's own
/// seed field is not used by the experiment drivers.
struct SimulationOptions {
  Index replicates = 200;
  std::uint64_t seed = 0;
  int jobs = 1;
  Index second_sample_size = 500;
  double level = 0.05;
  /// Estimator for the group test on the second dataset; DiM is used when
  /// the generator has no covariates.
  EstimatorKind inference_estimator = EstimatorKind::Lin;
};

/// Mean recovery rate |S(s) n S_tau| / s for s = 1..s_max per method. A
/// method that throws on a replicate counts as a failure and the replicate
/// is left out of that method's mean.
std::vector<ExperimentMetrics> run_recovery_experiment(const GeneratorSpec& spec,
                                                       const std::vector<RankingMethod>& methods,
                                                       Index s_max, const SimulationOptions& opts);

/// Power of the Hotelling test on S(s), s = 1..s_max, computed on an
/// independent second dataset from the same coefficients.
std::vector<ExperimentMetrics> run_power_experiment(const GeneratorSpec& spec,
                                                    const std::vector<RankingMethod>& methods,
                                                    Index s_max, const SimulationOptions& opts);

/// Both metrics from the same replicates.
std::vector<ExperimentMetrics> run_simulation(const GeneratorSpec& spec,
                                              const std::vector<RankingMethod>& methods,
                                              Index s_max, const SimulationOptions& opts);

struct SemisynthOptions {
  Index replicates = 200;
  int jobs = 1;
  int B = 50;
  double gamma = 0.05;
  double level = 0.05;
  Index select_size = 2;
  double l1_ratio = 1.0;
  EstimatorKind estimator = EstimatorKind::CUPED;
  /// Window minutes of the fixed-window baselines.
  std::vector<Index> baseline_windows{240, 120};
};

/// One replicate's outcome matrices: TIR per level for both weeks.
struct TirLevels {
  std::vector<TrialDataset> levels;  ///< outcomes week 2, covariates week 1
  GlucoseTraces traces;              ///< after the effect was applied
  Vector treatments;
  Index effect_start = 0;
};

/// Builds one replicate: random grid-aligned effect window, traces,
/// Bernoulli(0.5) treatment, effect, and per-level TIR datasets.
TirLevels draw_tir_replicate(const TraceExperimentConfig& cfg, Rng& rng);

/// Fixed-window baseline: two-sided z tests on week-2 minus week-1 TIR per
/// window with Bonferroni correction; returns the smallest corrected p.
double fixed_window_pvalue(const GlucoseTraces& traces, const Vector& treatments,
                           Index window_minutes, double lo, double hi);

/// Methods "window_<minutes>" for each baseline window and "proposed" for
/// multi-resolution selection with multi-sample splitting.
std::vector<ExperimentMetrics> run_semisynth_experiment(const TraceExperimentConfig& cfg,
                                                        const SemisynthOptions& opts);

}  // namespace sparsefx
