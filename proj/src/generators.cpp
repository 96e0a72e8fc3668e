#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "sparsefx/error.hpp"
#include "sparsefx/simharness.hpp"

namespace sparsefx {

namespace {

Vector draw_treatments(Index n, double pi, Rng& rng) {
  std::bernoulli_distribution coin(pi);
  Vector t(n);
  for (Index i = 0; i < n; ++i) t[i] = coin(rng) ? 1.0 : 0.0;
  return t;
}

// Row-major fill so the draw order does not depend on the storage layout.
Matrix draw_normal(Index rows, Index cols, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix out(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    for (Index j = 0; j < cols; ++j) out(i, j) = normal(rng);
  }
  return out;
}

Matrix draw_uniform(Index rows, Index cols, double lo, double hi, Rng& rng) {
  std::uniform_real_distribution<double> unif(lo, hi);
  Matrix out(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    for (Index j = 0; j < cols; ++j) out(i, j) = unif(rng);
  }
  return out;
}

IndexSet first_indices(Index s) {
  IndexSet out(static_cast<std::size_t>(s));
  for (Index j = 0; j < s; ++j) out[static_cast<std::size_t>(j)] = j;
  return out;
}

}  // namespace

void validate(const LinearModelConfig& cfg) {
  if (cfg.n < 2) throw std::invalid_argument("n must be >= 2");
  if (cfg.p < 1) throw std::invalid_argument("p must be >= 1");
  if (cfg.m < 0) throw std::invalid_argument("m must be >= 0");
  if (cfg.s_tau < 0 || cfg.s_tau > cfg.p) throw std::invalid_argument("s_tau must lie in [0, p]");
  if (!(cfg.pi > 0.0 && cfg.pi < 1.0)) throw std::invalid_argument("pi must lie in (0, 1)");
  if (cfg.observe_covariates > cfg.m) {
    throw std::invalid_argument("observe_covariates must not exceed m");
  }
  if (!std::isfinite(cfg.alpha)) throw std::invalid_argument("alpha must be finite");
}

void validate(const IndependentOutcomesConfig& cfg) {
  if (cfg.n < 2) throw std::invalid_argument("n must be >= 2");
  if (cfg.d < 1) throw std::invalid_argument("d must be >= 1");
  if (cfg.s_star < 0 || cfg.s_star > cfg.d) throw std::invalid_argument("s_star must lie in [0, d]");
  if (!(cfg.pi > 0.0 && cfg.pi < 1.0)) throw std::invalid_argument("pi must lie in (0, 1)");
  if (!std::isfinite(cfg.alpha)) throw std::invalid_argument("alpha must be finite");
}

LinearModel draw_linear_model(const LinearModelConfig& cfg, Rng& rng) {
  validate(cfg);
  LinearModel model;
  model.beta = draw_uniform(cfg.m, cfg.p, -1.0, 1.0, rng);
  model.delta = draw_uniform(cfg.m, cfg.p, 0.0, 1.0, rng);
  model.s_tau = cfg.s_tau;
  model.alpha = cfg.alpha;
  return model;
}

TrialDataset sample_linear_model(const LinearModel& model, Index n, double pi,
                                 Index observe_covariates, Rng& rng) {
  const Index m = model.beta.rows();
  const Index p = model.beta.cols();
  if (observe_covariates < 0) observe_covariates = m;
  if (observe_covariates > m) throw std::invalid_argument("observe_covariates must not exceed m");

  const Matrix x = draw_normal(n, m, rng);
  const Vector t = draw_treatments(n, pi, rng);
  Matrix y = draw_normal(n, p, rng);
  if (m > 0) y.noalias() += x * model.beta;
  for (Index j = 0; j < model.s_tau; ++j) {
    Vector effect = Vector::Constant(n, model.alpha);
    if (m > 0) effect.noalias() += x * model.delta.col(j);
    y.col(j) += t.cwiseProduct(effect);
  }
  return TrialDataset::create(t, std::move(y), x.leftCols(observe_covariates));
}

GeneratedData gen_linear_model(const LinearModelConfig& cfg) {
  Rng rng(cfg.seed);
  const LinearModel model = draw_linear_model(cfg, rng);
  return {sample_linear_model(model, cfg.n, cfg.pi, cfg.observe_covariates, rng),
          first_indices(cfg.s_tau)};
}

GeneratedData gen_independent_outcomes(const IndependentOutcomesConfig& cfg) {
  validate(cfg);
  Rng rng(cfg.seed);
  const Vector t = draw_treatments(cfg.n, cfg.pi, rng);
  Matrix y = draw_normal(cfg.n, cfg.d, rng);
  for (Index j = 0; j < cfg.s_star; ++j) y.col(j) += cfg.alpha * t;
  return {TrialDataset::create(t, std::move(y)), first_indices(cfg.s_star)};
}

GeneratedData gen_independent_outcomes(Index n, Index d, Index s_star, double alpha, double pi,
                                       std::uint64_t seed) {
  return gen_independent_outcomes(IndependentOutcomesConfig{n, d, s_star, alpha, pi, seed});
}

// ------------------------------------------------------------------ traces

void validate(const TraceExperimentConfig& cfg) {
  if (cfg.n < 4) throw std::invalid_argument("trace experiment needs n >= 4");
  if (cfg.points_per_day < 1 || 1440 % cfg.points_per_day != 0) {
    throw std::invalid_argument("points_per_day must divide 1440");
  }
  const Index step = 1440 / cfg.points_per_day;
  if (cfg.effect_duration_minutes <= 0 || cfg.effect_duration_minutes > 1440 ||
      cfg.effect_duration_minutes % step != 0) {
    throw std::invalid_argument("effect duration must be a positive multiple of the sampling step");
  }
  if (!(cfg.range_lo < cfg.range_hi)) throw std::invalid_argument("glucose range must satisfy lo < hi");
  if (cfg.levels.empty()) throw std::invalid_argument("at least one window level is required");
  for (Index w : cfg.levels) {
    if (w <= 0 || 1440 % w != 0 || w % step != 0) {
      throw std::invalid_argument("window of " + std::to_string(w) +
                                  " minutes must divide 1440 and be a multiple of the sampling step");
    }
  }
}

namespace {

// Generator constants (mg/dL and minutes).
constexpr double kBaseMean = 150.0;
constexpr double kBaseSd = 20.0;
constexpr double kWeekShiftSd = 13.0;  // week-specific level change
constexpr double kMealCenters[] = {450.0, 750.0, 1110.0};
constexpr double kMealAmpMean = 45.0;
constexpr double kMealAmpSd = 15.0;
constexpr double kMealWeekSd = 0.2;  // log-scale week-to-week amplitude wobble
constexpr double kMealShiftSd = 20.0;
constexpr double kMealWidth = 50.0;
constexpr double kSharedSd = 12.0;
constexpr double kSharedRange = 60.0;  // AR(1) correlation length
constexpr double kWeekSd = 20.0;
constexpr double kWeekRange = 45.0;
constexpr double kFloor = 40.0;
constexpr double kCeiling = 400.0;

void add_ar1(std::span<double> out, double sd, double phi, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  const double innovation = sd * std::sqrt(1.0 - phi * phi);
  double state = sd * normal(rng);
  for (double& v : out) {
    v += state;
    state = phi * state + innovation * normal(rng);
  }
}

}  // namespace

GlucoseTraces gen_glucose_traces(const TraceExperimentConfig& cfg, Rng& rng) {
  validate(cfg);
  const Index n = cfg.n;
  const Index points = cfg.points_per_day;
  const double dt = 1440.0 / static_cast<double>(points);
  const double phi_shared = std::exp(-dt / kSharedRange);
  const double phi_week = std::exp(-dt / kWeekRange);
  std::normal_distribution<double> normal(0.0, 1.0);

  GlucoseTraces out{Matrix(n, points), Matrix(n, points)};
  std::vector<double> common(static_cast<std::size_t>(points));
  std::vector<double> row(static_cast<std::size_t>(points));
  for (Index i = 0; i < n; ++i) {
    const double base = kBaseMean + kBaseSd * normal(rng);
    double amp[3];
    double center[3];
    for (int k = 0; k < 3; ++k) {
      amp[k] = std::max(0.0, kMealAmpMean + kMealAmpSd * normal(rng));
      center[k] = kMealCenters[k] + kMealShiftSd * normal(rng);
    }
    std::fill(common.begin(), common.end(), base);
    add_ar1(common, kSharedSd, phi_shared, rng);

    for (int week = 0; week < 2; ++week) {
      double week_amp[3];
      for (int k = 0; k < 3; ++k) week_amp[k] = amp[k] * std::exp(kMealWeekSd * normal(rng));
      row = common;
      const double shift = kWeekShiftSd * normal(rng);
      for (double& v : row) v += shift;
      add_ar1(row, kWeekSd, phi_week, rng);
      Matrix& target = week == 0 ? out.week1 : out.week2;
      for (Index t = 0; t < points; ++t) {
        const double minute = dt * static_cast<double>(t);
        double v = row[static_cast<std::size_t>(t)];
        for (int k = 0; k < 3; ++k) {
          const double u = (minute - center[k]) / kMealWidth;
          v += week_amp[k] * std::exp(-0.5 * u * u);
        }
        target(i, t) = std::clamp(v, kFloor, kCeiling);
      }
    }
  }
  return out;
}

GlucoseTraces gen_glucose_traces(const TraceExperimentConfig& cfg) {
  Rng rng(cfg.seed);
  return gen_glucose_traces(cfg, rng);
}

GlucoseTraces apply_window_effect(GlucoseTraces traces, Index start_minute, Index end_minute,
                                  double alpha, const Vector& treatments) {
  const Index points = traces.week2.cols();
  if (points < 1 || 1440 % points != 0) throw DataError("trace length must divide 1440");
  if (treatments.size() != traces.week2.rows()) {
    throw DataError("treatment vector length does not match the number of traces");
  }
  const Index step = 1440 / points;
  if (start_minute < 0 || end_minute > 1440 || start_minute >= end_minute ||
      start_minute % step != 0 || end_minute % step != 0) {
    throw DataError("effect interval [" + std::to_string(start_minute) + ", " +
                    std::to_string(end_minute) + ") is not aligned to the " +
                    std::to_string(step) + "-minute grid inside one day");
  }
  const Index first = start_minute / step;
  const Index count = (end_minute - start_minute) / step;
  for (Index i = 0; i < treatments.size(); ++i) {
    if (treatments[i] == 1.0) traces.week2.row(i).segment(first, count).array() -= alpha;
  }
  return traces;
}

double time_in_range(std::span<const double> values, double lo, double hi) {
  if (values.empty()) throw std::invalid_argument("time_in_range needs at least one value");
  const auto inside = std::count_if(values.begin(), values.end(),
                                    [&](double v) { return lo <= v && v <= hi; });
  return static_cast<double>(inside) / static_cast<double>(values.size());
}

Vector compute_tir(std::span<const double> trace, Index window_minutes, double lo, double hi) {
  const auto points = static_cast<Index>(trace.size());
  if (points < 1 || 1440 % points != 0) throw std::invalid_argument("trace length must divide 1440");
  const Index step = 1440 / points;
  if (window_minutes <= 0 || 1440 % window_minutes != 0 || window_minutes % step != 0) {
    throw std::invalid_argument("window of " + std::to_string(window_minutes) +
                                " minutes must divide 1440 and be a multiple of the sampling step");
  }
  const Index per_window = window_minutes / step;
  const Index windows = 1440 / window_minutes;
  Vector out(windows);
  for (Index k = 0; k < windows; ++k) {
    out[k] = time_in_range(trace.subspan(static_cast<std::size_t>(k * per_window),
                                         static_cast<std::size_t>(per_window)),
                           lo, hi);
  }
  return out;
}

Matrix tir_matrix(const Matrix& traces, Index window_minutes, double lo, double hi) {
  const Index windows = window_minutes > 0 ? 1440 / window_minutes : 0;
  Matrix out(traces.rows(), windows);
  std::vector<double> row(static_cast<std::size_t>(traces.cols()));
  for (Index i = 0; i < traces.rows(); ++i) {
    for (Index t = 0; t < traces.cols(); ++t) row[static_cast<std::size_t>(t)] = traces(i, t);
    out.row(i) = compute_tir(row, window_minutes, lo, hi).transpose();
  }
  return out;
}

}  // namespace sparsefx
