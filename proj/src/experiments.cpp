#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>

#include "sparsefx/error.hpp"
#include "sparsefx/inference.hpp"
#include "sparsefx/parallel.hpp"
#include "sparsefx/selection.hpp"
#include "sparsefx/simharness.hpp"

namespace sparsefx {

RankingMethod baseline_ranking(EstimatorKind estimator, std::string name) {
  return {std::move(name), [estimator](const TrialDataset& ds, Index s_max) {
            // Without covariates the adjusted estimators reduce to DiM.
            const EstimatorKind kind = ds.has_covariates() ? estimator : EstimatorKind::DiM;
            return baseline_select(estimate_effect(ds, kind), s_max).selected;
          }};
}

RankingMethod sparse_ranking(double l1_ratio, std::string name) {
  return {std::move(name), [l1_ratio](const TrialDataset& ds, Index s_max) {
            EnetConfig config;
            config.l1_ratio = l1_ratio;
            return sparse_select(ds, BySize{s_max}, config).selected;
          }};
}

std::vector<RankingMethod> default_ranking_methods() {
  return {baseline_ranking(EstimatorKind::DiM, "baseline_dim"),
          baseline_ranking(EstimatorKind::CUPED, "baseline_cuped"),
          sparse_ranking(1.0, "lasso"), sparse_ranking(0.5, "enet")};
}

namespace {

struct Replicate {
  TrialDataset first;
  std::optional<TrialDataset> second;
  IndexSet support;
};

Replicate draw_replicate(const GeneratorSpec& spec, std::uint64_t seed, Index second_n) {
  Rng rng(seed);
  if (const auto* lin = std::get_if<LinearModelConfig>(&spec)) {
    const LinearModel model = draw_linear_model(*lin, rng);
    Replicate rep{sample_linear_model(model, lin->n, lin->pi, lin->observe_covariates, rng),
                  std::nullopt, {}};
    if (second_n > 0) {
      rep.second = sample_linear_model(model, second_n, lin->pi, lin->observe_covariates, rng);
    }
    for (Index j = 0; j < lin->s_tau; ++j) rep.support.push_back(j);
    return rep;
  }
  IndependentOutcomesConfig cfg = std::get<IndependentOutcomesConfig>(spec);
  cfg.seed = seed;
  GeneratedData first = gen_independent_outcomes(cfg);
  Replicate rep{std::move(first.data), std::nullopt, std::move(first.support)};
  if (second_n > 0) {
    cfg.n = second_n;
    cfg.seed = derive_seed(seed, 1);
    rep.second = gen_independent_outcomes(cfg).data;
  }
  return rep;
}

struct MethodOutcome {
  bool failed = false;
  std::vector<double> recovery;  // index s - 1
  std::vector<double> rejected;
};

std::vector<ExperimentMetrics> simulate(const GeneratorSpec& spec,
                                        const std::vector<RankingMethod>& methods, Index s_max,
                                        const SimulationOptions& opts, bool want_recovery,
                                        bool want_power) {
  std::visit([](const auto& cfg) { validate(cfg); }, spec);
  if (opts.replicates < 1) throw std::invalid_argument("replicates must be >= 1");
  if (s_max < 1) throw std::invalid_argument("s_max must be >= 1");
  if (methods.empty()) throw std::invalid_argument("at least one method is required");
  if (want_power && opts.second_sample_size < 4) {
    throw std::invalid_argument("second sample size must be >= 4");
  }

  const auto r_count = static_cast<std::size_t>(opts.replicates);
  std::vector<std::vector<MethodOutcome>> results(r_count);
  parallel_for(r_count, opts.jobs, [&](std::size_t r) {
    const Replicate rep =
        draw_replicate(spec, derive_seed(opts.seed, r), want_power ? opts.second_sample_size : 0);
    auto& row = results[r];
    row.resize(methods.size());
    for (std::size_t k = 0; k < methods.size(); ++k) {
      MethodOutcome& out = row[k];
      try {
        const IndexSet ranking = methods[k].rank(rep.first, s_max);
        if (static_cast<Index>(ranking.size()) < s_max) {
          throw DataError("ranking returned fewer than s_max indices");
        }
        for (Index s = 1; s <= s_max; ++s) {
          const IndexSet prefix(ranking.begin(), ranking.begin() + s);
          if (want_recovery) {
            const auto hits = std::count_if(prefix.begin(), prefix.end(), [&](Index j) {
              return std::find(rep.support.begin(), rep.support.end(), j) != rep.support.end();
            });
            out.recovery.push_back(static_cast<double>(hits) / static_cast<double>(s));
          }
          if (want_power) {
            const EstimatorKind kind =
                rep.second->has_covariates() ? opts.inference_estimator : EstimatorKind::DiM;
            const double p = hotelling_pvalue(estimate_effect(*rep.second, kind, prefix));
            out.rejected.push_back(p <= opts.level ? 1.0 : 0.0);
          }
        }
      } catch (const DataError&) {
        out = MethodOutcome{true, {}, {}};
      } catch (const NumericalError&) {
        out = MethodOutcome{true, {}, {}};
      } catch (const std::invalid_argument&) {
        out = MethodOutcome{true, {}, {}};
      }
    }
  });

  std::vector<ExperimentMetrics> metrics(methods.size());
  for (std::size_t k = 0; k < methods.size(); ++k) {
    ExperimentMetrics& mk = metrics[k];
    mk.method = methods[k].name;
    std::vector<double> rec(static_cast<std::size_t>(s_max), 0.0);
    std::vector<double> pow(static_cast<std::size_t>(s_max), 0.0);
    for (const auto& row : results) {
      const MethodOutcome& out = row[k];
      if (out.failed) {
        ++mk.failures;
        continue;
      }
      ++mk.replicates;
      for (std::size_t s = 0; s < rec.size(); ++s) {
        if (want_recovery) rec[s] += out.recovery[s];
        if (want_power) pow[s] += out.rejected[s];
      }
    }
    const double denom = mk.replicates > 0 ? static_cast<double>(mk.replicates)
                                           : std::numeric_limits<double>::quiet_NaN();
    for (Index s = 1; s <= s_max; ++s) {
      const auto idx = static_cast<std::size_t>(s - 1);
      if (want_recovery) mk.recovery_rate_by_size[s] = rec[idx] / denom;
      if (want_power) mk.power_by_size[s] = pow[idx] / denom;
    }
  }
  return metrics;
}

}  // namespace

std::vector<ExperimentMetrics> run_recovery_experiment(const GeneratorSpec& spec,
                                                       const std::vector<RankingMethod>& methods,
                                                       Index s_max, const SimulationOptions& opts) {
  return simulate(spec, methods, s_max, opts, true, false);
}

std::vector<ExperimentMetrics> run_power_experiment(const GeneratorSpec& spec,
                                                    const std::vector<RankingMethod>& methods,
                                                    Index s_max, const SimulationOptions& opts) {
  return simulate(spec, methods, s_max, opts, false, true);
}

std::vector<ExperimentMetrics> run_simulation(const GeneratorSpec& spec,
                                              const std::vector<RankingMethod>& methods,
                                              Index s_max, const SimulationOptions& opts) {
  return simulate(spec, methods, s_max, opts, true, true);
}

// ----------------------------------------------------------- semi-synthetic

TirLevels draw_tir_replicate(const TraceExperimentConfig& cfg, Rng& rng) {
  validate(cfg);
  const Index step = 1440 / cfg.points_per_day;
  const Index duration = cfg.effect_duration_minutes;
  std::uniform_int_distribution<Index> start_slot(0, (1440 - duration) / step);

  TirLevels out;
  out.effect_start = step * start_slot(rng);
  GlucoseTraces traces = gen_glucose_traces(cfg, rng);
  std::bernoulli_distribution coin(0.5);
  out.treatments = Vector(cfg.n);
  for (Index i = 0; i < cfg.n; ++i) out.treatments[i] = coin(rng) ? 1.0 : 0.0;
  out.traces = apply_window_effect(std::move(traces), out.effect_start,
                                   out.effect_start + duration, cfg.effect_magnitude,
                                   out.treatments);

  for (Index w : cfg.levels) {
    std::vector<std::string> y_labels;
    std::vector<std::string> x_labels;
    for (Index k = 0; k < 1440 / w; ++k) {
      const std::string tag = "w" + std::to_string(w) + "_" + std::to_string(k * w);
      y_labels.push_back("post_" + tag);
      x_labels.push_back("pre_" + tag);
    }
    out.levels.push_back(TrialDataset::create(
        out.treatments, tir_matrix(out.traces.week2, w, cfg.range_lo, cfg.range_hi),
        tir_matrix(out.traces.week1, w, cfg.range_lo, cfg.range_hi), std::move(y_labels),
        std::move(x_labels)));
  }
  return out;
}

double fixed_window_pvalue(const GlucoseTraces& traces, const Vector& treatments,
                           Index window_minutes, double lo, double hi) {
  const Matrix change = tir_matrix(traces.week2, window_minutes, lo, hi) -
                        tir_matrix(traces.week1, window_minutes, lo, hi);
  IndexSet all(static_cast<std::size_t>(change.cols()));
  std::iota(all.begin(), all.end(), Index{0});
  const EffectEstimate est = diff_in_means(treatments, change, all);
  const double k = static_cast<double>(change.cols());
  const double root_n = std::sqrt(static_cast<double>(est.n));
  double best = 1.0;
  for (Index j = 0; j < change.cols(); ++j) {
    const double var = est.sigma_hat(j, j);
    if (!(var > 0.0)) continue;  // a window with no variation carries no evidence
    const double z = root_n * std::abs(est.tau_hat[j]) / std::sqrt(var);
    best = std::min(best, 2.0 * normal_upper_tail(z) * k);
  }
  return std::min(1.0, best);
}

std::vector<ExperimentMetrics> run_semisynth_experiment(const TraceExperimentConfig& cfg,
                                                        const SemisynthOptions& opts) {
  validate(cfg);
  if (opts.replicates < 1) throw std::invalid_argument("replicates must be >= 1");
  if (opts.select_size < 1) throw std::invalid_argument("selection size must be >= 1");
  for (Index w : opts.baseline_windows) {
    if (w <= 0 || 1440 % w != 0) throw std::invalid_argument("baseline window must divide 1440");
  }

  const std::size_t n_methods = opts.baseline_windows.size() + 1;
  const auto r_count = static_cast<std::size_t>(opts.replicates);
  // -1 failed, 0 accepted, 1 rejected
  std::vector<std::vector<int>> outcome(r_count, std::vector<int>(n_methods, -1));

  parallel_for(r_count, opts.jobs, [&](std::size_t r) {
    const std::uint64_t rep_seed = derive_seed(cfg.seed, r);
    Rng rng(rep_seed);
    const TirLevels rep = draw_tir_replicate(cfg, rng);
    auto& row = outcome[r];

    auto guarded = [&](std::size_t k, auto&& pvalue) {
      try {
        row[k] = pvalue() <= opts.level ? 1 : 0;
      } catch (const DataError&) {
      } catch (const NumericalError&) {
      } catch (const std::invalid_argument&) {
      }
    };

    for (std::size_t k = 0; k < opts.baseline_windows.size(); ++k) {
      guarded(k, [&] {
        return fixed_window_pvalue(rep.traces, rep.treatments, opts.baseline_windows[k],
                                   cfg.range_lo, cfg.range_hi);
      });
    }

    guarded(n_methods - 1, [&] {
      MultiSplitOptions ms;
      ms.B = opts.B;
      ms.gamma = opts.gamma;
      ms.seed = derive_seed(rep_seed, 1);
      EnetConfig config;
      config.l1_ratio = opts.l1_ratio;
      const MultiSplitReport report = multi_split_generic(
          cfg.n, 0, ms, [&](std::span<const Index> first, std::span<const Index> second) {
            std::vector<TrialDataset> first_levels;
            for (const auto& level : rep.levels) first_levels.push_back(level.rows(first));
            const LevelSelection chosen =
                select_resolution_level(first_levels, BySize{opts.select_size}, config);
            const PValueReport inferred =
                infer_on_subset(rep.levels[chosen.level].rows(second), opts.estimator,
                                chosen.selection.selected);
            return SplitOutcome{Vector(0), inferred.group.p_value, chosen.selection.selected};
          });
      return report.group_aggregated;
    });
  });

  std::vector<ExperimentMetrics> metrics(n_methods);
  for (std::size_t k = 0; k < n_methods; ++k) {
    metrics[k].method = k + 1 < n_methods
                            ? "window_" + std::to_string(opts.baseline_windows[k])
                            : std::string("proposed");
    double rejections = 0.0;
    for (const auto& row : outcome) {
      if (row[k] < 0) {
        ++metrics[k].failures;
      } else {
        ++metrics[k].replicates;
        rejections += row[k];
      }
    }
    metrics[k].power = metrics[k].replicates > 0
                           ? rejections / static_cast<double>(metrics[k].replicates)
                           : std::numeric_limits<double>::quiet_NaN();
  }
  return metrics;
}

}  // namespace sparsefx
