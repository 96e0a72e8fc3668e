#include "cli.hpp"

#include <CLI11.hpp>
#include <Eigen/Core>
#include <algorithm>
#include <boost/version.hpp>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <json.hpp>
#include <map>
#include <optional>
#include <sstream>

#include "sparsefx/data.hpp"
#include "sparsefx/error.hpp"
#include "sparsefx/estimators.hpp"
#include "sparsefx/inference.hpp"
#include "sparsefx/selection.hpp"
#include "sparsefx/simharness.hpp"
#include "sparsefx/wlasso.hpp"

#ifndef SPARSEFX_VERSION
#define SPARSEFX_VERSION "0.0.0"
#endif

namespace sparsefx::cli {

namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string join(const std::vector<std::string>& parts, char sep) {
  std::string out;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    if (k > 0) out += sep;
    out += parts[k];
  }
  return out;
}

fs::path absolute_path(const fs::path& p) { return fs::absolute(p).lexically_normal(); }

std::string text(double v) { return num(v); }
std::string text(int v) { return std::to_string(v); }
std::string text(long v) { return std::to_string(v); }
std::string text(unsigned long v) { return std::to_string(v); }
std::string text(const std::string& v) { return v; }
std::string text(const fs::path& v) { return absolute_path(v).string(); }
std::string text(const std::vector<std::string>& v) { return join(v, ','); }

// Remembers every registered option so a parsed command can be written back
// as a normalized argument list (defaults filled in, paths absolute).
struct Recorder {
  std::vector<std::function<void(std::vector<std::string>&)>> emitters;
  std::vector<const fs::path*> inputs;

  template <typename T>
  CLI::Option* option(CLI::App* app, const std::string& name, T& var, const std::string& desc) {
    emitters.push_back([name, &var](std::vector<std::string>& out) {
      if constexpr (std::is_same_v<T, std::vector<std::string>>) {
        if (var.empty()) return;
      }
      out.push_back(name);
      out.push_back(text(var));
    });
    auto* opt = app->add_option(name, var, desc)->capture_default_str();
    if constexpr (std::is_same_v<T, std::vector<std::string>>) opt->delimiter(',');
    return opt;
  }

  template <typename T>
  CLI::Option* option(CLI::App* app, const std::string& name, std::optional<T>& var,
                      const std::string& desc) {
    emitters.push_back([name, &var](std::vector<std::string>& out) {
      if (!var) return;
      out.push_back(name);
      out.push_back(text(*var));
    });
    return app->add_option(name, var, desc);
  }

  CLI::Option* input(CLI::App* app, const std::string& name, fs::path& var,
                     const std::string& desc) {
    inputs.push_back(&var);
    return option(app, name, var, desc)->required();
  }

  CLI::Option* flag(CLI::App* app, const std::string& name, bool& var, const std::string& desc) {
    emitters.push_back([name, &var](std::vector<std::string>& out) {
      if (var) out.push_back(name);
    });
    return app->add_flag(name, var, desc);
  }

  std::vector<std::string> normalized() const {
    std::vector<std::string> out;
    for (const auto& e : emitters) e(out);
    return out;
  }
};

// ------------------------------------------------------------------ output

class Table {
 public:
  explicit Table(std::vector<std::string> header) : header_(std::move(header)) {}
  void add(std::vector<std::string> row) { rows_.push_back(std::move(row)); }
  void write(const fs::path& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write '" + path.string() + "'");
    out << join(header_, ',') << '\n';
    for (const auto& r : rows_) out << join(r, ',') << '\n';
    if (!out) throw DataError("failed writing '" + path.string() + "'");
  }

 private:
  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

struct Context {
  fs::path out_dir;
  std::vector<std::string> outputs;
  std::ostream* log = nullptr;

  void write(const std::string& name, const Table& table) {
    table.write(out_dir / name);
    outputs.push_back(name);
  }
};

std::string fnv1a_hex(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read input '" + path.string() + "'");
  std::uint64_t h = 0xcbf29ce484222325ULL;
  char buf[1 << 14];
  while (in.read(buf, sizeof buf) || in.gcount() > 0) {
    for (std::streamsize k = 0; k < in.gcount(); ++k) {
      h ^= static_cast<unsigned char>(buf[k]);
      h *= 0x100000001b3ULL;
    }
  }
  char hex[17];
  std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(h));
  return hex;
}

// ------------------------------------------------------------- shared opts

struct CommonOpts {
  std::string out;
  std::uint64_t seed = 0;
  int jobs = 1;

  void add(CLI::App* app, Recorder& rec) {
    rec.option(app, "--out", out,
               "Output directory (default: $SPARSEFX_OUT_DIR, else the working directory)");
    rec.option(app, "--seed", seed, "Master random seed");
    rec.option(app, "--jobs", jobs, "Worker threads")->check(CLI::PositiveNumber);
  }

  // Fills in the output directory before the arguments are normalized.
  void resolve() {
    if (out.empty()) {
      const char* env = std::getenv("SPARSEFX_OUT_DIR");
      out = env != nullptr && *env != '\0' ? env : ".";
    }
    out = absolute_path(out).string();
  }
};

struct DataOpts {
  fs::path data;
  std::string treatment = "T";
  std::vector<std::string> outcomes{"y*"};
  std::vector<std::string> covariates;

  void add(CLI::App* app, Recorder& rec) {
    rec.input(app, "--data", data, "Input CSV with a header row");
    rec.option(app, "--treatment", treatment, "Treatment column (0/1)");
    rec.option(app, "--outcomes", outcomes, "Outcome columns; 'prefix*' matches by prefix");
    rec.option(app, "--covariates", covariates, "Pre-treatment covariate columns");
  }

  TrialDataset load() const { return load_csv(data, CsvSchema{treatment, outcomes, covariates}); }
};

struct SelectOpts {
  std::optional<Index> s;
  std::optional<double> lambda;
  double l1_ratio = 1.0;
  bool standardize = false;
  int n_lambdas = 100;
  double lambda_min_ratio = 0.0;

  void add(CLI::App* app, Recorder& rec) {
    auto* s_opt = rec.option(app, "--s", s, "Select this many outcomes along the path");
    auto* l_opt = rec.option(app, "--lambda", lambda, "Select the active set at this penalty");
    s_opt->excludes(l_opt);
    rec.option(app, "--l1-ratio", l1_ratio, "Elastic-net mixing (1 = Lasso)")
        ->check(CLI::Range(0.0, 1.0));
    rec.flag(app, "--standardize", standardize, "Scale working columns to unit weighted variance");
    rec.option(app, "--n-lambdas", n_lambdas, "Penalty grid size")->check(CLI::PositiveNumber);
    rec.option(app, "--lambda-min-ratio", lambda_min_ratio,
               "Smallest grid penalty relative to lambda_max (0 = automatic)");
  }

  void validate(bool need_mode) const {
    if (s && *s < 1) throw UsageError("--s must be >= 1");
    if (lambda && !(*lambda >= 0.0)) throw UsageError("--lambda must be >= 0");
    if (need_mode && !s && !lambda) throw UsageError("one of --s or --lambda is required");
    if (!(l1_ratio > 0.0)) throw UsageError("--l1-ratio must be > 0");
  }

  SelectionSpec spec() const {
    SelectionSpec out;
    if (s) {
      out.mode = BySize{*s};
    } else {
      out.mode = ByLambda{*lambda};
    }
    out.config.l1_ratio = l1_ratio;
    out.config.standardize = standardize;
    out.path.n_lambdas = n_lambdas;
    out.path.lambda_min_ratio = lambda_min_ratio;
    return out;
  }
};

CLI::Option* add_estimator(CLI::App* app, Recorder& rec, std::string& var) {
  return rec.option(app, "--estimator", var, "dim, cuped, lin or auto (cuped with covariates)")
      ->check(CLI::IsMember({"auto", "dim", "cuped", "lin"}));
}

EstimatorKind resolve_estimator(const std::string& name, const TrialDataset& ds) {
  if (name == "auto") return ds.has_covariates() ? EstimatorKind::CUPED : EstimatorKind::DiM;
  return parse_estimator(name);
}

std::string label_list(const TrialDataset& ds, const IndexSet& idx) {
  std::vector<std::string> parts;
  for (Index j : idx) parts.push_back(ds.outcome_labels()[static_cast<std::size_t>(j)]);
  return join(parts, ';');
}

// ---------------------------------------------------------------- commands

struct Command {
  virtual ~Command() = default;
  virtual void add(CLI::App* app, Recorder& rec) = 0;
  virtual void validate() {}
  virtual void execute(Context& ctx) = 0;
  CommonOpts common;
};

struct SelectCommand : Command {
  DataOpts data;
  SelectOpts sel;
  std::string selector = "sparse";
  std::string estimator = "auto";

  void add(CLI::App* app, Recorder& rec) override {
    data.add(app, rec);
    rec.option(app, "--selector", selector, "sparse (weighted elastic net) or baseline")
        ->check(CLI::IsMember({"sparse", "baseline"}));
    sel.add(app, rec);
    add_estimator(app, rec, estimator);
    common.add(app, rec);
  }

  void validate() override {
    sel.validate(true);
    if (selector == "baseline" && !sel.s) throw UsageError("--selector baseline needs --s");
  }

  void execute(Context& ctx) override {
    const TrialDataset ds = data.load();
    const SelectionSpec spec = sel.spec();
    SelectionResult res;
    std::optional<double> lmax;
    if (selector == "baseline") {
      res = baseline_select(estimate_effect(ds, resolve_estimator(estimator, ds)),
                            *sel.s);
    } else {
      res = sparse_select(ds, spec.mode, spec.config, spec.path);
      lmax = lambda_max(ds, propensity_weights(ds.treatments()), sel.l1_ratio, sel.standardize);
    }

    Table table({"rank", "index", "label", "score"});
    for (std::size_t k = 0; k < res.selected.size(); ++k) {
      const Index j = res.selected[k];
      table.add({std::to_string(k + 1), std::to_string(j),
                 ds.outcome_labels()[static_cast<std::size_t>(j)], num(res.scores[static_cast<Index>(k)])});
    }
    ctx.write("selection.csv", table);

    Table diag({"key", "value"});
    diag.add({"method", std::string(to_string(res.method))});
    diag.add({"mode", sel.s ? "by_size" : "by_lambda"});
    diag.add({"tuning", num(res.tuning)});
    diag.add({"l1_ratio", num(sel.l1_ratio)});
    diag.add({"lambda_max", lmax ? num(*lmax) : "NA"});
    diag.add({"weighted_rss", std::isnan(res.weighted_rss) ? "NA" : num(res.weighted_rss)});
    diag.add({"selected_size", std::to_string(res.selected.size())});
    diag.add({"n", std::to_string(ds.n())});
    diag.add({"n_treated", std::to_string(ds.n_treated())});
    diag.add({"p", std::to_string(ds.p())});
    diag.add({"m", std::to_string(ds.m())});
    ctx.write("selection_diagnostics.csv", diag);
  }
};

IndexSet read_selection(const fs::path& path, const TrialDataset& ds) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open selection file '" + path.string() + "'");
  std::string line;
  if (!std::getline(in, line)) throw DataError("selection file '" + path.string() + "' is empty");
  auto split = [](const std::string& s) {
    std::vector<std::string> f;
    std::stringstream ss(s);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
      f.push_back(cell);
    }
    return f;
  };
  const auto header = split(line);
  const auto col = std::find(header.begin(), header.end(), "label");
  if (col == header.end()) throw DataError("selection file has no 'label' column");
  const auto pos = static_cast<std::size_t>(col - header.begin());

  IndexSet out;
  const auto& labels = ds.outcome_labels();
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    ++row;
    const auto fields = split(line);
    if (fields.size() <= pos) throw DataError("selection row " + std::to_string(row) + " is too short");
    const auto it = std::find(labels.begin(), labels.end(), fields[pos]);
    if (it == labels.end()) {
      throw DataError("selected outcome '" + fields[pos] + "' is not an outcome column of the data");
    }
    const auto j = static_cast<Index>(it - labels.begin());
    if (std::find(out.begin(), out.end(), j) != out.end()) {
      throw DataError("outcome '" + fields[pos] + "' is selected twice");
    }
    out.push_back(j);
  }
  return out;
}

struct InferCommand : Command {
  DataOpts data;
  fs::path selection;
  std::string estimator = "auto";
  bool two_sided = false;

  void add(CLI::App* app, Recorder& rec) override {
    data.add(app, rec);
    rec.input(app, "--selection", selection, "selection.csv from the select command");
    add_estimator(app, rec, estimator);
    rec.flag(app, "--two-sided", two_sided, "Two-sided per-dimension z tests");
    common.add(app, rec);
  }

  void execute(Context& ctx) override {
    const TrialDataset ds = data.load();
    const IndexSet subset = read_selection(selection, ds);
    const PValueReport rep =
        infer_on_subset(ds, resolve_estimator(estimator, ds), subset, two_sided);

    Table per_dim({"index", "label", "tau_hat", "se", "p_value"});
    const double n = static_cast<double>(rep.estimate.n);
    for (std::size_t k = 0; k < rep.subset.size(); ++k) {
      const auto kk = static_cast<Index>(k);
      per_dim.add({std::to_string(rep.subset[k]),
                   ds.outcome_labels()[static_cast<std::size_t>(rep.subset[k])],
                   num(rep.estimate.tau_hat[kk]), num(std::sqrt(rep.estimate.sigma_hat(kk, kk) / n)),
                   num(rep.per_dim[k])});
    }
    ctx.write("per_dim.csv", per_dim);

    Table group({"statistic", "df", "p_value", "estimator", "n"});
    group.add({num(rep.group.statistic), std::to_string(rep.group.df), num(rep.group.p_value),
               std::string(to_string(resolve_estimator(estimator, ds))), std::to_string(ds.n())});
    ctx.write("group.csv", group);
  }
};

struct MultiSplitCommand : Command {
  DataOpts data;
  SelectOpts sel;
  std::string estimator = "auto";
  int B = 50;
  double gamma = 0.05;
  double fraction = 0.5;
  bool two_sided = false;

  void add(CLI::App* app, Recorder& rec) override {
    data.add(app, rec);
    sel.add(app, rec);
    add_estimator(app, rec, estimator);
    rec.option(app, "--B", B, "Number of random splits")->check(CLI::PositiveNumber);
    rec.option(app, "--gamma", gamma, "Aggregation quantile")->check(CLI::Range(0.0, 1.0));
    rec.option(app, "--fraction", fraction, "Share of units in the selection half")
        ->check(CLI::Range(0.0, 1.0));
    rec.flag(app, "--two-sided", two_sided, "Two-sided per-dimension z tests");
    common.add(app, rec);
  }

  void validate() override {
    sel.validate(true);
    if (!(gamma > 0.0 && gamma < 1.0)) throw UsageError("--gamma must lie in (0, 1)");
    if (!(fraction > 0.0 && fraction < 1.0)) throw UsageError("--fraction must lie in (0, 1)");
  }

  void execute(Context& ctx) override {
    const TrialDataset ds = data.load();
    MultiSplitOptions opts;
    opts.B = B;
    opts.gamma = gamma;
    opts.fraction = fraction;
    opts.seed = common.seed;
    opts.jobs = common.jobs;
    const MultiSplitReport rep =
        multi_split(ds, resolve_estimator(estimator, ds), sel.spec(), opts, two_sided);

    Table per_dim({"index", "label", "p_value", "times_selected"});
    for (Index j = 0; j < ds.p(); ++j) {
      long count = 0;
      for (const auto& s : rep.per_split_subsets) count += std::count(s.begin(), s.end(), j);
      per_dim.add({std::to_string(j), ds.outcome_labels()[static_cast<std::size_t>(j)],
                   num(rep.per_dim_aggregated[j]), std::to_string(count)});
    }
    ctx.write("multisplit.csv", per_dim);

    Table group({"B", "gamma", "p_value"});
    group.add({std::to_string(B), num(gamma), num(rep.group_aggregated)});
    ctx.write("multisplit_group.csv", group);

    Table splits({"split", "split_seed", "group_p_value", "selected"});
    for (int b = 0; b < B; ++b) {
      const auto bb = static_cast<std::size_t>(b);
      splits.add({std::to_string(b), std::to_string(split_seed(common.seed, bb)),
                  num(rep.per_split_group[b]), label_list(ds, rep.per_split_subsets[bb])});
    }
    ctx.write("splits.csv", splits);
  }
};

struct PathCommand : Command {
  DataOpts data;
  double l1_ratio = 1.0;
  bool standardize = false;
  int n_lambdas = 100;
  double lambda_min_ratio = 0.0;

  void add(CLI::App* app, Recorder& rec) override {
    data.add(app, rec);
    rec.option(app, "--l1-ratio", l1_ratio, "Elastic-net mixing (1 = Lasso)")
        ->check(CLI::Range(0.0, 1.0));
    rec.flag(app, "--standardize", standardize, "Scale working columns to unit weighted variance");
    rec.option(app, "--n-lambdas", n_lambdas, "Penalty grid size")->check(CLI::PositiveNumber);
    rec.option(app, "--lambda-min-ratio", lambda_min_ratio,
               "Smallest grid penalty relative to lambda_max (0 = automatic)");
    common.add(app, rec);
  }

  void validate() override {
    if (!(l1_ratio > 0.0)) throw UsageError("--l1-ratio must be > 0");
  }

  void execute(Context& ctx) override {
    const TrialDataset ds = data.load();
    const WeightedEnetProblem problem(ds, propensity_weights(ds.treatments()), standardize);
    PathOptions opts;
    opts.n_lambdas = n_lambdas;
    opts.lambda_min_ratio = lambda_min_ratio;
    EnetConfig config;
    config.l1_ratio = l1_ratio;
    config.standardize = standardize;
    const EnetPath path = regularization_path(problem, opts, config);

    Table table({"step", "lambda", "active_size", "weighted_rss", "iterations", "converged", "active"});
    for (std::size_t k = 0; k < path.fits.size(); ++k) {
      const EnetFit& f = path.fits[k];
      table.add({std::to_string(k), num(path.lambdas[k]), std::to_string(f.active_set.size()),
                 num(f.weighted_rss), std::to_string(f.iterations), f.converged ? "1" : "0",
                 label_list(ds, f.active_set)});
    }
    ctx.write("path.csv", table);

    Table entry({"order", "index", "label"});
    for (std::size_t k = 0; k < path.entry_order.size(); ++k) {
      const Index j = path.entry_order[k];
      entry.add({std::to_string(k + 1), std::to_string(j),
                 ds.outcome_labels()[static_cast<std::size_t>(j)]});
    }
    ctx.write("entry_order.csv", entry);
  }
};

struct SimulateCommand : Command {
  std::string generator = "linear";
  Index n = 200, p = 500, m = 50, s_tau = 5, observe = -1, replicates = 200, s_max = 0,
        second_n = 500;
  double alpha = 0.4, pi = 0.3, level = 0.05;
  std::string inference_estimator = "lin";

  void add(CLI::App* app, Recorder& rec) override {
    rec.option(app, "--generator", generator, "linear (covariate model) or independent")
        ->check(CLI::IsMember({"linear", "independent"}));
    rec.option(app, "--n", n, "Units in the selection dataset");
    rec.option(app, "--p", p, "Outcome dimension");
    rec.option(app, "--m", m, "Covariate dimension (linear generator)");
    rec.option(app, "--s-tau", s_tau, "Size of the true effect support");
    rec.option(app, "--alpha", alpha, "Treatment effect magnitude");
    rec.option(app, "--pi", pi, "Treatment probability");
    rec.option(app, "--observe", observe, "Covariates exposed to the methods (-1 = all)");
    rec.option(app, "--replicates", replicates, "Monte-Carlo replicates")->check(CLI::PositiveNumber);
    rec.option(app, "--s-max", s_max, "Largest selection size (0 = s-tau)");
    rec.option(app, "--second-n", second_n, "Units in the independent power dataset");
    rec.option(app, "--level", level, "Test level for power")->check(CLI::Range(0.0, 1.0));
    rec.option(app, "--inference-estimator", inference_estimator, "Estimator for the power test")
        ->check(CLI::IsMember({"dim", "cuped", "lin"}));
    common.add(app, rec);
  }

  void validate() override {
    if (s_max < 0) throw UsageError("--s-max must be >= 0");
    if ((s_max == 0 ? s_tau : s_max) < 1) throw UsageError("--s-max (or --s-tau) must be >= 1");
  }

  void execute(Context& ctx) override {
    GeneratorSpec spec;
    if (generator == "linear") {
      spec = LinearModelConfig{n, p, m, s_tau, alpha, pi, common.seed, observe};
    } else {
      spec = IndependentOutcomesConfig{n, p, s_tau, alpha, pi, common.seed};
    }
    SimulationOptions opts;
    opts.replicates = replicates;
    opts.seed = common.seed;
    opts.jobs = common.jobs;
    opts.second_sample_size = second_n;
    opts.level = level;
    opts.inference_estimator = parse_estimator(inference_estimator);
    const Index sizes = s_max == 0 ? s_tau : s_max;
    const auto metrics = run_simulation(spec, default_ranking_methods(), sizes, opts);

    Table recovery({"method", "size", "metric", "value"});
    Table power({"method", "size", "metric", "value"});
    Table summary({"method", "replicates", "failures"});
    for (const auto& mk : metrics) {
      for (const auto& [s, v] : mk.recovery_rate_by_size) {
        recovery.add({mk.method, std::to_string(s), "recovery_rate", num(v)});
      }
      for (const auto& [s, v] : mk.power_by_size) {
        power.add({mk.method, std::to_string(s), "power", num(v)});
      }
      summary.add({mk.method, std::to_string(mk.replicates), std::to_string(mk.failures)});
    }
    ctx.write("recovery.csv", recovery);
    ctx.write("power.csv", power);
    ctx.write("simulate_summary.csv", summary);
  }
};

struct SemisynthCommand : Command {
  Index n = 1000, replicates = 200, s = 2;
  double alpha = 11.0, gamma = 0.05, level = 0.05, l1_ratio = 1.0;
  int B = 50;
  std::string estimator = "cuped";

  void add(CLI::App* app, Recorder& rec) override {
    rec.option(app, "--n", n, "Units (trace pairs) per replicate");
    rec.option(app, "--alpha", alpha, "Glucose reduction inside the effect window (mg/dL)");
    rec.option(app, "--replicates", replicates, "Monte-Carlo replicates")->check(CLI::PositiveNumber);
    rec.option(app, "--B", B, "Splits per replicate")->check(CLI::PositiveNumber);
    rec.option(app, "--gamma", gamma, "Aggregation quantile")->check(CLI::Range(0.0, 1.0));
    rec.option(app, "--s", s, "Windows selected per level")->check(CLI::PositiveNumber);
    rec.option(app, "--l1-ratio", l1_ratio, "Elastic-net mixing (1 = Lasso)")
        ->check(CLI::Range(0.0, 1.0));
    rec.option(app, "--level", level, "Test level")->check(CLI::Range(0.0, 1.0));
    rec.option(app, "--estimator", estimator, "Estimator on the inference half")
        ->check(CLI::IsMember({"dim", "cuped", "lin"}));
    common.add(app, rec);
  }

  void validate() override {
    if (!(gamma > 0.0 && gamma < 1.0)) throw UsageError("--gamma must lie in (0, 1)");
    if (!(l1_ratio > 0.0)) throw UsageError("--l1-ratio must be > 0");
  }

  void execute(Context& ctx) override {
    TraceExperimentConfig cfg;
    cfg.n = n;
    cfg.effect_magnitude = alpha;
    cfg.seed = common.seed;
    SemisynthOptions opts;
    opts.replicates = replicates;
    opts.jobs = common.jobs;
    opts.B = B;
    opts.gamma = gamma;
    opts.level = level;
    opts.select_size = s;
    opts.l1_ratio = l1_ratio;
    opts.estimator = parse_estimator(estimator);
    const auto metrics = run_semisynth_experiment(cfg, opts);

    Table table({"method", "metric", "value", "replicates", "failures"});
    for (const auto& mk : metrics) {
      table.add({mk.method, "power", num(mk.power), std::to_string(mk.replicates),
                 std::to_string(mk.failures)});
    }
    ctx.write("power.csv", table);
  }
};

// ------------------------------------------------------------------ driver

json error_record(const char* kind, int code, const std::string& message) {
  return json{{"error", kind}, {"exit_code", code}, {"message", message}};
}

int report(std::ostream& err, const char* kind, int code, const std::string& message) {
  err << error_record(kind, code, message).dump() << '\n';
  return code;
}

void write_manifest(const fs::path& dir, const std::string& command,
                    const std::vector<std::string>& argv, const Recorder& rec,
                    const std::vector<std::string>& outputs) {
  json inputs = json::array();
  for (const fs::path* p : rec.inputs) {
    inputs.push_back({{"path", absolute_path(*p).string()}, {"fnv1a64", fnv1a_hex(*p)}});
  }
  std::ostringstream eigen;
  eigen << EIGEN_WORLD_VERSION << '.' << EIGEN_MAJOR_VERSION << '.' << EIGEN_MINOR_VERSION;
  const json manifest = {
      {"tool", "sparsefx"},
      {"version", SPARSEFX_VERSION},
      {"command", command},
      {"argv", argv},
      {"inputs", inputs},
      {"outputs", outputs},
      {"libraries",
       {{"eigen", eigen.str()},
        {"boost", std::to_string(BOOST_VERSION / 100000) + "." +
                      std::to_string(BOOST_VERSION / 100 % 1000)}}},
  };
  std::ofstream out(dir / "manifest.json", std::ios::binary);
  if (!out) throw DataError("cannot write manifest in '" + dir.string() + "'");
  out << manifest.dump(2) << '\n';
}

int run_rerun(const fs::path& manifest_path, const std::string& out_override, std::ostream& out,
              std::ostream& err) {
  std::ifstream in(manifest_path);
  if (!in) throw DataError("cannot open manifest '" + manifest_path.string() + "'");
  json manifest;
  try {
    manifest = json::parse(in);
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed manifest: ") + e.what());
  }
  if (!manifest.contains("argv") || !manifest["argv"].is_array()) {
    throw DataError("manifest has no argv list");
  }
  std::vector<std::string> args = manifest["argv"].get<std::vector<std::string>>();
  if (args.empty() || args.front() == "rerun") throw DataError("manifest argv is not a command");
  for (const auto& entry : manifest.value("inputs", json::array())) {
    const fs::path p = entry.at("path").get<std::string>();
    if (fnv1a_hex(p) != entry.at("fnv1a64").get<std::string>()) {
      throw DataError("input '" + p.string() + "' changed since the manifest was written");
    }
  }
  if (!out_override.empty()) {
    const auto it = std::find(args.begin(), args.end(), "--out");
    if (it == args.end() || it + 1 == args.end()) throw DataError("manifest argv lacks --out");
    *(it + 1) = absolute_path(out_override).string();
  }
  return run(args, out, err);
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Sparse subset selection and inference for high-dimensional treatment effects",
               "sparsefx"};
  app.require_subcommand(1);
  app.set_version_flag("--version", SPARSEFX_VERSION);

  std::map<std::string, std::unique_ptr<Command>> commands;
  commands["select"] = std::make_unique<SelectCommand>();
  commands["infer"] = std::make_unique<InferCommand>();
  commands["multisplit"] = std::make_unique<MultiSplitCommand>();
  commands["path"] = std::make_unique<PathCommand>();
  commands["simulate"] = std::make_unique<SimulateCommand>();
  commands["semisynth"] = std::make_unique<SemisynthCommand>();
  const std::map<std::string, std::string> about = {
      {"select", "Choose an outcome subset (first split)"},
      {"infer", "Test a selected subset (second split)"},
      {"multisplit", "Repeated split-select-infer with p-value aggregation"},
      {"path", "Weighted elastic-net regularization path"},
      {"simulate", "Recovery-rate and power simulation"},
      {"semisynth", "Synthetic glucose-trace window experiment"},
  };

  std::map<std::string, Recorder> recorders;
  std::map<std::string, CLI::App*> subs;
  for (auto& [name, cmd] : commands) {
    subs[name] = app.add_subcommand(name, about.at(name));
    cmd->add(subs[name], recorders[name]);
  }
  fs::path manifest_path;
  std::string rerun_out;
  CLI::App* rerun = app.add_subcommand("rerun", "Repeat a run from its manifest.json");
  rerun->add_option("--manifest", manifest_path, "manifest.json of an earlier run")->required();
  rerun->add_option("--out", rerun_out, "Write into this directory instead");

  std::string command = "sparsefx";
  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
    if (rerun->parsed()) {
      command = "rerun";
      return run_rerun(manifest_path, rerun_out, out, err);
    }
    for (auto& [name, cmd] : commands) {
      if (!subs[name]->parsed()) continue;
      command = name;
      cmd->validate();
      cmd->common.resolve();
      std::vector<std::string> argv{name};
      const auto rest = recorders[name].normalized();
      argv.insert(argv.end(), rest.begin(), rest.end());

      Context ctx;
      ctx.out_dir = cmd->common.out;
      ctx.log = &out;
      fs::create_directories(ctx.out_dir);
      cmd->execute(ctx);
      write_manifest(ctx.out_dir, name, argv, recorders[name], ctx.outputs);
      out << "wrote " << join(ctx.outputs, ' ') << " manifest.json to " << ctx.out_dir.string()
          << '\n';
      return kOk;
    }
    return report(err, "usage", kUsage, "no command given");
  } catch (const CLI::Success& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    return report(err, "usage", kUsage, e.what());
  } catch (const UsageError& e) {
    return report(err, "usage", kUsage, command + ": " + e.what());
  } catch (const std::invalid_argument& e) {
    return report(err, "usage", kUsage, command + ": " + e.what());
  } catch (const DataError& e) {
    return report(err, "data_error", kDataError, command + ": " + e.what());
  } catch (const fs::filesystem_error& e) {
    return report(err, "data_error", kDataError, command + ": " + e.what());
  } catch (const NumericalError& e) {
    return report(err, "numerical_failure", kNumerical, command + ": " + e.what());
  } catch (const std::exception& e) {
    return report(err, "numerical_failure", kNumerical, command + ": " + e.what());
  }
}

}  // namespace sparsefx::cli
