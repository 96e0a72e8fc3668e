#include "sparsefx/wlasso.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "linalg.hpp"
#include "sparsefx/error.hpp"

namespace sparsefx {

RegressionWeights propensity_weights(const Vector& treatments) {
  const Index n = treatments.size();
  const double nt = treatments.sum();
  if (n < 1 || nt < 1.0 || nt > static_cast<double>(n - 1)) {
    throw std::invalid_argument("propensity weights need both treated and control units");
  }
  RegressionWeights out;
  out.pi_hat = nt / static_cast<double>(n);
  const double w1 = 1.0 / (out.pi_hat * out.pi_hat);
  const double w0 = 1.0 / ((1.0 - out.pi_hat) * (1.0 - out.pi_hat));
  out.w = treatments.unaryExpr([&](double t) { return t == 1.0 ? w1 : w0; });
  return out;
}

double soft_threshold(double x, double t) {
  if (x > t) return x - t;
  if (x < -t) return x + t;
  return 0.0;
}

WeightedEnetProblem::WeightedEnetProblem(const TrialDataset& ds, const RegressionWeights& weights,
                                         bool standardize)
    : standardize_(standardize) {
  const Index n = ds.n();
  const Index p = ds.p();
  if (weights.w.size() != n) throw std::invalid_argument("weight vector does not match dataset");
  if (n < 2) throw std::invalid_argument("weighted elastic net needs n >= 2");

  yc_ = ds.outcomes().rowwise() - ds.outcomes().colwise().mean();
  xc_ = ds.covariates().rowwise() - ds.covariates().colwise().mean();
  t_ = ds.treatments();
  w_ = weights.w;

  const Vector sqrt_w = w_.cwiseSqrt();
  if (ds.m() > 0) {
    if (ds.m() >= n) throw NumericalError("weighted covariate adjustment needs m < n");
    Eigen::ColPivHouseholderQR<Matrix> qr(detail::row_scaled(xc_, sqrt_w));
    if (qr.rank() < ds.m()) {
      throw NumericalError("weighted covariate Gram matrix is singular (rank " +
                           std::to_string(qr.rank()) + " < " + std::to_string(ds.m()) + ")");
    }
    gamma_ = qr.solve(detail::row_scaled(yc_, sqrt_w));
    gamma_t_ = qr.solve(sqrt_w.cwiseProduct(t_));
    z_ = yc_ - xc_ * gamma_;
    t_res_ = t_ - xc_ * gamma_t_;
  } else {
    gamma_ = Matrix::Zero(0, p);
    gamma_t_ = Vector::Zero(0);
    z_ = yc_;
    t_res_ = t_;
  }

  const double inv_n = 1.0 / static_cast<double>(n);
  degenerate_.assign(static_cast<std::size_t>(p), false);
  scale_ = Vector::Ones(p);
  h_.resize(p);
  for (Index j = 0; j < p; ++j) {
    const double raw = inv_n * w_.dot(yc_.col(j).cwiseAbs2());
    const double h = inv_n * w_.dot(z_.col(j).cwiseAbs2());
    if (raw == 0.0 || h <= 1e-12 * raw) {
      degenerate_[static_cast<std::size_t>(j)] = true;
      z_.col(j).setZero();
      h_[j] = 0.0;
      continue;
    }
    if (standardize_) {
      scale_[j] = std::sqrt(h);
      z_.col(j) /= scale_[j];
      h_[j] = 1.0;
    } else {
      h_[j] = h;
    }
  }
  wz_ = (w_ * inv_n).asDiagonal() * z_;
}

double WeightedEnetProblem::lambda_max(double l1_ratio) const {
  if (!(l1_ratio > 0.0 && l1_ratio <= 1.0)) throw std::invalid_argument("l1_ratio must lie in (0, 1]");
  double best = 0.0;
  for (Index j = 0; j < p(); ++j) {
    if (degenerate_[static_cast<std::size_t>(j)]) continue;
    best = std::max(best, std::abs(wz_.col(j).dot(t_res_)));
  }
  // Rounding guard so that a fit at exactly lambda_max thresholds every
  // coordinate to zero even after the division by l1_ratio.
  return best / l1_ratio * (1.0 + 8.0 * std::numeric_limits<double>::epsilon());
}

EnetFit WeightedEnetProblem::fit(const EnetConfig& config, const Vector* warm_start) const {
  if (!(config.lambda >= 0.0)) throw std::invalid_argument("lambda must be nonnegative");
  if (!(config.l1_ratio > 0.0 && config.l1_ratio <= 1.0)) {
    throw std::invalid_argument("l1_ratio must lie in (0, 1]");
  }
  if (!(config.tol > 0.0) || config.max_iter < 1) {
    throw std::invalid_argument("tol must be positive and max_iter >= 1");
  }
  if (config.standardize != standardize_) {
    throw std::invalid_argument("config.standardize does not match the problem");
  }

  const Index p_dim = p();
  const double l1 = config.lambda * config.l1_ratio;
  const double l2 = 2.0 * config.lambda * (1.0 - config.l1_ratio);
  const double inv_n = 1.0 / static_cast<double>(n());

  Vector b = Vector::Zero(p_dim);  // working-scale coefficients
  if (warm_start) {
    if (warm_start->size() != p_dim) throw std::invalid_argument("warm start has wrong length");
    b = warm_start->cwiseProduct(scale_);
    for (Index j = 0; j < p_dim; ++j) {
      if (degenerate_[static_cast<std::size_t>(j)]) b[j] = 0.0;
    }
  }
  Vector r = t_res_ - z_ * b;

  auto objective = [&]() {
    return inv_n * w_.dot(r.cwiseAbs2()) +
           2.0 * config.lambda *
               (config.l1_ratio * b.lpNorm<1>() + (1.0 - config.l1_ratio) * b.squaredNorm());
  };

  // One coordinate pass; returns the largest change in fitted-value units.
  auto sweep = [&](bool active_only) {
    double max_change = 0.0;
    for (Index j = 0; j < p_dim; ++j) {
      if (degenerate_[static_cast<std::size_t>(j)]) continue;
      const double old = b[j];
      if (active_only && old == 0.0) continue;
      const double g = wz_.col(j).dot(r) + h_[j] * old;
      const double updated = soft_threshold(g, l1) / (h_[j] + l2);
      const double delta = updated - old;
      if (delta != 0.0) {
        r.noalias() -= delta * z_.col(j);
        b[j] = updated;
        max_change = std::max(max_change, std::abs(delta) * std::sqrt(h_[j]));
      }
    }
    return max_change;
  };

  EnetFit fit;
  fit.lambda = config.lambda;
  const bool track = config.record_objective;
#ifndef NDEBUG
  double previous = objective();
#endif
  auto after_sweep = [&]() {
    ++fit.iterations;
    if (!r.allFinite()) throw NumericalError("non-finite residual in coordinate descent");
    if (track) fit.objective_trace.push_back(objective());
#ifndef NDEBUG
    const double now = objective();
    assert(now <= previous + 1e-12 * std::max(1.0, std::abs(previous)));
    previous = now;
#endif
  };

  while (fit.iterations < config.max_iter) {
    const double full_change = sweep(false);
    after_sweep();
    if (full_change < config.tol) {
      fit.converged = true;
      break;
    }
    while (fit.iterations < config.max_iter) {
      const double change = sweep(true);
      after_sweep();
      if (change < config.tol) break;
    }
  }

  fit.beta = b.cwiseQuotient(scale_);
  for (Index j = 0; j < p_dim; ++j) {
    if (fit.beta[j] != 0.0) fit.active_set.push_back(j);
  }
  fit.alpha_cov = gamma_t_ - gamma_ * fit.beta;
  const Vector resid = t_ - yc_ * fit.beta - xc_ * fit.alpha_cov;
  fit.weighted_rss = inv_n * w_.dot(resid.cwiseAbs2());
  if (!std::isfinite(fit.weighted_rss)) throw NumericalError("non-finite weighted RSS");
  return fit;
}

EnetFit fit_weighted_enet(const TrialDataset& ds, const RegressionWeights& weights,
                          const EnetConfig& config, const std::optional<Vector>& warm_start) {
  const WeightedEnetProblem problem(ds, weights, config.standardize);
  return problem.fit(config, warm_start ? &*warm_start : nullptr);
}

double lambda_max(const TrialDataset& ds, const RegressionWeights& weights, double l1_ratio,
                  bool standardize) {
  return WeightedEnetProblem(ds, weights, standardize).lambda_max(l1_ratio);
}

EnetPath regularization_path(const WeightedEnetProblem& problem, const PathOptions& options,
                             const EnetConfig& config) {
  if (options.n_lambdas < 2) throw std::invalid_argument("a path needs at least 2 lambdas");
  double ratio = options.lambda_min_ratio;
  if (ratio <= 0.0) ratio = problem.p() > problem.n() ? 0.01 : 1e-4;
  if (!(ratio < 1.0)) throw std::invalid_argument("lambda_min_ratio must lie in (0, 1)");

  EnetPath path;
  path.lambda_max = problem.lambda_max(config.l1_ratio);
  if (!(path.lambda_max > 0.0)) {
    throw DataError("lambda_max is zero: no outcome column is associated with treatment");
  }

  std::vector<bool> seen(static_cast<std::size_t>(problem.p()), false);
  EnetConfig cfg = config;
  std::optional<Vector> warm;
  for (int k = 0; k < options.n_lambdas; ++k) {
    const double frac = static_cast<double>(k) / static_cast<double>(options.n_lambdas - 1);
    cfg.lambda = path.lambda_max * std::pow(ratio, frac);
    EnetFit fit = problem.fit(cfg, warm ? &*warm : nullptr);

    IndexSet entering;
    for (Index j : fit.active_set) {
      if (!seen[static_cast<std::size_t>(j)]) entering.push_back(j);
    }
    std::stable_sort(entering.begin(), entering.end(), [&](Index a, Index b) {
      return std::abs(fit.beta[a]) > std::abs(fit.beta[b]);
    });
    for (Index j : entering) {
      seen[static_cast<std::size_t>(j)] = true;
      path.entry_order.push_back(j);
    }

    warm = fit.beta;
    path.lambdas.push_back(cfg.lambda);
    path.fits.push_back(std::move(fit));
    if (options.stop_at_entries > 0 &&
        static_cast<Index>(path.entry_order.size()) >= options.stop_at_entries) {
      break;
    }
  }
  return path;
}

EnetPath regularization_path(const TrialDataset& ds, const RegressionWeights& weights,
                             const PathOptions& options, const EnetConfig& config) {
  const WeightedEnetProblem problem(ds, weights, config.standardize);
  return regularization_path(problem, options, config);
}

double subset_weighted_rss(const TrialDataset& ds, const RegressionWeights& weights,
                           const IndexSet& subset) {
  const Index n = ds.n();
  if (weights.w.size() != n) throw std::invalid_argument("weight vector does not match dataset");
  const auto k = static_cast<Index>(subset.size());
  if (k > std::min<Index>(n - 2, ds.p())) {
    throw std::invalid_argument("subset too large for an unpenalized weighted fit");
  }
  const Vector sqrt_w = weights.w.cwiseSqrt();
  const Vector t = ds.treatments();
  const double inv_n = 1.0 / static_cast<double>(n);
  if (k == 0) return inv_n * weights.w.dot(t.cwiseAbs2());

  const Matrix ys = ds.outcomes()(Eigen::all, subset);
  Matrix z = ys.rowwise() - ys.colwise().mean();
  if (ds.has_covariates()) {
    const Matrix xc = ds.covariates().rowwise() - ds.covariates().colwise().mean();
    z -= xc * detail::least_squares(detail::row_scaled(xc, sqrt_w), detail::row_scaled(z, sqrt_w),
                                    "weighted covariate Gram matrix");
  }
  const Matrix a = detail::row_scaled(z, sqrt_w);
  const Vector target = sqrt_w.cwiseProduct(t);
  const Vector beta = detail::least_squares(a, target, "restricted weighted Gram matrix");
  return inv_n * (target - a * beta).squaredNorm();
}

}  // namespace sparsefx
