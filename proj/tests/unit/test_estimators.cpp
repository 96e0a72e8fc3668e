#include <doctest.h>

#include <numeric>

#include "support.hpp"
#include "sparsefx/error.hpp"
#include "sparsefx/estimators.hpp"

using namespace sparsefx;

namespace {

// OLS of each column of y on [1, x] via normal equations; returns slopes only.
Matrix ols_slopes(const Matrix& x, const Matrix& y) {
  Matrix a(x.rows(), x.cols() + 1);
  a.col(0).setOnes();
  a.rightCols(x.cols()) = x;
  const Matrix coef = (a.transpose() * a).inverse() * (a.transpose() * y);
  return coef.bottomRows(x.cols());
}

Matrix arm_rows(const Matrix& m, const Vector& t, double arm) {
  Matrix out(0, m.cols());
  for (Index i = 0; i < m.rows(); ++i) {
    if (t[i] != arm) continue;
    out.conservativeResize(out.rows() + 1, Eigen::NoChange);
    out.row(out.rows() - 1) = m.row(i);
  }
  return out;
}

}  // namespace

TEST_SUITE("estimators") {

TEST_CASE("difference in means hand example") {
  const Vector t = (Vector(4) << 1, 1, 0, 0).finished();
  const Matrix y = (Matrix(4, 1) << 3, 5, 1, 1).finished();
  const EffectEstimate est = diff_in_means(TrialDataset::create(t, y));
  CHECK(est.tau_hat[0] == doctest::Approx(3.0));
  CHECK(est.sigma_hat(0, 0) == doctest::Approx(2.0));
  CHECK(est.n_treated == 2);
  CHECK(est.n_control == 2);
  CHECK(est.n == 4);
}

TEST_CASE("difference in means edge cases") {
  const Vector t = (Vector(4) << 1, 1, 0, 0).finished();
  const EffectEstimate flat = diff_in_means(TrialDataset::create(t, Matrix::Constant(4, 2, 7.0)));
  CHECK(flat.tau_hat.cwiseAbs().maxCoeff() == 0.0);
  CHECK(flat.sigma_hat.cwiseAbs().maxCoeff() == 0.0);

  const Vector lonely = (Vector(4) << 1, 0, 0, 0).finished();
  CHECK_THROWS_AS(diff_in_means(TrialDataset::create(lonely, Matrix::Ones(4, 1))), DataError);
}

TEST_CASE("difference in means matches the loop oracle") {
  Rng rng(101);
  for (int trial = 0; trial < 50; ++trial) {
    const TrialDataset ds = testing::random_dataset(15 + trial % 7, 4, 0, 6, rng);
    const EffectEstimate est = diff_in_means(ds);
    const testing::DimOracle o = testing::dim_oracle(ds.treatments(), ds.outcomes());
    CHECK(testing::max_rel_diff(est.tau_hat, o.tau) < 1e-12);
    CHECK(testing::max_rel_diff(est.sigma_hat, o.sigma) < 1e-12);
    CHECK((est.sigma_hat - est.sigma_hat.transpose()).cwiseAbs().maxCoeff() <= 1e-10);

    const IndexSet sub{3, 1};
    const EffectEstimate part = diff_in_means(ds, sub);
    CHECK(part.index_set == sub);
    CHECK(part.tau_hat[0] == doctest::Approx(o.tau[3]));
    CHECK(part.sigma_hat(0, 1) == doctest::Approx(o.sigma(3, 1)));
  }
}

TEST_CASE("difference in means covariance is positive semidefinite") {
  Rng rng(7);
  for (int trial = 0; trial < 100; ++trial) {
    const TrialDataset ds = testing::random_dataset(6 + trial % 10, 5, 0, 3, rng);
    const EffectEstimate est = diff_in_means(ds);
    const Eigen::SelfAdjointEigenSolver<Matrix> eig(est.sigma_hat);
    CHECK(eig.eigenvalues().minCoeff() >= -1e-10);
  }
}

TEST_CASE("difference in means is unbiased over all assignments") {
  Rng rng(19);
  for (Index n = 4; n <= 8; ++n) {
    for (Index n_t = 2; n_t <= n - 2; ++n_t) {
      // Fixed potential outcomes; the observed outcome depends on assignment.
      const Vector y0 = testing::normal_matrix(n, 1, rng).col(0);
      const Vector y1 = y0 + testing::normal_matrix(n, 1, rng).col(0).array().matrix() +
                        Vector::Constant(n, 0.7);
      const double truth = (y1 - y0).mean();
      std::vector<int> mask(static_cast<std::size_t>(n), 0);
      std::fill(mask.end() - n_t, mask.end(), 1);
      double total = 0.0;
      long count = 0;
      do {
        Vector t(n);
        Matrix y(n, 1);
        for (Index i = 0; i < n; ++i) {
          t[i] = mask[static_cast<std::size_t>(i)];
          y(i, 0) = t[i] == 1.0 ? y1[i] : y0[i];
        }
        total += diff_in_means(TrialDataset::create(t, y)).tau_hat[0];
        ++count;
      } while (std::next_permutation(mask.begin(), mask.end()));
      CHECK(total / static_cast<double>(count) == doctest::Approx(truth).epsilon(1e-12));
    }
  }
}

TEST_CASE("CUPED examples") {
  const Vector t = (Vector(6) << 1, 0, 1, 0, 1, 0).finished();
  const Matrix x = (Matrix(6, 1) << -1, -1, 0, 0, 1, 1).finished();

  // Outcomes orthogonal to the centered covariate.
  const Matrix y_orth = (Matrix(6, 2) << 1, 2, 3, 5, 4, 1, 7, 3, 1, 2, 3, 5).finished();
  const AdjustedOutcomes same = cuped_adjust(TrialDataset::create(t, y_orth, x));
  CHECK(same.theta.cwiseAbs().maxCoeff() < 1e-12);
  CHECK((same.y_tilde - y_orth).cwiseAbs().maxCoeff() < 1e-12);

  const Matrix y_lin = 2.0 * x;
  const AdjustedOutcomes exact = cuped_adjust(TrialDataset::create(t, y_lin, x));
  CHECK(exact.theta(0, 0) == doctest::Approx(2.0));
  CHECK(exact.y_tilde.col(0).maxCoeff() - exact.y_tilde.col(0).minCoeff() < 1e-12);

  CHECK_THROWS(cuped_adjust(TrialDataset::create(t, y_lin)));
  const Matrix x_dup = (Matrix(6, 2) << -1, -1, -1, -1, 0, 0, 0, 0, 1, 1, 1, 1).finished();
  CHECK_THROWS_AS(cuped_adjust(TrialDataset::create(t, y_lin, x_dup)), NumericalError);
}

TEST_CASE("CUPED matches the normal-equations oracle") {
  Rng rng(29);
  for (int trial = 0; trial < 20; ++trial) {
    const TrialDataset ds = testing::random_dataset(20, 3, 2, 10, rng);
    const AdjustedOutcomes adj = cuped_adjust(ds);
    const Matrix theta = ols_slopes(ds.covariates(), ds.outcomes());
    CHECK(testing::max_rel_diff(adj.theta, theta) < 1e-10);
    const Matrix y_tilde = ds.outcomes() - ds.covariates() * theta;
    CHECK(testing::max_rel_diff(adj.y_tilde, y_tilde) < 1e-10);
  }
}

TEST_CASE("Lin examples and oracle") {
  Rng rng(31);
  // Identical slope-2 map in both arms with no noise: Lin and CUPED coincide.
  const Vector t = testing::fixed_treatments(12, 6, rng);
  const Matrix x = testing::normal_matrix(12, 1, rng);
  const Matrix y = 2.0 * x + t * 1.5;
  const TrialDataset ds = TrialDataset::create(t, y, x);
  const AdjustedOutcomes lin = lin_adjust(ds);
  CHECK(lin.theta(0, 0) == doctest::Approx(2.0));
  CHECK(lin.theta_control(0, 0) == doctest::Approx(2.0));
  // CUPED's pooled slope absorbs part of T unless x is balanced; compare against
  // CUPED on the untreated outcome map instead.
  const AdjustedOutcomes cup = cuped_adjust(TrialDataset::create(t, Matrix(2.0 * x), x));
  const AdjustedOutcomes lin0 = lin_adjust(TrialDataset::create(t, Matrix(2.0 * x), x));
  CHECK((lin0.y_tilde - cup.y_tilde).cwiseAbs().maxCoeff() < 1e-10);

  // Orthogonal within each arm.
  const Vector t4 = (Vector(8) << 1, 1, 1, 1, 0, 0, 0, 0).finished();
  const Matrix x4 = (Matrix(8, 1) << -1, 1, -1, 1, -1, 1, -1, 1).finished();
  const Matrix y4 = (Matrix(8, 1) << 2, 2, 3, 3, 0, 0, 5, 5).finished();
  const AdjustedOutcomes orth = lin_adjust(TrialDataset::create(t4, y4, x4));
  CHECK((orth.y_tilde - y4).cwiseAbs().maxCoeff() < 1e-12);

  for (int trial = 0; trial < 20; ++trial) {
    const TrialDataset r = testing::random_dataset(40, 3, 2, 18, rng);
    const AdjustedOutcomes a = lin_adjust(r);
    const Vector& tt = r.treatments();
    const Matrix th1 = ols_slopes(arm_rows(r.covariates(), tt, 1.0), arm_rows(r.outcomes(), tt, 1.0));
    const Matrix th0 = ols_slopes(arm_rows(r.covariates(), tt, 0.0), arm_rows(r.outcomes(), tt, 0.0));
    CHECK(testing::max_rel_diff(a.theta, th1) < 1e-10);
    CHECK(testing::max_rel_diff(a.theta_control, th0) < 1e-10);
    const double nt = 18.0, nc = 22.0, n = 40.0;
    const Matrix y_tilde = r.outcomes() - (nc / n) * r.covariates() * th1 - (nt / n) * r.covariates() * th0;
    CHECK(testing::max_rel_diff(a.y_tilde, y_tilde) < 1e-10);
  }
}

TEST_CASE("adjusted estimates") {
  Rng rng(37);
  // Zero adjustment reduces to plain difference in means.
  const Vector t = (Vector(6) << 1, 0, 1, 0, 1, 0).finished();
  const Matrix x = (Matrix(6, 1) << -1, -1, 0, 0, 1, 1).finished();
  const Matrix y = (Matrix(6, 2) << 1, 2, 3, 5, 4, 1, 7, 3, 1, 2, 3, 5).finished();
  const TrialDataset ds = TrialDataset::create(t, y, x);
  const EffectEstimate a = adjusted_estimate(ds, EstimatorKind::CUPED);
  const EffectEstimate d = diff_in_means(ds);
  CHECK(testing::max_rel_diff(a.tau_hat, d.tau_hat) < 1e-12);
  CHECK(testing::max_rel_diff(a.sigma_hat, d.sigma_hat) < 1e-12);
  CHECK(a.method == EstimatorKind::CUPED);

  // Noiseless linear outcome: CUPED recovers the effect exactly.
  const Vector t2 = testing::fixed_treatments(20, 10, rng);
  const Matrix x2 = testing::normal_matrix(20, 2, rng);
  const Vector beta = (Vector(2) << 1.5, -0.5).finished();
  const Matrix y2 = x2 * beta + 0.8 * t2;
  const TrialDataset ds2 = TrialDataset::create(t2, y2, x2);
  // Pooled regression without T absorbs part of the effect through x/T
  // imbalance; balance x exactly so the pooled slope is unbiased.
  Matrix xb = x2;
  for (Index j = 0; j < 2; ++j) {
    double m1 = 0, m0 = 0;
    for (Index i = 0; i < 20; ++i) (t2[i] == 1.0 ? m1 : m0) += x2(i, j) / 10.0;
    for (Index i = 0; i < 20; ++i) xb(i, j) -= t2[i] == 1.0 ? m1 : m0;
  }
  const Matrix yb = xb * beta + 0.8 * t2;
  const EffectEstimate exact = adjusted_estimate(TrialDataset::create(t2, yb, xb), EstimatorKind::CUPED);
  CHECK(exact.tau_hat[0] == doctest::Approx(0.8).epsilon(1e-12));
  CHECK(std::abs(exact.sigma_hat(0, 0)) < 1e-20 + 1e-12);
  const EffectEstimate lin_exact = adjusted_estimate(ds2, EstimatorKind::Lin);
  CHECK(lin_exact.tau_hat[0] == doctest::Approx(0.8).epsilon(1e-10));
  CHECK(std::abs(lin_exact.sigma_hat(0, 0)) < 1e-12);

  for (int trial = 0; trial < 20; ++trial) {
    const TrialDataset r = testing::random_dataset(30, 4, 2, 14, rng);
    for (EstimatorKind kind : {EstimatorKind::CUPED, EstimatorKind::Lin}) {
      const AdjustedOutcomes adj = kind == EstimatorKind::CUPED ? cuped_adjust(r) : lin_adjust(r);
      const EffectEstimate composed = diff_in_means(r.treatments(), adj.y_tilde, {0, 1, 2, 3}, kind);
      const EffectEstimate direct = adjusted_estimate(r, kind);
      CHECK(testing::max_rel_diff(direct.tau_hat, composed.tau_hat) < 1e-12);
      CHECK(testing::max_rel_diff(direct.sigma_hat, composed.sigma_hat) < 1e-12);
      const EffectEstimate sub = estimate_effect(r, kind, IndexSet{2, 0});
      CHECK(sub.tau_hat[0] == doctest::Approx(composed.tau_hat[2]).epsilon(1e-12));
      CHECK(sub.tau_hat[1] == doctest::Approx(composed.tau_hat[0]).epsilon(1e-12));
    }
  }
}

TEST_CASE("Lin reduces variance under strong covariate signal") {
  Rng rng(41);
  int wins = 0;
  const int reps = 200;
  for (int r = 0; r < reps; ++r) {
    const Vector t = testing::fixed_treatments(100, 50, rng);
    const Matrix x = testing::normal_matrix(100, 3, rng);
    const Matrix y = x * testing::normal_matrix(3, 4, rng, 2.0) + testing::normal_matrix(100, 4, rng);
    const TrialDataset ds = TrialDataset::create(t, y, x);
    const Vector lin = adjusted_estimate(ds, EstimatorKind::Lin).sigma_hat.diagonal();
    const Vector dim = diff_in_means(ds).sigma_hat.diagonal();
    wins += (lin.array() <= dim.array()).all() ? 1 : 0;
  }
  CHECK(wins >= 190);
}

TEST_CASE("estimator names round-trip") {
  for (EstimatorKind k : {EstimatorKind::DiM, EstimatorKind::CUPED, EstimatorKind::Lin}) {
    CHECK(parse_estimator(to_string(k)) == k);
  }
  CHECK_THROWS_AS(parse_estimator("ols"), std::invalid_argument);
}

}  // TEST_SUITE
