#include <doctest.h>

#include <algorithm>
#include <cstring>
#include <limits>

#include "../support.hpp"
#include "sparsefx/data.hpp"
#include "sparsefx/error.hpp"

using namespace sparsefx;
using testing::TempDir;

namespace {

std::string error_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const std::exception& e) {
    return e.what();
  }
  return "";
}

bool bitwise_equal(const Matrix& a, const Matrix& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() &&
         std::memcmp(a.data(), b.data(), sizeof(double) * static_cast<std::size_t>(a.size())) == 0;
}

}  // namespace

TEST_SUITE("data") {

TEST_CASE("load_csv parses a small file") {
  TempDir dir("data");
  const auto f = dir.file("a.csv", "T,y1,y2\n1,0.5,2\n0,1.5,-3\n1,2,4e-1\n0,3,0\n");
  const TrialDataset ds = load_csv(f, {"T", {"y1", "y2"}, {}});
  CHECK(ds.n() == 4);
  CHECK(ds.p() == 2);
  CHECK(ds.m() == 0);
  CHECK(ds.n_treated() == 2);
  CHECK(ds.outcomes()(2, 1) == doctest::Approx(0.4));
  CHECK(ds.outcome_labels() == std::vector<std::string>{"y1", "y2"});
}

TEST_CASE("load_csv keeps schema order and expands prefixes") {
  TempDir dir("data");
  const auto f = dir.file("a.csv", "x1,b,T,a,x2\n1,10,1,20,2\n3,30,0,40,4\n5,50,1,60,6\n");
  const TrialDataset ds = load_csv(f, {"T", {"a", "b"}, {"x*"}});
  CHECK(ds.outcome_labels() == std::vector<std::string>{"a", "b"});
  CHECK(ds.covariate_labels() == std::vector<std::string>{"x1", "x2"});
  CHECK(ds.outcomes()(0, 0) == 20.0);
  CHECK(ds.outcomes()(0, 1) == 10.0);
  CHECK(ds.covariates()(2, 1) == 6.0);
}

TEST_CASE("load_csv tolerates BOM, CRLF, quotes and blank lines") {
  TempDir dir("data");
  const auto f = dir.file("a.csv", "\xEF\xBB\xBF\"T\",\"y\"\r\n1, 2 \r\n\r\n0,3\r\n");
  const TrialDataset ds = load_csv(f, {"T", {"y"}, {}});
  CHECK(ds.n() == 2);
  CHECK(ds.outcomes()(0, 0) == 2.0);
}

TEST_CASE("load_csv reports the offending row and column") {
  TempDir dir("data");
  const auto bad_t = dir.file("t.csv", "T,y\n1,1\n0,2\n2,3\n");
  const std::string msg = error_of([&] { load_csv(bad_t, {"T", {"y"}, {}}); });
  CHECK(msg.find("row 3") != std::string::npos);
  CHECK_THROWS_AS(load_csv(bad_t, {"T", {"y"}, {}}), DataError);

  const auto bad_cell = dir.file("c.csv", "T,y\n1,1\n0,abc\n");
  const std::string cell_msg = error_of([&] { load_csv(bad_cell, {"T", {"y"}, {}}); });
  CHECK(cell_msg.find("row 2") != std::string::npos);
  CHECK(cell_msg.find("'y'") != std::string::npos);

  const auto ragged = dir.file("r.csv", "T,y\n1,1\n0\n");
  const std::string ragged_msg = error_of([&] { load_csv(ragged, {"T", {"y"}, {}}); });
  CHECK(ragged_msg.find("row 2") != std::string::npos);

  const auto empty_cell = dir.file("e.csv", "T,y\n1,\n0,1\n");
  CHECK_THROWS_AS(load_csv(empty_cell, {"T", {"y"}, {}}), DataError);
}

TEST_CASE("load_csv rejects header-only files, missing files and unknown columns") {
  TempDir dir("data");
  const auto header_only = dir.file("h.csv", "T,y\n");
  const std::string msg = error_of([&] { load_csv(header_only, {"T", {"y"}, {}}); });
  CHECK(msg.find("n >= 2 required") != std::string::npos);
  CHECK_THROWS_AS(load_csv(dir.path / "missing.csv", {"T", {"y"}, {}}), DataError);
  const auto f = dir.file("a.csv", "T,y\n1,1\n0,2\n");
  CHECK_THROWS_AS(load_csv(f, {"T", {"z"}, {}}), DataError);
  CHECK_THROWS_AS(load_csv(f, {"T", {"q*"}, {}}), DataError);
  const auto nan = dir.file("n.csv", "T,y\n1,nan\n0,2\n");
  CHECK_THROWS_AS(load_csv(nan, {"T", {"y"}, {}}), DataError);
}

TEST_CASE("write then load round-trips values bit for bit") {
  Rng rng(17);
  std::uniform_int_distribution<int> dim(1, 5);
  std::uniform_int_distribution<int> rows(2, 30);
  std::uniform_real_distribution<double> expo(-300.0, 300.0);
  TempDir dir("roundtrip");
  for (int trial = 0; trial < 40; ++trial) {
    const Index n = rows(rng), p = dim(rng), m = dim(rng) - 1;
    Matrix y = testing::normal_matrix(n, p, rng);
    Matrix x = testing::normal_matrix(n, m, rng);
    // Spread magnitudes over the full double range, including signed zero.
    for (Index i = 0; i < n; ++i) y(i, 0) *= std::pow(10.0, expo(rng));
    if (trial % 5 == 0) y(0, 0) = -0.0;
    if (trial % 7 == 0) y(n - 1, p - 1) = std::numeric_limits<double>::denorm_min();
    Vector t = testing::fixed_treatments(n, 1 + n / 3, rng);
    const TrialDataset ds = TrialDataset::create(t, y, x);
    const auto path = dir.path / ("rt" + std::to_string(trial) + ".csv");
    write_csv(path, ds);
    std::vector<std::string> xs;
    if (m > 0) xs.push_back("x*");
    const TrialDataset back = load_csv(path, {"T", {"y*"}, xs});
    CHECK(bitwise_equal(back.outcomes(), ds.outcomes()));
    CHECK(bitwise_equal(back.covariates(), ds.covariates()));
    CHECK(bitwise_equal(back.treatments(), ds.treatments()));
  }
}

TEST_CASE("TrialDataset::create validates") {
  const Vector t = (Vector(4) << 1, 0, 1, 0).finished();
  const Matrix y = Matrix::Ones(4, 2);
  CHECK_NOTHROW(TrialDataset::create(t, y));
  CHECK_THROWS_AS(TrialDataset::create((Vector(1) << 1).finished(), Matrix::Ones(1, 1)), DataError);
  CHECK_THROWS_AS(TrialDataset::create((Vector(4) << 1, 0, 0.5, 0).finished(), y), DataError);
  Matrix bad = y;
  bad(2, 1) = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(TrialDataset::create(t, bad), DataError);
  CHECK_THROWS_AS(TrialDataset::create(t, Matrix::Ones(3, 2)), DataError);
  CHECK_THROWS_AS(TrialDataset::create(t, y, Matrix::Ones(3, 1)), DataError);
  Matrix badx = Matrix::Ones(4, 1);
  badx(0, 0) = std::nan("");
  CHECK_THROWS_AS(TrialDataset::create(t, y, badx), DataError);
}

TEST_CASE("derived datasets") {
  Rng rng(3);
  const TrialDataset ds = testing::random_dataset(10, 3, 2, 5, rng);
  const std::vector<Index> rows{7, 2, 4};
  const TrialDataset sub = ds.rows(rows);
  CHECK(sub.n() == 3);
  CHECK(sub.outcomes().row(0) == ds.outcomes().row(7));
  CHECK(sub.covariates().row(2) == ds.covariates().row(4));
  const TrialDataset cols = ds.select_outcomes({2, 0});
  CHECK(cols.p() == 2);
  CHECK(cols.outcomes().col(0) == ds.outcomes().col(2));
  CHECK(cols.outcome_labels()[0] == "y3");
  CHECK(cols.m() == 2);
}

TEST_CASE("random_split examples") {
  Rng rng(5);
  const TrialDataset ds10 = testing::random_dataset(10, 2, 0, 5, rng);
  const SplitPair a = random_split(ds10, 0.5, 7);
  const SplitPair b = random_split(ds10, 0.5, 7);
  CHECK(a.first_rows == b.first_rows);
  CHECK(a.second_rows == b.second_rows);
  CHECK(a.first.outcomes() == b.first.outcomes());

  const TrialDataset ds4 = testing::random_dataset(4, 1, 0, 2, rng);
  const SplitPair c = random_split(ds4, 0.5, 1);
  CHECK(c.first.n() == 2);
  CHECK(c.second.n() == 2);

  const TrialDataset ds3 = testing::random_dataset(3, 1, 0, 1, rng);
  CHECK_THROWS_AS(random_split(ds3, 0.9, 1), std::invalid_argument);
  CHECK_THROWS_AS(random_split(ds10, 0.0, 1), std::invalid_argument);
  CHECK_THROWS_AS(random_split(ds10, 1.0, 1), std::invalid_argument);
}

TEST_CASE("random_split partitions the parent") {
  Rng rng(11);
  std::uniform_int_distribution<int> size(4, 60);
  std::uniform_real_distribution<double> frac(0.2, 0.8);
  for (int trial = 0; trial < 100; ++trial) {
    const Index n = size(rng);
    const TrialDataset ds = testing::random_dataset(n, 2, 1, n / 2, rng);
    const double f = frac(rng);
    const auto expected = static_cast<Index>(std::llround(f * static_cast<double>(n)));
    if (expected < 2 || n - expected < 2) continue;
    const SplitPair sp = random_split(ds, f, static_cast<std::uint64_t>(trial));
    CHECK(sp.first.n() == expected);
    CHECK(sp.first.n() + sp.second.n() == n);
    std::vector<Index> all = sp.first_rows;
    all.insert(all.end(), sp.second_rows.begin(), sp.second_rows.end());
    std::sort(all.begin(), all.end());
    for (Index i = 0; i < n; ++i) CHECK(all[static_cast<std::size_t>(i)] == i);
    CHECK(std::is_sorted(sp.first_rows.begin(), sp.first_rows.end()));
    for (std::size_t k = 0; k < sp.first_rows.size(); ++k) {
      CHECK(sp.first.outcomes().row(static_cast<Index>(k)) == ds.outcomes().row(sp.first_rows[k]));
    }
    for (std::size_t k = 0; k < sp.second_rows.size(); ++k) {
      CHECK(sp.second.covariates().row(static_cast<Index>(k)) ==
            ds.covariates().row(sp.second_rows[k]));
    }
  }
}

TEST_CASE("center_columns examples") {
  const Matrix col = (Matrix(3, 1) << 1, 2, 3).finished();
  const CenteredColumns c = center_columns(col);
  CHECK(c.means[0] == doctest::Approx(2.0));
  CHECK(c.centered(0, 0) == doctest::Approx(-1.0));
  CHECK(c.centered(2, 0) == doctest::Approx(1.0));

  const CenteredColumns again = center_columns(c.centered);
  CHECK(again.means[0] == doctest::Approx(0.0));
  CHECK((again.centered - c.centered).cwiseAbs().maxCoeff() < 1e-15);

  const Matrix two = (Matrix(2, 1) << 1, 3).finished();
  const CenteredColumns w = center_columns(two, Vector((Vector(2) << 3, 1).finished()));
  CHECK(w.means[0] == doctest::Approx(1.5));
  CHECK(w.centered(0, 0) == doctest::Approx(-0.5));
  CHECK(w.centered(1, 0) == doctest::Approx(1.5));

  CHECK_THROWS_AS(center_columns(two, Vector(Vector::Zero(2))), std::invalid_argument);
  CHECK_THROWS_AS(center_columns(two, Vector((Vector(2) << -1, 2).finished())),
                  std::invalid_argument);
}

TEST_CASE("center_columns properties") {
  Rng rng(23);
  std::uniform_real_distribution<double> u(0.0, 5.0);
  for (int trial = 0; trial < 50; ++trial) {
    const Matrix m = testing::normal_matrix(12, 4, rng, 1.0 + trial) .array() + 100.0 * trial;
    Vector w(12);
    for (Index i = 0; i < 12; ++i) w[i] = u(rng);
    for (const auto& weights : {std::optional<Vector>(), std::optional<Vector>(w)}) {
      const CenteredColumns c = center_columns(m, weights);
      const double scale = m.cwiseAbs().maxCoeff();
      const Vector wt = weights ? *weights : Vector(Vector::Ones(12));
      for (Index j = 0; j < 4; ++j) {
        CHECK(std::abs(wt.dot(c.centered.col(j)) / wt.sum()) <= 1e-12 * scale);
      }
      const Matrix restored = c.centered.rowwise() + c.means.transpose();
      CHECK((restored - m).cwiseAbs().maxCoeff() <= 1e-12 * scale);
      const CenteredColumns twice = center_columns(c.centered, weights);
      CHECK((twice.centered - c.centered).cwiseAbs().maxCoeff() <= 1e-12 * scale);
    }
  }
}

}  // TEST_SUITE
