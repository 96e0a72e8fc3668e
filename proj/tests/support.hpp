#pragma once

// Shared generators and brute-force oracles for the test binaries. The
// oracles deliberately use different numerics from the library (explicit
// inverses, normal equations, plain loops) so agreement is meaningful.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <string>
#include <random>
#include <vector>

#include "sparsefx/data.hpp"
#include "sparsefx/rng.hpp"

namespace testing {

using sparsefx::Index;
using sparsefx::IndexSet;
using sparsefx::Matrix;
using sparsefx::Rng;
using sparsefx::TrialDataset;
using sparsefx::Vector;

inline Matrix normal_matrix(Index rows, Index cols, Rng& rng, double sd = 1.0) {
  std::normal_distribution<double> d(0.0, sd);
  Matrix m(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) m(i, j) = d(rng);
  return m;
}

/// Treatment vector with exactly n_t treated units in random positions.
inline Vector fixed_treatments(Index n, Index n_t, Rng& rng) {
  std::vector<Index> idx(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) idx[static_cast<std::size_t>(i)] = i;
  std::shuffle(idx.begin(), idx.end(), rng);
  Vector t = Vector::Zero(n);
  for (Index k = 0; k < n_t; ++k) t[idx[static_cast<std::size_t>(k)]] = 1.0;
  return t;
}

/// Random dataset: outcomes N(0,1) + effect on treated, optional covariates
/// feeding into the outcomes.
inline TrialDataset random_dataset(Index n, Index p, Index m, Index n_t, Rng& rng,
                                   const Vector& effect = Vector()) {
  const Vector t = fixed_treatments(n, n_t, rng);
  const Matrix x = normal_matrix(n, m, rng);
  Matrix y = normal_matrix(n, p, rng);
  if (m > 0) y += x * normal_matrix(m, p, rng);
  if (effect.size() == p) y += t * effect.transpose();
  return TrialDataset::create(t, y, x);
}

/// All size-k subsets of {0..p-1} in lexicographic order.
inline std::vector<IndexSet> subsets(Index p, Index k) {
  std::vector<IndexSet> out;
  IndexSet cur;
  std::function<void(Index)> rec = [&](Index start) {
    if (static_cast<Index>(cur.size()) == k) {
      out.push_back(cur);
      return;
    }
    for (Index j = start; j < p; ++j) {
      cur.push_back(j);
      rec(j + 1);
      cur.pop_back();
    }
  };
  rec(0);
  return out;
}

struct DimOracle {
  Vector tau;
  Matrix sigma;
};

/// Difference in means and the arm-wise plug-in covariance, by loops.
inline DimOracle dim_oracle(const Vector& t, const Matrix& y) {
  const Index n = y.rows();
  const Index p = y.cols();
  Vector m1 = Vector::Zero(p), m0 = Vector::Zero(p);
  double n1 = 0, n0 = 0;
  for (Index i = 0; i < n; ++i) {
    if (t[i] == 1.0) {
      m1 += y.row(i).transpose();
      n1 += 1;
    } else {
      m0 += y.row(i).transpose();
      n0 += 1;
    }
  }
  m1 /= n1;
  m0 /= n0;
  Matrix s1 = Matrix::Zero(p, p), s0 = Matrix::Zero(p, p);
  for (Index i = 0; i < n; ++i) {
    if (t[i] == 1.0) {
      const Vector d = y.row(i).transpose() - m1;
      s1 += d * d.transpose();
    } else {
      const Vector d = y.row(i).transpose() - m0;
      s0 += d * d.transpose();
    }
  }
  const double nn = static_cast<double>(n);
  return {m1 - m0, (nn / n1) * (1.0 / n1) * s1 + (nn / n0) * (1.0 / n0) * s0};
}

/// n tau' Sigma^{-1} tau through an explicit inverse.
inline double hotelling_oracle(const Vector& tau, const Matrix& sigma, Index n) {
  return static_cast<double>(n) * tau.dot(sigma.inverse() * tau);
}

/// Weighted least squares through the normal equations (A'WA) b = A'W y.
inline Vector weighted_normal_equations(const Matrix& a, const Vector& w, const Vector& y) {
  const Matrix g = a.transpose() * w.asDiagonal() * a;
  return g.inverse() * (a.transpose() * w.asDiagonal() * y);
}

inline Matrix center(const Matrix& m) { return m.rowwise() - m.colwise().mean(); }

/// Fresh directory under the system temp dir, removed on destruction.
struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path = std::filesystem::temp_directory_path() /
           ("sparsefx_" + tag + "_" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  std::filesystem::path file(const std::string& name, const std::string& content) const {
    const auto p = path / name;
    std::ofstream(p, std::ios::binary) << content;
    return p;
  }
};

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

/// Comma-split rows of a small CSV file, header included.
inline std::vector<std::vector<std::string>> read_table(const std::filesystem::path& p) {
  std::vector<std::vector<std::string>> rows;
  std::ifstream in(p);
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::size_t start = 0;
    for (;;) {
      const std::size_t comma = line.find(',', start);
      cells.push_back(line.substr(start, comma - start));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    rows.push_back(std::move(cells));
  }
  return rows;
}

inline double rel_diff(double a, double b) {
  return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
}

inline double max_rel_diff(const Matrix& a, const Matrix& b) {
  const double scale = std::max({1.0, a.cwiseAbs().maxCoeff(), b.cwiseAbs().maxCoeff()});
  return (a - b).cwiseAbs().maxCoeff() / scale;
}

}  // namespace testing
