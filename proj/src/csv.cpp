#include <charconv>
#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <unordered_map>

#include "sparsefx/data.hpp"
#include "sparsefx/error.hpp"

namespace sparsefx {

namespace {

std::string trim(std::string_view s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && (s[b] == ' ' || s[b] == '\t' || s[b] == '\r')) ++b;
  while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t' || s[e - 1] == '\r')) --e;
  std::string out(s.substr(b, e - b));
  if (out.size() >= 2 && out.front() == '"' && out.back() == '"') out = out.substr(1, out.size() - 2);
  return out;
}

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  for (;;) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string::npos) {
      fields.push_back(trim(std::string_view(line).substr(start)));
      return fields;
    }
    fields.push_back(trim(std::string_view(line).substr(start, comma - start)));
    start = comma + 1;
  }
}

bool blank(const std::string& line) {
  return line.find_first_not_of(" \t\r") == std::string::npos;
}

// Resolves schema entries (exact names or "prefix*") to header positions.
std::vector<std::size_t> resolve(const std::vector<std::string>& header,
                                 const std::vector<std::string>& wanted, const char* role) {
  std::unordered_map<std::string, std::size_t> position;
  for (std::size_t k = 0; k < header.size(); ++k) position.emplace(header[k], k);

  std::vector<std::size_t> out;
  for (const auto& name : wanted) {
    if (!name.empty() && name.back() == '*') {
      const std::string prefix = name.substr(0, name.size() - 1);
      const std::size_t before = out.size();
      for (std::size_t k = 0; k < header.size(); ++k) {
        if (header[k].compare(0, prefix.size(), prefix) == 0) out.push_back(k);
      }
      if (out.size() == before) {
        throw DataError(std::string("no ") + role + " column matches '" + name + "'");
      }
      continue;
    }
    auto it = position.find(name);
    if (it == position.end()) {
      throw DataError(std::string(role) + " column '" + name + "' not found in header");
    }
    out.push_back(it->second);
  }
  return out;
}

double parse_cell(const std::string& cell, std::size_t row, const std::string& column) {
  double value = 0.0;
  const char* first = cell.data();
  const char* last = cell.data() + cell.size();
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (cell.empty() || ec != std::errc() || ptr != last) {
    throw DataError("non-numeric value '" + cell + "' at row " + std::to_string(row) +
                    ", column '" + column + "'");
  }
  return value;
}

}  // namespace

TrialDataset load_csv(const std::filesystem::path& path, const CsvSchema& schema) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open CSV file '" + path.string() + "'");
  if (schema.treatment.empty()) throw std::invalid_argument("schema needs a treatment column");
  if (schema.outcomes.empty()) throw std::invalid_argument("schema needs at least one outcome column");

  std::string line;
  if (!std::getline(in, line)) throw DataError("CSV file '" + path.string() + "' has no header row");
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
  const auto header = split_fields(line);

  const auto t_col = resolve(header, {schema.treatment}, "treatment");
  if (t_col.size() != 1) throw DataError("treatment pattern must match exactly one column");
  const auto y_cols = resolve(header, schema.outcomes, "outcome");
  const auto x_cols = resolve(header, schema.covariates, "covariate");

  std::vector<double> t_values;
  std::vector<double> y_values;
  std::vector<double> x_values;
  std::size_t row = 0;  // 1-based data row number once incremented
  while (std::getline(in, line)) {
    if (blank(line)) continue;
    ++row;
    const auto fields = split_fields(line);
    if (fields.size() != header.size()) {
      throw DataError("ragged row " + std::to_string(row) + ": expected " +
                      std::to_string(header.size()) + " fields, found " +
                      std::to_string(fields.size()));
    }
    const double t = parse_cell(fields[t_col[0]], row, header[t_col[0]]);
    if (t != 0.0 && t != 1.0) {
      throw DataError("non-binary treatment value '" + fields[t_col[0]] + "' at row " +
                      std::to_string(row) + ", column '" + header[t_col[0]] + "'");
    }
    t_values.push_back(t);
    for (auto k : y_cols) y_values.push_back(parse_cell(fields[k], row, header[k]));
    for (auto k : x_cols) x_values.push_back(parse_cell(fields[k], row, header[k]));
  }

  const Index n = static_cast<Index>(row);
  if (n < 2) throw DataError("n >= 2 required (file has " + std::to_string(n) + " data rows)");
  const Index p = static_cast<Index>(y_cols.size());
  const Index m = static_cast<Index>(x_cols.size());

  Vector t = Eigen::Map<const Vector>(t_values.data(), n);
  Matrix y = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      y_values.data(), n, p);
  Matrix x(n, m);
  if (m > 0) {
    x = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        x_values.data(), n, m);
  }

  std::vector<std::string> y_labels;
  std::vector<std::string> x_labels;
  for (auto k : y_cols) y_labels.push_back(header[k]);
  for (auto k : x_cols) x_labels.push_back(header[k]);
  return TrialDataset::create(std::move(t), std::move(y), std::move(x), std::move(y_labels),
                              std::move(x_labels), header[t_col[0]]);
}

void write_csv(const std::filesystem::path& path, const TrialDataset& ds) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write CSV file '" + path.string() + "'");
  out << ds.treatment_label();
  for (const auto& l : ds.covariate_labels()) out << ',' << l;
  for (const auto& l : ds.outcome_labels()) out << ',' << l;
  out << '\n';

  char buf[32];
  auto put = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    out << buf;
  };
  for (Index i = 0; i < ds.n(); ++i) {
    out << (ds.treatments()[i] == 1.0 ? '1' : '0');
    for (Index j = 0; j < ds.m(); ++j) {
      out << ',';
      put(ds.covariates()(i, j));
    }
    for (Index j = 0; j < ds.p(); ++j) {
      out << ',';
      put(ds.outcomes()(i, j));
    }
    out << '\n';
  }
  if (!out) throw DataError("failed writing CSV file '" + path.string() + "'");
}

}  // namespace sparsefx
