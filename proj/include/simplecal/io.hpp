#ifndef SIMPLECAL_IO_HPP_
#define SIMPLECAL_IO_HPP_

#include "simplecal/core.hpp"
#include "simplecal/model.hpp"

#include <algorithm>
#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace simplecal::io {

namespace fs = std::filesystem;

// Malformed or missing input. The message carries file (and line) context.
struct InputError : Error {
  using Error::Error;
};

inline std::string format_real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline std::string trim(const std::string &s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) {
    return "";
  }
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

inline std::vector<std::string> split(const std::string &s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) {
    out.push_back(trim(cur));
  }
  if (!s.empty() && s.back() == sep) {
    out.emplace_back();
  }
  return out;
}

inline double parse_real(const std::string &tok, const std::string &where) {
  if (tok.empty()) {
    throw InputError(where + ": empty value");
  }
  errno = 0;
  char *end = nullptr;
  const double v = std::strtod(tok.c_str(), &end);
  if (end != tok.c_str() + tok.size() || errno == ERANGE) {
    throw InputError(where + ": cannot parse number '" + tok + "'");
  }
  return v;
}

inline long parse_count(const std::string &tok, const std::string &where) {
  char *end = nullptr;
  const long v = std::strtol(tok.c_str(), &end, 10);
  if (tok.empty() || end != tok.c_str() + tok.size() || v < 0) {
    throw InputError(where + ": expected a non-negative integer, got '" +
                     tok + "'");
  }
  return v;
}

// CSV matrix: first line "rows,cols", then one line per row.
inline void write_matrix(std::ostream &out, const Matrix &m) {
  out << m.rows() << ',' << m.cols() << '\n';
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) {
      if (j > 0) {
        out << ',';
      }
      out << format_real(m(i, j));
    }
    out << '\n';
  }
}

inline void write_matrix(const fs::path &path, const Matrix &m) {
  std::ofstream out(path);
  if (!out) {
    throw InputError(path.string() + ": cannot open for writing");
  }
  write_matrix(out, m);
}

inline Matrix read_matrix(std::istream &in, const std::string &name) {
  std::string line;
  Index line_no = 0;
  auto next_line = [&]() -> bool {
    while (std::getline(in, line)) {
      ++line_no;
      if (!trim(line).empty()) {
        return true;
      }
    }
    return false;
  };
  auto where = [&] { return name + ":" + std::to_string(line_no); };
  if (!next_line()) {
    throw InputError(name + ": empty matrix file");
  }
  const auto header = split(trim(line), ',');
  if (header.size() != 2) {
    throw InputError(where() + ": header must be 'rows,cols'");
  }
  const Index rows = parse_count(header[0], where());
  const Index cols = parse_count(header[1], where());
  Matrix m(rows, cols);
  if (cols == 0) {
    return m;
  }
  for (Index i = 0; i < rows; ++i) {
    if (!next_line()) {
      throw InputError(name + ": expected " + std::to_string(rows) +
                       " rows, found " + std::to_string(i));
    }
    const auto toks = split(trim(line), ',');
    if (static_cast<Index>(toks.size()) != cols) {
      throw InputError(where() + ": expected " + std::to_string(cols) +
                       " values, found " + std::to_string(toks.size()));
    }
    for (Index j = 0; j < cols; ++j) {
      m(i, j) = parse_real(toks[static_cast<std::size_t>(j)], where());
    }
  }
  if (next_line()) {
    throw InputError(where() + ": trailing data after " +
                     std::to_string(rows) + " rows");
  }
  if (!m.allFinite()) {
    throw InputError(name + ": non-finite entry");
  }
  return m;
}

inline Matrix read_matrix(const fs::path &path) {
  std::ifstream in(path);
  if (!in) {
    throw InputError(path.string() + ": cannot open");
  }
  return read_matrix(in, path.string());
}

// Accepts a single row or a single column.
inline Vector read_vector(const fs::path &path) {
  const Matrix m = read_matrix(path);
  if (m.cols() == 1) {
    return m.col(0);
  }
  if (m.rows() == 1) {
    return m.row(0).transpose();
  }
  throw InputError(path.string() + ": expected a row or column vector");
}

// Flat "key = value" file, '#' starts a comment.
struct ProblemSpec {
  fs::path source;
  std::map<std::string, std::string> entries;

  bool has(const std::string &key) const { return entries.count(key) > 0; }

  std::optional<std::string> get(const std::string &key) const {
    const auto it = entries.find(key);
    if (it == entries.end()) {
      return std::nullopt;
    }
    return it->second;
  }

  // Paths are relative to the spec file's directory.
  fs::path path(const std::string &key) const {
    const auto v = get(key);
    if (!v) {
      throw InputError(source.string() + ": missing required field '" + key +
                       "'");
    }
    const fs::path p(*v);
    return p.is_absolute() ? p : source.parent_path() / p;
  }
};

inline const std::vector<std::string> &known_spec_keys() {
  static const std::vector<std::string> keys = {
      "data_matrix", "pred_matrix", "prior_cov",  "data_noise_cov",
      "pred_noise_cov", "simplification", "filter", "data",
      "scheme",      "tsvd_k",      "tol",        "mc_samples",
      "seed"};
  return keys;
}

inline ProblemSpec parse_spec(std::istream &in, const fs::path &source) {
  ProblemSpec spec;
  spec.source = source;
  std::string line;
  Index line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) {
      line.erase(hash);
    }
    line = trim(line);
    if (line.empty()) {
      continue;
    }
    const std::string where = source.string() + ":" + std::to_string(line_no);
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw InputError(where + ": expected 'key = value'");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const auto &keys = known_spec_keys();
    if (std::find(keys.begin(), keys.end(), key) == keys.end()) {
      throw InputError(where + ": unknown key '" + key + "'");
    }
    if (value.empty()) {
      throw InputError(where + ": empty value for '" + key + "'");
    }
    if (spec.entries.count(key) > 0) {
      throw InputError(where + ": duplicate key '" + key + "'");
    }
    spec.entries[key] = value;
  }
  return spec;
}

inline ProblemSpec read_spec(const fs::path &path) {
  std::ifstream in(path);
  if (!in) {
    throw InputError(path.string() + ": cannot open spec file");
  }
  return parse_spec(in, path);
}

// Model matrices plus the optional simplification, filter and dataset.
struct Problem {
  HighFidelityModel model;
  std::optional<Matrix> simplification;
  std::optional<Matrix> filter;
  std::optional<Vector> data;
};

inline Matrix read_field(const ProblemSpec &spec, const std::string &key) {
  const fs::path path = spec.path(key);
  try {
    return read_matrix(path);
  } catch (const InputError &e) {
    throw InputError("field '" + key + "': " + e.what());
  }
}

inline Problem load_problem(const ProblemSpec &spec) {
  Problem p;
  p.model.data_matrix = read_field(spec, "data_matrix");
  p.model.pred_matrix = read_field(spec, "pred_matrix");
  p.model.prior_cov = read_field(spec, "prior_cov");
  p.model.data_noise_cov = read_field(spec, "data_noise_cov");
  p.model.pred_noise_cov = read_field(spec, "pred_noise_cov");
  try {
    validate(p.model);
  } catch (const Error &e) {
    throw InputError(spec.source.string() + ": " + e.what());
  }
  if (spec.has("simplification")) {
    p.simplification = read_field(spec, "simplification");
    if (p.simplification->rows() != p.model.n_params()) {
      throw InputError(spec.path("simplification").string() +
                       ": simplification must have D_x rows");
    }
  }
  if (spec.has("filter")) {
    p.filter = read_field(spec, "filter");
    if (p.filter->cols() != p.model.n_data()) {
      throw InputError(spec.path("filter").string() +
                       ": filter must have D_d columns");
    }
  }
  if (spec.has("data")) {
    const Matrix raw = read_field(spec, "data");
    if (raw.cols() != 1 && raw.rows() != 1) {
      throw InputError("field 'data': expected a row or column vector");
    }
    p.data = raw.cols() == 1 ? Vector(raw.col(0)) : Vector(raw.row(0).transpose());
    if (p.data->size() != p.model.n_data()) {
      throw InputError(spec.path("data").string() +
                       ": dataset must have D_d entries");
    }
  }
  return p;
}

// Writes the model matrices next to a spec file that references them.
inline void write_problem(const fs::path &dir, const HighFidelityModel &m,
                          const std::optional<Matrix> &simplification,
                          const std::optional<Vector> &data) {
  fs::create_directories(dir);
  write_matrix(dir / "data_matrix.csv", m.data_matrix);
  write_matrix(dir / "pred_matrix.csv", m.pred_matrix);
  write_matrix(dir / "prior_cov.csv", m.prior_cov);
  write_matrix(dir / "data_noise_cov.csv", m.data_noise_cov);
  write_matrix(dir / "pred_noise_cov.csv", m.pred_noise_cov);
  std::ofstream spec(dir / "problem.cfg");
  spec << "# linear-Gaussian reference model\n"
       << "data_matrix = data_matrix.csv\n"
       << "pred_matrix = pred_matrix.csv\n"
       << "prior_cov = prior_cov.csv\n"
       << "data_noise_cov = data_noise_cov.csv\n"
       << "pred_noise_cov = pred_noise_cov.csv\n";
  if (simplification) {
    write_matrix(dir / "simplification.csv", *simplification);
    spec << "simplification = simplification.csv\n";
  }
  if (data) {
    write_matrix(dir / "data.csv", Matrix(*data));
    spec << "data = data.csv\n";
  }
}

}  // namespace simplecal::io

#endif  // SIMPLECAL_IO_HPP_
