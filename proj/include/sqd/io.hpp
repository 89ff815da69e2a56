#pragma once

// Text formats: sample files, CSV cells, FCIDUMP files, JSON helpers.

#include <Eigen/Dense>
#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "sqd/errors.hpp"
#include "sqd/integrals.hpp"
#include "sqd/recovery.hpp"
#include "sqd/system.hpp"

namespace sqd {

/// 17 significant digits; parses back to the identical double.
inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline double parse_double(const std::string& cell) {
  std::string t = cell;
  while (!t.empty() && std::isspace(static_cast<unsigned char>(t.back()))) t.pop_back();
  std::size_t start = 0;
  while (start < t.size() && std::isspace(static_cast<unsigned char>(t[start]))) ++start;
  t = t.substr(start);
  if (t.empty()) throw FormatError("empty numeric cell");
  char* end = nullptr;
  const double v = std::strtod(t.c_str(), &end);
  if (end != t.c_str() + t.size()) throw FormatError("non-numeric cell '" + cell + "'");
  return v;
}

/// One configuration per line, optional whitespace-separated count; '#'
/// starts a comment.
inline SampleSet read_samples(std::istream& in, const SystemShape& shape) {
  SampleSet set(shape);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    std::istringstream ss(line);
    std::string bits, count_tok, extra;
    if (!(ss >> bits)) continue;
    std::uint64_t count = 1;
    if (ss >> count_tok) {
      const auto* first = count_tok.data();
      const auto* last = first + count_tok.size();
      auto [ptr, ec] = std::from_chars(first, last, count);
      if (ec != std::errc() || ptr != last) throw ParseError("bad count '" + count_tok + "'", lineno);
      if (ss >> extra) throw ParseError("unexpected trailing field '" + extra + "'", lineno);
    }
    try {
      set.add(parse_bitstring(bits, shape), count);
    } catch (const FormatError& e) {
      throw ParseError(e.what(), lineno);
    }
  }
  return set;
}

inline void write_samples(std::ostream& out, const SampleSet& set) {
  for (const auto& [d, c] : set.entries()) out << render_bitstring(d, set.shape().n_orb) << ' ' << c << '\n';
}

inline std::ifstream open_input(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open '" + path + "'");
  return in;
}

inline SampleSet read_samples_file(const std::string& path, const SystemShape& shape) {
  auto in = open_input(path);
  return read_samples(in, shape);
}

inline IntegralSet read_fcidump_file(const std::string& path) {
  auto in = open_input(path);
  return parse_fcidump(in);
}

inline nlohmann::json read_json_file(const std::string& path) {
  auto in = open_input(path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError("'" + path + "': " + e.what());
  }
}

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write '" + path.string() + "'");
  out << text;
}

inline nlohmann::json to_json(const Eigen::VectorXd& v) {
  nlohmann::json a = nlohmann::json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

inline Eigen::VectorXd vector_from_json(const nlohmann::json& j) {
  if (!j.is_array()) throw FormatError("expected a numeric array");
  Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
  return v;
}

/// Occupancy file: either a bare array or {"occupancies": [...]}.
inline Eigen::VectorXd read_occupancies_file(const std::string& path) {
  const auto j = read_json_file(path);
  return vector_from_json(j.is_object() ? j.at("occupancies") : j);
}

/// Minimal CSV: comma-separated, first row is a header, no quoting.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return i;
    throw FormatError("CSV has no column '" + name + "'");
  }
};

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) {
    while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
    std::size_t s = 0;
    while (s < cell.size() && cell[s] == ' ') ++s;
    cells.push_back(cell.substr(s));
  }
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

inline CsvTable read_csv(std::istream& in) {
  CsvTable t;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    auto cells = split_csv_line(line);
    if (t.header.empty()) {
      t.header = std::move(cells);
      continue;
    }
    if (cells.size() != t.header.size()) throw ParseError("row has " + std::to_string(cells.size()) + " cells", lineno);
    t.rows.push_back(std::move(cells));
  }
  if (t.header.empty()) throw FormatError("CSV input is empty");
  return t;
}

}  // namespace sqd
