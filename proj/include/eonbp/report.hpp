#pragma once

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

namespace eonbp {

struct OdClassBp {
  std::string od;  // "origin>destination", or "*" for the aggregate line
  int cls = 0;     // 1-based, 0 for the aggregate line
  double bp = 0.0;
};

// One (engine, variant, mode, load) result row of a report.
struct ReportRow {
  std::string mode;
  std::string engine;
  std::string variant;
  double load = 0.0;
  std::vector<OdClassBp> per_od_class;
  double overall_bp = 0.0;
  double runtime_s = 0.0;
  std::string meta;  // semicolon-separated key=value pairs
};

namespace detail {

// Shortest representation that parses back to the identical double, so
// reports round-trip value-identically.
inline std::string format_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

inline std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, sep)) out.push_back(field);
  if (!line.empty() && line.back() == sep) out.push_back("");
  return out;
}

inline std::optional<double> meta_value(const std::string& meta,
                                        const std::string& key) {
  for (const auto& item : split(meta, ';')) {
    auto eq = item.find('=');
    if (eq == std::string::npos) continue;
    if (item.substr(0, eq) != key) continue;
    try {
      return std::stod(item.substr(eq + 1));
    } catch (...) {
      return std::nullopt;
    }
  }
  return std::nullopt;
}

}  // namespace detail

inline constexpr const char* kReportCsvHeader =
    "mode,engine,variant,load,od,class,bp,overall_bp,runtime_s,meta";

// Frozen CSV schema; every row emits an aggregate line (od = "*") followed
// by the per-(od, class) lines.
inline void write_report_csv(std::ostream& os,
                             const std::vector<ReportRow>& rows) {
  os << kReportCsvHeader << '\n';
  for (const auto& row : rows) {
    auto prefix = [&](std::ostream& line) {
      line << row.mode << ',' << row.engine << ',' << row.variant << ','
           << detail::format_double(row.load) << ',';
    };
    prefix(os);
    os << "*,0," << detail::format_double(row.overall_bp) << ','
       << detail::format_double(row.overall_bp) << ','
       << detail::format_double(row.runtime_s) << ',' << row.meta << '\n';
    for (const auto& entry : row.per_od_class) {
      prefix(os);
      os << entry.od << ',' << entry.cls << ','
         << detail::format_double(entry.bp) << ','
         << detail::format_double(row.overall_bp) << ','
         << detail::format_double(row.runtime_s) << ',' << row.meta << '\n';
    }
  }
}

inline void write_report_csv(const std::string& path,
                             const std::vector<ReportRow>& rows) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write '" + path + "'");
  write_report_csv(os, rows);
}

inline void write_report_json(const std::string& path,
                              const std::vector<ReportRow>& rows) {
  nlohmann::json doc = nlohmann::json::array();
  for (const auto& row : rows) {
    nlohmann::json entry{{"mode", row.mode},
                         {"engine", row.engine},
                         {"variant", row.variant},
                         {"load", row.load},
                         {"overall_bp", row.overall_bp},
                         {"runtime_s", row.runtime_s},
                         {"meta", row.meta}};
    entry["per_od_class"] = nlohmann::json::array();
    for (const auto& e : row.per_od_class)
      entry["per_od_class"].push_back(
          {{"od", e.od}, {"class", e.cls}, {"bp", e.bp}});
    doc.push_back(std::move(entry));
  }
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write '" + path + "'");
  os << doc.dump(2) << '\n';
}

// Reads the CSV schema back; '#' lines are comments.
inline std::vector<ReportRow> read_report_csv(std::istream& is) {
  std::vector<ReportRow> rows;
  std::map<std::string, std::size_t> index;  // row key -> position
  std::string line;
  bool header_seen = false;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (!header_seen) {
      if (line != kReportCsvHeader)
        throw std::runtime_error("unexpected report header: " + line);
      header_seen = true;
      continue;
    }
    auto fields = detail::split(line, ',');
    if (fields.size() != 10)
      throw std::runtime_error("malformed report line: " + line);
    const std::string row_key =
        fields[0] + "," + fields[1] + "," + fields[2] + "," + fields[3];
    auto [it, inserted] = index.try_emplace(row_key, rows.size());
    if (inserted) {
      ReportRow row;
      row.mode = fields[0];
      row.engine = fields[1];
      row.variant = fields[2];
      row.load = std::stod(fields[3]);
      row.overall_bp = std::stod(fields[7]);
      row.runtime_s = std::stod(fields[8]);
      row.meta = fields[9];
      rows.push_back(std::move(row));
    }
    if (fields[4] != "*")
      rows[it->second].per_od_class.push_back(
          {fields[4], std::stoi(fields[5]), std::stod(fields[6])});
  }
  if (!header_seen) throw std::runtime_error("empty report");
  return rows;
}

inline std::vector<ReportRow> read_report_csv_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open '" + path + "'");
  return read_report_csv(is);
}

struct ToleranceSpec {
  double rtol = 0.0;
  double atol = 0.0;
  double ci_mult = 0.0;  // adds ci_mult * max(ci of either side)
};

struct CompareEntry {
  std::string key;
  double got = 0.0;
  double want = 0.0;
  double tolerance = 0.0;
  bool pass = false;
};

struct CompareSummary {
  std::vector<CompareEntry> entries;
  bool all_pass = true;
  double max_abs_diff = 0.0;
};

// Diffs `got` against the reference `want`. Every (mode, load, od, class)
// key of the reference must be present; reference rows may carry their own
// absolute tolerance as "atol=..." in meta.
inline CompareSummary compare(const std::vector<ReportRow>& got,
                              const std::vector<ReportRow>& want,
                              const ToleranceSpec& tol = {}) {
  struct Value {
    double bp;
    std::string meta;
  };
  auto key_of = [](const ReportRow& row, const std::string& od, int cls) {
    return row.mode + " load=" + detail::format_double(row.load) +
           " od=" + od + " k=" + std::to_string(cls);
  };
  std::map<std::string, Value> lookup;
  for (const auto& row : got) {
    lookup[key_of(row, "*", 0)] = {row.overall_bp, row.meta};
    for (const auto& e : row.per_od_class)
      lookup[key_of(row, e.od, e.cls)] = {e.bp, row.meta};
  }

  CompareSummary summary;
  auto check = [&](const ReportRow& row, const std::string& od, int cls,
                   double want_bp) {
    const auto key = key_of(row, od, cls);
    auto it = lookup.find(key);
    if (it == lookup.end())
      throw std::runtime_error("key mismatch: reference row '" + key +
                               "' missing from the compared report");
    CompareEntry entry;
    entry.key = key;
    entry.got = it->second.bp;
    entry.want = want_bp;
    entry.tolerance = tol.atol + tol.rtol * std::abs(want_bp);
    if (auto row_atol = detail::meta_value(row.meta, "atol"))
      entry.tolerance += *row_atol;
    if (tol.ci_mult > 0.0) {
      double ci = 0.0;
      if (auto v = detail::meta_value(it->second.meta, "ci"))
        ci = std::max(ci, *v);
      if (auto v = detail::meta_value(row.meta, "ci")) ci = std::max(ci, *v);
      entry.tolerance += tol.ci_mult * ci;
    }
    entry.pass = std::abs(entry.got - entry.want) <= entry.tolerance;
    summary.max_abs_diff =
        std::max(summary.max_abs_diff, std::abs(entry.got - entry.want));
    summary.all_pass = summary.all_pass && entry.pass;
    summary.entries.push_back(std::move(entry));
  };
  for (const auto& row : want) {
    check(row, "*", 0, row.overall_bp);
    for (const auto& e : row.per_od_class) check(row, e.od, e.cls, e.bp);
  }
  return summary;
}

}  // namespace eonbp
