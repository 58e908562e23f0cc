#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "expobench/error.hpp"
#include "expobench/stats.hpp"

namespace expobench {

/// Fixed, locale-independent number formatting used by every CSV writer.
inline std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

/// One metric value of one (method, sequence) pair.
struct MetricRow {
  std::string method;
  std::string sequence;
  std::string subset = "all";
  std::string status = "ok";
  std::string metric;
  double value = 0.0;
};

inline constexpr const char* kMetricsHeader = "method,sequence,subset,status,metric,value";

inline void write_metrics_csv(std::ostream& os, const std::vector<MetricRow>& rows) {
  os << kMetricsHeader << '\n';
  for (const auto& r : rows)
    os << r.method << ',' << r.sequence << ',' << r.subset << ',' << r.status << ',' << r.metric << ','
       << format_number(r.value) << '\n';
}

inline std::vector<MetricRow> read_metrics_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line != kMetricsHeader)
    fail(ErrorKind::ParseError, std::string("metrics CSV must start with '") + kMetricsHeader + "'");
  std::vector<MetricRow> rows;
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> cols;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cols.push_back(cell);
    if (cols.size() != 6) fail(ErrorKind::ParseError, "metrics CSV line " + std::to_string(lineno) + ": expected 6 columns");
    MetricRow r{cols[0], cols[1], cols[2], cols[3], cols[4], 0.0};
    try {
      std::size_t used = 0;
      r.value = std::stod(cols[5], &used);
      if (used != cols[5].size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      fail(ErrorKind::ParseError, "metrics CSV line " + std::to_string(lineno) + ": bad value '" + cols[5] + "'");
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

/// Metrics compared against the reference, with their preferred direction.
struct ComparedMetric {
  const char* name;
  bool higher_is_better;
};

inline const std::vector<ComparedMetric>& compared_metrics() {
  static const std::vector<ComparedMetric> m{
      {"coverage", true}, {"matches", true}, {"rte", false}, {"rre", false}, {"failure_time", true}};
  return m;
}

struct VerdictTable {
  std::string reference;
  double beta = 0.05;
  std::size_t n_test = 0;
  std::vector<std::string> methods;  // compared methods, reference excluded
  std::vector<Verdict> verdicts;     // metric-major, methods in `methods` order
};

/// Builds the verdict table of every method against `reference` from metric rows.
/// Methods keep their first-appearance order; values are ordered by sequence id.
inline VerdictTable compute_verdicts(const std::vector<MetricRow>& rows, const std::string& reference, double beta) {
  std::vector<std::string> methods;
  std::map<std::string, std::map<std::string, std::map<std::string, double>>> values;  // method -> metric -> seq -> v
  for (const auto& r : rows) {
    if (std::find(methods.begin(), methods.end(), r.method) == methods.end()) methods.push_back(r.method);
    if (std::isfinite(r.value)) values[r.method][r.metric][r.sequence] = r.value;
  }
  if (std::find(methods.begin(), methods.end(), reference) == methods.end())
    fail(ErrorKind::InvalidArgument, "reference method '" + reference + "' not present in metrics");

  VerdictTable table;
  table.reference = reference;
  table.beta = beta;
  for (const auto& m : methods)
    if (m != reference) table.methods.push_back(m);
  table.n_test = table.methods.size();
  if (table.n_test == 0) return table;

  auto samples = [&](const std::string& method, const std::string& metric) {
    SampleSet s{method, metric, {}};
    if (auto mit = values.find(method); mit != values.end())
      if (auto it = mit->second.find(metric); it != mit->second.end())
        for (const auto& [seq, v] : it->second) s.values.push_back(v);
    return s;
  };
  for (const auto& cm : compared_metrics()) {
    const SampleSet ref = samples(reference, cm.name);
    if (ref.values.empty()) continue;
    for (const auto& m : table.methods) {
      const SampleSet test = samples(m, cm.name);
      if (test.values.empty()) continue;
      table.verdicts.push_back(verdict(test, ref, beta, table.n_test, cm.higher_is_better));
    }
  }
  return table;
}

inline void write_verdicts_csv(std::ostream& os, const VerdictTable& t) {
  os << "metric,method,reference,verdict,u_statistic,p_two_sided,p_one_sided,corrected_beta,n_test\n";
  for (const auto& v : t.verdicts)
    os << v.metric << ',' << v.method << ',' << t.reference << ',' << to_string(v.kind) << ','
       << format_number(v.u_statistic) << ',' << format_number(v.p_two_sided) << ',' << format_number(v.p_one_sided)
       << ',' << format_number(v.corrected_beta) << ',' << t.n_test << '\n';
}

inline void write_verdicts_markdown(std::ostream& os, const VerdictTable& t) {
  os << "Verdicts against " << t.reference << " (beta = " << format_number(t.beta) << ", n_test = " << t.n_test
     << "): ▲ better, ▼ worse, ≡ equivalent.\n\n";
  os << "| Metric |";
  for (const auto& m : t.methods) os << ' ' << m << " |";
  os << "\n|---|";
  for (std::size_t i = 0; i < t.methods.size(); ++i) os << ":---:|";
  os << '\n';
  for (const auto& cm : compared_metrics()) {
    bool any = false;
    std::ostringstream row;
    row << "| " << cm.name << " |";
    for (const auto& m : t.methods) {
      const auto it = std::find_if(t.verdicts.begin(), t.verdicts.end(),
                                   [&](const Verdict& v) { return v.metric == cm.name && v.method == m; });
      if (it == t.verdicts.end()) {
        row << " - |";
      } else {
        any = true;
        row << ' ' << glyph(it->kind) << " |";
      }
    }
    if (any) os << row.str() << '\n';
  }
}

inline void write_text_file(const std::filesystem::path& path, const std::string& content) {
  std::error_code ec;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
  std::ofstream os(path, std::ios::binary);
  if (!os) fail(ErrorKind::IoFailure, "cannot write " + path.string());
  os << content;
  if (!os) fail(ErrorKind::IoFailure, "failed writing " + path.string());
}

inline void save_verdicts(const std::filesystem::path& dir, const VerdictTable& t) {
  std::ostringstream csv, md;
  write_verdicts_csv(csv, t);
  write_verdicts_markdown(md, t);
  write_text_file(dir / "verdicts.csv", csv.str());
  write_text_file(dir / "verdicts.md", md.str());
}

}  // namespace expobench
