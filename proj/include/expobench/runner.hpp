#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "expobench/controllers.hpp"
#include "expobench/dataset_io.hpp"
#include "expobench/emulator.hpp"
#include "expobench/features.hpp"
#include "expobench/methods.hpp"
#include "expobench/report.hpp"
#include "expobench/trajectory.hpp"

namespace expobench {

struct RunConfig {
  EmulatorConfig emulator;
  int grid_n = 20;
  DetectorOptions detector;
  MatchOptions matcher;
  double reward_w_detect = 1.0;
  double reward_w_match = 1.0;
  MetricConfig metrics = MetricConfig::standard();
  std::string reference_method = "AE50";
  double beta = 0.05;
  unsigned workers = 0;                       // 0: hardware concurrency
  std::optional<std::filesystem::path> dump_frames;  // emulated images for external SLAM runs

  void validate() const {
    emulator.validate();
    if (grid_n < 1) fail(ErrorKind::InvalidArgument, "grid side must be >= 1");
    if (reward_w_detect < 0.0 || reward_w_match < 0.0) fail(ErrorKind::InvalidArgument, "reward weights must be >= 0");
    if (!(beta > 0.0 && beta < 1.0)) fail(ErrorKind::InvalidArgument, "beta must lie in (0, 1)");
    metrics.validate();
  }
};

struct FrameRecord {
  double timestamp = 0.0;
  double exposure_ms = 0.0;
  double brightness = 0.0;
  double saturation = 0.0;
  std::size_t features = 0;
  std::size_t matches = 0;
  double coverage = 0.0;
  double reward = 0.0;
};

struct RunRecord {
  std::string method;
  std::string sequence;
  std::string subset = "all";
  std::vector<FrameRecord> trace;
  bool faulted = false;
  std::string fault;
  std::vector<std::string> warnings;
  // Filled when an estimated trajectory is available.
  std::optional<double> rte_percent;
  std::optional<double> rre_deg_per_m;
  std::optional<double> failure_time_s;
  std::optional<bool> success;
};

/// One sequence as consumed by the runner.
struct DatasetEntry {
  Sequence sequence;
  std::string subset = "all";
  std::optional<Trajectory> reference;
};

/// Loads every sequence under `root`. The reference trajectory comes from the
/// manifest's reference file when present, else from per-frame poses.
inline std::vector<DatasetEntry> load_dataset(const std::filesystem::path& root) {
  std::vector<DatasetEntry> out;
  for (const auto& dir : list_sequence_dirs(root)) {
    const SequenceManifest m = load_manifest(dir);
    DatasetEntry e{load_sequence(dir), m.subset, std::nullopt};
    if (m.reference_trajectory) e.reference = load_trajectory(dir / *m.reference_trajectory);
    else e.reference = sequence_trajectory(e.sequence);
    out.push_back(std::move(e));
  }
  return out;
}

namespace detail {

inline void dump_frame(const std::filesystem::path& dir, std::size_t index, double timestamp, const Image12& img,
                       std::ostream& listing) {
  char name[32];
  std::snprintf(name, sizeof name, "%06zu.png", index);
  write_png(dir / name, img);
  listing << format_number(timestamp) << ' ' << name << '\n';
}

}  // namespace detail

/// Drives one controller through one sequence. For every frame the image is
/// emulated at the current request and measured; the controller then sees
/// that image and produces the request for the next frame.
inline RunRecord run_sequence(const Sequence& seq, ExposureController& controller, const RunConfig& cfg,
                              const std::string& method_name = {},
                              const std::optional<std::filesystem::path>& dump_dir = std::nullopt) {
  RunRecord rec;
  rec.method = method_name.empty() ? std::string(controller.kind()) : method_name;
  rec.sequence = seq.id;
  if (seq.frames.empty()) {
    rec.failure_time_s = 0.0;
    rec.success = true;
    return rec;
  }
  std::ostringstream listing;
  if (dump_dir) {
    std::error_code ec;
    std::filesystem::create_directories(*dump_dir, ec);
    if (ec) fail(ErrorKind::IoFailure, "cannot create " + dump_dir->string());
  }
  try {
    ExposureTime request = controller.initialize(seq.frames.front(), cfg.emulator);
    FeatureSet previous;
    for (std::size_t i = 0; i < seq.frames.size(); ++i) {
      const auto& frame = seq.frames[i];
      const Image12 img = emulate(frame, request, cfg.emulator);
      FeatureSet features = detect(img, cfg.detector);
      const std::size_t matches = i == 0 ? 0 : match(previous, features, cfg.matcher);
      FrameRecord fr;
      fr.timestamp = frame.timestamp;
      fr.exposure_ms = request.ms();
      fr.brightness = mean_brightness(img);
      fr.saturation = saturation_level(img);
      fr.features = features.size();
      fr.matches = matches;
      fr.coverage = grid_coverage(features, img.width(), img.height(), cfg.grid_n);
      fr.reward = feature_reward(features, matches, cfg.reward_w_detect, cfg.reward_w_match);
      rec.trace.push_back(fr);
      if (dump_dir) detail::dump_frame(*dump_dir, i, frame.timestamp, img, listing);
      previous = std::move(features);
      if (i + 1 < seq.frames.size()) request = controller.step(img);
    }
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::ControllerFault) throw;
    rec.faulted = true;
    rec.fault = e.what();
  }
  rec.warnings = controller.warnings();
  if (dump_dir) write_text_file(*dump_dir / "frames.txt", listing.str());
  return rec;
}

/// Supplies the externally estimated trajectory of a (method, sequence) pair, if any.
using TrajectoryProvider = std::function<std::optional<Trajectory>(const std::string& method, const std::string& sequence)>;

/// Trajectories laid out as `<root>/<method>/<sequence>.txt` (TUM format).
inline TrajectoryProvider directory_trajectories(std::filesystem::path root) {
  return [root = std::move(root)](const std::string& method, const std::string& sequence) -> std::optional<Trajectory> {
    const auto path = root / method / (sequence + ".txt");
    if (!std::filesystem::exists(path)) return std::nullopt;
    return load_trajectory(path);
  };
}

/// Fills trajectory metrics of a record. Windows longer than the reference are skipped.
inline void score_trajectory(RunRecord& rec, const Trajectory& est, const Trajectory& ref, double duration_s,
                             const MetricConfig& metrics) {
  double rte_sum = 0.0, rre_sum = 0.0;
  std::size_t n = 0;
  for (double w : metrics.windows_m) {
    try {
      const auto r = relative_error(est, ref, w, metrics.association_tolerance_s);
      rte_sum += r.rte_percent;
      rre_sum += r.rre_deg_per_m;
      ++n;
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::TrajectoryTooShort && e.kind() != ErrorKind::NoOverlap) throw;
    }
  }
  if (n > 0) {
    rec.rte_percent = rte_sum / static_cast<double>(n);
    rec.rre_deg_per_m = rre_sum / static_cast<double>(n);
  }
  rec.failure_time_s = time_before_failure(est, ref, duration_s, metrics);
  rec.success = is_success(*rec.failure_time_s, duration_s);
}

struct MethodSummary {
  std::string method;
  double coverage = std::numeric_limits<double>::quiet_NaN();
  double matches = std::numeric_limits<double>::quiet_NaN();
  double rte_percent = std::numeric_limits<double>::quiet_NaN();
  double rre_deg_per_m = std::numeric_limits<double>::quiet_NaN();
  double failure_time_s = std::numeric_limits<double>::quiet_NaN();
  std::map<std::string, std::pair<std::size_t, std::size_t>> successes;  // subset -> (successes, scored)
};

struct BenchmarkReport {
  std::vector<RunRecord> records;  // method-major, in the order given
  std::vector<MetricRow> metric_rows;
  std::vector<MethodSummary> summaries;
  std::optional<VerdictTable> verdicts;
};

inline std::vector<MetricRow> metric_rows_of(const RunRecord& rec) {
  std::vector<MetricRow> rows;
  const std::string status = rec.faulted ? "fault" : "ok";
  auto add = [&](const char* metric, double v) { rows.push_back({rec.method, rec.sequence, rec.subset, status, metric, v}); };
  auto mean_of = [&](auto field) {
    if (rec.trace.empty()) return std::numeric_limits<double>::quiet_NaN();
    double s = 0.0;
    for (const auto& f : rec.trace) s += static_cast<double>(field(f));
    return s / static_cast<double>(rec.trace.size());
  };
  if (!rec.trace.empty()) {
    add("brightness", mean_of([](const FrameRecord& f) { return f.brightness; }));
    add("saturation", mean_of([](const FrameRecord& f) { return f.saturation; }));
    add("features", mean_of([](const FrameRecord& f) { return f.features; }));
    add("matches", mean_of([](const FrameRecord& f) { return f.matches; }));
    add("coverage", mean_of([](const FrameRecord& f) { return f.coverage; }));
    add("reward", mean_of([](const FrameRecord& f) { return f.reward; }));
    add("exposure_ms", mean_of([](const FrameRecord& f) { return f.exposure_ms; }));
  }
  if (rec.rte_percent) add("rte", *rec.rte_percent);
  if (rec.rre_deg_per_m) add("rre", *rec.rre_deg_per_m);
  if (rec.failure_time_s) add("failure_time", *rec.failure_time_s);
  if (rec.success) add("success", *rec.success ? 1.0 : 0.0);
  return rows;
}

inline unsigned resolve_workers(unsigned requested) {
  if (requested > 0) return requested;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? hw : 1;
}

/// Runs every (method x sequence) pair on a bounded worker pool and assembles the report.
inline BenchmarkReport run_benchmark(const std::vector<DatasetEntry>& dataset, const std::vector<MethodSpec>& methods,
                                     const RunConfig& cfg, const TrajectoryProvider& trajectories = {}) {
  cfg.validate();
  for (const auto& m : methods) {
    if (m.name.find_first_of(",/\n") != std::string::npos)
      fail(ErrorKind::InvalidArgument, "method name '" + m.name + "' contains a reserved character");
    if (std::count_if(methods.begin(), methods.end(), [&](const MethodSpec& o) { return o.name == m.name; }) > 1)
      fail(ErrorKind::InvalidArgument, "duplicate method name '" + m.name + "'");
  }
  const std::size_t pairs = methods.size() * dataset.size();
  std::vector<RunRecord> records(pairs);
  std::atomic<std::size_t> next{0};

  auto worker = [&] {
    for (std::size_t job = next++; job < pairs; job = next++) {
      const MethodSpec& spec = methods[job / dataset.size()];
      const DatasetEntry& entry = dataset[job % dataset.size()];
      RunRecord& rec = records[job];
      try {
        auto controller = make_controller(spec, entry.sequence.ladder(), cfg.emulator.crf);
        std::optional<std::filesystem::path> dump;
        if (cfg.dump_frames) dump = *cfg.dump_frames / spec.name / entry.sequence.id;
        rec = run_sequence(entry.sequence, *controller, cfg, spec.name, dump);
      } catch (const std::exception& e) {
        rec = RunRecord{};
        rec.method = spec.name;
        rec.sequence = entry.sequence.id;
        rec.faulted = true;
        rec.fault = e.what();
      }
      rec.subset = entry.subset;
      const double duration = entry.reference && !entry.reference->empty()
                                  ? (*entry.reference)[entry.reference->size() - 1].timestamp - (*entry.reference)[0].timestamp
                                  : entry.sequence.duration();
      if (rec.faulted) {
        // A crashed controller loses the sequence at its last completed frame.
        rec.failure_time_s = rec.trace.empty() ? 0.0 : rec.trace.back().timestamp - entry.sequence.frames.front().timestamp;
        rec.success = false;
        continue;
      }
      if (!trajectories || !entry.reference) continue;
      try {
        if (auto est = trajectories(spec.name, entry.sequence.id)) score_trajectory(rec, *est, *entry.reference, duration, cfg.metrics);
      } catch (const std::exception& e) {
        rec.warnings.push_back(std::string("trajectory scoring failed: ") + e.what());
      }
    }
  };
  {
    const unsigned n = std::min<unsigned>(resolve_workers(cfg.workers), static_cast<unsigned>(std::max<std::size_t>(pairs, 1)));
    std::vector<std::jthread> pool;
    for (unsigned i = 0; i < n; ++i) pool.emplace_back(worker);
  }

  BenchmarkReport report;
  report.records = std::move(records);
  for (const auto& rec : report.records) {
    auto rows = metric_rows_of(rec);
    report.metric_rows.insert(report.metric_rows.end(), rows.begin(), rows.end());
  }
  for (const auto& m : methods) {
    MethodSummary s;
    s.method = m.name;
    auto mean_over = [&](auto get) {
      double sum = 0.0;
      std::size_t n = 0;
      for (const auto& rec : report.records) {
        if (rec.method != m.name) continue;
        if (const auto v = get(rec)) {
          sum += *v;
          ++n;
        }
      }
      return n ? sum / static_cast<double>(n) : std::numeric_limits<double>::quiet_NaN();
    };
    auto trace_mean = [](const RunRecord& r, auto field) -> std::optional<double> {
      if (r.trace.empty()) return std::nullopt;
      double acc = 0.0;
      for (const auto& f : r.trace) acc += static_cast<double>(field(f));
      return acc / static_cast<double>(r.trace.size());
    };
    s.coverage = mean_over([&](const RunRecord& r) { return trace_mean(r, [](const FrameRecord& f) { return f.coverage; }); });
    s.matches = mean_over([&](const RunRecord& r) { return trace_mean(r, [](const FrameRecord& f) { return f.matches; }); });
    s.rte_percent = mean_over([](const RunRecord& r) { return r.rte_percent; });
    s.rre_deg_per_m = mean_over([](const RunRecord& r) { return r.rre_deg_per_m; });
    s.failure_time_s = mean_over([](const RunRecord& r) { return r.failure_time_s; });
    for (const auto& rec : report.records) {
      if (rec.method != m.name || !rec.success) continue;
      auto& [ok, total] = s.successes[rec.subset];
      ok += *rec.success ? 1 : 0;
      ++total;
    }
    report.summaries.push_back(std::move(s));
  }
  const bool has_reference = std::any_of(methods.begin(), methods.end(),
                                         [&](const MethodSpec& m) { return m.name == cfg.reference_method; });
  if (has_reference) report.verdicts = compute_verdicts(report.metric_rows, cfg.reference_method, cfg.beta);
  return report;
}

inline std::string trace_csv(const RunRecord& rec) {
  std::ostringstream os;
  os << "timestamp,exposure_ms,brightness,saturation,features,matches,coverage,reward\n";
  for (const auto& f : rec.trace)
    os << format_number(f.timestamp) << ',' << format_number(f.exposure_ms) << ',' << format_number(f.brightness) << ','
       << format_number(f.saturation) << ',' << f.features << ',' << f.matches << ',' << format_number(f.coverage) << ','
       << format_number(f.reward) << '\n';
  return os.str();
}

/// Writes report/metrics.csv, report/summary.csv, report/success.csv,
/// report/verdicts.{csv,md} and, optionally, traces/<method>/<sequence>.csv.
inline void save_report(const BenchmarkReport& report, const std::filesystem::path& out, bool with_traces = true) {
  std::ostringstream metrics;
  write_metrics_csv(metrics, report.metric_rows);
  write_text_file(out / "report" / "metrics.csv", metrics.str());

  std::ostringstream summary;
  summary << "method,coverage,matches,rte_percent,rre_deg_per_m,failure_time_s\n";
  for (const auto& s : report.summaries)
    summary << s.method << ',' << format_number(s.coverage) << ',' << format_number(s.matches) << ','
            << format_number(s.rte_percent) << ',' << format_number(s.rre_deg_per_m) << ','
            << format_number(s.failure_time_s) << '\n';
  write_text_file(out / "report" / "summary.csv", summary.str());

  std::ostringstream success;
  success << "method,subset,successes,trajectories\n";
  for (const auto& s : report.summaries)
    for (const auto& [subset, counts] : s.successes)
      success << s.method << ',' << subset << ',' << counts.first << ',' << counts.second << '\n';
  write_text_file(out / "report" / "success.csv", success.str());

  if (report.verdicts) save_verdicts(out / "report", *report.verdicts);

  std::ostringstream status;
  status << "method,sequence,status,detail\n";
  for (const auto& rec : report.records) {
    std::string detail = rec.faulted ? rec.fault : "";
    for (const auto& w : rec.warnings) detail += (detail.empty() ? "" : "; ") + w;
    std::replace(detail.begin(), detail.end(), ',', ';');
    std::replace(detail.begin(), detail.end(), '\n', ' ');
    status << rec.method << ',' << rec.sequence << ',' << (rec.faulted ? "fault" : "ok") << ',' << detail << '\n';
  }
  write_text_file(out / "report" / "status.csv", status.str());

  if (with_traces)
    for (const auto& rec : report.records)
      write_text_file(out / "traces" / rec.method / (rec.sequence + ".csv"), trace_csv(rec));
}

}  // namespace expobench
