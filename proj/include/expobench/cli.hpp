#pragma once

// Command-line front end. `run_cli` is the whole program; tools/main.cpp only forwards to it.
//
// Exit codes: 0 success, 1 validation error (bad flags, bad inputs), 2 runtime error (I/O, plugin).
// Every subcommand takes `--config FILE`: a JSON object {"version": 1, "<flag>": value, ...}
// whose keys are long flag names. Command-line flags win over the file, which wins over the environment.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "expobench/expobench.hpp"

namespace expobench {

namespace cli {

/// Flat, versioned JSON config for CLI11. Arrays become repeated values.
class JsonConfig : public CLI::Config {
 public:
  explicit JsonConfig(const CLI::App* root = nullptr) : root_(root) {}

  std::string to_config(const CLI::App* app, bool default_also, bool, std::string) const override {
    nlohmann::json j;
    j["version"] = 1;
    for (const CLI::Option* opt : app->get_options()) {
      if (opt->get_lnames().empty() || !opt->get_configurable()) continue;
      std::vector<std::string> values = opt->results();
      if (values.empty() && default_also && !opt->get_default_str().empty()) values = {opt->get_default_str()};
      if (values.empty()) continue;
      j[opt->get_lnames().front()] = values.size() == 1 ? nlohmann::json(values.front()) : nlohmann::json(values);
    }
    return j.dump(2) + "\n";
  }

  std::vector<CLI::ConfigItem> from_config(std::istream& is) const override {
    nlohmann::json j;
    try {
      is >> j;
    } catch (const nlohmann::json::exception& e) {
      throw CLI::ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    if (!j.is_object() || !j.contains("version") || j.at("version") != 1)
      throw CLI::ConfigError("config must be a JSON object with \"version\": 1");
    std::vector<std::string> parents;
    if (root_ != nullptr && !root_->get_subcommands().empty()) parents.push_back(root_->get_subcommands().front()->get_name());
    std::vector<CLI::ConfigItem> items;
    for (const auto& [key, value] : j.items()) {
      if (key == "version") continue;
      CLI::ConfigItem item;
      item.parents = parents;
      item.name = key;
      if (value.is_array()) {
        for (const auto& v : value) item.inputs.push_back(scalar(key, v));
      } else {
        item.inputs.push_back(scalar(key, value));
      }
      items.push_back(std::move(item));
    }
    return items;
  }

 private:
  static std::string scalar(const std::string& key, const nlohmann::json& v) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
    if (v.is_number()) return v.dump();
    throw CLI::ConfigError("config key '" + key + "' must hold a scalar or an array of scalars");
  }

  const CLI::App* root_;
};

/// `A:B` (inclusive integer range) or a comma-separated list of positive lengths.
inline std::vector<double> parse_windows(const std::string& text) {
  auto number = [&](const std::string& s) {
    try {
      std::size_t used = 0;
      const double v = std::stod(s, &used);
      if (used != s.size()) throw std::invalid_argument(s);
      return v;
    } catch (const std::exception&) {
      fail(ErrorKind::InvalidArgument, "bad window specification '" + text + "'");
    }
  };
  std::vector<double> out;
  if (const auto colon = text.find(':'); colon != std::string::npos) {
    const double a = number(text.substr(0, colon));
    const double b = number(text.substr(colon + 1));
    if (a != std::floor(a) || b != std::floor(b) || a < 1 || b < a)
      fail(ErrorKind::InvalidArgument, "window range must be A:B with integers 1 <= A <= B");
    for (double w = a; w <= b; w += 1.0) out.push_back(w);
  } else {
    std::stringstream ss(text);
    std::string cell;
    while (std::getline(ss, cell, ',')) out.push_back(number(cell));
  }
  MetricConfig probe;
  probe.windows_m = out;
  probe.validate();
  return out;
}

inline std::vector<ExposureTime> to_ladder(const std::vector<double>& ms) {
  std::vector<ExposureTime> out;
  for (double v : ms) out.emplace_back(v);
  for (std::size_t i = 1; i < out.size(); ++i)
    if (!(out[i] > out[i - 1])) fail(ErrorKind::InvalidArgument, "ladder must be strictly increasing");
  if (out.size() < 2) fail(ErrorKind::InvalidArgument, "ladder needs at least two exposures");
  return out;
}

inline Crf crf_from(const std::string& path) { return path.empty() ? Crf::identity() : load_crf(path); }

// ---- subcommands -------------------------------------------------------------

struct SynthArgs {
  std::string out;
  std::vector<std::string> scenes = scene_names();
  std::vector<double> ladder{1, 2, 4, 8, 16, 32};
  std::size_t frames = 20;
  double noise = 4.0;
  std::uint64_t seed = 0;
  int width = 160;
  int height = 120;
  double gamma = 1.0;
  std::string crf;
  bool motion = false;
  double frame_period = kDefaultFramePeriod;
  double day_length = 20.0;
  std::string subset = "all";
};

inline int synth(const SynthArgs& a, std::ostream& out) {
  if (!(a.noise >= 0.0)) fail(ErrorKind::InvalidArgument, "noise sigma must be >= 0");
  if (!(a.frame_period > 0.0)) fail(ErrorKind::InvalidArgument, "frame period must be > 0");
  const Crf crf = !a.crf.empty() ? load_crf(a.crf) : a.gamma == 1.0 ? Crf::identity() : Crf::gamma(a.gamma);
  SceneOptions o;
  o.width = a.width;
  o.height = a.height;
  o.crf = crf;
  o.noise_sigma = a.noise;
  o.day_length = a.day_length;
  if (a.motion) o.motion = SceneMotion{};
  const auto ladder = to_ladder(a.ladder);
  const auto names = scene_names();
  for (const auto& name : a.scenes) {
    const SyntheticScene scene = make_scene(name, o);
    const auto index = static_cast<std::uint64_t>(std::find(names.begin(), names.end(), name) - names.begin());
    const Sequence seq = render_bracket_sequence(scene, ladder, a.frames, detail::mix_seed(a.seed, index), a.frame_period);
    save_sequence(seq, std::filesystem::path(a.out) / name, SaveOptions{a.subset, true});
    out << "wrote " << (std::filesystem::path(a.out) / name).string() << " (" << seq.frames.size() << " frames)\n";
  }
  save_crf((std::filesystem::path(a.out) / "crf.txt").string(), crf);
  return 0;
}

struct CalibrateArgs {
  std::string stack;
  std::size_t frame = 0;
  std::string out;
  std::string report;
  int max_iterations = 50;
  double max_residual = 0.02;
};

inline int calibrate_crf(const CalibrateArgs& a, std::ostream& out) {
  const Sequence seq = load_sequence(a.stack);
  if (a.frame >= seq.frames.size()) fail(ErrorKind::InvalidArgument, "frame index out of range");
  const auto& f = seq.frames[a.frame];
  std::vector<std::pair<Image12, ExposureTime>> stack;
  for (std::size_t b = 0; b < f.images.size(); ++b) stack.emplace_back(f.images[b], f.exposures[b]);
  CrfCalibrationOptions opts;
  opts.max_iterations = a.max_iterations;
  opts.max_residual_rmse = a.max_residual;
  const auto result = estimate_crf(stack, opts);
  save_crf(a.out, result.crf);
  std::ostringstream rep;
  rep << "residual_rmse,iterations,images\n"
      << format_number(result.residual_rmse) << ',' << result.iterations << ',' << stack.size() << '\n';
  if (!a.report.empty()) write_text_file(a.report, rep.str());
  out << rep.str();
  return 0;
}

struct EmulateArgs {
  std::string sequence;
  std::string crf;
  std::vector<double> targets;
  double alpha = 0.01;
  std::string out;
};

inline int emulate_frames(const EmulateArgs& a, std::ostream& out) {
  EmulatorConfig cfg{a.alpha, crf_from(a.crf)};
  cfg.validate();
  std::vector<ExposureTime> targets;
  for (double t : a.targets) targets.emplace_back(t);
  const Sequence seq = load_sequence(a.sequence);
  for (const auto& target : targets) {
    const auto dir = std::filesystem::path(a.out) / (format_number(target.ms()) + "ms");
    std::filesystem::create_directories(dir);
    std::ostringstream listing;
    for (std::size_t i = 0; i < seq.frames.size(); ++i)
      detail::dump_frame(dir, i, seq.frames[i].timestamp, emulate(seq.frames[i], target, cfg), listing);
    write_text_file(dir / "frames.txt", listing.str());
    out << "wrote " << seq.frames.size() << " frames to " << dir.string() << '\n';
  }
  return 0;
}

struct RunArgs {
  std::string dataset;
  std::vector<std::string> methods;
  std::string methods_config;
  std::string crf;
  std::string out;
  double alpha = 0.01;
  int grid = 20;
  std::string windows = "5:50";
  double beta = 0.05;
  std::string reference = "AE50";
  unsigned workers = 0;
  std::string trajectories;
  std::string dump_frames;
  int max_features = 3000;
  int fast_threshold = 20;
  double w_detect = 1.0;
  double w_match = 1.0;
  bool no_traces = false;
};

inline int run(const RunArgs& a, std::ostream& out) {
  RunConfig cfg;
  cfg.emulator = EmulatorConfig{a.alpha, crf_from(a.crf)};
  cfg.grid_n = a.grid;
  cfg.metrics.windows_m = parse_windows(a.windows);
  cfg.beta = a.beta;
  cfg.reference_method = a.reference;
  cfg.workers = a.workers;
  cfg.detector = DetectorOptions{a.max_features, a.fast_threshold};
  cfg.reward_w_detect = a.w_detect;
  cfg.reward_w_match = a.w_match;
  if (!a.dump_frames.empty()) cfg.dump_frames = a.dump_frames;
  cfg.validate();

  std::vector<MethodSpec> methods;
  if (!a.methods_config.empty()) {
    std::ifstream is(a.methods_config);
    if (!is) fail(ErrorKind::IoFailure, "cannot read " + a.methods_config);
    nlohmann::json j;
    try {
      is >> j;
      methods = parse_methods_json(j);
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorKind::ParseError, "methods config: " + std::string(e.what()));
    }
  }
  for (const auto& token : a.methods) methods.push_back(parse_method_token(token));
  if (methods.empty())
    for (const auto& type : builtin_method_types()) methods.push_back(MethodSpec{type, type, {}});

  const auto dataset = load_dataset(a.dataset);
  TrajectoryProvider provider;
  if (!a.trajectories.empty()) provider = directory_trajectories(a.trajectories);
  const auto report = run_benchmark(dataset, methods, cfg, provider);
  save_report(report, a.out, !a.no_traces);

  std::size_t faults = 0;
  for (const auto& rec : report.records) faults += rec.faulted ? 1 : 0;
  out << "ran " << report.records.size() << " pairs (" << methods.size() << " methods x " << dataset.size()
      << " sequences), " << faults << " faulted; report in " << (std::filesystem::path(a.out) / "report").string()
      << '\n';
  if (report.verdicts) write_verdicts_markdown(out, *report.verdicts);
  return 0;
}

struct MetricsArgs {
  std::string est;
  std::string ref;
  std::string windows = "5:50";
  double tolerance = 0.15;
  std::string out;
};

inline int metrics(const MetricsArgs& a, std::ostream& out, std::ostream& err) {
  MetricConfig cfg;
  cfg.windows_m = parse_windows(a.windows);
  cfg.association_tolerance_s = a.tolerance;
  const Trajectory est = load_trajectory(a.est);
  const Trajectory ref = load_trajectory(a.ref);
  std::vector<RelativeErrorResult> results;
  for (double w : cfg.windows_m) {
    try {
      results.push_back(relative_error(est, ref, w, cfg.association_tolerance_s));
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::TrajectoryTooShort) throw;
      err << "warning: skipping window " << format_number(w) << " m: " << e.what() << '\n';
    }
  }
  if (results.empty()) fail(ErrorKind::TrajectoryTooShort, "no window fits inside the reference trajectory");
  const auto agg = aggregate({results});
  const double duration = ref[ref.size() - 1].timestamp - ref[0].timestamp;
  const double tbf = time_before_failure(est, ref, duration, cfg);

  std::ostringstream csv;
  csv << "window_m,rte_percent,rre_deg_per_m,segments\n";
  for (const auto& r : results)
    csv << format_number(r.window_m) << ',' << format_number(r.rte_percent) << ',' << format_number(r.rre_deg_per_m)
        << ',' << r.segments.size() << '\n';
  csv << "mean," << format_number(agg.rte_percent) << ',' << format_number(agg.rre_deg_per_m) << ",\n";
  if (a.out.empty()) {
    out << csv.str();
  } else {
    write_text_file(a.out, csv.str());
    out << "rte " << format_number(agg.rte_percent) << " %, rre " << format_number(agg.rre_deg_per_m)
        << " deg/m over " << results.size() << " windows\n";
  }
  err << "time before failure " << format_number(tbf) << " s of " << format_number(duration) << " s ("
      << (is_success(tbf, duration) ? "success" : "failure") << ")\n";
  return 0;
}

struct StatsArgs {
  std::string metrics;
  std::string reference = "AE50";
  double beta = 0.05;
  std::string out;
};

inline int stats(const StatsArgs& a, std::ostream& out) {
  if (!(a.beta > 0.0 && a.beta < 1.0)) fail(ErrorKind::InvalidArgument, "beta must lie in (0, 1)");
  std::ifstream is(a.metrics);
  if (!is) fail(ErrorKind::IoFailure, "cannot read " + a.metrics);
  const auto rows = read_metrics_csv(is);
  const auto table = compute_verdicts(rows, a.reference, a.beta);
  if (!a.out.empty()) save_verdicts(a.out, table);
  write_verdicts_markdown(out, table);
  return 0;
}

}  // namespace cli

/// Parses argv and dispatches to a subcommand. Streams are injectable for tests.
inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  using namespace cli;
  CLI::App app{"Benchmark automatic-exposure controllers on emulated bracketed image sequences"};
  app.name("expobench");
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default();
  // CLI11 reads only the root's config file, so --config lives on the root and its keys
  // are routed to whichever subcommand was given.
  app.config_formatter(std::make_shared<JsonConfig>(&app));
  app.set_config("--config", "", "Versioned JSON file giving values for any flag of the chosen subcommand");
  app.allow_config_extras(CLI::config_extras_mode::error);
  auto config_for = [](CLI::App* sub) { sub->fallthrough(); };
  auto positive = CLI::PositiveNumber;

  SynthArgs sa;
  auto* s = app.add_subcommand("synth", "Generate oracle bracket sequences from the synthetic scene library");
  config_for(s);
  s->add_option("--out", sa.out, "Dataset directory to write (one subdirectory per scene, plus crf.txt)")->required();
  s->add_option("--scenes", sa.scenes, "Scenes to render")->delimiter(',')->check(CLI::IsMember(scene_names()));
  s->add_option("--ladder", sa.ladder, "Bracketing ladder in ms")->delimiter(',')->check(positive);
  s->add_option("--frames", sa.frames, "Bracketing cycles per sequence");
  s->add_option("--noise", sa.noise, "Additive Gaussian noise sigma in DN");
  s->add_option("--seed", sa.seed, "Noise seed");
  s->add_option("--width", sa.width, "Image width")->check(CLI::Range(8, 8192));
  s->add_option("--height", sa.height, "Image height")->check(CLI::Range(8, 8192));
  s->add_option("--gamma", sa.gamma, "Ground-truth response exponent (inverse response (d/4095)^gamma)")->check(positive);
  s->add_option("--crf", sa.crf, "Ground-truth response file (overrides --gamma)")->check(CLI::ExistingFile);
  s->add_flag("--motion", sa.motion, "Pan the view at 8 px/s while moving 1 m/s along x; writes reference poses");
  s->add_option("--frame-period", sa.frame_period, "Seconds between bracketing cycles");
  s->add_option("--day-length", sa.day_length, "Seconds per day for the day_cycle scene")->check(positive);
  s->add_option("--subset", sa.subset, "Subset label stored in each manifest");

  CalibrateArgs ca;
  auto* c = app.add_subcommand("calibrate-crf", "Estimate the response function from one static bracket stack");
  config_for(c);
  c->add_option("--stack", ca.stack, "Sequence directory holding the stack")->required()->check(CLI::ExistingDirectory);
  c->add_option("--frame", ca.frame, "Bracketing cycle used as the stack");
  c->add_option("--out", ca.out, "Response file to write")->required();
  c->add_option("--report", ca.report, "Optional CSV with the fit residual");
  c->add_option("--max-iterations", ca.max_iterations, "Alternating least-squares iteration cap")->check(CLI::Range(1, 10000));
  c->add_option("--max-residual", ca.max_residual, "Residual RMSE above which the stack is rejected as non-static")->check(positive);

  EmulateArgs ea;
  auto* e = app.add_subcommand("emulate", "Write emulated frames of a sequence at fixed target exposures");
  config_for(e);
  e->add_option("--sequence", ea.sequence, "Sequence directory")->required()->check(CLI::ExistingDirectory);
  e->add_option("--crf", ea.crf, "Response file (identity when omitted)")->check(CLI::ExistingFile);
  e->add_option("--target", ea.targets, "Target exposure(s) in ms")->required()->delimiter(',')->check(positive);
  e->add_option("--alpha", ea.alpha, "Saturation threshold for source bracket selection")->check(CLI::Range(0.0, 1.0));
  e->add_option("--out", ea.out, "Output directory (one <target>ms subdirectory per target)")->required();

  RunArgs ra;
  auto* r = app.add_subcommand("run", "Run controllers over a dataset and write reports");
  config_for(r);
  r->add_option("--dataset", ra.dataset, "Dataset directory (sequence directories or a single sequence)")
      ->required()
      ->check(CLI::ExistingDirectory);
  r->add_option("--methods", ra.methods, "Methods as name or name=type (default: all built-ins)")->delimiter(',');
  r->add_option("--methods-config", ra.methods_config, "Versioned JSON methods file")->check(CLI::ExistingFile);
  r->add_option("--crf", ra.crf, "Response file (identity when omitted)")->check(CLI::ExistingFile);
  r->add_option("--out", ra.out, "Output directory for report/ and traces/")->required();
  r->add_option("--alpha", ra.alpha, "Saturation threshold for source bracket selection")->check(CLI::Range(0.0, 1.0));
  r->add_option("--grid", ra.grid, "Coverage grid side n (n x n cells)")->check(CLI::Range(1, 1000));
  r->add_option("--windows", ra.windows, "Trajectory windows in m: A:B or a comma list");
  r->add_option("--beta", ra.beta, "Family-wise significance level");
  r->add_option("--reference", ra.reference, "Reference method for verdicts");
  r->add_option("--workers", ra.workers, "Worker threads (0: one per core)")->envname("EXPOSURE_BENCH_WORKERS");
  r->add_option("--trajectories", ra.trajectories, "Estimated trajectories as <dir>/<method>/<sequence>.txt")
      ->check(CLI::ExistingDirectory);
  r->add_option("--dump-frames", ra.dump_frames, "Write emulated frames to <dir>/<method>/<sequence>/");
  r->add_option("--max-features", ra.max_features, "Feature cap per image")->check(CLI::Range(1, 1000000));
  r->add_option("--fast-threshold", ra.fast_threshold, "FAST threshold on the 8-bit scale")->check(CLI::Range(1, 255));
  r->add_option("--w-detect", ra.w_detect, "Reward weight of detected features")->check(CLI::NonNegativeNumber);
  r->add_option("--w-match", ra.w_match, "Reward weight of matches")->check(CLI::NonNegativeNumber);
  r->add_flag("--no-traces", ra.no_traces, "Skip per-pair trace CSVs");

  MetricsArgs ma;
  auto* m = app.add_subcommand("metrics", "Relative translation and rotation error of an estimated trajectory");
  config_for(m);
  m->add_option("--est", ma.est, "Estimated trajectory (TUM)")->required()->check(CLI::ExistingFile);
  m->add_option("--ref", ma.ref, "Reference trajectory (TUM)")->required()->check(CLI::ExistingFile);
  m->add_option("--windows", ma.windows, "Windows in m: A:B or a comma list");
  m->add_option("--tolerance", ma.tolerance, "Timestamp association tolerance in s")->check(positive);
  m->add_option("--out", ma.out, "CSV file (stdout when omitted)");

  StatsArgs ta;
  auto* t = app.add_subcommand("stats", "Verdicts of each method against a reference from a metrics CSV");
  config_for(t);
  t->add_option("--metrics", ta.metrics, "metrics.csv written by run")->required()->check(CLI::ExistingFile);
  t->add_option("--reference", ta.reference, "Reference method");
  t->add_option("--beta", ta.beta, "Family-wise significance level");
  t->add_option("--out", ta.out, "Directory for verdicts.csv and verdicts.md");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& ex) {
    if (ex.get_exit_code() == 0) {
      out << ex.what() << '\n';
      return 0;
    }
    err << "error: " << ex.what() << '\n';
    return 1;
  }
  try {
    if (s->parsed()) return synth(sa, out);
    if (c->parsed()) return calibrate_crf(ca, out);
    if (e->parsed()) return emulate_frames(ea, out);
    if (r->parsed()) return run(ra, out);
    if (m->parsed()) return metrics(ma, out, err);
    if (t->parsed()) return stats(ta, out);
  } catch (const Error& ex) {
    err << "error: " << to_string(ex.kind()) << ": " << ex.what() << '\n';
    return is_validation_error(ex.kind()) ? 1 : 2;
  } catch (const nlohmann::json::exception& ex) {
    err << "error: ParseError: " << ex.what() << '\n';
    return 1;
  } catch (const std::exception& ex) {
    err << "error: " << ex.what() << '\n';
    return 2;
  }
  return 1;
}

}  // namespace expobench
