#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "expobench/cli.hpp"

using namespace expobench;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code;
  std::string out, err;
};

Outcome invoke(std::vector<std::string> args) {
  args.insert(args.begin(), "expobench");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

std::size_t lines(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

class Workspace : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("expobench_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  // Three small moving scenes, enough for six samples per metric across two runs.
  fs::path synth_dataset(const std::string& name = "data") {
    const auto out = dir_ / name;
    const auto r = invoke({"synth", "--out", out.string(), "--scenes", "hdr_split,gradient_texture,day_cycle", "--frames",
                        "6", "--width", "48", "--height", "32", "--motion", "--seed", "11"});
    EXPECT_EQ(r.code, 0) << r.err;
    return out;
  }

  fs::path dir_;
};

}  // namespace

TEST(Cli, HelpAndFlagErrors) {
  EXPECT_EQ(invoke({"--help"}).code, 0);
  EXPECT_NE(invoke({"run", "--help"}).out.find("--workers"), std::string::npos);
  EXPECT_EQ(invoke({}).code, 1);
  EXPECT_EQ(invoke({"frobnicate"}).code, 1);
  EXPECT_EQ(invoke({"metrics", "--bogus"}).code, 1);
  EXPECT_EQ(invoke({"metrics", "--est", "/nonexistent/a.txt", "--ref", "/nonexistent/b.txt"}).code, 1);
}

TEST(Cli, ParseWindows) {
  const auto w = cli::parse_windows("5:50");
  ASSERT_EQ(w.size(), 46u);
  EXPECT_EQ(w.front(), 5.0);
  EXPECT_EQ(w.back(), 50.0);
  EXPECT_EQ(cli::parse_windows("2.5,10"), (std::vector<double>{2.5, 10.0}));
  EXPECT_THROW(cli::parse_windows("9:3"), Error);
  EXPECT_THROW(cli::parse_windows("1.5:3"), Error);
  EXPECT_THROW(cli::parse_windows("x"), Error);
  EXPECT_THROW(cli::parse_windows("-1"), Error);
}

TEST_F(Workspace, MetricsCommand) {
  std::vector<StampedPose> ref, est;
  for (int i = 0; i <= 600; ++i) {
    const double t = i * 0.1;
    ref.push_back({t, Eigen::Vector3d(t, 0, 0), Eigen::Quaterniond::Identity()});
    est.push_back({t, Eigen::Vector3d(1.01 * t, 0, 0), Eigen::Quaterniond::Identity()});
  }
  save_trajectory(dir_ / "ref.txt", Trajectory(ref));
  save_trajectory(dir_ / "est.txt", Trajectory(est));
  const auto r = invoke({"metrics", "--est", (dir_ / "est.txt").string(), "--ref", (dir_ / "ref.txt").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(lines(r.out), 1u + 46u + 1u);
  EXPECT_EQ(r.out.rfind("window_m,rte_percent,rre_deg_per_m,segments\n", 0), 0u);
  EXPECT_NE(r.out.find("\nmean,1,0,\n"), std::string::npos) << r.out;
  EXPECT_NE(r.err.find("success"), std::string::npos);

  const auto to_file = invoke({"metrics", "--est", (dir_ / "est.txt").string(), "--ref", (dir_ / "ref.txt").string(),
                            "--windows", "10,20", "--out", (dir_ / "m.csv").string()});
  ASSERT_EQ(to_file.code, 0);
  EXPECT_EQ(lines(slurp(dir_ / "m.csv")), 4u);
}

TEST_F(Workspace, ConfigFile) {
  std::vector<StampedPose> ref;
  for (int i = 0; i <= 300; ++i)
    ref.push_back({i * 0.1, Eigen::Vector3d(i * 0.1, 0, 0), Eigen::Quaterniond::Identity()});
  save_trajectory(dir_ / "ref.txt", Trajectory(ref));
  auto write_config = [&](const std::string& body) { std::ofstream(dir_ / "c.json") << body; };
  const std::string traj = (dir_ / "ref.txt").string();

  write_config(R"({"version": 1, "est": ")" + traj + R"(", "ref": ")" + traj + R"(", "windows": "7,8"})");
  auto r = invoke({"metrics", "--config", (dir_ / "c.json").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(lines(r.out), 1u + 2u + 1u);
  // The command line wins over the file.
  r = invoke({"metrics", "--config", (dir_ / "c.json").string(), "--windows", "9"});
  EXPECT_EQ(lines(r.out), 1u + 1u + 1u);

  write_config(R"({"version": 2, "est": ")" + traj + R"("})");
  EXPECT_EQ(invoke({"metrics", "--config", (dir_ / "c.json").string()}).code, 1);
  write_config(R"({"version": 1, "est": ")" + traj + R"(", "ref": ")" + traj + R"(", "unknown_key": 3})");
  EXPECT_EQ(invoke({"metrics", "--config", (dir_ / "c.json").string()}).code, 1);
  write_config("{ nope");
  EXPECT_EQ(invoke({"metrics", "--config", (dir_ / "c.json").string()}).code, 1);
}

TEST_F(Workspace, SynthEmulateAndRun) {
  const auto data = synth_dataset();
  EXPECT_TRUE(fs::exists(data / "crf.txt"));
  EXPECT_TRUE(fs::exists(data / "hdr_split" / kManifestName));

  const auto e = invoke({"emulate", "--sequence", (data / "gradient_texture").string(), "--target", "9.0", "--out",
                      (dir_ / "emu").string()});
  ASSERT_EQ(e.code, 0) << e.err;
  EXPECT_TRUE(fs::exists(dir_ / "emu" / "9ms" / "000005.png"));
  EXPECT_EQ(lines(slurp(dir_ / "emu" / "9ms" / "frames.txt")), 6u);
  EXPECT_EQ(read_png(dir_ / "emu" / "9ms" / "000000.png").width(), 48);

  const auto r = invoke({"run", "--dataset", data.string(), "--out", (dir_ / "out").string(), "--workers", "2"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("ran 21 pairs (7 methods x 3 sequences), 0 faulted"), std::string::npos) << r.out;
  for (const char* f : {"metrics.csv", "summary.csv", "success.csv", "status.csv", "verdicts.csv", "verdicts.md"})
    EXPECT_TRUE(fs::exists(dir_ / "out" / "report" / f)) << f;
  const std::string trace = slurp(dir_ / "out" / "traces" / "Kim" / "day_cycle.csv");
  EXPECT_EQ(trace.rfind("timestamp,exposure_ms,brightness,saturation,features,matches,coverage,reward\n", 0), 0u);
  EXPECT_EQ(lines(trace), 7u);

  const auto s = invoke({"stats", "--metrics", (dir_ / "out" / "report" / "metrics.csv").string(), "--out",
                      (dir_ / "stats").string()});
  ASSERT_EQ(s.code, 0) << s.err;
  EXPECT_EQ(slurp(dir_ / "stats" / "verdicts.csv"), slurp(dir_ / "out" / "report" / "verdicts.csv"));

  const auto missing = invoke({"stats", "--metrics", (dir_ / "out" / "report" / "metrics.csv").string(), "--reference",
                            "Nobody"});
  EXPECT_EQ(missing.code, 1);
  EXPECT_NE(missing.err.find("Nobody"), std::string::npos);
}

TEST_F(Workspace, RunWithUnreadableDatasetIsAnError) {
  fs::create_directories(dir_ / "empty");
  const auto r = invoke({"run", "--dataset", (dir_ / "empty").string(), "--out", (dir_ / "out").string()});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("MissingManifest"), std::string::npos) << r.err;
}

TEST(Runner, EmptySequenceSucceeds) {
  Sequence empty;
  empty.id = "empty";
  FixedExposure fix({1.0, 32.0}, 4.0);
  const auto rec = run_sequence(empty, fix, RunConfig{});
  EXPECT_FALSE(rec.faulted);
  EXPECT_TRUE(rec.trace.empty());
  ASSERT_TRUE(rec.success.has_value());
  EXPECT_TRUE(*rec.success);
}

TEST_F(Workspace, BenchmarkVerdictShapes) {
  const auto dataset = load_dataset(synth_dataset());
  RunConfig cfg;
  cfg.workers = 3;

  const auto solo = run_benchmark(dataset, {parse_method_token("Fix")}, cfg);
  EXPECT_FALSE(solo.verdicts.has_value());
  EXPECT_EQ(solo.records.size(), 3u);

  std::vector<MethodSpec> all;
  for (const auto& t : builtin_method_types()) all.push_back(MethodSpec{t, t, {}});
  const auto full = run_benchmark(dataset, all, cfg);
  ASSERT_TRUE(full.verdicts.has_value());
  EXPECT_EQ(full.verdicts->n_test, 6u);
  EXPECT_EQ(full.verdicts->methods.size(), 6u);
  for (const auto& m : full.verdicts->methods) EXPECT_NE(m, "AE50");
  // Without estimated trajectories only the image metrics are compared.
  EXPECT_EQ(full.verdicts->verdicts.size(), 6u * 2u);
  for (const auto& v : full.verdicts->verdicts) EXPECT_DOUBLE_EQ(v.corrected_beta, 0.05 / 6.0);

  const auto twins = run_benchmark(dataset, {parse_method_token("AE50"), parse_method_token("Copy=AE50")}, cfg);
  ASSERT_TRUE(twins.verdicts.has_value());
  ASSERT_FALSE(twins.verdicts->verdicts.empty());
  for (const auto& v : twins.verdicts->verdicts) EXPECT_EQ(v.kind, VerdictKind::Equivalent) << v.metric;

  EXPECT_THROW(run_benchmark(dataset, {parse_method_token("Fix"), parse_method_token("Fix")}, cfg), Error);
}

TEST_F(Workspace, BenchmarkIsDeterministic) {
  const auto data = synth_dataset();
  for (const char* out : {"a", "b"}) {
    const auto r = invoke({"run", "--dataset", data.string(), "--out", (dir_ / out).string(), "--workers",
                        out[0] == 'a' ? "1" : "4", "--no-traces"});
    ASSERT_EQ(r.code, 0) << r.err;
  }
  for (const char* f : {"metrics.csv", "summary.csv", "verdicts.csv", "verdicts.md"})
    EXPECT_EQ(slurp(dir_ / "a" / "report" / f), slurp(dir_ / "b" / "report" / f)) << f;
  EXPECT_FALSE(fs::exists(dir_ / "a" / "traces"));
}

TEST_F(Workspace, TrajectoriesFeedTrajectoryMetrics) {
  const auto data = synth_dataset();
  const auto dataset = load_dataset(data);
  ASSERT_TRUE(dataset[0].reference.has_value());
  // AE50 gets the exact reference, Fix a 2% scaled copy.
  fs::create_directories(dir_ / "traj" / "AE50");
  fs::create_directories(dir_ / "traj" / "Fix");
  for (const auto& e : dataset) {
    std::vector<StampedPose> scaled = e.reference->poses();
    for (auto& p : scaled) p.translation *= 1.02;
    save_trajectory(dir_ / "traj" / "AE50" / (e.sequence.id + ".txt"), *e.reference);
    save_trajectory(dir_ / "traj" / "Fix" / (e.sequence.id + ".txt"), Trajectory(scaled));
  }
  RunConfig cfg;
  cfg.metrics.windows_m = {0.5, 1.0};
  const auto report = run_benchmark(dataset, {parse_method_token("AE50"), parse_method_token("Fix")}, cfg,
                                    directory_trajectories(dir_ / "traj"));
  for (const auto& rec : report.records) {
    ASSERT_TRUE(rec.rte_percent.has_value()) << rec.method << '/' << rec.sequence;
    // Segments end at the first pose past the window, so coarse pose spacing inflates a scale error.
    if (rec.method == "Fix") EXPECT_NEAR(*rec.rte_percent, 2.0, 0.25);
    else EXPECT_EQ(*rec.rte_percent, 0.0);
    ASSERT_TRUE(rec.success.has_value());
    EXPECT_TRUE(*rec.success);
  }
  ASSERT_TRUE(report.verdicts.has_value());
  const auto& v = report.verdicts->verdicts;
  EXPECT_TRUE(std::any_of(v.begin(), v.end(), [](const Verdict& x) { return x.metric == "rte"; }));
}
