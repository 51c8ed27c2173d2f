#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "smfg/experiment.hpp"

namespace smfg {
namespace {

namespace fs = std::filesystem;

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::string config_error(const std::string& text) {
  try {
    parse_config(text);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return {};
}

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("smfg_experiment_test_" + name);
  fs::remove_all(dir);
  return dir;
}

ExperimentConfig small_config(ExperimentMode mode, const fs::path& dir) {
  ExperimentConfig c;
  c.mode = mode;
  c.grid.side = 3;
  c.grid.favorable_states = {{2, 2}, {2, 3}, {3, 2}, {3, 3}};
  c.episodes = 8;
  c.steps = 300;
  c.seed = 5;
  c.output_dir = dir.string();
  c.probe_pairs = 20;
  return c;
}

RunOptions silent() {
  static std::ostringstream sink;
  RunOptions o;
  o.quiet = true;
  o.log = &sink;
  return o;
}

constexpr const char* kReferenceConfig = R"({
  "environment": {"kind": "congestion", "side": 5, "jostle_p": 0.1, "congestion_c": 0.5},
  "rho": 0.7, "c_beta": 5, "nu": 0.55, "T": 50000,
  "c_mu": 0.5, "c_pi": 0.5, "theta": 0.55, "gamma": 0.6, "K": 300,
  "use_projection": false
})";

TEST(LoadConfig, ReferenceRunConfig) {
  const ExperimentConfig c = parse_config(kReferenceConfig);
  EXPECT_EQ(c.grid.side, 5);
  EXPECT_EQ(c.grid.jostle_p, 0.1);
  EXPECT_EQ(c.grid.congestion_c, 0.5);
  EXPECT_EQ(c.rho, 0.7);
  EXPECT_EQ(c.schedule.c_beta, 5.0);
  EXPECT_EQ(c.schedule.nu, 0.55);
  EXPECT_EQ(c.steps, 50'000u);
  EXPECT_EQ(c.episodes, 300u);
  EXPECT_EQ(c.schedule.theta, 0.55);
  EXPECT_EQ(c.schedule.gamma, 0.6);
  EXPECT_FALSE(c.use_projection);
}

TEST(LoadConfig, RejectsScheduleViolations) {
  const std::string msg = config_error(R"({"theta": 0.7, "gamma": 0.6})");
  EXPECT_NE(msg.find("theta must be < gamma"), std::string::npos) << msg;
  EXPECT_NE(config_error(R"({"psi": 0.6})").find("psi"), std::string::npos);
  EXPECT_NE(config_error(R"({"K": 1})").find("K must be >= 2"), std::string::npos);
  EXPECT_NE(config_error(R"({"environment": {"kind": "two_class", "side": 4}})").find("side must be 5"),
            std::string::npos);
}

TEST(LoadConfig, RejectsUnknownKeys) {
  EXPECT_NE(config_error(R"({"thetta": 0.5})").find("unknown config key \"thetta\""), std::string::npos);
  EXPECT_NE(config_error(R"({"environment": {"sides": 5}})").find("environment.sides"), std::string::npos);
  EXPECT_NE(config_error(R"({"oracle": {"dampening": 0.5}})").find("oracle.dampening"), std::string::npos);
}

TEST(LoadConfig, RejectsWrongTypes) {
  EXPECT_NE(config_error(R"({"K": 2.5})").find("field \"K\""), std::string::npos);
  EXPECT_NE(config_error(R"({"K": -3})").find("nonnegative"), std::string::npos);
  EXPECT_NE(config_error(R"({"c_mu": "half"})").find("expected a number"), std::string::npos);
  EXPECT_NE(config_error(R"({"use_projection": 1})").find("true or false"), std::string::npos);
  EXPECT_NE(config_error(R"({"mode": "train"})").find("mode must be one of"), std::string::npos);
  EXPECT_NE(config_error(R"({"environment": {"favorable_states": [[1]]}})").find("favorable_states"),
            std::string::npos);
  EXPECT_NE(config_error("[1, 2]").find("must be a JSON object"), std::string::npos);
}

TEST(LoadConfig, ParseErrorsCarryLineNumbers) {
  const std::string msg = config_error("{\n  \"K\": 10,\n  \"T\": ,\n}");
  EXPECT_NE(msg.find("line 3"), std::string::npos) << msg;
}

TEST(LoadConfig, MissingFile) {
  EXPECT_THROW(load_config("/nonexistent/config.json"), ConfigError);
}

TEST(LoadConfig, RoundTrip) {
  ExperimentConfig c = parse_config(kReferenceConfig);
  c.schedule.exploration = ExplorationScheme::kConstant;
  c.env_kind = EnvironmentKind::kTwoClass;
  c.oracle.damping = 0.25;
  const std::string once = to_json(c).dump();
  const ExperimentConfig back = parse_config(once);
  EXPECT_EQ(to_json(back).dump(), once);
  EXPECT_EQ(back.schedule.exploration, ExplorationScheme::kConstant);
  EXPECT_EQ(back.env_kind, EnvironmentKind::kTwoClass);
  EXPECT_EQ(back.oracle, c.oracle);
}

TEST(EpisodeCsv, FormatAndRoundTrip) {
  std::vector<EpisodeDiagnostics> rows(2);
  rows[0].k = 1;
  rows[0].e_pi = 0.1;
  rows[0].e_mu = 1.0 / 3.0;
  rows[0].eps_P = 2.0;
  rows[0].eps_Q = 0.0;
  rows[0].residual_mu = 0.25;
  rows[1].k = 2;
  rows[1].residual_mu = 1e-300;
  const std::string csv = episodes_csv(rows);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "k,e_pi,e_mu,eps_P,eps_Q,residual_mu");
  EXPECT_NE(csv.find("0.33333333333333331"), std::string::npos);
  EXPECT_NE(csv.find("\n2,,,,,1e-300\n"), std::string::npos);
  const auto back = parse_episodes_csv(csv);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(*back[0].e_mu, 1.0 / 3.0);
  EXPECT_EQ(back[1].residual_mu, 1e-300);
  EXPECT_FALSE(back[1].e_pi.has_value());
}

TEST(RunExperiment, SandboxModeWritesCsvAndSummary) {
  const fs::path dir = fresh_dir("sandbox");
  const ExperimentConfig c = small_config(ExperimentMode::kSandbox, dir);
  const ExperimentOutcome out = run_experiment(c, silent());
  ASSERT_EQ(out.exit_code, 0) << out.message;
  const auto rows = parse_episodes_csv(read_file(dir / "episodes_seed5.csv"));
  ASSERT_EQ(rows.size(), c.episodes);
  EXPECT_TRUE(rows.front().e_mu.has_value());
  const Json summary = Json::parse(read_file(dir / "summary_seed5.json"));
  EXPECT_EQ(summary["kind"], "sandbox_summary");
  EXPECT_EQ(summary["seed"], 5);
  EXPECT_TRUE(mean_field_from_json(summary["avg_mean_field"]).is_valid());
  EXPECT_TRUE(policy_from_json(summary["avg_policy"]).is_valid());
  EXPECT_TRUE(fs::exists(dir / "timing.json"));
  EXPECT_EQ(to_json(load_config(dir / "config.json")).dump(), to_json(c).dump());
}

TEST(RunExperiment, SandboxWithoutDiagnosticsSkipsOracle) {
  const fs::path dir = fresh_dir("nodiag");
  ExperimentConfig c = small_config(ExperimentMode::kSandbox, dir);
  c.diagnostics_every = 0;
  c.trace_every = 50;
  ASSERT_EQ(run_experiment(c, silent()).exit_code, 0);
  EXPECT_TRUE(parse_episodes_csv(read_file(dir / "episodes_seed5.csv")).empty());
  const std::string trace = read_file(dir / "trace_seed5.csv");
  EXPECT_EQ(trace.substr(0, trace.find('\n')), "k,t,residual_mu");
  const Json summary = Json::parse(read_file(dir / "summary_seed5.json"));
  EXPECT_FALSE(summary.contains("l1_mean_field_to_oracle"));
}

TEST(RunExperiment, OracleAndProbeModes) {
  const fs::path dir = fresh_dir("oracle");
  ASSERT_EQ(run_experiment(small_config(ExperimentMode::kOracle, dir), silent()).exit_code, 0);
  const BmfePair b = bmfe_from_json(Json::parse(read_file(dir / "bmfe.json")));
  EXPECT_TRUE(b.converged);
  ASSERT_EQ(run_experiment(small_config(ExperimentMode::kProbe, dir), silent()).exit_code, 0);
  const ContractionEstimate est = contraction_from_json(Json::parse(read_file(dir / "contraction.json")));
  EXPECT_GE(est.d_hat(), 0.0);
  const Json raw = Json::parse(read_file(dir / "contraction.json"));
  EXPECT_EQ(raw["contraction_verified"].get<bool>(), est.d_hat() < 1.0);
}

TEST(RunExperiment, CompareModeAggregatesSeeds) {
  const fs::path dir = fresh_dir("compare");
  ExperimentConfig c = small_config(ExperimentMode::kCompare, dir);
  c.num_seeds = 3;
  ASSERT_EQ(run_experiment(c, silent()).exit_code, 0);
  const Json report = Json::parse(read_file(dir / "compare.json"));
  ASSERT_EQ(report["seeds"].size(), 3u);
  std::vector<double> l1;
  for (std::uint64_t s = 5; s < 8; ++s) {
    EXPECT_TRUE(fs::exists(dir / ("episodes_seed" + std::to_string(s) + ".csv")));
    l1.push_back(report["seeds"][s - 5]["l1_mean_field"].get<double>());
  }
  EXPECT_EQ(report["median_l1_mean_field"].get<double>(), median(l1));
}

TEST(RunExperiment, ByteIdenticalAcrossRuns) {
  const fs::path a = fresh_dir("det_a");
  const fs::path b = fresh_dir("det_b");
  ExperimentConfig c = small_config(ExperimentMode::kCompare, a);
  c.num_seeds = 2;
  c.use_projection = true;
  c.epsilon_net_mesh = 1.5;
  ASSERT_EQ(run_experiment(c, silent()).exit_code, 0);
  c.output_dir = b.string();
  ASSERT_EQ(run_experiment(c, silent()).exit_code, 0);
  for (const char* name : {"bmfe.json", "compare.json", "episodes_seed5.csv", "episodes_seed6.csv",
                           "summary_seed5.json", "summary_seed6.json"}) {
    EXPECT_EQ(read_file(a / name), read_file(b / name)) << name;
  }
}

TEST(RunExperiment, ExitCodes) {
  const fs::path dir = fresh_dir("codes");
  ExperimentConfig bad = small_config(ExperimentMode::kSandbox, dir);
  bad.schedule.theta = 0.9;
  EXPECT_EQ(run_experiment(bad, silent()).exit_code, exit_code::kConfig);

  fs::create_directories(dir);
  const fs::path file = dir / "not_a_directory";
  std::ofstream(file) << "x";
  ExperimentConfig io = small_config(ExperimentMode::kOracle, file / "sub");
  EXPECT_EQ(run_experiment(io, silent()).exit_code, exit_code::kIo);
}

TEST(RunExperiment, InfeasibleMeshFallsBackWithWarning) {
  const fs::path dir = fresh_dir("mesh");
  ExperimentConfig c = small_config(ExperimentMode::kSandbox, dir);
  c.use_projection = true;
  c.epsilon_net_mesh = 0.01;
  c.net_point_budget = 5000;
  std::ostringstream log;
  RunOptions opts;
  opts.quiet = true;
  opts.log = &log;
  ASSERT_EQ(run_experiment(c, opts).exit_code, 0);
  EXPECT_NE(log.str().find("warning: epsilon-net needs"), std::string::npos) << log.str();
}

}  // namespace
}  // namespace smfg
