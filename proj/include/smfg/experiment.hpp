#pragma once

// Experiment configuration and orchestration: JSON config loading with
// fail-closed validation, and the four run modes (sandbox, oracle, compare,
// probe) writing CSV/JSON artifacts into an output directory.
//
// Artifacts are byte-deterministic for a given config and seed. Wall-clock
// timings go to a separate timing.json that is excluded from that guarantee.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <future>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include "smfg/environment.hpp"
#include "smfg/oracle.hpp"
#include "smfg/sandbox.hpp"
#include "smfg/schedules.hpp"
#include "smfg/serialization.hpp"

namespace smfg {

enum class ExperimentMode { kSandbox, kOracle, kCompare, kProbe };
enum class EnvironmentKind { kCongestion, kTwoClass };

inline const char* to_string(ExperimentMode m) {
  switch (m) {
    case ExperimentMode::kSandbox: return "sandbox";
    case ExperimentMode::kOracle: return "oracle";
    case ExperimentMode::kCompare: return "compare";
    case ExperimentMode::kProbe: return "probe";
  }
  return "sandbox";
}

inline const char* to_string(EnvironmentKind k) {
  return k == EnvironmentKind::kCongestion ? "congestion" : "two_class";
}

/// Bad config content or syntax. Maps to exit code 1.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Failure to create or write an output file. Maps to exit code 2.
class OutputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline ExperimentMode experiment_mode_from_string(const std::string& s) {
  if (s == "sandbox") return ExperimentMode::kSandbox;
  if (s == "oracle") return ExperimentMode::kOracle;
  if (s == "compare") return ExperimentMode::kCompare;
  if (s == "probe") return ExperimentMode::kProbe;
  throw ConfigError("mode must be one of sandbox, oracle, compare, probe; got \"" + s + "\"");
}

inline EnvironmentKind environment_kind_from_string(const std::string& s) {
  if (s == "congestion") return EnvironmentKind::kCongestion;
  if (s == "two_class") return EnvironmentKind::kTwoClass;
  throw ConfigError("environment.kind must be \"congestion\" or \"two_class\"; got \"" + s + "\"");
}

struct OracleSettings {
  double damping = 0.5;
  double tol = 1e-8;
  std::uint64_t max_iter = 100'000;
  double vi_tol = kValueIterationTol;

  friend bool operator==(const OracleSettings&, const OracleSettings&) = default;
};

struct ExperimentConfig {
  ExperimentMode mode = ExperimentMode::kSandbox;
  EnvironmentKind env_kind = EnvironmentKind::kCongestion;
  CongestionGridParams grid;
  ScheduleParams schedule;
  double epsilon_net_mesh = 1.0;
  bool use_projection = false;
  std::uint64_t episodes = 300;  ///< K
  std::uint64_t steps = 50'000;  ///< T
  double rho = 0.7;
  std::uint64_t seed = 1;
  std::uint64_t num_seeds = 1;
  std::string output_dir = "out";
  std::uint64_t diagnostics_every = 1;
  std::uint64_t trace_every = 0;
  std::uint64_t net_point_budget = kDefaultNetBudget;
  OracleSettings oracle;
  std::uint64_t probe_pairs = 200;

  /// Throws ConfigError naming the offending field and constraint.
  void validate() const {
    try {
      schedule.validate();
      grid.validate();
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
    auto fail = [](const std::string& msg) { throw ConfigError(msg); };
    if (env_kind == EnvironmentKind::kTwoClass && grid.side != 5) fail("environment.side must be 5 for two_class");
    if (!(epsilon_net_mesh > 0.0) || !std::isfinite(epsilon_net_mesh)) fail("epsilon_net_mesh must be positive");
    if (episodes < 2) fail("K must be >= 2 (the output averages episodes 1..K-1)");
    if (steps < 2) fail("T must be >= 2");
    if (!(rho > 0.0 && rho < 1.0)) fail("rho must lie in (0,1)");
    if (num_seeds < 1) fail("num_seeds must be >= 1");
    if (output_dir.empty()) fail("output_dir must not be empty");
    if (net_point_budget < 1) fail("net_point_budget must be >= 1");
    if (!(oracle.damping > 0.0 && oracle.damping <= 1.0)) fail("oracle.damping must lie in (0,1]");
    if (!(oracle.tol > 0.0)) fail("oracle.tol must be > 0");
    if (oracle.max_iter < 1) fail("oracle.max_iter must be >= 1");
    if (!(oracle.vi_tol > 0.0)) fail("oracle.vi_tol must be > 0");
    if (probe_pairs < 1) fail("probe_pairs must be >= 1");
  }
};

// ---------------------------------------------------------------------------
// Config (de)serialization

inline Json to_json(const ExperimentConfig& c) {
  Json env;
  env["kind"] = to_string(c.env_kind);
  env["side"] = c.grid.side;
  env["jostle_p"] = c.grid.jostle_p;
  env["congestion_c"] = c.grid.congestion_c;
  env["favorable_reward"] = c.grid.favorable_reward;
  env["baseline_reward"] = c.grid.baseline_reward;
  env["favorable_states"] = Json::array();
  for (const auto& s : c.grid.favorable_states) env["favorable_states"].push_back({s.x, s.y});

  Json j;
  j["mode"] = to_string(c.mode);
  j["environment"] = std::move(env);
  j["c_mu"] = c.schedule.c_mu;
  j["c_pi"] = c.schedule.c_pi;
  j["gamma"] = c.schedule.gamma;
  j["theta"] = c.schedule.theta;
  j["zeta"] = c.schedule.zeta;
  j["c_beta"] = c.schedule.c_beta;
  j["nu"] = c.schedule.nu;
  j["psi"] = c.schedule.psi;
  j["lambda"] = c.schedule.lambda;
  j["exploration_scheme"] = to_string(c.schedule.exploration);
  j["epsilon_net_mesh"] = c.epsilon_net_mesh;
  j["use_projection"] = c.use_projection;
  j["K"] = c.episodes;
  j["T"] = c.steps;
  j["rho"] = c.rho;
  j["seed"] = c.seed;
  j["num_seeds"] = c.num_seeds;
  j["output_dir"] = c.output_dir;
  j["diagnostics_every"] = c.diagnostics_every;
  j["trace_every"] = c.trace_every;
  j["net_point_budget"] = c.net_point_budget;
  j["oracle"] = {{"damping", c.oracle.damping},
                 {"tol", c.oracle.tol},
                 {"max_iter", c.oracle.max_iter},
                 {"vi_tol", c.oracle.vi_tol}};
  j["probe_pairs"] = c.probe_pairs;
  return j;
}

namespace detail {

// Reads optional fields from a JSON object, remembering which keys were
// consumed so leftovers can be reported as unknown.
class FieldReader {
 public:
  FieldReader(const Json& obj, std::string prefix) : obj_(obj), prefix_(std::move(prefix)) {
    if (!obj_.is_object()) throw ConfigError(where("") + "must be a JSON object");
  }

  template <typename T>
  void read(const char* key, T& out) {
    seen_.emplace_back(key);
    auto it = obj_.find(key);
    if (it == obj_.end()) return;
    try {
      if constexpr (std::is_same_v<T, double>) {
        if (!it->is_number()) throw ConfigError("expected a number");
      } else if constexpr (std::is_same_v<T, bool>) {
        if (!it->is_boolean()) throw ConfigError("expected true or false");
      } else if constexpr (std::is_same_v<T, std::string>) {
        if (!it->is_string()) throw ConfigError("expected a string");
      } else if constexpr (std::is_integral_v<T>) {
        if (!it->is_number_integer()) throw ConfigError("expected an integer");
        if constexpr (std::is_unsigned_v<T>) {
          if (it->is_number_integer() && !it->is_number_unsigned()) throw ConfigError("expected a nonnegative integer");
        }
      }
      out = it->template get<T>();
    } catch (const ConfigError& e) {
      throw ConfigError(where(key) + e.what());
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(where(key) + e.what());
    }
  }

  const Json* raw(const char* key) {
    seen_.emplace_back(key);
    auto it = obj_.find(key);
    return it == obj_.end() ? nullptr : &*it;
  }

  void reject_unknown() const {
    for (auto it = obj_.begin(); it != obj_.end(); ++it) {
      if (std::find(seen_.begin(), seen_.end(), it.key()) == seen_.end()) {
        throw ConfigError("unknown config key \"" + prefix_ + it.key() + "\"");
      }
    }
  }

  std::string where(const std::string& key) const { return "field \"" + prefix_ + key + "\": "; }

 private:
  const Json& obj_;
  std::string prefix_;
  std::vector<std::string> seen_;
};

inline std::pair<std::size_t, std::size_t> line_and_column(const std::string& text, std::size_t byte) {
  std::size_t line = 1;
  std::size_t col = 1;
  for (std::size_t i = 0; i + 1 < byte && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return {line, col};
}

}  // namespace detail

/// Builds a validated config from a parsed JSON document. Absent keys keep
/// their defaults; unknown keys are rejected.
inline ExperimentConfig config_from_json(const Json& j) {
  ExperimentConfig c;
  detail::FieldReader top(j, "");

  std::string mode = to_string(c.mode);
  top.read("mode", mode);
  c.mode = experiment_mode_from_string(mode);

  if (const Json* env = top.raw("environment")) {
    detail::FieldReader r(*env, "environment.");
    std::string kind = to_string(c.env_kind);
    r.read("kind", kind);
    c.env_kind = environment_kind_from_string(kind);
    r.read("side", c.grid.side);
    r.read("jostle_p", c.grid.jostle_p);
    r.read("congestion_c", c.grid.congestion_c);
    r.read("favorable_reward", c.grid.favorable_reward);
    r.read("baseline_reward", c.grid.baseline_reward);
    if (const Json* fav = r.raw("favorable_states")) {
      if (!fav->is_array()) throw ConfigError(r.where("favorable_states") + "expected an array of [x, y] pairs");
      c.grid.favorable_states.clear();
      for (const auto& p : *fav) {
        if (!p.is_array() || p.size() != 2 || !p[0].is_number_integer() || !p[1].is_number_integer()) {
          throw ConfigError(r.where("favorable_states") + "expected an array of [x, y] integer pairs");
        }
        c.grid.favorable_states.push_back({p[0].get<int>(), p[1].get<int>()});
      }
    }
    r.reject_unknown();
  }

  top.read("c_mu", c.schedule.c_mu);
  top.read("c_pi", c.schedule.c_pi);
  top.read("gamma", c.schedule.gamma);
  top.read("theta", c.schedule.theta);
  top.read("zeta", c.schedule.zeta);
  top.read("c_beta", c.schedule.c_beta);
  top.read("nu", c.schedule.nu);
  top.read("psi", c.schedule.psi);
  top.read("lambda", c.schedule.lambda);
  std::string scheme = to_string(c.schedule.exploration);
  top.read("exploration_scheme", scheme);
  try {
    c.schedule.exploration = exploration_scheme_from_string(scheme);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  top.read("epsilon_net_mesh", c.epsilon_net_mesh);
  top.read("use_projection", c.use_projection);
  top.read("K", c.episodes);
  top.read("T", c.steps);
  top.read("rho", c.rho);
  top.read("seed", c.seed);
  top.read("num_seeds", c.num_seeds);
  top.read("output_dir", c.output_dir);
  top.read("diagnostics_every", c.diagnostics_every);
  top.read("trace_every", c.trace_every);
  top.read("net_point_budget", c.net_point_budget);
  if (const Json* o = top.raw("oracle")) {
    detail::FieldReader r(*o, "oracle.");
    r.read("damping", c.oracle.damping);
    r.read("tol", c.oracle.tol);
    r.read("max_iter", c.oracle.max_iter);
    r.read("vi_tol", c.oracle.vi_tol);
    r.reject_unknown();
  }
  top.read("probe_pairs", c.probe_pairs);
  top.reject_unknown();

  c.validate();
  return c;
}

inline ExperimentConfig parse_config(const std::string& text) {
  Json j;
  try {
    j = Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    const auto [line, col] = detail::line_and_column(text, e.byte);
    throw ConfigError("config parse error at line " + std::to_string(line) + ", column " + std::to_string(col) +
                      ": " + e.what());
  }
  return config_from_json(j);
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

// ---------------------------------------------------------------------------
// Output helpers

/// Shortest decimal form is not guaranteed stable across libraries, so all
/// CSV numbers use 17 significant digits.
inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline constexpr const char* kEpisodeCsvHeader = "k,e_pi,e_mu,eps_P,eps_Q,residual_mu";

inline std::string episodes_csv(const std::vector<EpisodeDiagnostics>& rows) {
  std::string out = kEpisodeCsvHeader;
  out += '\n';
  auto cell = [&](const std::optional<double>& v) {
    out += ',';
    if (v) out += format_double(*v);
  };
  for (const auto& d : rows) {
    out += std::to_string(d.k);
    cell(d.e_pi);
    cell(d.e_mu);
    cell(d.eps_P);
    cell(d.eps_Q);
    cell(d.residual_mu);
    out += '\n';
  }
  return out;
}

/// Inverse of episodes_csv; empty cells come back as nullopt.
inline std::vector<EpisodeDiagnostics> parse_episodes_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != kEpisodeCsvHeader) {
    throw std::invalid_argument("episode CSV: missing or unexpected header");
  }
  std::vector<EpisodeDiagnostics> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::size_t start = 0;
    for (std::size_t pos; (pos = line.find(',', start)) != std::string::npos; start = pos + 1) {
      cells.push_back(line.substr(start, pos - start));
    }
    cells.push_back(line.substr(start));
    if (cells.size() != 6) throw std::invalid_argument("episode CSV: expected 6 columns: " + line);
    auto opt = [](const std::string& s) -> std::optional<double> {
      if (s.empty()) return std::nullopt;
      return std::stod(s);
    };
    EpisodeDiagnostics d;
    d.k = std::stoull(cells[0]);
    d.e_pi = opt(cells[1]);
    d.e_mu = opt(cells[2]);
    d.eps_P = opt(cells[3]);
    d.eps_Q = opt(cells[4]);
    d.residual_mu = std::stod(cells[5]);
    rows.push_back(d);
  }
  return rows;
}

inline std::string trace_csv(const std::vector<TracePoint>& trace) {
  std::string out = "k,t,residual_mu\n";
  for (const auto& p : trace) {
    out += std::to_string(p.k) + ',' + std::to_string(p.t) + ',' + format_double(p.residual_mu) + '\n';
  }
  return out;
}

inline void write_text_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw OutputError("cannot open " + path.string() + " for writing");
  out << content;
  out.flush();
  if (!out) throw OutputError("failed writing " + path.string());
}

inline void write_json_file(const std::filesystem::path& path, const Json& j) {
  write_text_file(path, j.dump(2) + "\n");
}

inline double median(std::vector<double> v) {
  if (v.empty()) throw std::invalid_argument("median of an empty sample");
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// ---------------------------------------------------------------------------
// Orchestration

struct RunOptions {
  bool quiet = false;
  std::ostream* log = &std::cerr;
};

struct ExperimentOutcome {
  int exit_code = 0;
  std::string message;
  std::vector<std::filesystem::path> files;
};

namespace exit_code {
inline constexpr int kOk = 0;
inline constexpr int kConfig = 1;
inline constexpr int kIo = 2;
inline constexpr int kNonFinite = 3;
inline constexpr int kFailure = 4;
}  // namespace exit_code

inline EnvironmentPtr make_environment(const ExperimentConfig& c) {
  return c.env_kind == EnvironmentKind::kCongestion ? make_congestion_env(c.grid) : make_two_class_env(c.grid);
}

inline BmfeSolverOptions solver_options(const ExperimentConfig& c) {
  BmfeSolverOptions o;
  o.lambda = c.schedule.lambda;
  o.rho = c.rho;
  o.damping = c.oracle.damping;
  o.tol = c.oracle.tol;
  o.max_iter = static_cast<std::size_t>(c.oracle.max_iter);
  o.value_iteration_tol = c.oracle.vi_tol;
  return o;
}

namespace detail {

class Orchestrator {
 public:
  Orchestrator(const ExperimentConfig& cfg, const RunOptions& opts)
      : cfg_(cfg), opts_(opts), dir_(cfg.output_dir), env_(make_environment(cfg)) {}

  ExperimentOutcome run() {
    std::error_code ec;
    std::filesystem::create_directories(dir_, ec);
    if (ec) throw OutputError("cannot create output directory " + dir_.string() + ": " + ec.message());
    write_json(dir_ / "config.json", to_json(cfg_));

    const auto start = std::chrono::steady_clock::now();
    switch (cfg_.mode) {
      case ExperimentMode::kSandbox: run_sandbox_mode(); break;
      case ExperimentMode::kOracle: write_json(dir_ / "bmfe.json", to_json(solve_oracle())); break;
      case ExperimentMode::kCompare: run_compare_mode(); break;
      case ExperimentMode::kProbe: run_probe_mode(); break;
    }
    timing_["total_seconds"] = seconds_since(start);
    write_json(dir_ / "timing.json", timing_);
    ExperimentOutcome outcome;
    outcome.files = std::move(files_);
    return outcome;
  }

 private:
  static double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  }

  void info(const std::string& msg) const {
    if (!opts_.quiet && opts_.log) *opts_.log << msg << '\n';
  }
  void warn(const std::string& msg) const {
    if (opts_.log) *opts_.log << "warning: " << msg << '\n';
  }

  void write_json(const std::filesystem::path& p, const Json& j) {
    write_json_file(p, j);
    files_.push_back(p);
  }
  void write_text(const std::filesystem::path& p, const std::string& s) {
    write_text_file(p, s);
    files_.push_back(p);
  }

  BmfePair solve_oracle() {
    const auto t0 = std::chrono::steady_clock::now();
    BmfePair b = solve_bmfe(*env_, solver_options(cfg_));
    timing_["oracle_seconds"] = seconds_since(t0);
    if (!b.converged) {
      warn("equilibrium solver stopped after " + std::to_string(b.iterations) +
           " iterations with residual " + format_double(b.residual_mu) + " (tol " + format_double(cfg_.oracle.tol) + ")");
    } else {
      info("equilibrium solver converged in " + std::to_string(b.iterations) + " iterations");
    }
    return b;
  }

  std::shared_ptr<const EpsilonNet> make_net() const {
    if (!cfg_.use_projection) return nullptr;
    const std::size_t s = env_->dims().num_states;
    const auto budget = static_cast<std::size_t>(cfg_.net_point_budget);
    try {
      return std::make_shared<EpsilonNet>(build_epsilon_net(s, cfg_.epsilon_net_mesh, budget));
    } catch (const NetBudgetError& e) {
      const double mesh = smallest_feasible_mesh(s, budget);
      warn(std::string(e.what()) + "; using the finest feasible mesh " + format_double(mesh));
      return std::make_shared<EpsilonNet>(build_epsilon_net(s, mesh, budget));
    }
  }

  SandboxConfig sandbox_config(std::uint64_t seed, std::shared_ptr<const EpsilonNet> net,
                               std::shared_ptr<const OracleHandle> oracle) const {
    SandboxConfig sc;
    sc.env = env_;
    sc.schedule = cfg_.schedule;
    sc.episodes = cfg_.episodes;
    sc.steps = cfg_.steps;
    sc.rho = cfg_.rho;
    sc.seed = seed;
    sc.use_projection = cfg_.use_projection;
    sc.net = std::move(net);
    sc.oracle = std::move(oracle);
    sc.diagnostics_every = cfg_.diagnostics_every;
    sc.trace_every = cfg_.trace_every;
    return sc;
  }

  struct SeedRun {
    std::uint64_t seed = 0;
    SandboxResult result;
    double seconds = 0.0;
  };

  static SeedRun run_one(const SandboxConfig& sc) {
    const auto t0 = std::chrono::steady_clock::now();
    SeedRun r{sc.seed, run_sandbox(sc), 0.0};
    r.seconds = seconds_since(t0);
    return r;
  }

  // Writes the per-seed artifacts; returns the distances to the oracle when known.
  Json write_seed_outputs(const SeedRun& run, const std::optional<BmfePair>& bmfe) {
    const std::string tag = "seed" + std::to_string(run.seed);
    write_text(dir_ / ("episodes_" + tag + ".csv"), episodes_csv(run.result.per_episode));
    if (cfg_.trace_every > 0) write_text(dir_ / ("trace_" + tag + ".csv"), trace_csv(run.result.residual_trace));

    Json s;
    s["schema_version"] = kSchemaVersion;
    s["kind"] = "sandbox_summary";
    s["seed"] = run.seed;
    s["K"] = cfg_.episodes;
    s["T"] = cfg_.steps;
    s["avg_mean_field"] = to_json(run.result.avg_mean_field);
    s["avg_policy"] = to_json(run.result.avg_policy);
    s["min_action_probability"] = run.result.min_action_probability;
    s["exploration_floor"] = run.result.exploration_floor;
    s["transitions"] = run.result.transitions;
    Json distances;
    if (bmfe) {
      distances["seed"] = run.seed;
      distances["l1_mean_field"] = l1_distance(run.result.avg_mean_field, bmfe->mean_field);
      distances["tv_policy"] = tv_distance(run.result.avg_policy, bmfe->policy);
      s["l1_mean_field_to_oracle"] = distances["l1_mean_field"];
      s["tv_policy_to_oracle"] = distances["tv_policy"];
    }
    write_json(dir_ / ("summary_" + tag + ".json"), s);
    timing_["sandbox_seconds"][tag] = run.seconds;
    return distances;
  }

  void run_sandbox_mode() {
    std::optional<BmfePair> bmfe;
    std::shared_ptr<const OracleHandle> oracle;
    if (cfg_.diagnostics_every > 0) {
      bmfe = solve_oracle();
      oracle = std::make_shared<OracleHandle>(env_, bmfe->mean_field, cfg_.schedule.lambda, cfg_.rho, cfg_.oracle.vi_tol);
    }
    info("running sandbox: seed " + std::to_string(cfg_.seed) + ", K=" + std::to_string(cfg_.episodes) +
         ", T=" + std::to_string(cfg_.steps));
    const SeedRun run = run_one(sandbox_config(cfg_.seed, make_net(), oracle));
    write_seed_outputs(run, bmfe);
  }

  void run_compare_mode() {
    const BmfePair bmfe = solve_oracle();
    write_json(dir_ / "bmfe.json", to_json(bmfe));
    auto oracle = cfg_.diagnostics_every > 0
                      ? std::make_shared<OracleHandle>(env_, bmfe.mean_field, cfg_.schedule.lambda, cfg_.rho,
                                                       cfg_.oracle.vi_tol)
                      : nullptr;
    const auto net = make_net();
    info("running " + std::to_string(cfg_.num_seeds) + " sandbox replicates concurrently");
    std::vector<std::future<SeedRun>> pending;
    for (std::uint64_t i = 0; i < cfg_.num_seeds; ++i) {
      pending.push_back(std::async(std::launch::async, run_one, sandbox_config(cfg_.seed + i, net, oracle)));
    }
    // Join all runs before propagating the first failure.
    std::vector<SeedRun> runs;
    std::exception_ptr first_error;
    for (auto& f : pending) {
      try {
        runs.push_back(f.get());
      } catch (...) {
        if (!first_error) first_error = std::current_exception();
      }
    }
    if (first_error) std::rethrow_exception(first_error);

    Json report;
    report["schema_version"] = kSchemaVersion;
    report["kind"] = "compare";
    report["oracle_converged"] = bmfe.converged;
    report["seeds"] = Json::array();
    std::vector<double> l1;
    std::vector<double> tv;
    for (const auto& run : runs) {
      Json d = write_seed_outputs(run, bmfe);
      l1.push_back(d["l1_mean_field"].get<double>());
      tv.push_back(d["tv_policy"].get<double>());
      report["seeds"].push_back(std::move(d));
    }
    report["median_l1_mean_field"] = median(l1);
    report["median_tv_policy"] = median(tv);
    write_json(dir_ / "compare.json", report);
    info("median L1(mean-field) " + format_double(report["median_l1_mean_field"].get<double>()) +
         ", median TV(policy) " + format_double(report["median_tv_policy"].get<double>()));
  }

  void run_probe_mode() {
    Rng rng(cfg_.seed);
    const auto t0 = std::chrono::steady_clock::now();
    const ContractionEstimate est = probe_contraction(*env_, cfg_.schedule.lambda, cfg_.rho,
                                                      static_cast<std::size_t>(cfg_.probe_pairs), rng, cfg_.oracle.vi_tol);
    timing_["probe_seconds"] = seconds_since(t0);
    write_json(dir_ / "contraction.json", to_json(est));
    info("contraction estimate d_hat = " + format_double(est.d_hat()));
  }

  const ExperimentConfig& cfg_;
  const RunOptions& opts_;
  std::filesystem::path dir_;
  EnvironmentPtr env_;
  std::vector<std::filesystem::path> files_;
  Json timing_ = Json::object();
};

}  // namespace detail

/// Runs the configured experiment. Never throws; failures are reported
/// through the exit code (0 ok, 1 config, 2 I/O, 3 non-finite abort,
/// 4 any other failure) and message.
inline ExperimentOutcome run_experiment(const ExperimentConfig& cfg, const RunOptions& opts = {}) {
  auto failed = [&](int code, const std::string& msg) {
    if (opts.log) *opts.log << "error: " << msg << '\n';
    return ExperimentOutcome{code, msg, {}};
  };
  try {
    cfg.validate();
    detail::Orchestrator orchestrator(cfg, opts);
    return orchestrator.run();
  } catch (const ConfigError& e) {
    return failed(exit_code::kConfig, e.what());
  } catch (const OutputError& e) {
    return failed(exit_code::kIo, e.what());
  } catch (const std::filesystem::filesystem_error& e) {
    return failed(exit_code::kIo, e.what());
  } catch (const NonFiniteError& e) {
    if (opts.log) *opts.log << "snapshot: " << e.snapshot << '\n';
    return failed(exit_code::kNonFinite, e.what());
  } catch (const std::exception& e) {
    return failed(exit_code::kFailure, e.what());
  }
}

}  // namespace smfg
