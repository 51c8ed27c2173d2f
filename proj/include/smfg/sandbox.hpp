#pragma once

// Single-sample-path learner for the Boltzmann mean-field equilibrium.
//
// Each episode k runs T steps. At every step the mean-field is pulled toward
// the estimated push-forward P_hat^T mu and the policy toward a noisy softmax
// of the current Q-table, both with episodic two time-scale step sizes; the
// agent then takes one action, and the observed transition feeds the count
// estimator and Q-learning. Q, the last transition estimate, mu, pi and the
// agent's state carry over between episodes; counts and the Q-learning clock
// restart. The output averages the first-step pairs of episodes 1..K-1.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "smfg/core.hpp"
#include "smfg/environment.hpp"
#include "smfg/estimators.hpp"
#include "smfg/oracle.hpp"
#include "smfg/random.hpp"
#include "smfg/schedules.hpp"
#include "smfg/serialization.hpp"

namespace smfg {

// ---------------------------------------------------------------------------
// Per-step updates

/// (1 - c) mu_prev + c P_hat^T mu_prev, optionally projected onto `net`.
inline MeanField update_mean_field(const MeanField& mu_prev, const Matrix& p_hat, double c, bool project,
                                   const EpsilonNet* net) {
  const auto n = static_cast<Eigen::Index>(mu_prev.size());
  if (p_hat.rows() != n || p_hat.cols() != n) throw std::invalid_argument("update_mean_field: P_hat has wrong shape");
  for (Eigen::Index i = 0; i < n; ++i) {
    if (std::abs(p_hat.row(i).sum() - 1.0) > kSimplexTol || p_hat.row(i).minCoeff() < -kSimplexTol) {
      throw std::invalid_argument("update_mean_field: P_hat is not row-stochastic");
    }
  }
  Vector next = (1.0 - c) * mu_prev.probs() + c * (p_hat.transpose() * mu_prev.probs());
  MeanField mixed = MeanField::unchecked(std::move(next));
  if (!project) return mixed;
  if (net == nullptr) throw std::invalid_argument("update_mean_field: projection requested without a net");
  return project_to_net(*net, mixed);
}

/// (1 - c) pi_prev + c ((1 - psi) boltzmann + psi uniform), with `boltzmann`
/// the softmax policy of the current Q-table.
inline Policy update_policy(const Policy& pi_prev, const Policy& boltzmann, double c, double psi) {
  if (pi_prev.dims() != boltzmann.dims()) throw std::invalid_argument("update_policy: shape mismatch");
  const double uniform = 1.0 / static_cast<double>(pi_prev.dims().num_actions);
  Matrix next = (1.0 - c) * pi_prev.table() + (c * (1.0 - psi)) * boltzmann.table();
  next.array() += c * psi * uniform;
  return Policy::unchecked(std::move(next));
}

inline Policy update_policy(const Policy& pi_prev, const QTable& q, double c, double psi, double lambda) {
  return update_policy(pi_prev, softmax_policy(q, lambda), c, psi);
}

// ---------------------------------------------------------------------------
// Diagnostics

struct EpisodeDiagnostics {
  std::uint64_t k = 0;
  std::optional<double> e_pi;    ///< ||pi^k_1 - Gamma1(mu^k_1)||_TV
  std::optional<double> e_mu;    ///< ||mu^k_1 - mu*||_1
  std::optional<double> eps_P;   ///< ||P_hat^k_T - P_{pi^k_1, mu^k_1}||_F
  std::optional<double> eps_Q;   ///< ||Q^k_T - Q*_{mu^k_1}||_inf
  double residual_mu = 0.0;      ///< ||mu^k_1 - Gamma2(pi^k_1, mu^k_1)||_1
};

/// Ground-truth quantities for diagnostics. Never consulted by the learner.
class OracleHandle {
 public:
  OracleHandle(EnvironmentPtr env, MeanField mu_star, double lambda, double rho,
               double vi_tol = kValueIterationTol)
      : env_(std::move(env)), mu_star_(std::move(mu_star)), lambda_(lambda), rho_(rho), vi_tol_(vi_tol) {
    if (!env_) throw std::invalid_argument("OracleHandle: missing environment");
    if (mu_star_.size() != env_->dims().num_states) {
      throw std::invalid_argument("OracleHandle: mu* has wrong size");
    }
  }

  const MeanField& mu_star() const noexcept { return mu_star_; }
  QTable q_star(const MeanField& mu) const { return induced_q_star(*env_, mu, rho_, vi_tol_); }
  Policy gamma1(const MeanField& mu) const { return softmax_policy(q_star(mu), lambda_); }
  Matrix kernel(const Policy& pi, const MeanField& mu) const { return induced_kernel(*env_, pi, mu); }
  double lambda() const noexcept { return lambda_; }
  double rho() const noexcept { return rho_; }

 private:
  EnvironmentPtr env_;
  MeanField mu_star_;
  double lambda_;
  double rho_;
  double vi_tol_;
};

/// What the learner looked like at an episode's first step, plus its final
/// estimates for that episode.
struct EpisodeRecord {
  std::uint64_t k = 0;
  MeanField mu_first;
  Policy pi_first;
  Matrix p_hat_final;
  Matrix q_final;
};

inline EpisodeDiagnostics episode_diagnostics(const MfgEnvironment& env, const EpisodeRecord& rec,
                                              const OracleHandle* oracle) {
  const auto& dims = env.dims();
  if (rec.mu_first.size() != dims.num_states || rec.pi_first.dims() != dims) {
    throw std::invalid_argument("episode_diagnostics: record does not match the environment");
  }
  EpisodeDiagnostics d;
  d.k = rec.k;
  const Matrix kernel = induced_kernel(env, rec.pi_first, rec.mu_first);
  const Vector pushed = kernel.transpose() * rec.mu_first.probs();
  d.residual_mu = l1_norm(rec.mu_first.probs() - pushed);
  if (oracle == nullptr) return d;

  if (rec.p_hat_final.rows() != kernel.rows() || rec.q_final.rows() != static_cast<Eigen::Index>(dims.num_states)) {
    throw std::invalid_argument("episode_diagnostics: final estimates missing or mis-shaped");
  }
  const QTable q_star = oracle->q_star(rec.mu_first);
  const Policy target = softmax_policy(q_star, oracle->lambda());
  d.e_pi = tv_distance(rec.pi_first, target);
  d.e_mu = l1_distance(rec.mu_first, oracle->mu_star());
  d.eps_P = frobenius_norm(rec.p_hat_final - kernel);
  d.eps_Q = inf_norm(rec.q_final - q_star.values());
  return d;
}

// ---------------------------------------------------------------------------
// Snapshots

struct SandboxSnapshot {
  std::uint64_t k = 0;
  std::uint64_t t = 0;
  std::size_t state = 0;
  Vector mu;
  Matrix pi;
  Matrix q;
  double rho = 0.0;
  std::vector<std::uint64_t> pair_counts;
  std::vector<std::uint64_t> state_counts;
  std::string rng_state;
};

inline Json to_json(const SandboxSnapshot& s) {
  Json j;
  j["schema_version"] = kSchemaVersion;
  j["kind"] = "sandbox_snapshot";
  j["k"] = s.k;
  j["t"] = s.t;
  j["state"] = s.state;
  j["mu"] = encode_vector(s.mu);
  j["pi"] = encode_matrix(s.pi);
  j["q"] = encode_matrix(s.q);
  j["rho"] = s.rho;
  const std::size_t n = s.state_counts.size();
  Json counts = Json::array();
  for (std::size_t i = 0; i < n; ++i) {
    Json row = Json::array();
    for (std::size_t j2 = 0; j2 < n; ++j2) row.push_back(s.pair_counts[i * n + j2]);
    counts.push_back(std::move(row));
  }
  j["pair_counts"] = std::move(counts);
  j["state_counts"] = s.state_counts;
  j["rng_state"] = s.rng_state;
  return j;
}

inline SandboxSnapshot snapshot_from_json(const Json& j) {
  check_schema(j, "sandbox_snapshot");
  SandboxSnapshot s;
  s.k = j.at("k").get<std::uint64_t>();
  s.t = j.at("t").get<std::uint64_t>();
  s.state = j.at("state").get<std::size_t>();
  s.mu = decode_vector(j.at("mu"));
  s.pi = decode_matrix(j.at("pi"));
  s.q = decode_matrix(j.at("q"));
  s.rho = j.at("rho").get<double>();
  s.state_counts = j.at("state_counts").get<std::vector<std::uint64_t>>();
  for (const auto& row : j.at("pair_counts")) {
    for (const auto& v : row) s.pair_counts.push_back(v.get<std::uint64_t>());
  }
  if (s.pair_counts.size() != s.state_counts.size() * s.state_counts.size()) {
    throw std::invalid_argument("sandbox_snapshot: pair_counts has wrong shape");
  }
  s.rng_state = j.at("rng_state").get<std::string>();
  return s;
}

/// Raised when an update produces NaN or infinity. Carries the location and
/// a JSON snapshot of the learner state just before the failing step.
class NonFiniteError : public std::runtime_error {
 public:
  NonFiniteError(std::uint64_t k, std::uint64_t t, std::string snapshot_json)
      : std::runtime_error("non-finite value at episode " + std::to_string(k) + ", step " + std::to_string(t)),
        k(k),
        t(t),
        snapshot(std::move(snapshot_json)) {}
  std::uint64_t k;
  std::uint64_t t;
  std::string snapshot;
};

// ---------------------------------------------------------------------------
// Driver

struct SandboxConfig {
  EnvironmentPtr env;
  ScheduleParams schedule;
  std::uint64_t episodes = 100;          ///< K
  std::uint64_t steps = 10'000;          ///< T
  double rho = 0.7;
  std::uint64_t seed = 0;
  bool use_projection = false;
  std::shared_ptr<const EpsilonNet> net;
  std::shared_ptr<const OracleHandle> oracle;
  /// Diagnostics for episodes 1, 1 + n, 1 + 2n, ...; 0 disables them.
  std::uint64_t diagnostics_every = 1;
  /// Per-step residual trace every n steps; 0 disables it.
  std::uint64_t trace_every = 0;

  void validate() const {
    if (!env) throw std::invalid_argument("SandboxConfig: missing environment");
    schedule.validate();
    if (episodes < 2) throw std::invalid_argument("K must be >= 2");
    if (steps < 2) throw std::invalid_argument("T must be >= 2");
    if (!(rho > 0.0 && rho < 1.0)) throw std::invalid_argument("rho must lie in (0,1)");
    if (use_projection && (!net || net->num_states() != env->dims().num_states)) {
      throw std::invalid_argument("use_projection requires an epsilon-net over the environment's states");
    }
  }
};

struct TracePoint {
  std::uint64_t k = 0;
  std::uint64_t t = 0;
  double residual_mu = 0.0;
};

struct SandboxResult {
  Policy avg_policy = Policy::uniform({1, 1});
  MeanField avg_mean_field = MeanField::uniform(1);
  std::vector<EpisodeDiagnostics> per_episode;
  /// mu^k_1 and pi^k_1 for k = 1..K.
  std::vector<MeanField> first_step_mean_fields;
  std::vector<Policy> first_step_policies;
  /// Smallest action probability seen at any step t > 1.
  double min_action_probability = std::numeric_limits<double>::infinity();
  /// Guaranteed lower bound for min_action_probability.
  double exploration_floor = 0.0;
  std::uint64_t transitions = 0;
  std::vector<TracePoint> residual_trace;
  SandboxSnapshot final_state;
};

namespace detail {

inline void check_learner_invariants(const MeanField& mu, const Policy& pi, std::uint64_t k, std::uint64_t t) {
  if (!mu.is_valid()) {
    throw std::logic_error("mean-field left the simplex at episode " + std::to_string(k) + ", step " + std::to_string(t));
  }
  if (!pi.is_valid()) {
    throw std::logic_error("policy is not row-stochastic at episode " + std::to_string(k) + ", step " + std::to_string(t));
  }
}

#ifdef NDEBUG
inline constexpr std::uint64_t kInvariantCheckStride = 100;
#else
inline constexpr std::uint64_t kInvariantCheckStride = 1;
#endif

}  // namespace detail

inline SandboxResult run_sandbox(const SandboxConfig& cfg) {
  cfg.validate();
  const MfgEnvironment& env = *cfg.env;
  const StateActionDims dims = env.dims();
  const ScheduleParams& sched = cfg.schedule;
  constexpr double kFloorSlack = 1e-12;

  Rng rng(cfg.seed);
  std::vector<double> scratch(dims.num_states);

  std::size_t state = sample_index(env.initial_distribution().probs(), uniform01(rng));
  MeanField mu = MeanField::uniform(dims.num_states);
  Policy pi = Policy::uniform(dims);
  QLearner learner(dims, cfg.rho, sched.c_beta, sched.nu);
  TransitionCounter counter(dims.num_states);
  // Softmax of the Q-table, refreshed row by row as Q changes.
  Matrix boltzmann = softmax_policy(learner.q(), sched.lambda).table();

  SandboxResult result;
  result.exploration_floor = exploration_floor(sched, dims.num_actions, cfg.episodes, cfg.steps);
  result.first_step_mean_fields.reserve(cfg.episodes);
  result.first_step_policies.reserve(cfg.episodes);

  auto snapshot = [&](std::uint64_t k, std::uint64_t t) {
    return SandboxSnapshot{k, t, state, mu.probs(), pi.table(), learner.q().values(), cfg.rho,
                           counter.pair_counts(), counter.state_counts(), rng_state_string(rng)};
  };

  for (std::uint64_t k = 1; k <= cfg.episodes; ++k) {
    for (std::uint64_t t = 1; t <= cfg.steps; ++t) {
      // Mean-field and policy updates. The first step of an episode uses the
      // estimate carried over from the previous episode.
      const Matrix& p_hat = (t == 1) ? counter.cached_estimate() : counter.current();
      const bool project = cfg.use_projection && t == 1;
      MeanField mu_next = update_mean_field(mu, p_hat, step_size_mu(sched, k, t), project, cfg.net.get());
      Policy pi_next = update_policy(pi, Policy::unchecked(boltzmann), step_size_pi(sched, k, t),
                                     exploration_coeff(sched, k, t));
      if (!std::isfinite(mu_next.probs().sum()) || !std::isfinite(pi_next.table().sum())) {
        throw NonFiniteError(k, t, to_json(snapshot(k, t)).dump());
      }
      mu = std::move(mu_next);
      pi = std::move(pi_next);

      if ((k * cfg.steps + t) % detail::kInvariantCheckStride == 0) {
        detail::check_learner_invariants(mu, pi, k, t);
      }
      if (t > 1) {
        const double smallest = pi.table().minCoeff();
        result.min_action_probability = std::min(result.min_action_probability, smallest);
        if (smallest < result.exploration_floor - kFloorSlack) {
          throw std::logic_error("action probability " + std::to_string(smallest) +
                                 " fell below the exploration floor at episode " + std::to_string(k));
        }
      }
      if (t == 1) {
        result.first_step_mean_fields.push_back(mu);
        result.first_step_policies.push_back(pi);
      }
      if (cfg.trace_every > 0 && (t - 1) % cfg.trace_every == 0) {
        result.residual_trace.push_back({k, t, l1_distance(mu, gamma2(env, pi, mu))});
      }

      // One transition of the generic agent.
      const auto row = static_cast<Eigen::Index>(state);
      const std::size_t action = sample_index(Vector(pi.table().row(row).transpose()), uniform01(rng));
      const StepResult step = env_step(env, state, action, mu, rng, scratch);
      ++result.transitions;

      counter.record(state, step.next_state);
      const double q_old = learner.q()(state, action);
      const double q_new = learner.update(state, action, step.reward, step.next_state);
      if (!std::isfinite(q_new)) {
        // Snapshot the table as it was before the failing update.
        learner.q().values()(row, static_cast<Eigen::Index>(action)) = q_old;
        throw NonFiniteError(k, t, to_json(snapshot(k, t)).dump());
      }
      softmax_row(learner.q().values().row(row), sched.lambda, boltzmann.row(row));
      state = step.next_state;
    }

    // Episode boundary: cache the final estimate, restart counts and clock.
    Matrix p_hat_final = counter.estimate();
    if (cfg.diagnostics_every > 0 && (k - 1) % cfg.diagnostics_every == 0) {
      EpisodeRecord rec{k, result.first_step_mean_fields.back(), result.first_step_policies.back(),
                        std::move(p_hat_final), learner.q().values()};
      result.per_episode.push_back(episode_diagnostics(env, rec, cfg.oracle.get()));
    }
    counter.reset();
    learner.reset_clock();
  }

  // Average of the first-step pairs over k = 1..K-1.
  const std::size_t count = static_cast<std::size_t>(cfg.episodes - 1);
  Vector mu_sum = Vector::Zero(static_cast<Eigen::Index>(dims.num_states));
  Matrix pi_sum = Matrix::Zero(static_cast<Eigen::Index>(dims.num_states), static_cast<Eigen::Index>(dims.num_actions));
  for (std::size_t i = 0; i < count; ++i) {
    mu_sum += result.first_step_mean_fields[i].probs();
    pi_sum += result.first_step_policies[i].table();
  }
  result.avg_mean_field = MeanField::unchecked(mu_sum / static_cast<double>(count));
  result.avg_policy = Policy::unchecked(pi_sum / static_cast<double>(count));
  result.final_state = snapshot(cfg.episodes + 1, 1);
  return result;
}

}  // namespace smfg
