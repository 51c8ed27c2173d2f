#pragma once

// Mean-field game environments: the abstract kernel/reward interface, the
// crowd-congestion grid and its two-class variant, and fixed MDPs that ignore
// the mean-field.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <memory>
#include <queue>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "smfg/core.hpp"
#include "smfg/random.hpp"

namespace smfg {

/// Dense S x A x S transition table, indexed (s, a, s').
class TransitionKernel {
 public:
  TransitionKernel() = default;
  explicit TransitionKernel(const StateActionDims& dims)
      : dims_(dims), data_(dims.num_states * dims.num_actions * dims.num_states, 0.0) {}

  const StateActionDims& dims() const noexcept { return dims_; }

  std::span<double> row(std::size_t s, std::size_t a) {
    return {data_.data() + offset(s, a), dims_.num_states};
  }
  std::span<const double> row(std::size_t s, std::size_t a) const {
    return {data_.data() + offset(s, a), dims_.num_states};
  }
  double& operator()(std::size_t s, std::size_t a, std::size_t next) { return row(s, a)[next]; }
  double operator()(std::size_t s, std::size_t a, std::size_t next) const { return row(s, a)[next]; }

  /// Empty when every row is a probability vector within `tol`.
  std::string stochasticity_violation(double tol = kSimplexTol) const {
    for (std::size_t s = 0; s < dims_.num_states; ++s) {
      for (std::size_t a = 0; a < dims_.num_actions; ++a) {
        double total = 0.0;
        for (double p : row(s, a)) {
          if (!std::isfinite(p) || p < -tol || p > 1.0 + tol) {
            return "entry outside [0,1] at (" + std::to_string(s) + "," + std::to_string(a) + ")";
          }
          total += p;
        }
        if (std::abs(total - 1.0) > tol) {
          return "row (" + std::to_string(s) + "," + std::to_string(a) + ") sums to " +
                 std::to_string(total);
        }
      }
    }
    return {};
  }

  friend bool operator==(const TransitionKernel&, const TransitionKernel&) = default;

 private:
  std::size_t offset(std::size_t s, std::size_t a) const {
    if (s >= dims_.num_states || a >= dims_.num_actions) {
      throw std::out_of_range("TransitionKernel: state or action out of range");
    }
    return (s * dims_.num_actions + a) * dims_.num_states;
  }

  StateActionDims dims_;
  std::vector<double> data_;
};

/// A mean-field game seen by the generic agent: P(.|s,a,mu) and R(s,a,mu).
class MfgEnvironment {
 public:
  MfgEnvironment(StateActionDims dims, MeanField initial)
      : dims_(dims), initial_(std::move(initial)) {
    if (initial_.size() != dims_.num_states) {
      throw std::invalid_argument("MfgEnvironment: initial distribution has wrong size");
    }
  }
  virtual ~MfgEnvironment() = default;

  const StateActionDims& dims() const noexcept { return dims_; }
  const MeanField& initial_distribution() const noexcept { return initial_; }

  /// Writes P(.|s,a,mu) into `out` (length S).
  virtual void transition_dist(std::size_t s, std::size_t a, const MeanField& mu,
                               std::span<double> out) const = 0;

  /// Reward in [0,1].
  virtual double reward(std::size_t s, std::size_t a, const MeanField& mu) const = 0;

  Vector transition_dist(std::size_t s, std::size_t a, const MeanField& mu) const {
    Vector out(static_cast<Eigen::Index>(dims_.num_states));
    transition_dist(s, a, mu, std::span<double>(out.data(), dims_.num_states));
    return out;
  }

  void check_indices(std::size_t s, std::size_t a) const {
    if (s >= dims_.num_states) throw std::out_of_range("state index out of range");
    if (a >= dims_.num_actions) throw std::out_of_range("action index out of range");
  }

 private:
  StateActionDims dims_;
  MeanField initial_;
};

using EnvironmentPtr = std::shared_ptr<const MfgEnvironment>;

// ---------------------------------------------------------------------------
// Fixed MDP (mean-field independent)

class FixedMdpEnvironment final : public MfgEnvironment {
 public:
  FixedMdpEnvironment(TransitionKernel kernel, Matrix rewards)
      : MfgEnvironment(kernel.dims(), MeanField::uniform(kernel.dims().num_states)),
        kernel_(std::move(kernel)),
        rewards_(std::move(rewards)) {
    if (auto why = kernel_.stochasticity_violation(); !why.empty()) {
      throw std::invalid_argument("make_fixed_mdp_env: non-stochastic kernel: " + why);
    }
    if (static_cast<std::size_t>(rewards_.rows()) != dims().num_states ||
        static_cast<std::size_t>(rewards_.cols()) != dims().num_actions) {
      throw std::invalid_argument("make_fixed_mdp_env: reward table has wrong shape");
    }
    if (!rewards_.allFinite() || rewards_.minCoeff() < 0.0 || rewards_.maxCoeff() > 1.0) {
      throw std::invalid_argument("make_fixed_mdp_env: rewards must lie in [0,1]");
    }
  }

  void transition_dist(std::size_t s, std::size_t a, const MeanField&,
                       std::span<double> out) const override {
    auto src = kernel_.row(s, a);
    std::copy(src.begin(), src.end(), out.begin());
  }

  double reward(std::size_t s, std::size_t a, const MeanField&) const override {
    check_indices(s, a);
    return rewards_(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(a));
  }

  const TransitionKernel& kernel() const noexcept { return kernel_; }
  const Matrix& rewards() const noexcept { return rewards_; }

 private:
  TransitionKernel kernel_;
  Matrix rewards_;
};

inline EnvironmentPtr make_fixed_mdp_env(TransitionKernel kernel, Matrix rewards) {
  return std::make_shared<FixedMdpEnvironment>(std::move(kernel), std::move(rewards));
}

// ---------------------------------------------------------------------------
// Congestion grid

/// 1-based grid coordinate (x, y) with x, y in [1, side].
struct GridCoord {
  int x = 1;
  int y = 1;
  friend bool operator==(const GridCoord&, const GridCoord&) = default;
  friend auto operator<=>(const GridCoord&, const GridCoord&) = default;
};

/// Moves are the four diagonal steps {-1,1}^2, in this index order.
inline constexpr std::array<GridCoord, 4> kGridActions{{{-1, -1}, {-1, 1}, {1, -1}, {1, 1}}};

struct CongestionGridParams {
  int side = 5;
  double jostle_p = 0.1;
  double congestion_c = 0.5;
  double favorable_reward = 1.0;
  double baseline_reward = 0.1;
  std::vector<GridCoord> favorable_states{{3, 3}, {3, 4}, {4, 3}, {4, 4}};

  void validate() const {
    if (side < 1) throw std::invalid_argument("side must be >= 1");
    if (!(jostle_p >= 0.0 && jostle_p < 1.0)) throw std::invalid_argument("jostle_p must lie in [0,1)");
    // c <= 1 keeps (1 - c mu(s)) R(s) inside [0,1] for every mean-field.
    if (!(congestion_c >= 0.0 && congestion_c <= 1.0)) {
      throw std::invalid_argument("congestion_c must lie in [0,1]");
    }
    if (!(favorable_reward > 0.0 && favorable_reward <= 1.0)) {
      throw std::invalid_argument("favorable_reward must lie in (0,1]");
    }
    if (!(baseline_reward >= 0.0 && baseline_reward < favorable_reward)) {
      throw std::invalid_argument("baseline_reward must lie in [0, favorable_reward)");
    }
    for (const auto& c : favorable_states) {
      if (c.x < 1 || c.x > side || c.y < 1 || c.y > side) {
        throw std::invalid_argument("favorable state (" + std::to_string(c.x) + "," +
                                    std::to_string(c.y) + ") lies outside the grid");
      }
    }
  }
};

inline std::size_t grid_state_index(GridCoord c, int side) {
  return static_cast<std::size_t>((c.x - 1) * side + (c.y - 1));
}

inline GridCoord grid_coord(std::size_t s, int side) {
  const int i = static_cast<int>(s);
  return {i / side + 1, i % side + 1};
}

inline GridCoord grid_clamp(GridCoord c, int side) {
  return {std::clamp(c.x, 1, side), std::clamp(c.y, 1, side)};
}

/// Distinct cells of the clamped 4-neighborhood of `center`.
inline std::vector<GridCoord> jostle_neighborhood(GridCoord center, int side) {
  std::vector<GridCoord> cells;
  for (GridCoord d : {GridCoord{-1, 0}, GridCoord{1, 0}, GridCoord{0, -1}, GridCoord{0, 1}}) {
    GridCoord c = grid_clamp({center.x + d.x, center.y + d.y}, side);
    if (std::find(cells.begin(), cells.end(), c) == cells.end()) cells.push_back(c);
  }
  return cells;
}

/// Crowd congestion on a side x side grid. The kernel is mean-field
/// independent; the reward (1 - c mu(s)) R(s) is action independent.
class CongestionGridEnvironment final : public MfgEnvironment {
 public:
  CongestionGridEnvironment(CongestionGridParams params, TransitionKernel kernel, std::string kind)
      : MfgEnvironment(kernel.dims(), MeanField::uniform(kernel.dims().num_states)),
        params_(std::move(params)),
        kernel_(std::move(kernel)),
        base_reward_(static_cast<Eigen::Index>(kernel_.dims().num_states)),
        kind_(std::move(kind)) {
    base_reward_.setConstant(params_.baseline_reward);
    for (const auto& c : params_.favorable_states) {
      base_reward_(static_cast<Eigen::Index>(grid_state_index(c, params_.side))) = params_.favorable_reward;
    }
  }

  void transition_dist(std::size_t s, std::size_t a, const MeanField&,
                       std::span<double> out) const override {
    auto src = kernel_.row(s, a);
    std::copy(src.begin(), src.end(), out.begin());
  }

  double reward(std::size_t s, std::size_t a, const MeanField& mu) const override {
    check_indices(s, a);
    return (1.0 - params_.congestion_c * mu[s]) * base_reward_(static_cast<Eigen::Index>(s));
  }

  const CongestionGridParams& params() const noexcept { return params_; }
  const TransitionKernel& kernel() const noexcept { return kernel_; }
  /// State-dependent reward component R(s).
  const Vector& base_reward() const noexcept { return base_reward_; }
  const std::string& kind() const noexcept { return kind_; }

 private:
  CongestionGridParams params_;
  TransitionKernel kernel_;
  Vector base_reward_;
  std::string kind_;
};

inline TransitionKernel congestion_kernel(const CongestionGridParams& params) {
  const int side = params.side;
  const auto num_states = static_cast<std::size_t>(side * side);
  TransitionKernel kernel({num_states, kGridActions.size()});
  for (std::size_t s = 0; s < num_states; ++s) {
    const GridCoord from = grid_coord(s, side);
    for (std::size_t a = 0; a < kGridActions.size(); ++a) {
      const GridCoord target =
          grid_clamp({from.x + kGridActions[a].x, from.y + kGridActions[a].y}, side);
      kernel(s, a, grid_state_index(target, side)) += 1.0 - params.jostle_p;
      const auto cells = jostle_neighborhood(target, side);
      for (const auto& c : cells) {
        kernel(s, a, grid_state_index(c, side)) += params.jostle_p / static_cast<double>(cells.size());
      }
    }
  }
  return kernel;
}

inline EnvironmentPtr make_congestion_env(const CongestionGridParams& params) {
  params.validate();
  return std::make_shared<CongestionGridEnvironment>(params, congestion_kernel(params), "congestion");
}

/// The non-closed class {(4,5),(5,4),(5,5)} of the two-class grid.
inline const std::vector<GridCoord>& two_class_open_states() {
  static const std::vector<GridCoord> states{{4, 5}, {5, 4}, {5, 5}};
  return states;
}

/// Congestion grid where transitions from the closed class into the three
/// corner states are removed and the remaining mass is rescaled. A row whose
/// entire mass pointed into the corner stays in place instead.
inline EnvironmentPtr make_two_class_env(const CongestionGridParams& params) {
  params.validate();
  if (params.side != 5) throw std::invalid_argument("make_two_class_env: side must be 5");
  TransitionKernel kernel = congestion_kernel(params);
  const int side = params.side;
  std::vector<bool> open(static_cast<std::size_t>(side * side), false);
  for (const auto& c : two_class_open_states()) open[grid_state_index(c, side)] = true;

  for (std::size_t s = 0; s < open.size(); ++s) {
    if (open[s]) continue;
    for (std::size_t a = 0; a < kernel.dims().num_actions; ++a) {
      auto row = kernel.row(s, a);
      double kept = 0.0;
      for (std::size_t j = 0; j < row.size(); ++j) {
        if (open[j]) row[j] = 0.0;
        kept += row[j];
      }
      if (kept > 0.0) {
        for (double& p : row) p /= kept;
      } else {
        row[s] = 1.0;
      }
    }
  }
  return std::make_shared<CongestionGridEnvironment>(params, std::move(kernel), "two_class");
}

// ---------------------------------------------------------------------------
// Sampling and structure

struct StepResult {
  std::size_t next_state = 0;
  double reward = 0.0;
};

/// One transition: next state by inverse CDF on a single uniform draw.
inline StepResult env_step(const MfgEnvironment& env, std::size_t s, std::size_t a,
                           const MeanField& mu, Rng& rng, std::span<double> scratch) {
  env.check_indices(s, a);
  env.transition_dist(s, a, mu, scratch);
  const std::size_t next = sample_index(std::span<const double>(scratch.data(), scratch.size()), uniform01(rng));
  return {next, env.reward(s, a, mu)};
}

inline StepResult env_step(const MfgEnvironment& env, std::size_t s, std::size_t a,
                           const MeanField& mu, Rng& rng) {
  std::vector<double> scratch(env.dims().num_states);
  return env_step(env, s, a, mu, rng, scratch);
}

/// reach(i, j) is true when j can be reached from i (in zero or more steps)
/// along positive-probability transitions under some action sequence.
inline std::vector<std::vector<bool>> reachability(const MfgEnvironment& env, const MeanField& mu) {
  const std::size_t n = env.dims().num_states;
  std::vector<std::vector<std::size_t>> succ(n);
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t a = 0; a < env.dims().num_actions; ++a) {
      Vector p = env.transition_dist(s, a, mu);
      for (std::size_t j = 0; j < n; ++j) {
        if (p(static_cast<Eigen::Index>(j)) > 0.0) succ[s].push_back(j);
      }
    }
  }
  std::vector<std::vector<bool>> reach(n, std::vector<bool>(n, false));
  for (std::size_t i = 0; i < n; ++i) {
    std::queue<std::size_t> frontier;
    frontier.push(i);
    reach[i][i] = true;
    while (!frontier.empty()) {
      const std::size_t u = frontier.front();
      frontier.pop();
      for (std::size_t v : succ[u]) {
        if (!reach[i][v]) {
          reach[i][v] = true;
          frontier.push(v);
        }
      }
    }
  }
  return reach;
}

inline bool is_communicating(const MfgEnvironment& env, const MeanField& mu) {
  for (const auto& row : reachability(env, mu)) {
    if (std::find(row.begin(), row.end(), false) != row.end()) return false;
  }
  return true;
}

}  // namespace smfg
