#pragma once

// Episodic two time-scale step sizes, exploration-noise coefficients, and the
// regular-grid epsilon-net over the probability simplex.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "smfg/core.hpp"

namespace smfg {

enum class ExplorationScheme {
  /// psi_t = 0 at t = 1 and psi / (1 - c_pi / k^theta) afterwards.
  kPiecewise,
  /// psi_t = psi at every step.
  kConstant,
};

inline const char* to_string(ExplorationScheme s) {
  return s == ExplorationScheme::kPiecewise ? "piecewise" : "constant";
}

inline ExplorationScheme exploration_scheme_from_string(const std::string& name) {
  if (name == "piecewise") return ExplorationScheme::kPiecewise;
  if (name == "constant") return ExplorationScheme::kConstant;
  throw std::invalid_argument("exploration_scheme must be \"piecewise\" or \"constant\", got \"" + name + "\"");
}

struct ScheduleParams {
  double c_mu = 0.5;
  double c_pi = 0.5;
  double gamma = 0.6;
  double theta = 0.55;
  double zeta = 1.1;
  double c_beta = 5.0;
  double nu = 0.55;
  double psi = 0.2;
  double lambda = 1.0;
  ExplorationScheme exploration = ExplorationScheme::kPiecewise;

  /// Throws std::invalid_argument naming the first violated constraint.
  void validate() const {
    auto fail = [](const std::string& msg) { throw std::invalid_argument(msg); };
    if (!(c_mu > 0.0 && c_mu <= 1.0)) fail("c_mu must lie in (0,1]");
    if (!(c_pi > 0.0 && c_pi <= 1.0)) fail("c_pi must lie in (0,1]");
    if (!(theta > 0.0)) fail("theta must be > 0 (two time-scale constraint 0 < theta < gamma < 1 < zeta)");
    if (!(theta < gamma)) fail("theta must be < gamma (two time-scale constraint 0 < theta < gamma < 1 < zeta)");
    if (!(gamma < 1.0)) fail("gamma must be < 1 (two time-scale constraint 0 < theta < gamma < 1 < zeta)");
    if (!(zeta > 1.0) || !std::isfinite(zeta)) {
      fail("zeta must be > 1 and finite (two time-scale constraint 0 < theta < gamma < 1 < zeta)");
    }
    if (!(c_beta > 0.0) || !std::isfinite(c_beta)) fail("c_beta must be positive");
    if (!(nu > 0.5 && nu <= 1.0)) fail("nu must lie in (0.5, 1]");
    if (!(psi > 0.0 && psi < 1.0 - c_pi)) fail("psi must lie in (0, 1 - c_pi)");
    if (!(lambda > 0.0) || !std::isfinite(lambda)) fail("lambda must be positive and finite");
  }
};

namespace detail {
inline void check_episode_step(std::uint64_t k, std::uint64_t t) {
  if (k < 1 || t < 1) throw std::invalid_argument("episode and step indices start at 1");
}
}  // namespace detail

/// c_mu / (k^gamma t^zeta)
inline double step_size_mu(const ScheduleParams& p, std::uint64_t k, std::uint64_t t) {
  detail::check_episode_step(k, t);
  return p.c_mu / (std::pow(static_cast<double>(k), p.gamma) * std::pow(static_cast<double>(t), p.zeta));
}

/// c_pi / (k^theta t^zeta)
inline double step_size_pi(const ScheduleParams& p, std::uint64_t k, std::uint64_t t) {
  detail::check_episode_step(k, t);
  return p.c_pi / (std::pow(static_cast<double>(k), p.theta) * std::pow(static_cast<double>(t), p.zeta));
}

inline double exploration_coeff(const ScheduleParams& p, std::uint64_t k, std::uint64_t t) {
  detail::check_episode_step(k, t);
  if (p.exploration == ExplorationScheme::kConstant) return p.psi;
  if (t == 1) return 0.0;
  return p.psi / (1.0 - p.c_pi / std::pow(static_cast<double>(k), p.theta));
}

/// Lower bound on every action probability at steps t > 1, obtained by
/// running the scalar recursion m <- (1 - c) m + c psi_t / A from the uniform
/// initial policy over the full K x T schedule (the softmax part is dropped).
inline double exploration_floor(const ScheduleParams& p, std::size_t num_actions, std::uint64_t episodes,
                                std::uint64_t steps) {
  const double actions = static_cast<double>(num_actions);
  double m = 1.0 / actions;
  double floor = std::numeric_limits<double>::infinity();
  for (std::uint64_t k = 1; k <= episodes; ++k) {
    for (std::uint64_t t = 1; t <= steps; ++t) {
      const double c = step_size_pi(p, k, t);
      m = (1.0 - c) * m + c * exploration_coeff(p, k, t) / actions;
      if (t > 1) floor = std::min(floor, m);
    }
  }
  return floor;
}

/// Closed-form floors for the two exploration schemes:
/// c_pi psi / A (constant) and c_pi psi / (A 2^zeta) (piecewise).
inline double analytic_exploration_floor(const ScheduleParams& p, std::size_t num_actions) {
  const double base = p.c_pi * p.psi / static_cast<double>(num_actions);
  return p.exploration == ExplorationScheme::kConstant ? base : base / std::pow(2.0, p.zeta);
}

// ---------------------------------------------------------------------------
// Epsilon-net

class NetBudgetError : public std::length_error {
 public:
  NetBudgetError(double required, std::size_t budget)
      : std::length_error("epsilon-net needs " + std::to_string(static_cast<long double>(required)) +
                          " points, budget is " + std::to_string(budget)),
        required_points(required),
        budget(budget) {}
  double required_points;
  std::size_t budget;
};

inline constexpr std::size_t kDefaultNetBudget = 1'000'000;

/// Regular simplex grid {k / n : k in N^S, sum k = n}; points are stored as
/// integer compositions of n in ascending lexicographic order.
class EpsilonNet {
 public:
  EpsilonNet(std::size_t num_states, double mesh, std::size_t resolution,
             std::vector<std::uint16_t> compositions)
      : num_states_(num_states), mesh_(mesh), resolution_(resolution), points_(std::move(compositions)) {}

  std::size_t num_states() const noexcept { return num_states_; }
  double mesh() const noexcept { return mesh_; }
  std::size_t resolution() const noexcept { return resolution_; }
  std::size_t size() const noexcept { return num_states_ == 0 ? 0 : points_.size() / num_states_; }
  bool empty() const noexcept { return size() == 0; }

  MeanField point(std::size_t i) const {
    Vector v(static_cast<Eigen::Index>(num_states_));
    for (std::size_t s = 0; s < num_states_; ++s) {
      v(static_cast<Eigen::Index>(s)) = coordinate(i, s);
    }
    return MeanField::unchecked(std::move(v));
  }

  double coordinate(std::size_t i, std::size_t s) const {
    return static_cast<double>(points_[i * num_states_ + s]) / static_cast<double>(resolution_);
  }

 private:
  std::size_t num_states_;
  double mesh_;
  std::size_t resolution_;
  std::vector<std::uint16_t> points_;
};

/// Number of points in the resolution-n grid on the (S-1)-simplex, C(n+S-1, S-1).
inline double simplex_grid_size(std::size_t num_states, std::size_t resolution) {
  long double count = 1.0L;
  for (std::size_t i = 1; i < num_states; ++i) {
    count = count * static_cast<long double>(resolution + i) / static_cast<long double>(i);
  }
  return static_cast<double>(count);
}

/// Grid of resolution n = ceil(S / mesh). Each coordinate of a simplex point
/// is within 1/n of the grid point obtained by largest-remainder rounding, so
/// the L1 covering radius is at most S / n <= mesh.
inline EpsilonNet build_epsilon_net(std::size_t num_states, double mesh,
                                    std::size_t budget = kDefaultNetBudget) {
  if (num_states == 0) throw std::invalid_argument("build_epsilon_net: zero states");
  if (!(mesh > 0.0) || !std::isfinite(mesh)) throw std::invalid_argument("build_epsilon_net: mesh must be > 0");
  const double n_real = std::ceil(static_cast<double>(num_states) / mesh);
  if (n_real > 65535.0) throw NetBudgetError(std::numeric_limits<double>::infinity(), budget);
  const auto n = static_cast<std::size_t>(std::max(1.0, n_real));
  const double required = simplex_grid_size(num_states, n);
  if (required > static_cast<double>(budget)) throw NetBudgetError(required, budget);

  std::vector<std::uint16_t> points;
  points.reserve(static_cast<std::size_t>(required) * num_states);
  std::vector<std::uint16_t> current(num_states, 0);
  auto emit = [&](auto&& self, std::size_t pos, std::size_t remaining) -> void {
    if (pos + 1 == num_states) {
      current[pos] = static_cast<std::uint16_t>(remaining);
      points.insert(points.end(), current.begin(), current.end());
      return;
    }
    for (std::size_t v = 0; v <= remaining; ++v) {
      current[pos] = static_cast<std::uint16_t>(v);
      self(self, pos + 1, remaining - v);
    }
  };
  emit(emit, 0, n);
  return {num_states, mesh, n, std::move(points)};
}

/// Largest mesh-feasible net: the finest grid whose size fits the budget.
inline double smallest_feasible_mesh(std::size_t num_states, std::size_t budget = kDefaultNetBudget) {
  std::size_t n = 1;
  while (simplex_grid_size(num_states, n + 1) <= static_cast<double>(budget) && n < 65535) ++n;
  const double s = static_cast<double>(num_states);
  double mesh = s / static_cast<double>(n);
  // Nudge upward until build_epsilon_net maps the mesh back to resolution n.
  while (std::ceil(s / mesh) > static_cast<double>(n)) mesh = std::nextafter(mesh, 2.0 * mesh);
  return mesh;
}

/// Net point nearest to `mu` in L1; ties go to the lexicographically
/// smallest point.
inline MeanField project_to_net(const EpsilonNet& net, const MeanField& mu) {
  if (net.empty()) throw std::invalid_argument("project_to_net: empty net");
  if (mu.size() != net.num_states()) throw std::invalid_argument("project_to_net: dimension mismatch");
  constexpr double kTieTol = 1e-12;
  std::size_t best = 0;
  double best_dist = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < net.size(); ++i) {
    double d = 0.0;
    for (std::size_t s = 0; s < net.num_states() && d < best_dist; ++s) {
      d += std::abs(mu[s] - net.coordinate(i, s));
    }
    if (d < best_dist - kTieTol) {
      best_dist = d;
      best = i;
    }
  }
  return net.point(best);
}

}  // namespace smfg
