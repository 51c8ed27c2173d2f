#pragma once

// Online estimators fed by the agent's single sample path: smoothed
// transition counts for the consistency map and asynchronous Q-learning for
// the optimal Q-function.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "smfg/core.hpp"

namespace smfg {

/// Visit counts N(i,j), N(i) and the smoothed estimate
///   P(i,j) = (N(i,j) + 1/S) / (N(i) + 1).
///
/// The live estimate is maintained row by row as transitions are recorded.
/// estimate() additionally stores its result as the cached estimate, which
/// survives reset() so it can seed the first update of the next episode.
class TransitionCounter {
 public:
  explicit TransitionCounter(std::size_t num_states)
      : num_states_(num_states),
        pair_counts_(num_states * num_states, 0),
        state_counts_(num_states, 0),
        live_(uniform_matrix(num_states)),
        cached_(live_) {
    if (num_states == 0) throw std::invalid_argument("TransitionCounter: zero states");
  }

  std::size_t num_states() const noexcept { return num_states_; }

  void record(std::size_t i, std::size_t j) {
    if (i >= num_states_ || j >= num_states_) {
      throw std::out_of_range("TransitionCounter::record: state out of range");
    }
    ++pair_counts_[i * num_states_ + j];
    ++state_counts_[i];
    refresh_row(i);
  }

  /// Current estimate; also becomes the cached estimate.
  Matrix estimate() {
    cached_ = live_;
    return live_;
  }

  /// Current estimate without touching the cache.
  const Matrix& current() const noexcept { return live_; }

  const Matrix& cached_estimate() const noexcept { return cached_; }

  /// Zeros all counts. The cached estimate is left untouched.
  void reset() {
    std::fill(pair_counts_.begin(), pair_counts_.end(), 0);
    std::fill(state_counts_.begin(), state_counts_.end(), 0);
    live_ = uniform_matrix(num_states_);
  }

  std::uint64_t pair_count(std::size_t i, std::size_t j) const {
    return pair_counts_.at(i * num_states_ + j);
  }
  std::uint64_t state_count(std::size_t i) const { return state_counts_.at(i); }
  const std::vector<std::uint64_t>& pair_counts() const noexcept { return pair_counts_; }
  const std::vector<std::uint64_t>& state_counts() const noexcept { return state_counts_; }

  std::uint64_t total_count() const {
    std::uint64_t total = 0;
    for (auto n : state_counts_) total += n;
    return total;
  }

 private:
  static Matrix uniform_matrix(std::size_t n) {
    return Matrix::Constant(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n),
                            1.0 / static_cast<double>(n));
  }

  void refresh_row(std::size_t i) {
    const double smoothing = 1.0 / static_cast<double>(num_states_);
    const double denom = static_cast<double>(state_counts_[i]) + 1.0;
    const auto row = static_cast<Eigen::Index>(i);
    for (std::size_t j = 0; j < num_states_; ++j) {
      live_(row, static_cast<Eigen::Index>(j)) =
          (static_cast<double>(pair_counts_[i * num_states_ + j]) + smoothing) / denom;
    }
  }

  std::size_t num_states_;
  std::vector<std::uint64_t> pair_counts_;
  std::vector<std::uint64_t> state_counts_;
  Matrix live_;
  Matrix cached_;
};

/// Asynchronous tabular Q-learning with step size
///   beta_t = min(1, c_beta / (t + 1)^nu),
/// where t is a per-episode clock starting at 1.
class QLearner {
 public:
  QLearner(const StateActionDims& dims, double rho, double c_beta, double nu)
      : q_(QTable::zeros(dims, rho)), c_beta_(c_beta), nu_(nu) {
    if (!(c_beta > 0.0)) throw std::invalid_argument("QLearner: c_beta must be positive");
    if (!(nu > 0.5 && nu <= 1.0)) throw std::invalid_argument("QLearner: nu must lie in (0.5, 1]");
  }

  static double step_size(double c_beta, double nu, std::uint64_t t) {
    return std::min(1.0, c_beta / std::pow(static_cast<double>(t) + 1.0, nu));
  }

  double current_step_size() const { return step_size(c_beta_, nu_, clock_); }

  /// Q(s,a) <- (1 - beta) Q(s,a) + beta (r + rho max_a' Q(s_next, a')), then
  /// advances the clock. Returns the new Q(s,a).
  double update(std::size_t s, std::size_t a, double r, std::size_t s_next) {
    return update_with_step(s, a, r, s_next, current_step_size());
  }

  /// Same update with an explicit step size; the clock still advances.
  double update_with_step(std::size_t s, std::size_t a, double r, std::size_t s_next, double beta) {
    Matrix& values = q_.values();
    const auto rows = static_cast<std::size_t>(values.rows());
    const auto cols = static_cast<std::size_t>(values.cols());
    if (s >= rows || s_next >= rows || a >= cols) {
      throw std::out_of_range("QLearner::update: index out of range");
    }
    const auto next = static_cast<Eigen::Index>(s_next);
    // Lowest index wins ties; only the value enters the target.
    double best = values(next, 0);
    for (Eigen::Index b = 1; b < values.cols(); ++b) best = std::max(best, values(next, b));
    double& entry = values(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(a));
    entry = (1.0 - beta) * entry + beta * (r + q_.rho() * best);
    ++clock_;
    return entry;
  }

  void reset_clock() noexcept { clock_ = 1; }
  std::uint64_t clock() const noexcept { return clock_; }

  const QTable& q() const noexcept { return q_; }
  QTable& q() noexcept { return q_; }
  double c_beta() const noexcept { return c_beta_; }
  double nu() const noexcept { return nu_; }

 private:
  QTable q_;
  double c_beta_;
  double nu_;
  std::uint64_t clock_ = 1;
};

}  // namespace smfg
