#pragma once

// Portable sampling helpers. Distribution objects from <random> are
// implementation-defined, so draws are derived directly from the engine's
// 64-bit output to keep runs bit-reproducible across standard libraries.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>

#include "smfg/core.hpp"

namespace smfg {

using Rng = std::mt19937_64;

/// Uniform double in [0,1) with 53 random bits.
inline double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

/// Inverse-CDF lookup: first index whose cumulative mass exceeds `u`.
/// Rounding slack at the top of the CDF falls to the last positive entry.
inline std::size_t sample_index(std::span<const double> probs, double u) {
  double cumulative = 0.0;
  std::size_t last_positive = probs.size();
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (probs[i] <= 0.0) continue;
    last_positive = i;
    cumulative += probs[i];
    if (u < cumulative) return i;
  }
  if (last_positive == probs.size()) throw std::invalid_argument("sample_index: no positive mass");
  return last_positive;
}

inline std::size_t sample_index(const Eigen::Ref<const Vector>& probs, double u) {
  return sample_index(std::span<const double>(probs.data(), static_cast<std::size_t>(probs.size())), u);
}

/// Symmetric Dirichlet(1) draw, i.e. uniform on the simplex.
inline Vector sample_simplex(std::size_t n, Rng& rng) {
  Vector v(static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    // 1 - u lies in (0,1], so the log is finite.
    v(i) = -std::log(1.0 - uniform01(rng));
  }
  return v / v.sum();
}

inline MeanField random_mean_field(std::size_t num_states, Rng& rng) {
  return MeanField::unchecked(sample_simplex(num_states, rng));
}

inline Policy random_policy(const StateActionDims& dims, Rng& rng) {
  Matrix table(static_cast<Eigen::Index>(dims.num_states), static_cast<Eigen::Index>(dims.num_actions));
  for (Eigen::Index s = 0; s < table.rows(); ++s) {
    table.row(s) = sample_simplex(dims.num_actions, rng).transpose();
  }
  return Policy::unchecked(std::move(table));
}

inline std::string rng_state_string(const Rng& rng) {
  std::ostringstream out;
  out << rng;
  return out.str();
}

inline Rng rng_from_state_string(const std::string& state) {
  Rng rng;
  std::istringstream in(state);
  in >> rng;
  if (!in) throw std::invalid_argument("rng_from_state_string: malformed engine state");
  return rng;
}

}  // namespace smfg
