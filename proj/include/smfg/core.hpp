#pragma once

// Fundamental value types for tabular mean-field games: mean-fields over a
// finite state space, stochastic policies, Q-tables, and the norms used to
// compare them.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>

namespace smfg {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Absolute tolerance for simplex and row-stochasticity checks.
inline constexpr double kSimplexTol = 1e-9;

struct StateActionDims {
  std::size_t num_states = 1;
  std::size_t num_actions = 1;

  StateActionDims() = default;
  StateActionDims(std::size_t s, std::size_t a) : num_states(s), num_actions(a) {
    if (s < 1 || a < 1) {
      throw std::invalid_argument("StateActionDims: num_states and num_actions must be >= 1");
    }
  }

  friend bool operator==(const StateActionDims&, const StateActionDims&) = default;
};

namespace detail {

inline bool all_finite(const Matrix& m) { return m.allFinite(); }

// Returns an empty string when `v` is a probability vector, else a reason.
inline std::string simplex_violation(const Eigen::Ref<const Vector>& v, double tol) {
  if (v.size() == 0) return "empty vector";
  if (!v.allFinite()) return "non-finite entry";
  if (v.minCoeff() < -tol || v.maxCoeff() > 1.0 + tol) return "entry outside [0,1]";
  if (std::abs(v.sum() - 1.0) > tol) return "entries do not sum to 1";
  return {};
}

}  // namespace detail

/// Probability vector over the finite state space.
class MeanField {
 public:
  explicit MeanField(Vector probs, double tol = kSimplexTol) : probs_(std::move(probs)) {
    if (auto why = detail::simplex_violation(probs_, tol); !why.empty()) {
      throw std::invalid_argument("MeanField: " + why);
    }
  }

  static MeanField uniform(std::size_t num_states) {
    if (num_states == 0) throw std::invalid_argument("MeanField: zero states");
    return unchecked(Vector::Constant(static_cast<Eigen::Index>(num_states),
                                      1.0 / static_cast<double>(num_states)));
  }

  /// Wraps `probs` without validation. The caller guarantees the invariant.
  static MeanField unchecked(Vector probs) {
    MeanField m;
    m.probs_ = std::move(probs);
    return m;
  }

  const Vector& probs() const noexcept { return probs_; }
  std::size_t size() const noexcept { return static_cast<std::size_t>(probs_.size()); }
  double operator[](std::size_t s) const { return probs_(static_cast<Eigen::Index>(s)); }

  bool is_valid(double tol = kSimplexTol) const {
    return detail::simplex_violation(probs_, tol).empty();
  }

  friend bool operator==(const MeanField& a, const MeanField& b) {
    return a.probs_.size() == b.probs_.size() && a.probs_ == b.probs_;
  }

 private:
  MeanField() = default;
  Vector probs_;
};

/// Row-stochastic S x A table; row s is the action distribution at state s.
class Policy {
 public:
  explicit Policy(Matrix table, double tol = kSimplexTol) : table_(std::move(table)) {
    if (table_.rows() == 0 || table_.cols() == 0) throw std::invalid_argument("Policy: empty table");
    for (Eigen::Index s = 0; s < table_.rows(); ++s) {
      if (auto why = detail::simplex_violation(table_.row(s).transpose(), tol); !why.empty()) {
        throw std::invalid_argument("Policy: row " + std::to_string(s) + ": " + why);
      }
    }
  }

  static Policy uniform(const StateActionDims& dims) {
    return unchecked(Matrix::Constant(static_cast<Eigen::Index>(dims.num_states),
                                      static_cast<Eigen::Index>(dims.num_actions),
                                      1.0 / static_cast<double>(dims.num_actions)));
  }

  static Policy unchecked(Matrix table) {
    Policy p;
    p.table_ = std::move(table);
    return p;
  }

  const Matrix& table() const noexcept { return table_; }
  StateActionDims dims() const {
    return {static_cast<std::size_t>(table_.rows()), static_cast<std::size_t>(table_.cols())};
  }
  double operator()(std::size_t s, std::size_t a) const {
    return table_(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(a));
  }

  bool is_valid(double tol = kSimplexTol) const {
    for (Eigen::Index s = 0; s < table_.rows(); ++s) {
      if (!detail::simplex_violation(table_.row(s).transpose(), tol).empty()) return false;
    }
    return table_.rows() > 0;
  }

  friend bool operator==(const Policy& a, const Policy& b) {
    return a.table_.rows() == b.table_.rows() && a.table_.cols() == b.table_.cols() &&
           a.table_ == b.table_;
  }

 private:
  Policy() = default;
  Matrix table_;
};

/// State-action values in discounted-return units, with its discount factor.
class QTable {
 public:
  QTable(Matrix values, double rho) : values_(std::move(values)), rho_(rho) {
    if (!(rho_ > 0.0 && rho_ < 1.0)) throw std::invalid_argument("QTable: rho must lie in (0,1)");
    if (values_.rows() == 0 || values_.cols() == 0) throw std::invalid_argument("QTable: empty table");
  }

  static QTable zeros(const StateActionDims& dims, double rho) {
    return {Matrix::Zero(static_cast<Eigen::Index>(dims.num_states),
                         static_cast<Eigen::Index>(dims.num_actions)),
            rho};
  }

  const Matrix& values() const noexcept { return values_; }
  Matrix& values() noexcept { return values_; }
  double rho() const noexcept { return rho_; }
  StateActionDims dims() const {
    return {static_cast<std::size_t>(values_.rows()), static_cast<std::size_t>(values_.cols())};
  }
  double operator()(std::size_t s, std::size_t a) const {
    return values_(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(a));
  }

  /// Upper end of the admissible value range for rewards in [0,1].
  double upper_bound() const noexcept { return 1.0 / (1.0 - rho_); }

  bool within_bounds(double slack = 0.0) const {
    return values_.allFinite() && values_.minCoeff() >= -slack &&
           values_.maxCoeff() <= upper_bound() + slack;
  }

 private:
  Matrix values_;
  double rho_;
};

// ---------------------------------------------------------------------------
// Norms

/// Max over states of the row-wise L1 mass: max_s sum_a |f(a|s)|.
inline double tv_norm(const Matrix& f) {
  if (f.size() == 0) return 0.0;
  return f.cwiseAbs().rowwise().sum().maxCoeff();
}

inline double tv_norm(const Matrix& f, const StateActionDims& dims) {
  if (static_cast<std::size_t>(f.rows()) != dims.num_states ||
      static_cast<std::size_t>(f.cols()) != dims.num_actions) {
    throw std::invalid_argument("tv_norm: matrix dimensions do not match state/action dims");
  }
  return tv_norm(f);
}

inline double tv_distance(const Policy& a, const Policy& b) {
  return tv_norm(a.table() - b.table(), a.dims());
}

inline double l1_norm(const Eigen::Ref<const Vector>& v) { return v.cwiseAbs().sum(); }

inline double l1_distance(const MeanField& a, const MeanField& b) {
  if (a.size() != b.size()) throw std::invalid_argument("l1_distance: size mismatch");
  return l1_norm(a.probs() - b.probs());
}

inline double frobenius_norm(const Matrix& m) { return m.norm(); }

inline double inf_norm(const Matrix& m) {
  return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff();
}

// ---------------------------------------------------------------------------
// Boltzmann policy

/// Writes the Boltzmann distribution of `q_row` at inverse temperature
/// `lambda` into `out`, shifting by the row maximum before exponentiating.
using RowRef = Eigen::Ref<Eigen::RowVectorXd, 0, Eigen::InnerStride<>>;
using ConstRowRef = Eigen::Ref<const Eigen::RowVectorXd, 0, Eigen::InnerStride<>>;

inline void softmax_row(const ConstRowRef& q_row, double lambda, RowRef out) {
  const double shift = q_row.maxCoeff();
  double total = 0.0;
  for (Eigen::Index a = 0; a < q_row.size(); ++a) {
    out(a) = std::exp(lambda * (q_row(a) - shift));
    total += out(a);
  }
  out /= total;
}

inline Policy softmax_policy(const QTable& q, double lambda) {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) {
    throw std::invalid_argument("softmax_policy: lambda must be finite and >= 0");
  }
  if (!q.values().allFinite()) throw std::domain_error("softmax_policy: non-finite Q entries");
  Matrix table(q.values().rows(), q.values().cols());
  for (Eigen::Index s = 0; s < table.rows(); ++s) {
    softmax_row(q.values().row(s), lambda, table.row(s));
  }
  return Policy::unchecked(std::move(table));
}

}  // namespace smfg
