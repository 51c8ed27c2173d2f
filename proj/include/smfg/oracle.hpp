#pragma once

// Exact operators used as ground truth: value iteration for the optimal
// Q-function of the mean-field-frozen MDP, the Boltzmann optimality map, the
// consistency (push-forward) map, a damped equilibrium solver, and an
// empirical probe of the contraction constants.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "smfg/core.hpp"
#include "smfg/environment.hpp"
#include "smfg/random.hpp"

namespace smfg {

/// Reward table R(., ., mu) and kernel P(. | ., ., mu) of the MDP induced by
/// freezing the mean-field at `mu`.
struct FrozenMdp {
  Matrix rewards;
  TransitionKernel kernel;
};

inline FrozenMdp freeze(const MfgEnvironment& env, const MeanField& mu) {
  const auto& dims = env.dims();
  if (mu.size() != dims.num_states) throw std::invalid_argument("freeze: mean-field has wrong size");
  FrozenMdp mdp{Matrix(static_cast<Eigen::Index>(dims.num_states), static_cast<Eigen::Index>(dims.num_actions)),
                TransitionKernel(dims)};
  for (std::size_t s = 0; s < dims.num_states; ++s) {
    for (std::size_t a = 0; a < dims.num_actions; ++a) {
      mdp.rewards(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(a)) = env.reward(s, a, mu);
      env.transition_dist(s, a, mu, mdp.kernel.row(s, a));
    }
  }
  return mdp;
}

/// One application of the Bellman optimality operator.
inline Matrix bellman_update(const FrozenMdp& mdp, const Matrix& q, double rho) {
  const Vector best = q.rowwise().maxCoeff();
  Matrix next(q.rows(), q.cols());
  const auto& dims = mdp.kernel.dims();
  for (std::size_t s = 0; s < dims.num_states; ++s) {
    for (std::size_t a = 0; a < dims.num_actions; ++a) {
      auto row = mdp.kernel.row(s, a);
      double expected = 0.0;
      for (std::size_t j = 0; j < row.size(); ++j) expected += row[j] * best(static_cast<Eigen::Index>(j));
      next(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(a)) =
          mdp.rewards(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(a)) + rho * expected;
    }
  }
  return next;
}

class ConvergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr double kValueIterationTol = 1e-10;

/// Value iteration from Q = 0, stopped once successive iterates differ by at
/// most tol (1 - rho) / rho in sup norm, which bounds the distance to the
/// fixed point by tol.
inline QTable induced_q_star(const MfgEnvironment& env, const MeanField& mu, double rho,
                             double tol = kValueIterationTol, std::size_t max_iter = 1'000'000) {
  if (!(tol > 0.0)) throw std::invalid_argument("induced_q_star: tol must be > 0");
  if (!(rho > 0.0 && rho < 1.0)) throw std::invalid_argument("induced_q_star: rho must lie in (0,1)");
  const FrozenMdp mdp = freeze(env, mu);
  const double stop = tol * (1.0 - rho) / rho;
  Matrix q = Matrix::Zero(mdp.rewards.rows(), mdp.rewards.cols());
  for (std::size_t it = 0; it < max_iter; ++it) {
    Matrix next = bellman_update(mdp, q, rho);
    const double change = inf_norm(next - q);
    q = std::move(next);
    if (change <= stop) return {std::move(q), rho};
  }
  throw ConvergenceError("induced_q_star: value iteration did not converge within the iteration cap");
}

/// Boltzmann optimality map: softmax of the optimal Q-function at `mu`.
inline Policy gamma1_lambda(const MfgEnvironment& env, const MeanField& mu, double lambda, double rho,
                            double tol = kValueIterationTol) {
  if (!(lambda >= 0.0)) throw std::invalid_argument("gamma1_lambda: lambda must be >= 0");
  return softmax_policy(induced_q_star(env, mu, rho, tol), lambda);
}

/// Greedy policy with probability split evenly among optimal actions
/// (the infinite-temperature limit of the Boltzmann map).
inline Policy greedy_policy(const QTable& q, double tie_tol = 1e-12) {
  Matrix table = Matrix::Zero(q.values().rows(), q.values().cols());
  for (Eigen::Index s = 0; s < table.rows(); ++s) {
    const double best = q.values().row(s).maxCoeff();
    int ties = 0;
    for (Eigen::Index a = 0; a < table.cols(); ++a) ties += (q.values()(s, a) >= best - tie_tol) ? 1 : 0;
    for (Eigen::Index a = 0; a < table.cols(); ++a) {
      if (q.values()(s, a) >= best - tie_tol) table(s, a) = 1.0 / ties;
    }
  }
  return Policy::unchecked(std::move(table));
}

inline Policy gamma1_hard(const MfgEnvironment& env, const MeanField& mu, double rho,
                          double tol = kValueIterationTol) {
  return greedy_policy(induced_q_star(env, mu, rho, tol));
}

/// P_{pi,mu}(s, s') = sum_a pi(a|s) P(s'|s,a,mu).
inline Matrix induced_kernel(const MfgEnvironment& env, const Policy& pi, const MeanField& mu) {
  const auto& dims = env.dims();
  if (pi.dims() != dims) throw std::invalid_argument("induced_kernel: policy has wrong shape");
  if (mu.size() != dims.num_states) throw std::invalid_argument("induced_kernel: mean-field has wrong size");
  const auto n = static_cast<Eigen::Index>(dims.num_states);
  Matrix kernel = Matrix::Zero(n, n);
  std::vector<double> row(dims.num_states);
  for (std::size_t s = 0; s < dims.num_states; ++s) {
    for (std::size_t a = 0; a < dims.num_actions; ++a) {
      const double w = pi(s, a);
      if (w == 0.0) continue;
      env.transition_dist(s, a, mu, row);
      for (std::size_t j = 0; j < dims.num_states; ++j) {
        kernel(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(j)) += w * row[j];
      }
    }
  }
  return kernel;
}

/// Consistency map: mu'(s') = sum_{s,a} P(s'|s,a,mu) pi(a|s) mu(s).
inline MeanField gamma2(const MfgEnvironment& env, const Policy& pi, const MeanField& mu) {
  Vector next = induced_kernel(env, pi, mu).transpose() * mu.probs();
  return MeanField::unchecked(std::move(next));
}

// ---------------------------------------------------------------------------
// Equilibrium solver

struct BmfePair {
  Policy policy;
  MeanField mean_field;
  double residual_policy = 0.0;
  double residual_mu = 0.0;
  std::size_t iterations = 0;
  bool converged = false;
};

struct BmfeSolverOptions {
  double lambda = 1.0;
  double rho = 0.7;
  double damping = 0.5;
  double tol = 1e-8;
  std::size_t max_iter = 100'000;
  double value_iteration_tol = kValueIterationTol;
};

/// Damped fixed-point iteration mu <- (1 - d) mu + d Gamma2(Gamma1(mu), mu)
/// from the uniform mean-field. Stops at the first iterate whose fixed-point
/// residual ||mu - Gamma2(Gamma1(mu), mu)||_1 is at most tol (so the damped
/// step is at most damping * tol) and returns that iterate with pi = Gamma1(mu).
/// When max_iter is exhausted the best iterate seen is returned unconverged.
inline BmfePair solve_bmfe(const MfgEnvironment& env, const BmfeSolverOptions& opt) {
  if (!(opt.tol > 0.0)) throw std::invalid_argument("solve_bmfe: tol must be > 0");
  if (!(opt.damping > 0.0 && opt.damping <= 1.0)) throw std::invalid_argument("solve_bmfe: damping must lie in (0,1]");
  MeanField mu = MeanField::uniform(env.dims().num_states);
  BmfePair best{Policy::uniform(env.dims()), mu, std::numeric_limits<double>::infinity(),
                std::numeric_limits<double>::infinity(), 0, false};
  for (std::size_t it = 0; it <= opt.max_iter; ++it) {
    Policy pi = gamma1_lambda(env, mu, opt.lambda, opt.rho, opt.value_iteration_tol);
    MeanField image = gamma2(env, pi, mu);
    const double residual = l1_distance(mu, image);
    if (residual < best.residual_mu) {
      best = BmfePair{pi, mu, 0.0, residual, it, false};
    }
    if (residual <= opt.tol) {
      best.converged = true;
      return best;
    }
    mu = MeanField::unchecked((1.0 - opt.damping) * mu.probs() + opt.damping * image.probs());
  }
  return best;
}

// ---------------------------------------------------------------------------
// Contraction probe

struct ContractionEstimate {
  double d1_hat = 0.0;
  double d2_hat = 0.0;
  double d3_hat = 0.0;
  double d_hat() const noexcept { return d1_hat * d2_hat + d3_hat; }
  bool contraction_verified() const noexcept { return d_hat() < 1.0; }
};

/// Empirical maxima of the three Lipschitz ratios over random pairs drawn
/// uniformly from the simplex (Dirichlet(1)) and policy space. A sampler of
/// lower bounds, not a certificate.
inline ContractionEstimate probe_contraction(const MfgEnvironment& env, double lambda, double rho,
                                             std::size_t num_pairs, Rng& rng,
                                             double vi_tol = kValueIterationTol) {
  if (num_pairs < 1) throw std::invalid_argument("probe_contraction: num_pairs must be >= 1");
  constexpr double kMinDenominator = 1e-9;
  const auto& dims = env.dims();
  ContractionEstimate est;
  for (std::size_t i = 0; i < num_pairs; ++i) {
    const MeanField mu = random_mean_field(dims.num_states, rng);
    const MeanField mu2 = random_mean_field(dims.num_states, rng);
    const Policy pi = random_policy(dims, rng);
    const Policy pi2 = random_policy(dims, rng);

    const double dmu = l1_distance(mu, mu2);
    const double dpi = tv_distance(pi, pi2);
    if (dmu >= kMinDenominator) {
      const double num1 = tv_distance(gamma1_lambda(env, mu, lambda, rho, vi_tol),
                                      gamma1_lambda(env, mu2, lambda, rho, vi_tol));
      est.d1_hat = std::max(est.d1_hat, num1 / dmu);
      const double num3 = l1_distance(gamma2(env, pi, mu), gamma2(env, pi, mu2));
      est.d3_hat = std::max(est.d3_hat, num3 / dmu);
    }
    if (dpi >= kMinDenominator) {
      const double num2 = l1_distance(gamma2(env, pi, mu), gamma2(env, pi2, mu));
      est.d2_hat = std::max(est.d2_hat, num2 / dpi);
    }
  }
  return est;
}

}  // namespace smfg
