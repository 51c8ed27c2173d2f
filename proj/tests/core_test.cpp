#include <gtest/gtest.h>

#include <cmath>

#include "smfg/core.hpp"
#include "smfg/random.hpp"
#include "test_support.hpp"

namespace smfg {
namespace {

TEST(StateActionDims, RejectsEmptySpaces) {
  EXPECT_THROW(StateActionDims(0, 2), std::invalid_argument);
  EXPECT_THROW(StateActionDims(2, 0), std::invalid_argument);
  EXPECT_NO_THROW(StateActionDims(1, 1));
}

TEST(MeanField, ValidatesSimplex) {
  EXPECT_NO_THROW(MeanField(Vector::Constant(4, 0.25)));
  Vector off(2);
  off << 0.6, 0.4 + 2e-9;
  EXPECT_THROW(MeanField{off}, std::invalid_argument);
  Vector within(2);
  within << 0.6, 0.4 + 5e-10;
  EXPECT_NO_THROW(MeanField{within});
  Vector negative(2);
  negative << 1.1, -0.1;
  EXPECT_THROW(MeanField{negative}, std::invalid_argument);
  Vector nan(2);
  nan << NAN, 1.0;
  EXPECT_THROW(MeanField{nan}, std::invalid_argument);
}

TEST(Policy, ValidatesRows) {
  Matrix ok(2, 2);
  ok << 0.5, 0.5, 1.0, 0.0;
  EXPECT_NO_THROW(Policy{ok});
  Matrix bad = ok;
  bad(1, 1) = 0.1;
  EXPECT_THROW(Policy{bad}, std::invalid_argument);
  EXPECT_TRUE(Policy::uniform({3, 4}).is_valid());
}

TEST(QTable, BoundsAndDiscount) {
  EXPECT_THROW(QTable(Matrix::Zero(2, 2), 1.0), std::invalid_argument);
  EXPECT_THROW(QTable(Matrix::Zero(2, 2), 0.0), std::invalid_argument);
  QTable q = QTable::zeros({2, 3}, 0.7);
  EXPECT_DOUBLE_EQ(q.upper_bound(), 1.0 / 0.3);
  EXPECT_TRUE(q.within_bounds());
  q.values()(0, 0) = 4.0;
  EXPECT_FALSE(q.within_bounds());
}

TEST(TvNorm, Examples) {
  EXPECT_EQ(tv_norm(Matrix::Zero(2, 2)), 0.0);
  Matrix a = Matrix::Zero(3, 2);
  Matrix b = Matrix::Zero(3, 2);
  a.col(0).setOnes();
  b.col(0).setOnes();
  b(1, 0) = 0.0;
  b(1, 1) = 1.0;
  EXPECT_DOUBLE_EQ(tv_distance(Policy(a), Policy(b)), 2.0);
  EXPECT_EQ(tv_distance(Policy::uniform({3, 2}), Policy::uniform({3, 2})), 0.0);
  EXPECT_THROW(tv_norm(Matrix::Zero(2, 3), StateActionDims{3, 2}), std::invalid_argument);
}

TEST(L1Norm, Examples) {
  EXPECT_EQ(l1_norm(Vector::Zero(3)), 0.0);
  Vector v(2);
  v << 0.5, -0.5;
  EXPECT_DOUBLE_EQ(l1_norm(v), 1.0);
  Rng rng(3);
  for (int i = 0; i < 100; ++i) {
    const double d = l1_distance(random_mean_field(5, rng), random_mean_field(5, rng));
    EXPECT_GE(d, 0.0);
    EXPECT_LE(d, 2.0);
  }
}

TEST(FrobeniusAndInfNorm, Examples) {
  EXPECT_EQ(frobenius_norm(Matrix::Zero(2, 2)), 0.0);
  EXPECT_DOUBLE_EQ(frobenius_norm(Matrix::Identity(2, 2)), std::sqrt(2.0));
  EXPECT_EQ(inf_norm(Matrix::Zero(3, 3)), 0.0);
  Matrix single(1, 1);
  single << 3.5;
  EXPECT_EQ(inf_norm(single), 3.5);
  Rng rng(5);
  for (int i = 0; i < 100; ++i) {
    const Matrix p = testing::random_stochastic(4, 4, rng);
    const Matrix q = testing::random_stochastic(4, 4, rng);
    EXPECT_LE(frobenius_norm(p - q), std::sqrt(8.0));
    const Matrix qa = testing::random_matrix(4, 2, 0.0, 1.0 / 0.3, rng);
    const Matrix qb = testing::random_matrix(4, 2, 0.0, 1.0 / 0.3, rng);
    EXPECT_LE(inf_norm(qa - qb), 1.0 / 0.3);
  }
}

TEST(Norms, TriangleInequalityAndHomogeneity) {
  Rng rng(11);
  for (int i = 0; i < 500; ++i) {
    const Matrix x = testing::random_matrix(4, 3, -2.0, 2.0, rng);
    const Matrix y = testing::random_matrix(4, 3, -2.0, 2.0, rng);
    const double c = -3.0 + 6.0 * uniform01(rng);
    const Vector u = x.col(0);
    const Vector w = y.col(0);
    constexpr double tol = 1e-12;
    EXPECT_LE(tv_norm(x + y), tv_norm(x) + tv_norm(y) + tol);
    EXPECT_LE(l1_norm(u + w), l1_norm(u) + l1_norm(w) + tol);
    EXPECT_LE(frobenius_norm(x + y), frobenius_norm(x) + frobenius_norm(y) + tol);
    EXPECT_LE(inf_norm(x + y), inf_norm(x) + inf_norm(y) + tol);
    EXPECT_NEAR(tv_norm(c * x), std::abs(c) * tv_norm(x), 1e-12);
    EXPECT_NEAR(l1_norm(c * u), std::abs(c) * l1_norm(u), 1e-12);
    EXPECT_NEAR(frobenius_norm(c * x), std::abs(c) * frobenius_norm(x), 1e-12);
    EXPECT_NEAR(inf_norm(c * x), std::abs(c) * inf_norm(x), 1e-12);
  }
}

TEST(Softmax, ThreeToOneOdds) {
  Matrix q(1, 2);
  q << 1.0, 0.0;
  const Policy pi = softmax_policy(QTable(q, 0.5), std::log(3.0));
  EXPECT_NEAR(pi(0, 0), 0.75, 1e-15);
  EXPECT_NEAR(pi(0, 1), 0.25, 1e-15);
}

TEST(Softmax, ZeroTemperatureAndConstantRowsAreUniform) {
  Rng rng(2);
  const QTable q(testing::random_matrix(3, 4, 0.0, 3.0, rng), 0.7);
  const Policy flat = softmax_policy(q, 0.0);
  EXPECT_LT(tv_distance(flat, Policy::uniform({3, 4})), 1e-15);
  const Policy constant = softmax_policy(QTable(Matrix::Constant(2, 5, 1.7), 0.7), 4.0);
  EXPECT_LT(tv_distance(constant, Policy::uniform({2, 5})), 1e-15);
}

TEST(Softmax, StableForLargeInverseTemperature) {
  Matrix q(1, 3);
  q << 1000.0, 999.0, 0.0;
  const Policy pi = softmax_policy(QTable(q, 0.999), 50.0);
  EXPECT_TRUE(pi.table().allFinite());
  EXPECT_NEAR(pi.table().row(0).sum(), 1.0, 1e-12);
  EXPECT_GT(pi(0, 0), 0.999);
}

TEST(Softmax, Errors) {
  Matrix q = Matrix::Zero(2, 2);
  q(0, 0) = INFINITY;
  EXPECT_THROW(softmax_policy(QTable(q, 0.5), 1.0), std::domain_error);
  EXPECT_THROW(softmax_policy(QTable::zeros({2, 2}, 0.5), -1.0), std::invalid_argument);
}

TEST(Softmax, AlwaysAValidPolicy) {
  Rng rng(17);
  for (int i = 0; i < 500; ++i) {
    const double lambda = 20.0 * uniform01(rng);
    const QTable q(testing::random_matrix(5, 4, -50.0, 50.0, rng), 0.9);
    const Policy pi = softmax_policy(q, lambda);
    for (Eigen::Index s = 0; s < 5; ++s) EXPECT_NEAR(pi.table().row(s).sum(), 1.0, 1e-12);
    EXPECT_GE(pi.table().minCoeff(), 0.0);
  }
}

TEST(Softmax, LipschitzInQ) {
  Rng rng(23);
  const double rho = 0.7;
  int violations = 0;
  for (double lambda : {0.5, 1.0, 5.0}) {
    for (Eigen::Index s : {3, 9}) {
      for (Eigen::Index a : {2, 4}) {
        for (int i = 0; i < 1000; ++i) {
          const QTable q(testing::random_matrix(s, a, 0.0, 1.0 / (1.0 - rho), rng), rho);
          const QTable q2(testing::random_matrix(s, a, 0.0, 1.0 / (1.0 - rho), rng), rho);
          const double lhs = tv_distance(softmax_policy(q, lambda), softmax_policy(q2, lambda));
          const double rhs = lambda * static_cast<double>(s) * std::sqrt(static_cast<double>(a)) *
                             inf_norm(q.values() - q2.values());
          if (lhs > rhs) ++violations;
        }
      }
    }
  }
  EXPECT_EQ(violations, 0);
}

TEST(Softmax, ArgmaxMassMonotoneInLambda) {
  Rng rng(29);
  for (int i = 0; i < 200; ++i) {
    const QTable q(testing::random_matrix(1, 4, 0.0, 2.0, rng), 0.7);
    Eigen::Index best = 0;
    q.values().row(0).maxCoeff(&best);
    double prev = 0.0;
    for (double lambda = 0.0; lambda <= 20.0; lambda += 0.25) {
      const double mass = softmax_policy(q, lambda)(0, static_cast<std::size_t>(best));
      EXPECT_GE(mass, prev - 1e-15);
      prev = mass;
    }
  }
}

}  // namespace
}  // namespace smfg
