#include <gtest/gtest.h>

#include <cmath>

#include "smfg/estimators.hpp"
#include "smfg/random.hpp"
#include "test_support.hpp"

namespace smfg {
namespace {

// Simulates n transitions of the chain with row-stochastic matrix p.
TransitionCounter sample_chain(const Matrix& p, std::size_t n, Rng& rng) {
  TransitionCounter counter(static_cast<std::size_t>(p.rows()));
  std::size_t s = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const Vector row = p.row(static_cast<Eigen::Index>(s)).transpose();
    const std::size_t next = sample_index(row, uniform01(rng));
    counter.record(s, next);
    s = next;
  }
  return counter;
}

TEST(TransitionCounter, RecordUpdatesCounts) {
  TransitionCounter c(3);
  c.record(0, 1);
  EXPECT_EQ(c.pair_count(0, 1), 1u);
  EXPECT_EQ(c.state_count(0), 1u);
  EXPECT_EQ(c.total_count(), 1u);
  EXPECT_THROW(c.record(3, 0), std::out_of_range);
  EXPECT_THROW(c.record(0, 3), std::out_of_range);
}

TEST(TransitionCounter, SmoothedEstimate) {
  TransitionCounter fresh(4);
  EXPECT_TRUE(fresh.estimate().isApproxToConstant(0.25, 0.0));
  TransitionCounter two(2);
  two.record(0, 1);
  const Matrix p = two.estimate();
  EXPECT_DOUBLE_EQ(p(0, 1), 0.75);
  EXPECT_DOUBLE_EQ(p(0, 0), 0.25);
  EXPECT_DOUBLE_EQ(p(1, 0), 0.5);
}

TEST(TransitionCounter, CountsAndRowSumsStayConsistent) {
  Rng rng(31);
  const Matrix p = testing::random_stochastic(6, 6, rng);
  TransitionCounter c = sample_chain(p, 5000, rng);
  EXPECT_EQ(c.total_count(), 5000u);
  for (std::size_t i = 0; i < 6; ++i) {
    std::uint64_t row = 0;
    for (std::size_t j = 0; j < 6; ++j) row += c.pair_count(i, j);
    EXPECT_EQ(row, c.state_count(i));
  }
  const Matrix est = c.estimate();
  for (Eigen::Index i = 0; i < 6; ++i) EXPECT_NEAR(est.row(i).sum(), 1.0, 1e-12);
}

TEST(TransitionCounter, ResetKeepsCachedEstimate) {
  TransitionCounter c(3);
  EXPECT_TRUE(c.cached_estimate().isApproxToConstant(1.0 / 3.0, 0.0));
  c.record(0, 2);
  c.record(2, 2);
  const Matrix last = c.estimate();
  c.reset();
  EXPECT_EQ(c.cached_estimate(), last);
  EXPECT_TRUE(c.current().isApproxToConstant(1.0 / 3.0, 0.0));
  EXPECT_EQ(c.total_count(), 0u);
  c.reset();
  EXPECT_EQ(c.cached_estimate(), last);
  EXPECT_TRUE(c.current().isApproxToConstant(1.0 / 3.0, 0.0));
  // current() never touches the cache.
  c.record(1, 1);
  (void)c.current();
  EXPECT_EQ(c.cached_estimate(), last);
}

TEST(TransitionCounter, ConvergesToFixedKernel) {
  Rng rng(41);
  const Matrix p = testing::random_stochastic(5, 5, rng);
  TransitionCounter c = sample_chain(p, 100'000, rng);
  EXPECT_LE(frobenius_norm(c.estimate() - p), 0.05);
}

TEST(QLearner, StepSizeClampedToOne) {
  EXPECT_EQ(QLearner::step_size(5.0, 0.55, 0), 1.0);
  EXPECT_EQ(QLearner::step_size(5.0, 0.55, 1), 1.0);
  EXPECT_DOUBLE_EQ(QLearner::step_size(5.0, 0.55, 99), 5.0 / std::pow(100.0, 0.55));
  EXPECT_DOUBLE_EQ(QLearner::step_size(0.5, 1.0, 1), 0.25);
}

TEST(QLearner, FirstUpdateWithUnitStep) {
  QLearner learner({1, 1}, 0.7, 5.0, 0.55);
  EXPECT_DOUBLE_EQ(learner.update(0, 0, 1.0, 0), 1.0);
  EXPECT_EQ(learner.clock(), 2u);
}

TEST(QLearner, ZeroStepLeavesTableUnchanged) {
  QLearner learner({2, 2}, 0.7, 5.0, 0.55);
  learner.update(0, 1, 0.5, 1);
  const Matrix before = learner.q().values();
  learner.update_with_step(1, 0, 1.0, 0, 0.0);
  EXPECT_EQ(learner.q().values(), before);
}

TEST(QLearner, OnlyTheVisitedEntryChanges) {
  QLearner learner({3, 2}, 0.7, 5.0, 0.55);
  Rng rng(3);
  for (int i = 0; i < 50; ++i) {
    const auto s = static_cast<std::size_t>(i % 3);
    const auto a = static_cast<std::size_t>(i % 2);
    Matrix before = learner.q().values();
    learner.update(s, a, uniform01(rng), static_cast<std::size_t>((i + 1) % 3));
    before(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(a)) =
        learner.q()(s, a);
    EXPECT_EQ(before, learner.q().values());
  }
  EXPECT_THROW(learner.update(3, 0, 0.0, 0), std::out_of_range);
}

TEST(QLearner, ConvergesToGeometricSum) {
  QLearner learner({1, 1}, 0.7, 5.0, 0.55);
  for (int i = 0; i < 100'000; ++i) learner.update(0, 0, 1.0, 0);
  EXPECT_NEAR(learner.q()(0, 0), 10.0 / 3.0, 0.01);
}

TEST(QLearner, ResetClockRestartsStepSchedule) {
  QLearner learner({1, 2}, 0.7, 1.0, 1.0);
  for (int i = 0; i < 10; ++i) learner.update(0, 0, 0.5, 0);
  EXPECT_EQ(learner.clock(), 11u);
  learner.reset_clock();
  EXPECT_EQ(learner.clock(), 1u);
  EXPECT_DOUBLE_EQ(learner.current_step_size(), 0.5);
}

TEST(QLearner, StaysWithinDiscountedBounds) {
  Rng rng(5);
  const double rho = 0.9;
  QLearner learner({4, 3}, rho, 5.0, 0.55);
  for (int i = 0; i < 20'000; ++i) {
    const auto s = static_cast<std::size_t>(uniform01(rng) * 4);
    const auto a = static_cast<std::size_t>(uniform01(rng) * 3);
    const auto s2 = static_cast<std::size_t>(uniform01(rng) * 4);
    learner.update(s, a, uniform01(rng), s2);
    ASSERT_TRUE(learner.q().within_bounds(1e-12));
  }
}

TEST(QLearner, DeterministicForIdenticalInputs) {
  auto run = [] {
    Rng rng(77);
    QLearner learner({4, 2}, 0.7, 5.0, 0.55);
    TransitionCounter counter(4);
    for (int i = 0; i < 5000; ++i) {
      const auto s = static_cast<std::size_t>(uniform01(rng) * 4);
      const auto s2 = static_cast<std::size_t>(uniform01(rng) * 4);
      learner.update(s, static_cast<std::size_t>(i % 2), uniform01(rng), s2);
      counter.record(s, s2);
    }
    return std::make_pair(learner.q().values(), counter.estimate());
  };
  EXPECT_EQ(run(), run());
}

TEST(QLearner, RejectsBadHyperparameters) {
  EXPECT_THROW(QLearner({1, 1}, 0.7, 0.0, 0.55), std::invalid_argument);
  EXPECT_THROW(QLearner({1, 1}, 0.7, 5.0, 0.5), std::invalid_argument);
  EXPECT_THROW(QLearner({1, 1}, 0.7, 5.0, 1.1), std::invalid_argument);
}

}  // namespace
}  // namespace smfg
