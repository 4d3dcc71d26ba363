#include "edm/divergence.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "oracles.hpp"

namespace {

using edm::qhat_all_naive;
using edm::qhat_all_shifted;
using edm::qhat_naive;

const std::vector<double> kStep{1, 1, 1, 10, 10, 10};
const std::vector<double> kShortStep{0, 0, 10, 10};

TEST(PairwiseCross, MatchesDoubleLoop) {
  EXPECT_DOUBLE_EQ(oracle::cross(kStep, 3), 81.0);
  EXPECT_DOUBLE_EQ(edm::pairwise_diff_sum_cross(kStep, 3), 81.0);
  EXPECT_DOUBLE_EQ(edm::pairwise_diff_sum_cross(std::vector<double>{5, 5, 5, 5}, 2), 0.0);
  EXPECT_DOUBLE_EQ(oracle::cross(kShortStep, 1), 20.0);
  EXPECT_DOUBLE_EQ(edm::pairwise_diff_sum_cross(kShortStep, 1), 20.0);
}

TEST(PairwiseCross, RejectsOutOfRangeSplit) {
  EXPECT_THROW(edm::pairwise_diff_sum_cross(kStep, 0), std::out_of_range);
  EXPECT_THROW(edm::pairwise_diff_sum_cross(kStep, 6), std::out_of_range);
  EXPECT_THROW(qhat_naive(kStep, 7), std::out_of_range);
}

TEST(Qhat, HandDerivedValues) {
  EXPECT_NEAR(oracle::qhat(kStep, 3), 27.0, 1e-12);
  EXPECT_NEAR(qhat_naive(kStep, 3), 27.0, 1e-12);
  EXPECT_NEAR(qhat_naive(kShortStep, 1), 5.0, 1e-12);
  EXPECT_NEAR(qhat_naive(kShortStep, 2), 20.0, 1e-12);
}

TEST(Qhat, ConstantSeriesIsZero) {
  const std::vector<double> flat(17, 3.25);
  for (std::size_t tau = 1; tau < flat.size(); ++tau) EXPECT_EQ(qhat_naive(flat, tau), 0.0);
  for (const auto& s : qhat_all_shifted(std::vector<double>(100, -2.0))) EXPECT_EQ(s.qhat, 0.0);
}

TEST(QhatAll, ShortSeries) {
  const auto naive = qhat_all_naive(kShortStep);
  ASSERT_EQ(naive.size(), 3u);
  EXPECT_NEAR(naive[0].qhat, 5.0, 1e-12);
  EXPECT_NEAR(naive[1].qhat, 20.0, 1e-12);
  EXPECT_NEAR(naive[2].qhat, 5.0, 1e-12);
  const auto shifted = qhat_all_shifted(kShortStep);
  ASSERT_EQ(shifted.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(shifted[i].tau, i + 1);
    EXPECT_NEAR(shifted[i].qhat, naive[i].qhat, 1e-12);
  }
  EXPECT_TRUE(qhat_all_naive(std::vector<double>{7}).empty());
  EXPECT_TRUE(qhat_all_shifted(std::vector<double>{7}).empty());
  EXPECT_TRUE(qhat_all_shifted(std::vector<double>{}).empty());
}

TEST(QhatAll, ArgmaxOfStep) {
  EXPECT_EQ(edm::best_split(qhat_all_naive(kStep), kStep.size()).tau, 3u);
  EXPECT_EQ(edm::best_split(kStep).tau, 3u);
}

TEST(BestSplit, TieGoesToSmallestTau) {
  const std::vector<edm::SplitStatistic> stats{{1, 2.0}, {2, 5.0}, {3, 5.0}, {4, 1.0}};
  EXPECT_EQ(edm::best_split(stats, 5).tau, 2u);
  EXPECT_EQ(edm::best_split(stats, 5, 3).tau, 0u);  // only tau in [3, 2] admissible
}

TEST(QhatProperties, ShiftedMatchesNaiveOnRandomSeries) {
  std::mt19937_64 rng(42);
  for (int trial = 0; trial < 200; ++trial) {
    const auto xs = oracle::random_series(rng, 2 + rng() % 60, trial % 2 == 1);
    const auto naive = qhat_all_naive(xs);
    const auto shifted = qhat_all_shifted(xs);
    ASSERT_EQ(naive.size(), shifted.size());
    for (std::size_t i = 0; i < naive.size(); ++i) {
      ASSERT_EQ(naive[i].tau, shifted[i].tau);
      ASSERT_NEAR(naive[i].qhat, shifted[i].qhat, 1e-9 * std::max(1.0, std::fabs(naive[i].qhat)));
      ASSERT_GE(naive[i].qhat, 0.0);
    }
  }
}

TEST(QhatProperties, NaiveMatchesDirectOracle) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    const auto xs = oracle::random_series(rng, 2 + rng() % 30, false);
    for (std::size_t tau = 1; tau < xs.size(); ++tau) {
      const double expected = std::max(0.0, oracle::qhat(xs, tau));
      ASSERT_NEAR(qhat_naive(xs, tau), expected, 1e-9 * std::max(1.0, expected));
    }
  }
}

TEST(QhatProperties, ReversalSymmetry) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    auto xs = oracle::random_series(rng, 2 + rng() % 50, false);
    const auto forward = qhat_all_shifted(xs);
    std::reverse(xs.begin(), xs.end());
    const auto backward = qhat_all_shifted(xs);
    const std::size_t size = xs.size();
    for (const auto& s : forward) {
      const double mirrored = backward[size - s.tau - 1].qhat;
      ASSERT_NEAR(s.qhat, mirrored, 1e-9 * std::max(1.0, s.qhat));
    }
  }
}

TEST(QhatProperties, ScaleEquivariance) {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 50; ++trial) {
    const auto xs = oracle::random_series(rng, 4 + rng() % 50, false);
    const double c = 0.5 + static_cast<double>(rng() % 1000) / 100.0;
    std::vector<double> scaled(xs);
    for (double& x : scaled) x *= c;
    const auto a = qhat_all_shifted(xs);
    const auto b = qhat_all_shifted(scaled);
    for (std::size_t i = 0; i < a.size(); ++i)
      ASSERT_NEAR(b[i].qhat, c * a[i].qhat, 1e-9 * std::max(1.0, c * a[i].qhat));
    ASSERT_EQ(edm::best_split(a, xs.size()).tau, edm::best_split(b, xs.size()).tau);
  }
}

TEST(PermutationTest, ConstantSeriesHasPValueOne) {
  const std::vector<double> flat(10, 4.0);
  for (std::size_t m : {1u, 7u, 100u}) {
    const auto r = edm::permutation_test(flat, 0.0, m, 123);
    EXPECT_EQ(r.p_value, 1.0);
    EXPECT_EQ(r.method, edm::Method::monte_carlo);
  }
}

TEST(PermutationTest, ExhaustiveMatchesCombinatorialOracle) {
  // Oracle: place the three 10s at every C(6,3) position set.
  EXPECT_DOUBLE_EQ(oracle::exhaustive_step_p(27.0), 0.1);
  const auto r = edm::permutation_test_exhaustive(kStep, 27.0);
  EXPECT_DOUBLE_EQ(r.p_value, 0.1);
  EXPECT_DOUBLE_EQ(r.statistic, 27.0);
}

TEST(PermutationTest, ExhaustiveIsInvariantUnderReordering) {
  std::vector<double> xs{3, 1, 4, 1, 5, 9, 2};
  const double observed = edm::best_split(xs).qhat;
  const double p = edm::permutation_test_exhaustive(xs, observed).p_value;
  std::mt19937 rng(3);
  for (int i = 0; i < 5; ++i) {
    std::shuffle(xs.begin(), xs.end(), rng);
    EXPECT_EQ(edm::permutation_test_exhaustive(xs, observed).p_value, p);
  }
}

TEST(PermutationTest, MonteCarloApproximatesExhaustive) {
  const auto r = edm::permutation_test(kStep, 27.0, 10000, 2024);
  EXPECT_GE(r.p_value, 0.08);
  EXPECT_LE(r.p_value, 0.12);
}

TEST(PermutationTest, DeterministicAndGranular) {
  std::mt19937_64 rng(5);
  const auto xs = oracle::random_series(rng, 40, false);
  const double observed = edm::best_split(xs).qhat;
  const auto a = edm::permutation_test(xs, observed, 37, 99);
  const auto b = edm::permutation_test(xs, observed, 37, 99);
  EXPECT_EQ(a.p_value, b.p_value);
  const double scaled = a.p_value * 37.0;
  EXPECT_EQ(scaled, std::round(scaled));
  EXPECT_GE(a.p_value, 0.0);
  EXPECT_LE(a.p_value, 1.0);
}

TEST(PermutationTest, RejectsZeroPermutations) {
  EXPECT_THROW(edm::permutation_test(kStep, 27.0, 0, 1), std::invalid_argument);
  EXPECT_THROW(edm::permutation_test(std::vector<double>{1}, 0.0, 10, 1), std::invalid_argument);
}

}  // namespace
