#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "oracles.hpp"
#include "spi/queueing.hpp"

using namespace spi;

namespace {

const std::vector<Capacity> kCapacities = {Capacity::finite(1), Capacity::finite(2), Capacity::finite(3),
                                           Capacity::finite(4), Capacity::finite(5), Capacity::unbounded()};

// 40-digit mpmath evaluations of the defining series
constexpr double kG1AtX0[] = {0.52375708540435558, 0.62627726175526607, 0.65051262002270228,
                              0.65567970911820461, 0.65660663109865499, 0.65676726024586982};
constexpr double kG2AtOne[] = {0.5, 0.61538461538461538, 0.64788732394366197,
                               0.65659340659340659, 0.65861918287087612, 0.65910223258518439};

}  // namespace

TEST(Availability, UnitInstanceClosedForm) {
  const double expected = 1.0 - 1.0 / (std::numbers::e - 1.0);
  EXPECT_NEAR(availability_probability(1, 1, 1, Capacity::unbounded()), expected, 1e-10);
  EXPECT_NEAR(availability_probability(1, 1, 1, Capacity::unbounded()), 0.41802329313067357, 1e-12);
}

TEST(Availability, FrozenReferenceValues) {
  EXPECT_NEAR(availability_probability(2.5, 0.7, 1.3, Capacity::finite(3)), 0.76517234763701477, 1e-12);
  EXPECT_NEAR(availability_probability(2.5, 0.7, 1.3, Capacity::unbounded()), 0.80939012043019552, 1e-12);
  EXPECT_NEAR(availability_probability(1000, 999, 1, Capacity::unbounded()), 0.6321954314934743, 1e-10);
}

TEST(Availability, MatchesGeneratorSolve) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 500; ++trial) {
    const double lambda = oracle::uniform(rng, 0.01, 10);
    const double mu = oracle::uniform(rng, 0.01, 10);
    const double gamma = trial % 7 == 0 ? 0.0 : oracle::uniform(rng, 0.0, 10);
    const int c = 1 + static_cast<int>(trial % 8);
    const double expected = oracle::generator_availability(lambda, mu, gamma, c);
    EXPECT_NEAR(availability_probability(lambda, mu, gamma, Capacity::finite(c)), expected, 1e-10)
        << lambda << ' ' << mu << ' ' << gamma << ' ' << c;
    const auto dist = stationary_distribution(BirthDeathSpec::inventory({lambda, mu, gamma}, Capacity::finite(c)));
    const auto pi = oracle::generator_stationary(lambda, mu, gamma, c);
    ASSERT_EQ(dist.probabilities.size(), pi.size());
    for (std::size_t q = 0; q < pi.size(); ++q) EXPECT_NEAR(dist.probabilities[q], pi[q], 1e-10);
    EXPECT_NEAR(dist.at_least_one(), expected, 1e-10);
  }
}

TEST(Availability, UnboundedMatchesLargeTruncation) {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 100; ++trial) {
    const double lambda = oracle::uniform(rng, 0.01, 5);
    const double mu = oracle::uniform(rng, 0.2, 5);
    const double gamma = oracle::uniform(rng, 0.0, 5);
    // lambda/mu <= 25, so states beyond 150 carry negligible mass
    const double expected = oracle::generator_availability(lambda, mu, gamma, 150);
    EXPECT_NEAR(availability_probability(lambda, mu, gamma, Capacity::unbounded()), expected, 1e-10);
    const auto dist = stationary_distribution(BirthDeathSpec::inventory({lambda, mu, gamma}, Capacity::unbounded()));
    EXPECT_TRUE(dist.truncated);
    EXPECT_NEAR(dist.at_least_one(), expected, 1e-10);
  }
}

TEST(Availability, ZeroSaleRateIsTruncatedPoisson) {
  // gamma* = 0 gives 1 - e^{-rho} unbounded
  EXPECT_NEAR(availability_probability(2, 1, 0, Capacity::unbounded()), 1 - std::exp(-2.0), 1e-14);
  EXPECT_NEAR(availability_probability(2, 1, 0, Capacity::finite(1)), 2.0 / 3.0, 1e-14);
}

TEST(Availability, SandwichHolds) {
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 1000; ++trial) {
    const double lambda = std::exp(oracle::uniform(rng, -6, 5));
    const double mu = std::exp(oracle::uniform(rng, -3, 3));
    const double gamma = std::exp(oracle::uniform(rng, -6, 5));
    const auto cap = trial % 9 == 8 ? Capacity::unbounded() : Capacity::finite(1 + trial % 8);
    const double exact = availability_probability(lambda, mu, gamma, cap);
    const auto b = availability_bounds(lambda, mu, gamma, cap);
    EXPECT_LE(b.lower, exact + 1e-14);
    EXPECT_LE(exact, b.upper + 1e-14);
  }
}

TEST(Availability, NondecreasingInCapacity) {
  std::mt19937_64 rng(14);
  for (int trial = 0; trial < 200; ++trial) {
    const double lambda = oracle::uniform(rng, 0.01, 10);
    const double mu = oracle::uniform(rng, 0.05, 10);
    const double gamma = oracle::uniform(rng, 0, 10);
    double prev = 0.0;
    for (int c = 1; c <= 12; ++c) {
      const double a = availability_probability(lambda, mu, gamma, Capacity::finite(c));
      EXPECT_GE(a, prev - 1e-15);
      prev = a;
    }
    EXPECT_GE(availability_probability(lambda, mu, gamma, Capacity::unbounded()), prev - 1e-15);
  }
}

TEST(Availability, ExtremeRatesStayFinite) {
  const double a = availability_probability(1e6, 1.0, 1e6, Capacity::unbounded());
  EXPECT_TRUE(std::isfinite(a));
  EXPECT_GT(a, 0.0);
  EXPECT_LT(a, 1.0);
  EXPECT_NEAR(availability_probability(1e9, 1e-3, 0, Capacity::finite(50)), 1.0, 1e-12);
  EXPECT_NEAR(availability_probability(1e-12, 1, 0, Capacity::unbounded()), 1e-12, 1e-20);
}

TEST(BirthDeath, ExplicitChainAndErrors) {
  const auto d = stationary_distribution(BirthDeathSpec::finite({1.0, 2.0}, {2.0, 1.0}));
  // weights 1, 1/2, 1
  EXPECT_NEAR(d.probabilities[0], 0.4, 1e-15);
  EXPECT_NEAR(d.probabilities[1], 0.2, 1e-15);
  EXPECT_NEAR(d.probabilities[2], 0.4, 1e-15);
  EXPECT_THROW(stationary_distribution(BirthDeathSpec::finite({1.0}, {0.0})), NumericError);
  EXPECT_THROW(BirthDeathSpec::finite({1.0}, {}), ValidationError);
  EXPECT_THROW(BirthDeathSpec::inventory({1.0, 0.0, 1.0}, Capacity::unbounded()), ValidationError);
  const auto stuck = stationary_distribution(BirthDeathSpec::finite({0.0, 1.0}, {1.0, 1.0}));
  EXPECT_DOUBLE_EQ(stuck.probabilities[0], 1.0);
  EXPECT_DOUBLE_EQ(stuck.at_least_one(), 0.0);
}

TEST(BoundFunctions, FrozenValues) {
  const double x0 = 1.0 - std::exp(-12.0 / 5.0);
  for (std::size_t k = 0; k < kCapacities.size(); ++k) {
    EXPECT_NEAR(g1(kCapacities[k], x0), kG1AtX0[k], 1e-12) << kCapacities[k].to_string();
    EXPECT_NEAR(g2(kCapacities[k], 1.0), kG2AtOne[k], 1e-12) << kCapacities[k].to_string();
  }
  EXPECT_NEAR(g2(Capacity::finite(2), 1.0), 8.0 / 13.0, 1e-15);
  EXPECT_NEAR(half_bound_function(1.0), 0.52409894657965399, 1e-12);
  EXPECT_NEAR(multi_bound_function(1.0, 0.75, Capacity::finite(2)), 0.59378817045161841, 1e-12);
  EXPECT_NEAR(capacity_ratio_limit(1, 1e6), 0.50039890459912615, 1e-9);
}

TEST(BoundFunctions, UnboundedLimitsAreAtLeast0656) {
  const double x0 = 1.0 - std::exp(-12.0 / 5.0);
  EXPECT_GE(g1(Capacity::unbounded(), x0), 0.656);
  EXPECT_GE(g2(Capacity::unbounded(), 1.0), 0.656);
  EXPECT_GE(online_ratio_lower_bound(Capacity::finite(5)), 0.656);
}

TEST(BoundFunctions, MonotoneInXAndCapacity) {
  std::vector<double> xs;
  for (int k = 1; k <= 10'000; ++k) xs.push_back(k / 10'000.0);
  for (const auto& cap : kCapacities) {
    for (std::size_t k = 0; k + 1 < xs.size(); ++k) {
      ASSERT_GE(g1(cap, xs[k]), g1(cap, xs[k + 1]) - 1e-12) << cap.to_string() << " x=" << xs[k];
      ASSERT_GE(g2(cap, xs[k]), g2(cap, xs[k + 1]) - 1e-12) << cap.to_string() << " x=" << xs[k];
    }
  }
  for (double x : {1e-6, 0.01, 0.3, 0.7, 1.0}) {
    for (std::size_t c = 0; c + 1 < kCapacities.size(); ++c) {
      EXPECT_LE(g1(kCapacities[c], x), g1(kCapacities[c + 1], x) + 1e-15);
      EXPECT_LE(g2(kCapacities[c], x), g2(kCapacities[c + 1], x) + 1e-15);
    }
  }
}

TEST(BoundFunctions, GridLowerBounds) {
  for (int k = 0; k < 10'000; ++k) {
    const double x = 1e-6 * std::pow(1e9, k / 9999.0);
    ASSERT_GE(half_bound_function(x), 0.5 - 1e-12) << x;
    ASSERT_GE(multi_bound_function(x, 0.75, Capacity::finite(2)), 4.0 / 7.0 - 1e-12) << x;
  }
}

TEST(BoundFunctions, HalfBoundIncreasesFromHalf) {
  EXPECT_NEAR(half_bound_function(1e-7), 0.5, 1e-6);
  double prev = 0.5;
  for (int k = 0; k <= 200; ++k) {
    const double f = half_bound_function(1e-6 * std::pow(1e11, k / 200.0));
    EXPECT_GE(f, prev - 1e-12);
    prev = f;
  }
  EXPECT_LT(prev, 2.0 / 3.0 + 1e-9);
  EXPECT_NEAR(multi_bound_function(1e-8, 0.75, Capacity::finite(2)), 4.0 / 7.0, 1e-7);
}

TEST(BoundFunctions, RejectsBadArguments) {
  EXPECT_THROW(g1(Capacity::finite(1), 0.0), ValidationError);
  EXPECT_THROW(g2(Capacity::finite(1), -1.0), ValidationError);
  EXPECT_THROW(half_bound_function(0.0), ValidationError);
  EXPECT_THROW(availability_probability(1, 0, 1, Capacity::unbounded()), ValidationError);
}
