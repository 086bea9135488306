#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "oracles.hpp"
#include "spi/policy.hpp"

using namespace spi;

namespace {

MarketInstance unit_instance() { return MarketInstance({{1, 1}}, {{1, {1}}}, Capacity::unbounded()); }

MarketInstance random_single_good(std::mt19937_64& rng, Capacity cap) {
  auto inst = oracle::random_instance(rng, 1, 1 + rng() % 5, cap);
  return canonicalize_buyers(inst);
}

/// s_j / x*_j, which is the same for every type with x*_j > 0.
double worst_type_ratio(const MarketInstance& inst, Benchmark b, WRule rule, double alpha = 1.0) {
  const auto sol = solve(inst, b);
  const auto rates = analytic_sale_rates(build(inst, sol, alpha, rule), inst);
  double worst = std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < inst.num_buyers(); ++j)
    if (sol.rates(0, j) > 1e-12) worst = std::min(worst, rates.sale_rates[j] / sol.rates(0, j));
  return worst;
}

}  // namespace

TEST(Build, PastaOnLpOffIsPostedPrice) {
  const MarketInstance inst({{1, 1}}, {{0.1, {2}}, {10, {1}}}, Capacity::finite(2));
  const auto policy = build(inst, solve(inst, Benchmark::LpOff), 1.0, WRule::Pasta);
  const double w = 1 - std::exp(-1.0);
  EXPECT_DOUBLE_EQ(policy.w[0], w);
  EXPECT_NEAR(policy.p(0, 0), 1.0, 1e-12);
  EXPECT_NEAR(policy.p(0, 1), (1 - 0.1 * w) / (10 * w), 1e-12);
  EXPECT_NEAR(policy.p(0, 1), 0.1482, 1e-4);
  const auto price = to_posted_price(policy, inst);
  EXPECT_DOUBLE_EQ(price.threshold_value, 1.0);
  EXPECT_NEAR(price.boundary_probability, 0.1482, 1e-4);
}

TEST(Build, AlphaZeroNeverSells) {
  const MarketInstance inst({{1, 1}, {2, 1}}, {{1, {1, 2}}, {2, {3, 1}}}, Capacity::finite(2));
  const auto policy = build(inst, solve(inst, Benchmark::LpOff), 0.0, WRule::Pasta);
  for (double p : policy.p.flat()) EXPECT_EQ(p, 0.0);
  for (double g : policy.permitted_rate) EXPECT_EQ(g, 0.0);
}

TEST(Build, MultiGoodScalesByAlpha) {
  const MarketInstance inst({{1, 1}, {0.5, 0.7}}, {{1, {1, 2}}, {2, {0.3, 1}}}, Capacity::finite(2));
  const auto sol = solve(inst, Benchmark::LpOff);
  const auto policy = build(inst, sol, 0.75, WRule::Pasta);
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 2; ++j)
      EXPECT_NEAR(policy.p(i, j),
                  0.75 * sol.rates(i, j) /
                      (inst.buyer(j).arrival_rate * (1 - std::exp(-inst.good(i).supply_rate / inst.good(i).perish_rate))),
                  1e-14);
}

TEST(Build, IncompatiblePairingNamesPair) {
  // RB_off sells x = 1 to the unit instance, but w = 1 - 1/e
  try {
    build(unit_instance(), solve(unit_instance(), Benchmark::RbOff), 1.0, WRule::Pasta);
    FAIL() << "expected an incompatible pairing";
  } catch (const IncompatiblePairingError& e) {
    EXPECT_EQ(e.good(), 0);
    EXPECT_EQ(e.buyer(), 0);
  }
  // the online rule has no room when the whole supply is sold
  EXPECT_THROW(build(unit_instance(), solve(unit_instance(), Benchmark::RbOff), 1.0, WRule::Online),
               IncompatiblePairingError);
  EXPECT_THROW(build(unit_instance(), solve(unit_instance(), Benchmark::LpOff), 1.5, WRule::Pasta), ValidationError);
}

TEST(Build, ValidPairingsGiveProbabilities) {
  struct Pairing {
    Benchmark b;
    WRule r;
  };
  const Pairing pairings[] = {{Benchmark::LpOff, WRule::Pasta},
                              {Benchmark::LpOn, WRule::Pasta},
                              {Benchmark::LpOn, WRule::Online},
                              {Benchmark::RbOff, WRule::CollinaMin},
                              {Benchmark::RbOn, WRule::CollinaMin}};
  std::mt19937_64 rng(41);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t n = 1 + trial % 3;
    const auto inst = oracle::random_instance(rng, n, 1 + (trial / 3) % 4, Capacity::finite(2));
    const double alpha = oracle::uniform(rng, 0.0, 1.0);
    for (const auto& pr : pairings) {
      if (pr.r == WRule::Online && n > 1) continue;
      const auto policy = build(inst, solve(inst, pr.b), alpha, pr.r);
      for (double p : policy.p.flat()) {
        EXPECT_GE(p, 0.0);
        EXPECT_LE(p, 1.0);
      }
      for (std::size_t i = 0; i < n; ++i) {
        EXPECT_GT(policy.w[i], 0.0);
        EXPECT_LE(policy.w[i], 1.0);
        EXPECT_LE(policy.permitted_rate[i], alpha * inst.good(i).supply_rate / policy.w[i] + 1e-9);
      }
    }
  }
}

TEST(PostedPrice, ShapeExtraction) {
  const MarketInstance inst({{1, 1}}, {{1, {2}}, {1, {1}}}, Capacity::unbounded());
  SaleRateMatrix p(1, 2);
  p(0, 0) = 1;
  p(0, 1) = 1;
  auto price = to_posted_price(make_policy(inst, 1.0, {1.0}, p), inst);
  EXPECT_EQ(price, (PostedPrice{1.0, 1.0}));
  p(0, 0) = 0.5;
  EXPECT_THROW(to_posted_price(make_policy(inst, 1.0, {1.0}, p), inst), NotPostedPriceError);
  p(0, 0) = 0.5;
  p(0, 1) = 0.0;
  price = to_posted_price(make_policy(inst, 1.0, {1.0}, p), inst);
  EXPECT_EQ(price, (PostedPrice{2.0, 0.5}));
  // zero-rate types are ignored
  const MarketInstance gap({{1, 1}}, {{1, {3}}, {0, {2}}, {1, {1}}}, Capacity::unbounded());
  SaleRateMatrix q(1, 3);
  q(0, 0) = 1;
  q(0, 2) = 0.25;
  EXPECT_EQ(to_posted_price(make_policy(gap, 1.0, {1.0}, q), gap), (PostedPrice{1.0, 0.25}));
  EXPECT_THROW(to_posted_price(make_policy(inst, 0.5, {1.0}, p), inst), ValidationError);
}

TEST(PostedPrice, RoundTripThroughPolicy) {
  const MarketInstance inst({{1, 1}}, {{1, {3}}, {1, {2}}, {1, {1}}}, Capacity::finite(3));
  const PostedPrice price{2.0, 0.3};
  const auto policy = from_posted_price(price, inst);
  EXPECT_EQ(policy.p(0, 0), 1.0);
  EXPECT_EQ(policy.p(0, 1), 0.3);
  EXPECT_EQ(policy.p(0, 2), 0.0);
  EXPECT_EQ(to_posted_price(policy, inst), price);
}

TEST(Analytic, SellToAllUnitInstance) {
  const auto rates = analytic_sale_rates(sell_to_all(unit_instance()), unit_instance());
  EXPECT_NEAR(rates.sale_rates[0], 0.418023, 1e-6);
  EXPECT_NEAR(rates.reward_rate, 1 - 1 / (std::numbers::e - 1), 1e-12);
}

TEST(Analytic, NeverSellingPolicy) {
  const MarketInstance inst({{2, 1}}, {{1, {3}}, {4, {1}}}, Capacity::finite(2));
  const auto rates = analytic_sale_rates(make_policy(inst, 1.0, {1.0}, SaleRateMatrix(1, 2)), inst);
  for (double s : rates.sale_rates) EXPECT_EQ(s, 0.0);
  EXPECT_EQ(rates.reward_rate, 0.0);
}

TEST(Analytic, MatchesGeneratorOracle) {
  std::mt19937_64 rng(42);
  for (int trial = 0; trial < 200; ++trial) {
    const int c = 1 + trial % 6;
    const auto inst = random_single_good(rng, Capacity::finite(c));
    const auto policy = build(inst, solve(inst, Benchmark::LpOff), 1.0, WRule::Pasta);
    const auto rates = analytic_sale_rates(policy, inst);
    const double avail = oracle::generator_availability(inst.good(0).supply_rate, inst.good(0).perish_rate,
                                                        policy.permitted_rate[0], c);
    double supply_used = 0.0;
    for (std::size_t j = 0; j < inst.num_buyers(); ++j) {
      EXPECT_NEAR(rates.sale_rates[j], inst.buyer(j).arrival_rate * policy.p(0, j) * avail, 1e-10);
      supply_used += rates.sale_rates[j];
    }
    EXPECT_LE(supply_used, inst.good(0).supply_rate + 1e-12);
  }
}

TEST(Analytic, HalfCompetitiveAtCapacityTwo) {
  std::mt19937_64 rng(43);
  for (int trial = 0; trial < 500; ++trial) {
    const auto inst = random_single_good(rng, Capacity::finite(2));
    EXPECT_GE(worst_type_ratio(inst, Benchmark::LpOff, WRule::Pasta), 0.5 - 1e-12);
  }
}

TEST(Analytic, OnlineRatioAtCapacityFive) {
  std::mt19937_64 rng(44);
  for (int trial = 0; trial < 500; ++trial) {
    const auto inst = random_single_good(rng, Capacity::finite(5));
    EXPECT_GE(worst_type_ratio(inst, Benchmark::LpOn, WRule::Online), 0.656 - 1e-12);
  }
}

TEST(Analytic, OnlineRatioMatchesTableLowerBounds) {
  std::mt19937_64 rng(45);
  for (int c = 1; c <= 5; ++c) {
    const double bound = online_ratio_lower_bound(Capacity::finite(c));
    for (int trial = 0; trial < 100; ++trial) {
      const auto inst = random_single_good(rng, Capacity::finite(c));
      EXPECT_GE(worst_type_ratio(inst, Benchmark::LpOn, WRule::Online), bound - 1e-12) << "C=" << c;
    }
  }
}

TEST(Analytic, EarlierAnalysesReproduce) {
  std::mt19937_64 rng(46);
  const double unbounded_bound = 1 - 1 / (std::numbers::e - 1);
  for (int trial = 0; trial < 300; ++trial) {
    const auto inst = random_single_good(rng, Capacity::finite(1));
    EXPECT_GE(worst_type_ratio(inst, Benchmark::RbOff, WRule::CollinaMin), 1.0 / 3.0 - 1e-12);
    EXPECT_GE(worst_type_ratio(inst.with_capacity(Capacity::unbounded()), Benchmark::RbOff, WRule::CollinaMin),
              unbounded_bound - 1e-12);
    EXPECT_GE(worst_type_ratio(inst, Benchmark::LpOff, WRule::Pasta), 0.435 - 1e-12);
  }
}

TEST(Rounding, DeterministicInputsUnchanged) {
  const MarketInstance inst({{1, 1}}, {{1, {3}}, {1, {2}}}, Capacity::finite(2));
  EXPECT_EQ(round_deterministic({2.0, 1.0}, inst), (PostedPrice{2.0, 1.0}));
  EXPECT_EQ(round_deterministic({2.0, 0.0}, inst), (PostedPrice{2.0, 0.0}));
}

TEST(Rounding, KeepsAtLeastHalfTheReward) {
  std::mt19937_64 rng(47);
  for (int trial = 0; trial < 300; ++trial) {
    const auto inst = random_single_good(rng, trial % 4 == 3 ? Capacity::unbounded() : Capacity::finite(1 + trial % 4));
    const std::size_t k = rng() % inst.num_buyers();
    const PostedPrice price{inst.value(0, k), oracle::uniform(rng, 0.01, 0.99)};
    const auto rounded = round_deterministic(price, inst);
    EXPECT_TRUE(rounded.boundary_probability == 0.0 || rounded.boundary_probability == 1.0);
    const double before = analytic_sale_rates(from_posted_price(price, inst), inst).reward_rate;
    const double after = analytic_sale_rates(from_posted_price(rounded, inst), inst).reward_rate;
    EXPECT_GE(after, 0.5 * before - 1e-12);
  }
}

TEST(Json, PolicyRoundTrip) {
  const MarketInstance inst({{1, 1}, {2, 1}}, {{1, {1, 2}}, {2, {3, 1}}}, Capacity::finite(2));
  const auto policy = build(inst, solve(inst, Benchmark::LpOff), 0.75, WRule::Pasta);
  const auto back = policy_from_json(nlohmann::json::parse(to_json(policy).dump()), inst);
  EXPECT_EQ(back.p, policy.p);
  EXPECT_EQ(back.w, policy.w);
  EXPECT_EQ(back.alpha, policy.alpha);
  const MarketInstance single({{1, 1}}, {{1, {3}}, {1, {2}}}, Capacity::finite(2));
  const auto price_doc = to_json(PostedPrice{2.0, 0.5});
  EXPECT_EQ(price_doc["boundary_p"], 0.5);
  EXPECT_EQ(policy_from_json(price_doc, single).p(0, 1), 0.5);
  EXPECT_THROW(policy_from_json(nlohmann::json::parse(R"({"alpha":1,"w":[1],"p":[[2,0]]})"), single),
               ValidationError);
  EXPECT_THROW(policy_from_json(nlohmann::json::parse(R"({"alpha":1,"w":[1],"p":[[1,0]],"x":0})"), single),
               ParseError);
}

TEST(WRule, NamesRoundTrip) {
  for (auto r : {WRule::Pasta, WRule::CollinaMin, WRule::Online}) EXPECT_EQ(parse_w_rule(to_string(r)), r);
  EXPECT_THROW(parse_w_rule("exp"), ParseError);
}
