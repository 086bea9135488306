#include <gtest/gtest.h>

#include <random>

#include "oracles.hpp"
#include "spi/matching.hpp"

using namespace spi;

namespace {

/// Best matching value by recursion over left vertices.
double brute_force(std::size_t nl, std::size_t nr, const std::vector<WeightedEdge>& edges) {
  std::vector<std::vector<double>> w(nl, std::vector<double>(nr, -1.0));
  for (const auto& e : edges) w[e.left][e.right] = std::max(w[e.left][e.right], e.weight);
  std::vector<bool> used(nr, false);
  const auto rec = [&](auto& self, std::size_t l) -> double {
    if (l == nl) return 0.0;
    double best = self(self, l + 1);
    for (std::size_t r = 0; r < nr; ++r) {
      if (used[r] || w[l][r] < 0.0) continue;
      used[r] = true;
      best = std::max(best, w[l][r] + self(self, l + 1));
      used[r] = false;
    }
    return best;
  };
  return rec(rec, 0);
}

}  // namespace

TEST(Matching, EmptyGraph) {
  EXPECT_EQ(max_weight_matching(0, 0, {}).value, 0.0);
  EXPECT_EQ(max_weight_matching(3, 2, {}).pairs.size(), 0u);
}

TEST(Matching, PrefersHeavierPairNotLargerMatching) {
  // a single edge of weight 5 beats two edges of weight 2
  const std::vector<WeightedEdge> edges = {{0, 0, 5}, {0, 1, 2}, {1, 0, 2}};
  const auto r = max_weight_matching(2, 2, edges);
  EXPECT_DOUBLE_EQ(r.value, 5.0);
  ASSERT_EQ(r.pairs.size(), 1u);
  EXPECT_EQ(r.pairs[0], (std::pair<std::size_t, std::size_t>{0, 0}));
}

TEST(Matching, AugmentsThroughReassignment) {
  const std::vector<WeightedEdge> edges = {{0, 0, 3}, {0, 1, 2}, {1, 0, 2}};
  const auto r = max_weight_matching(2, 2, edges);
  EXPECT_DOUBLE_EQ(r.value, 4.0);
  EXPECT_EQ(r.pairs.size(), 2u);
}

TEST(Matching, IgnoresNonpositiveWeights) {
  const auto r = max_weight_matching(2, 2, {{0, 0, 0.0}, {1, 1, -1.0}, {1, 0, 1.0}});
  EXPECT_DOUBLE_EQ(r.value, 1.0);
  EXPECT_EQ(r.pairs.size(), 1u);
}

TEST(Matching, MatchesBruteForce) {
  std::mt19937_64 rng(51);
  for (int trial = 0; trial < 400; ++trial) {
    const std::size_t nl = 1 + trial % 6;
    const std::size_t nr = 1 + (trial / 6) % 6;
    std::vector<WeightedEdge> edges;
    for (std::size_t l = 0; l < nl; ++l)
      for (std::size_t r = 0; r < nr; ++r)
        if (oracle::uniform(rng, 0, 1) < 0.5) edges.push_back({l, r, trial % 3 == 0 ? 1.0 : oracle::uniform(rng, 0.1, 5)});
    const auto res = max_weight_matching(nl, nr, edges);
    EXPECT_NEAR(res.value, brute_force(nl, nr, edges), 1e-9) << "trial " << trial;
    // the reported pairs form a matching over existing edges and add up to the value
    std::vector<bool> lu(nl, false), ru(nr, false);
    double sum = 0.0;
    for (const auto& [l, r] : res.pairs) {
      EXPECT_FALSE(lu[l]);
      EXPECT_FALSE(ru[r]);
      lu[l] = ru[r] = true;
      double w = -1.0;
      for (const auto& e : edges)
        if (e.left == l && e.right == r) w = std::max(w, e.weight);
      EXPECT_GT(w, 0.0);
      sum += w;
    }
    EXPECT_NEAR(sum, res.value, 1e-9);
  }
}
