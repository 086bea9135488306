// Walks one single-good market through the whole pipeline and prints each stage.

#include <iostream>

#include "spi/experiments.hpp"

int main() {
  using namespace spi;
  const MarketInstance market({{1.0, 1.0}}, {{0.1, {2.0}}, {10.0, {1.0}}}, Capacity::finite(2));

  const auto x = solve(market, Benchmark::LpOff);
  std::cout << "LP_off solution\n" << to_csv(x) << '\n';

  const auto policy = build(market, x, 1.0, WRule::Pasta);
  const auto price = to_posted_price(policy, market);
  std::cout << "posted price: " << to_json(price).dump() << '\n';

  const auto exact = analytic_sale_rates(policy, market);
  std::cout << "closed-form reward rate " << exact.reward_rate << " (ratio " << exact.reward_rate / x.objective
            << " of LP_off)\n";

  const auto report = simulate_policy(market, policy, 1e5, 100.0, 42);
  std::cout << "simulated reward rate " << report.reward_rate.value << " +- " << report.reward_rate.se << "\n\n";
  std::cout << to_csv(report);
}
