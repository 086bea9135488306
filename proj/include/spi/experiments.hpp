#pragma once

// Experiment pipelines behind the command-line tool: bound tables, hardness
// ratios, grid verification of the analytic inequalities, and the
// solve -> build -> evaluate -> simulate comparison.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "spi/csv.hpp"
#include "spi/lp.hpp"
#include "spi/model.hpp"
#include "spi/policy.hpp"
#include "spi/queueing.hpp"
#include "spi/sim.hpp"

namespace spi {

struct Table2Row {
  int capacity;
  double lower_bound;
  double upper_bound;
};

inline std::vector<Table2Row> table2(int max_capacity = 5) {
  std::vector<Table2Row> rows;
  for (int c = 1; c <= max_capacity; ++c)
    rows.push_back({c, online_ratio_lower_bound(Capacity::finite(c)), static_cast<double>(c) / (c + 1)});
  return rows;
}

inline std::string table2_csv(const std::vector<Table2Row>& rows) {
  std::ostringstream out;
  out << "C,lower_bound,upper_bound\n";
  for (const auto& r : rows)
    out << r.capacity << ',' << format_number(r.lower_bound) << ',' << format_number(r.upper_bound) << '\n';
  return out.str();
}

/// Arrival rate standing in for the unbounded common-value buyer stream.
inline double hardness_surrogate_rate(double eps) { return 1e3 * std::max(1.0, 1.0 / eps); }

/// One good (lambda = eps, mu = 1), a rare type (rate eps, value 1 + 1/eps) and a common type (value 1).
inline MarketInstance hardness_instance(double eps) {
  if (!(eps > 0.0)) throw ValidationError("eps must be positive");
  return MarketInstance({{eps, 1.0}}, {{eps, {1.0 + 1.0 / eps}}, {hardness_surrogate_rate(eps), {1.0}}},
                        Capacity::unbounded());
}

struct HardnessRow {
  double eps;
  double opt_off_lower;
  double opt_on_upper;
  double ratio;
};

inline HardnessRow hardness_row(double eps) {
  const double off = eps + detail::one_minus_exp_neg(eps / (1.0 + eps));
  const auto sol = solve(hardness_instance(eps), Benchmark::LpOn);
  if (!sol.optimal()) throw NumericError("hardness surrogate LP: " + sol.diagnostics);
  return {eps, off, sol.objective, sol.objective / off};
}

inline std::string hardness_csv(const std::vector<HardnessRow>& rows) {
  std::ostringstream out;
  out << "eps,opt_off_lower,opt_on_upper,ratio\n";
  for (const auto& r : rows)
    out << format_number(r.eps) << ',' << format_number(r.opt_off_lower) << ',' << format_number(r.opt_on_upper)
        << ',' << format_number(r.ratio) << '\n';
  return out.str();
}

// ---------------------------------------------------------------------------
// Grid verification

struct GridSpec {
  double lo = 1e-6;
  double hi = 1e3;
  int points = 10'000;
};

inline std::vector<double> log_grid(double lo, double hi, int points) {
  if (!(lo > 0.0) || !(hi >= lo) || points < 1) throw ValidationError("grid needs 0 < lo <= hi and points >= 1");
  std::vector<double> xs;
  if (points == 1) return {lo};
  const double step = std::log(hi / lo) / (points - 1);
  for (int k = 0; k < points; ++k) xs.push_back(k == points - 1 ? hi : lo * std::exp(step * k));
  return xs;
}

struct BoundCheckRow {
  std::string name;
  int points = 0;
  double min_slack = std::numeric_limits<double>::infinity();
  double worst_x = std::numeric_limits<double>::quiet_NaN();
  bool pass = true;
};

inline constexpr double kGridSlackTolerance = -1e-12;

struct VerifyBoundsOptions {
  GridSpec grid;
  std::string perturb;  // test hook: name of a check whose slack is shifted by perturb_offset
  double perturb_offset = -0.01;
};

inline std::vector<BoundCheckRow> verify_bounds(const VerifyBoundsOptions& options = {}) {
  const auto& g = options.grid;
  const auto xs = log_grid(g.lo, g.hi, g.points);
  const auto unit_xs = g.lo <= 1.0 ? log_grid(g.lo, std::min(g.hi, 1.0), g.points) : std::vector<double>{};
  std::vector<BoundCheckRow> rows;

  const auto run = [&](std::string name, const std::vector<double>& grid, auto slack_at) {
    BoundCheckRow row;
    row.name = std::move(name);
    const double offset = row.name == options.perturb ? options.perturb_offset : 0.0;
    for (std::size_t k = 0; k < grid.size(); ++k) {
      const auto s = slack_at(k);
      if (!s) continue;
      ++row.points;
      const double slack = *s + offset;
      if (!(slack >= row.min_slack)) {
        row.min_slack = slack;
        row.worst_x = grid[k];
      }
    }
    row.pass = row.points == 0 || row.min_slack >= kGridSlackTolerance;
    rows.push_back(std::move(row));
  };

  run("half_bound_ge_half", xs, [&](std::size_t k) -> std::optional<double> {
    return half_bound_function(xs[k]) - 0.5;
  });
  run("multi_bound_ge_4_7", xs, [&](std::size_t k) -> std::optional<double> {
    return multi_bound_function(xs[k], 0.75, Capacity::finite(2)) - 4.0 / 7.0;
  });

  std::vector<Capacity> capacities;
  for (int c = 1; c <= 5; ++c) capacities.push_back(Capacity::finite(c));
  capacities.push_back(Capacity::unbounded());
  for (const auto& cap : capacities) {
    for (int which = 1; which <= 2; ++which) {
      const auto f = [which, cap](double x) { return which == 1 ? g1(cap, x) : g2(cap, x); };
      run("g" + std::to_string(which) + "_nonincreasing_C" + cap.to_string(), unit_xs,
          [&](std::size_t k) -> std::optional<double> {
            if (k + 1 >= unit_xs.size()) return std::nullopt;
            return f(unit_xs[k]) - f(unit_xs[k + 1]);
          });
    }
  }
  run("g_nondecreasing_in_C", unit_xs, [&](std::size_t k) -> std::optional<double> {
    double worst = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c + 1 < capacities.size(); ++c) {
      worst = std::min(worst, g1(capacities[c + 1], unit_xs[k]) - g1(capacities[c], unit_xs[k]));
      worst = std::min(worst, g2(capacities[c + 1], unit_xs[k]) - g2(capacities[c], unit_xs[k]));
    }
    return worst;
  });
  run("availability_sandwich", xs, [&](std::size_t k) -> std::optional<double> {
    double worst = std::numeric_limits<double>::infinity();
    for (const auto& cap : {Capacity::finite(1), Capacity::finite(2), Capacity::finite(5), Capacity::unbounded()}) {
      for (double gamma : {1.0, xs[k]}) {
        const double exact = availability_probability(xs[k], 1.0, gamma, cap);
        const auto b = availability_bounds(xs[k], 1.0, gamma, cap);
        worst = std::min({worst, exact - b.lower, b.upper - exact});
      }
    }
    return worst;
  });
  return rows;
}

inline bool all_pass(const std::vector<BoundCheckRow>& rows) {
  for (const auto& r : rows)
    if (!r.pass) return false;
  return true;
}

inline std::string verify_bounds_csv(const std::vector<BoundCheckRow>& rows) {
  std::ostringstream out;
  out << "check,points,min_slack,worst_x,pass\n";
  for (const auto& r : rows)
    out << r.name << ',' << r.points << ',' << format_number(r.points ? r.min_slack : 0.0) << ','
        << format_number(r.worst_x) << ',' << (r.pass ? "pass" : "FAIL") << '\n';
  return out.str();
}

// ---------------------------------------------------------------------------
// Gap report

inline std::string gap_report_csv(const GapReport& r) {
  std::ostringstream out;
  out << "metric,value\n";
  out << "rb_off," << format_number(r.rb_off) << '\n';
  out << "rb_on," << format_number(r.rb_on) << '\n';
  out << "lp_off," << format_number(r.lp_off) << '\n';
  out << "lp_on," << format_number(r.lp_on) << '\n';
  out << "lp_off_over_rb_off," << format_number(r.lp_off_over_rb_off) << '\n';
  out << "lp_on_over_rb_on," << format_number(r.lp_on_over_rb_on) << '\n';
  if (r.sell_to_all) {
    out << "sell_to_all," << format_number(*r.sell_to_all) << '\n';
    out << "sell_to_all_over_rb_off," << format_number(*r.sell_to_all_over_rb_off) << '\n';
    out << "sell_to_all_over_rb_on," << format_number(*r.sell_to_all_over_rb_on) << '\n';
  }
  return out.str();
}

// ---------------------------------------------------------------------------
// Competitive pipeline

/// Proven ratio of the policy's reward to the benchmark objective, when one applies.
inline std::optional<double> guaranteed_ratio(std::size_t goods, Benchmark benchmark, WRule rule, double alpha,
                                              Capacity capacity) {
  const bool at_least_two = capacity.is_unbounded() || capacity.value() >= 2;
  if (goods == 1 && alpha == 1.0) {
    if (benchmark == Benchmark::LpOff && rule == WRule::Pasta) return at_least_two ? 0.5 : 0.435;
    if (benchmark == Benchmark::LpOn && rule == WRule::Online) return online_ratio_lower_bound(capacity);
    if (benchmark == Benchmark::RbOff && rule == WRule::CollinaMin)
      return capacity.is_unbounded() ? 1.0 - 1.0 / (std::numbers::e - 1.0) : 1.0 / 3.0;
    return std::nullopt;
  }
  if (goods > 1 && alpha == 0.75 && benchmark == Benchmark::LpOff && rule == WRule::Pasta && at_least_two)
    return 15.0 / 56.0;
  return std::nullopt;
}

struct CompeteConfig {
  Benchmark benchmark = Benchmark::LpOff;
  WRule rule = WRule::Pasta;
  double alpha = 1.0;
  double horizon = 1e6;
  std::optional<double> burn_in;
  int replications = 1;
  std::uint64_t seed = 1;
  unsigned threads = thread_limit();
  double sigmas = 3.0;
};

struct PairRow {
  std::size_t good;
  std::size_t buyer;
  double x_star;
  Estimate s_hat;
  std::optional<double> analytic;
  bool pass = true;  // s_hat >= guarantee * x_star - sigmas * se
};

struct CompeteResult {
  MarketInstance instance;
  LpSolution solution;
  PolicySpec policy;
  std::optional<PostedPrice> posted_price;
  std::optional<AnalyticRates> analytic;
  SimReport report;

  std::optional<double> guarantee;
  Estimate simulated_ratio;
  std::optional<double> analytic_ratio;
  bool ratio_pass = true;
  std::vector<PairRow> pairs;
  PastaCheck pasta;
  ConservationCheck conservation;

  bool pass() const {
    bool ok = ratio_pass && pasta.pass && conservation.pass;
    for (const auto& p : pairs) ok = ok && p.pass;
    return ok;
  }
};

inline CompeteResult compete(const MarketInstance& input, const CompeteConfig& config) {
  const MarketInstance instance = input.single_good() ? canonicalize_buyers(input) : input;
  auto solution = solve(instance, config.benchmark);
  if (!solution.optimal()) throw NumericError(std::string(to_string(config.benchmark)) + ": " + solution.diagnostics);
  auto policy = build(instance, solution, config.alpha, config.rule);

  std::optional<PostedPrice> posted;
  std::optional<AnalyticRates> analytic;
  if (instance.single_good()) {
    if (config.alpha == 1.0) {
      try {
        posted = to_posted_price(policy, instance);
      } catch (const NotPostedPriceError&) {
      }
    }
    analytic = analytic_sale_rates(policy, instance);
  }

  const double burn_in = config.burn_in.value_or(std::min(default_burn_in(instance), config.horizon / 10.0));
  auto report = simulate_replications(instance, policy, config.horizon, burn_in, config.seed, config.replications,
                                      config.threads);

  CompeteResult r{instance,
                  std::move(solution),
                  std::move(policy),
                  posted,
                  analytic,
                  std::move(report),
                  guaranteed_ratio(instance.num_goods(), config.benchmark, config.rule, config.alpha,
                                   instance.capacity()),
                  {},
                  std::nullopt,
                  true,
                  {},
                  {},
                  {}};
  const double objective = r.solution.objective;
  if (objective > 0.0) {
    r.simulated_ratio = {r.report.reward_rate.value / objective, r.report.reward_rate.se / objective};
    if (analytic) r.analytic_ratio = analytic->reward_rate / objective;
    if (r.guarantee)
      r.ratio_pass = r.simulated_ratio.value >= *r.guarantee - config.sigmas * r.simulated_ratio.se;
  }
  for (std::size_t i = 0; i < instance.num_goods(); ++i) {
    for (std::size_t j = 0; j < instance.num_buyers(); ++j) {
      PairRow row{i, j, r.solution.rates(i, j), r.report.sale_rate(i, j), std::nullopt, true};
      if (analytic) row.analytic = analytic->sale_rates[j];
      if (r.guarantee) row.pass = row.s_hat.value >= *r.guarantee * row.x_star - config.sigmas * row.s_hat.se;
      r.pairs.push_back(row);
    }
  }
  r.pasta = pasta_check(r.report);
  r.conservation = conservation_check(r.report, instance);
  return r;
}

inline std::string compete_csv(const CompeteResult& r) {
  const auto opt = [](const std::optional<double>& v) { return v ? format_number(*v) : std::string("nan"); };
  std::ostringstream out;
  out << "metric,value,stderr\n";
  out << "benchmark_objective," << format_number(r.solution.objective) << ",0\n";
  out << "simulated_reward," << format_number(r.report.reward_rate.value) << ','
      << format_number(r.report.reward_rate.se) << '\n';
  out << "analytic_reward," << (r.analytic ? format_number(r.analytic->reward_rate) : "nan") << ",0\n";
  out << "simulated_ratio," << format_number(r.simulated_ratio.value) << ',' << format_number(r.simulated_ratio.se)
      << '\n';
  out << "analytic_ratio," << opt(r.analytic_ratio) << ",0\n";
  out << "guaranteed_ratio," << opt(r.guarantee) << ",0\n";
  if (r.posted_price) {
    out << "posted_threshold," << format_number(r.posted_price->threshold_value) << ",0\n";
    out << "posted_boundary_p," << format_number(r.posted_price->boundary_probability) << ",0\n";
  }
  out << "replications," << r.report.replications << ",0\n";
  out << "ratio_check," << (r.ratio_pass ? "pass" : "FAIL") << ",\n";
  out << "pasta_check," << (r.pasta.pass ? "pass" : "FAIL") << ",\n";
  out << "conservation_check," << (r.conservation.pass ? "pass" : "FAIL") << ",\n";
  out << "\ngood,buyer,x_star,s_hat,stderr,analytic,pass\n";
  for (const auto& p : r.pairs)
    out << p.good << ',' << p.buyer << ',' << format_number(p.x_star) << ',' << format_number(p.s_hat.value) << ','
        << format_number(p.s_hat.se) << ',' << opt(p.analytic) << ',' << (p.pass ? "pass" : "FAIL") << '\n';
  return out.str();
}

}  // namespace spi
