#pragma once

// Reward-benchmark linear programs over per-(good, buyer type) sale rates.
//
//   (1) sum_j x_ij <= lambda_i                      seller flow
//   (2) sum_i x_ij <= gamma_j                       buyer flow
//   (3) x_ij <= gamma_j * lambda_i / mu_i           presence box
//   (4) x_ij >= 0
//   (5) mu_i x_ij + gamma_j sum_l x_il <= gamma_j lambda_i   online coupling
//   (8) x_ij <= gamma_j * (1 - exp(-lambda_i / mu_i))        PASTA box
//
// RB_off = (1)-(4), RB_on = (1)-(5), LP_off = (1)-(4),(8), LP_on = (1)-(5),(8).

#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "spi/csv.hpp"
#include "spi/error.hpp"
#include "spi/model.hpp"
#include "spi/queueing.hpp"
#include "spi/simplex.hpp"

namespace spi {

enum class Benchmark { RbOff, RbOn, LpOff, LpOn };

inline std::string_view to_string(Benchmark b) {
  switch (b) {
    case Benchmark::RbOff: return "rb-off";
    case Benchmark::RbOn: return "rb-on";
    case Benchmark::LpOff: return "lp-off";
    case Benchmark::LpOn: return "lp-on";
  }
  return "?";
}

inline Benchmark parse_benchmark(std::string_view name) {
  if (name == "rb-off") return Benchmark::RbOff;
  if (name == "rb-on") return Benchmark::RbOn;
  if (name == "lp-off") return Benchmark::LpOff;
  if (name == "lp-on") return Benchmark::LpOn;
  throw ParseError("unknown benchmark '" + std::string(name) + "'");
}

inline bool has_online_coupling(Benchmark b) { return b == Benchmark::RbOn || b == Benchmark::LpOn; }
inline bool has_pasta_box(Benchmark b) { return b == Benchmark::LpOff || b == Benchmark::LpOn; }

enum class ConstraintKind { SellerFlow, BuyerFlow, PresenceBox, Nonnegativity, OnlineCoupling, PastaBox };

inline std::string_view to_string(ConstraintKind k) {
  switch (k) {
    case ConstraintKind::SellerFlow: return "seller-flow";
    case ConstraintKind::BuyerFlow: return "buyer-flow";
    case ConstraintKind::PresenceBox: return "presence-box";
    case ConstraintKind::Nonnegativity: return "nonnegativity";
    case ConstraintKind::OnlineCoupling: return "online-coupling";
    case ConstraintKind::PastaBox: return "pasta-box";
  }
  return "?";
}

/// One row  coefficients . x <= rhs  over the flattened (i * m + j) variables.
struct ConstraintRow {
  ConstraintKind kind;
  int good;   // -1 when the row spans all goods
  int buyer;  // -1 when the row spans all buyer types
  std::vector<double> coefficients;
  double rhs;
};

struct ConstraintSystem {
  std::size_t goods = 0;
  std::size_t buyers = 0;
  std::vector<ConstraintRow> rows;

  /// Largest violation over all rows, each row scaled by its largest |coefficient|.
  double max_violation(const SaleRateMatrix& x) const {
    double worst = 0.0;
    for (const auto& row : rows) {
      double lhs = 0.0;
      double scale = 0.0;
      for (std::size_t k = 0; k < row.coefficients.size(); ++k) {
        lhs += row.coefficients[k] * x.flat()[k];
        scale = std::max(scale, std::abs(row.coefficients[k]));
      }
      if (scale == 0.0) scale = 1.0;
      worst = std::max(worst, (lhs - row.rhs) / scale);
    }
    return worst;
  }

  bool satisfied_by(const SaleRateMatrix& x, double tol = 1e-9) const { return max_violation(x) <= tol; }
};

inline ConstraintSystem build_constraints(const MarketInstance& instance, Benchmark benchmark) {
  const std::size_t n = instance.num_goods();
  const std::size_t m = instance.num_buyers();
  const std::size_t vars = n * m;
  const auto var = [m](std::size_t i, std::size_t j) { return i * m + j; };
  ConstraintSystem sys{n, m, {}};
  const auto add = [&](ConstraintKind kind, int i, int j, std::vector<double> coeffs, double rhs) {
    sys.rows.push_back({kind, i, j, std::move(coeffs), rhs});
  };

  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> row(vars, 0.0);
    for (std::size_t j = 0; j < m; ++j) row[var(i, j)] = 1.0;
    add(ConstraintKind::SellerFlow, static_cast<int>(i), -1, std::move(row), instance.good(i).supply_rate);
  }
  for (std::size_t j = 0; j < m; ++j) {
    std::vector<double> row(vars, 0.0);
    for (std::size_t i = 0; i < n; ++i) row[var(i, j)] = 1.0;
    add(ConstraintKind::BuyerFlow, -1, static_cast<int>(j), std::move(row), instance.buyer(j).arrival_rate);
  }
  for (std::size_t i = 0; i < n; ++i) {
    const auto& g = instance.good(i);
    for (std::size_t j = 0; j < m; ++j) {
      const double gamma = instance.buyer(j).arrival_rate;
      const int gi = static_cast<int>(i);
      const int bj = static_cast<int>(j);

      std::vector<double> unit(vars, 0.0);
      unit[var(i, j)] = 1.0;
      add(ConstraintKind::PresenceBox, gi, bj, unit, gamma * g.supply_rate / g.perish_rate);

      std::vector<double> neg(vars, 0.0);
      neg[var(i, j)] = -1.0;
      add(ConstraintKind::Nonnegativity, gi, bj, std::move(neg), 0.0);

      if (has_online_coupling(benchmark)) {
        std::vector<double> row(vars, 0.0);
        for (std::size_t l = 0; l < m; ++l) row[var(i, l)] = gamma;
        row[var(i, j)] += g.perish_rate;
        add(ConstraintKind::OnlineCoupling, gi, bj, std::move(row), gamma * g.supply_rate);
      }
      if (has_pasta_box(benchmark)) {
        add(ConstraintKind::PastaBox, gi, bj, std::move(unit),
            gamma * detail::one_minus_exp_neg(g.supply_rate / g.perish_rate));
      }
    }
  }
  return sys;
}

enum class LpStatus { Optimal, InfeasibleNumeric };

struct LpSolution {
  SaleRateMatrix rates;
  double objective = 0.0;
  Benchmark benchmark = Benchmark::LpOff;
  LpStatus status = LpStatus::Optimal;
  std::string diagnostics;

  bool optimal() const noexcept { return status == LpStatus::Optimal; }
};

/// Feasibility tolerance applied to every returned solution.
inline constexpr double kLpFeasibilityTolerance = 1e-9;

inline LpSolution solve(const MarketInstance& instance, Benchmark benchmark) {
  const std::size_t n = instance.num_goods();
  const std::size_t m = instance.num_buyers();

  // zero-rate buyer types contribute nothing and only add degenerate pivots
  std::vector<std::size_t> kept;
  for (std::size_t j = 0; j < m; ++j)
    if (instance.buyer(j).arrival_rate > 0.0) kept.push_back(j);

  LpSolution out;
  out.benchmark = benchmark;
  out.rates = SaleRateMatrix(n, m);
  if (kept.empty()) return out;

  std::vector<BuyerTypeSpec> buyers;
  for (std::size_t j : kept) buyers.push_back(instance.buyer(j));
  const MarketInstance reduced(instance.goods(), std::move(buyers), instance.capacity());
  const std::size_t mr = kept.size();

  const auto sys = build_constraints(reduced, benchmark);
  std::vector<std::vector<double>> a;
  std::vector<double> b;
  for (const auto& row : sys.rows) {
    if (row.kind == ConstraintKind::Nonnegativity) continue;  // implicit in the simplex
    a.push_back(row.coefficients);
    b.push_back(row.rhs);
  }
  std::vector<double> c(n * mr);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < mr; ++j) c[i * mr + j] = reduced.value(i, j);

  const auto res = DenseSimplex<double>(1e-10).maximize(a, b, c);
  if (res.status != SimplexStatus::Optimal) {
    out.status = LpStatus::InfeasibleNumeric;
    out.diagnostics = res.diagnostics;
    return out;
  }

  SaleRateMatrix reduced_x(n, mr);
  reduced_x.flat() = res.x;
  const double violation = sys.max_violation(reduced_x);
  if (violation > kLpFeasibilityTolerance) {
    out.status = LpStatus::InfeasibleNumeric;
    out.diagnostics = "simplex point violates constraints by " + format_number(violation);
  }
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < mr; ++k) out.rates(i, kept[k]) = reduced_x(i, k);
  out.objective = instance.reward(out.rates);
  return out;
}

/// Fills canonicalized single-good buyer types in value order up to gamma_j * w each,
/// until the supply rate is exhausted.
inline LpSolution solve_single_good_greedy(const MarketInstance& instance, double w) {
  if (!instance.single_good()) throw ValidationError("greedy fill requires a single-good instance");
  if (!(w > 0.0 && w <= 1.0)) throw ValidationError("greedy fill requires w in (0, 1]");
  for (std::size_t j = 1; j < instance.num_buyers(); ++j)
    if (!(instance.value(0, j - 1) > instance.value(0, j)))
      throw ValidationError("greedy fill requires buyer types sorted by strictly decreasing value");

  LpSolution out;
  out.benchmark = Benchmark::LpOff;
  out.rates = SaleRateMatrix(1, instance.num_buyers());
  double remaining = instance.good(0).supply_rate;
  for (std::size_t j = 0; j < instance.num_buyers() && remaining > 0.0; ++j) {
    const double x = std::min(instance.buyer(j).arrival_rate * w, remaining);
    out.rates(0, j) = x;
    remaining -= x;
  }
  out.objective = instance.reward(out.rates);
  return out;
}

/// Exact long-run reward of selling every available item to every buyer (single good).
inline double sell_to_all_reward(const MarketInstance& instance) {
  if (!instance.single_good()) throw ValidationError("sell-to-all reward is defined for a single good");
  const auto& g = instance.good(0);
  const double p = availability_probability(g.supply_rate, g.perish_rate, instance.total_arrival_rate(),
                                            instance.capacity());
  double weighted = 0.0;
  for (const auto& b : instance.buyers()) weighted += b.arrival_rate * b.values[0];
  return p * weighted;
}

struct GapReport {
  double rb_off = 0.0;
  double rb_on = 0.0;
  double lp_off = 0.0;
  double lp_on = 0.0;
  double lp_off_over_rb_off = 0.0;
  double lp_on_over_rb_on = 0.0;
  std::optional<double> sell_to_all;  // single-good only
  std::optional<double> sell_to_all_over_rb_off;
  std::optional<double> sell_to_all_over_rb_on;
};

inline GapReport gap_report(const MarketInstance& instance) {
  const auto objective = [&](Benchmark b) {
    const auto sol = solve(instance, b);
    if (!sol.optimal()) throw NumericError(std::string(to_string(b)) + ": " + sol.diagnostics);
    return sol.objective;
  };
  const auto ratio = [](double num, double den) {
    return den > 0.0 ? num / den : std::numeric_limits<double>::quiet_NaN();
  };
  GapReport r;
  r.rb_off = objective(Benchmark::RbOff);
  r.rb_on = objective(Benchmark::RbOn);
  r.lp_off = objective(Benchmark::LpOff);
  r.lp_on = objective(Benchmark::LpOn);
  r.lp_off_over_rb_off = ratio(r.lp_off, r.rb_off);
  r.lp_on_over_rb_on = ratio(r.lp_on, r.rb_on);
  if (instance.single_good()) {
    r.sell_to_all = sell_to_all_reward(instance);
    r.sell_to_all_over_rb_off = ratio(*r.sell_to_all, r.rb_off);
    r.sell_to_all_over_rb_on = ratio(*r.sell_to_all, r.rb_on);
  }
  return r;
}

/// CSV block: header, one row per nonzero rate, then the objective.
inline std::string to_csv(const LpSolution& sol) {
  std::ostringstream out;
  out << "good,buyer,x\n";
  for (std::size_t i = 0; i < sol.rates.goods(); ++i)
    for (std::size_t j = 0; j < sol.rates.buyers(); ++j)
      if (sol.rates(i, j) != 0.0) out << i << ',' << j << ',' << format_number(sol.rates(i, j)) << '\n';
  out << "objective," << format_number(sol.objective) << '\n';
  return out.str();
}

}  // namespace spi
