#pragma once

// Probabilistic posted-price policies: each buyer arrival scans goods in a
// uniformly random order and buys the first available good i whose
// independent permit coin, heads with probability p_ij, comes up.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "spi/error.hpp"
#include "spi/lp.hpp"
#include "spi/model.hpp"
#include "spi/queueing.hpp"

namespace spi {

enum class WRule { Pasta, CollinaMin, Online };

inline std::string_view to_string(WRule r) {
  switch (r) {
    case WRule::Pasta: return "pasta";
    case WRule::CollinaMin: return "collina";
    case WRule::Online: return "online";
  }
  return "?";
}

inline WRule parse_w_rule(std::string_view name) {
  if (name == "pasta") return WRule::Pasta;
  if (name == "collina") return WRule::CollinaMin;
  if (name == "online") return WRule::Online;
  throw ParseError("unknown w-rule '" + std::string(name) + "'");
}

/// Slack within which a permit probability above 1 is clamped rather than rejected.
/// Absorbs the LP's feasibility tolerance, which p_ij amplifies by 1/(gamma_j w_i).
inline constexpr double kProbabilitySlack = 1e-6;

struct PolicySpec {
  double alpha = 1.0;
  std::vector<double> w;           // per good
  SaleRateMatrix p;                // permit probabilities, n x m
  std::vector<double> permitted_rate;  // gamma*_i = sum_j gamma_j p_ij

  std::size_t num_goods() const noexcept { return p.goods(); }
  std::size_t num_buyers() const noexcept { return p.buyers(); }
};

/// Assembles a policy from explicit permit probabilities (each in [0, 1]).
inline PolicySpec make_policy(const MarketInstance& instance, double alpha, std::vector<double> w,
                              SaleRateMatrix p) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ValidationError("alpha must lie in [0, 1]");
  if (p.goods() != instance.num_goods() || p.buyers() != instance.num_buyers())
    throw ValidationError("permit grid does not match the instance dimensions");
  if (w.size() != instance.num_goods()) throw ValidationError("w must have one entry per good");
  PolicySpec spec{alpha, std::move(w), std::move(p), std::vector<double>(instance.num_goods(), 0.0)};
  for (std::size_t i = 0; i < spec.num_goods(); ++i) {
    for (std::size_t j = 0; j < spec.num_buyers(); ++j) {
      const double pij = spec.p(i, j);
      if (!(pij >= 0.0 && pij <= 1.0))
        throw ValidationError("permit probability (" + std::to_string(i) + "," + std::to_string(j) +
                              ") outside [0, 1]");
      spec.permitted_rate[i] += instance.buyer(j).arrival_rate * pij;
    }
  }
  return spec;
}

/// Permits every sale: p_ij = 1.
inline PolicySpec sell_to_all(const MarketInstance& instance) {
  SaleRateMatrix p(instance.num_goods(), instance.num_buyers());
  std::fill(p.flat().begin(), p.flat().end(), 1.0);
  return make_policy(instance, 1.0, std::vector<double>(instance.num_goods(), 1.0), std::move(p));
}

inline double w_for_good(const MarketInstance& instance, const SaleRateMatrix& x, std::size_t i, WRule rule) {
  const auto& g = instance.good(i);
  const double load = g.supply_rate / g.perish_rate;
  switch (rule) {
    case WRule::Pasta: return detail::one_minus_exp_neg(load);
    case WRule::CollinaMin: return std::min(1.0, load);
    case WRule::Online: {
      // unsold supply per unit perish rate; equals lambda - sum_j x_j once mu = 1
      const double residual = (g.supply_rate - x.good_total(i)) / g.perish_rate;
      const double w = std::min(detail::one_minus_exp_neg(load), residual);
      if (!(w > 0.0))
        throw IncompatiblePairingError("online w-rule gives w <= 0 for good " + std::to_string(i) +
                                           " (the solution sells the entire supply)",
                                       static_cast<int>(i), -1);
      return w;
    }
  }
  return 1.0;
}

/// p_ij = alpha * x*_ij / (gamma_j * w_i).
inline PolicySpec build(const MarketInstance& instance, const LpSolution& x_star, double alpha, WRule rule) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ValidationError("alpha must lie in [0, 1]");
  const auto& x = x_star.rates;
  if (x.goods() != instance.num_goods() || x.buyers() != instance.num_buyers())
    throw ValidationError("solution does not match the instance dimensions");

  std::vector<double> w(instance.num_goods());
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = w_for_good(instance, x, i, rule);

  SaleRateMatrix p(instance.num_goods(), instance.num_buyers());
  for (std::size_t i = 0; i < p.goods(); ++i) {
    for (std::size_t j = 0; j < p.buyers(); ++j) {
      const double gamma = instance.buyer(j).arrival_rate;
      if (gamma == 0.0) continue;
      const double pij = alpha * x(i, j) / (gamma * w[i]);
      if (pij > 1.0 + kProbabilitySlack)
        throw IncompatiblePairingError("permit probability " + format_number(pij) + " > 1 at (good " +
                                           std::to_string(i) + ", buyer " + std::to_string(j) + ") for " +
                                           std::string(to_string(x_star.benchmark)) + " with w-rule " +
                                           std::string(to_string(rule)),
                                       static_cast<int>(i), static_cast<int>(j));
      p(i, j) = std::clamp(pij, 0.0, 1.0);
    }
  }
  return make_policy(instance, alpha, std::move(w), std::move(p));
}

struct PostedPrice {
  double threshold_value = 0.0;
  double boundary_probability = 1.0;

  friend bool operator==(const PostedPrice&, const PostedPrice&) = default;
};

inline void require_canonical_single_good(const MarketInstance& instance) {
  if (!instance.single_good()) throw ValidationError("posted prices are defined for a single good");
  for (std::size_t j = 1; j < instance.num_buyers(); ++j)
    if (!(instance.value(0, j - 1) > instance.value(0, j)))
      throw ValidationError("buyer types must be sorted by strictly decreasing value");
}

/// Reads (v, p) off a threshold-shaped single-good policy; zero-rate types are ignored.
inline PostedPrice to_posted_price(const PolicySpec& policy, const MarketInstance& instance) {
  require_canonical_single_good(instance);
  if (policy.alpha != 1.0) throw ValidationError("posted-price extraction requires alpha = 1");
  constexpr double kShapeTolerance = 1e-9;

  std::vector<std::size_t> active;
  for (std::size_t j = 0; j < instance.num_buyers(); ++j)
    if (instance.buyer(j).arrival_rate > 0.0) active.push_back(j);
  if (active.empty()) throw NotPostedPriceError("no buyer type has a positive arrival rate");

  std::size_t k = 0;
  while (k < active.size() && policy.p(0, active[k]) >= 1.0 - kShapeTolerance) ++k;
  if (k == active.size()) return {instance.value(0, active.back()), 1.0};
  for (std::size_t t = k + 1; t < active.size(); ++t)
    if (policy.p(0, active[t]) > kShapeTolerance)
      throw NotPostedPriceError("permit probabilities are not threshold-shaped at buyer " +
                                std::to_string(active[t]));
  double boundary = policy.p(0, active[k]);
  if (boundary <= kShapeTolerance) boundary = 0.0;
  return {instance.value(0, active[k]), boundary};
}

/// Accept bids above the threshold, bids equal to it with the boundary probability.
inline PolicySpec from_posted_price(const PostedPrice& price, const MarketInstance& instance) {
  if (!instance.single_good()) throw ValidationError("posted prices are defined for a single good");
  if (!(price.boundary_probability >= 0.0 && price.boundary_probability <= 1.0))
    throw ValidationError("boundary probability must lie in [0, 1]");
  SaleRateMatrix p(1, instance.num_buyers());
  for (std::size_t j = 0; j < instance.num_buyers(); ++j) {
    const double v = instance.value(0, j);
    p(0, j) = v > price.threshold_value ? 1.0 : v == price.threshold_value ? price.boundary_probability : 0.0;
  }
  return make_policy(instance, 1.0, {1.0}, std::move(p));
}

struct AnalyticRates {
  std::vector<double> sale_rates;  // s_j per buyer type
  double availability = 0.0;      // P_C[A >= 1]
  double permitted_rate = 0.0;    // gamma*
  double reward_rate = 0.0;
};

/// Closed-form single-good evaluation: s_j = gamma_j p_j P_C[A >= 1].
inline AnalyticRates analytic_sale_rates(const PolicySpec& policy, const MarketInstance& instance) {
  if (!instance.single_good()) throw ValidationError("analytic evaluation requires a single good");
  if (policy.num_buyers() != instance.num_buyers()) throw ValidationError("policy does not match the instance");
  const auto& g = instance.good(0);
  AnalyticRates out;
  out.permitted_rate = policy.permitted_rate[0];
  out.availability = availability_probability(g.supply_rate, g.perish_rate, out.permitted_rate, instance.capacity());
  out.sale_rates.resize(instance.num_buyers());
  for (std::size_t j = 0; j < instance.num_buyers(); ++j) {
    out.sale_rates[j] = instance.buyer(j).arrival_rate * policy.p(0, j) * out.availability;
    out.reward_rate += instance.value(0, j) * out.sale_rates[j];
  }
  return out;
}

/// Picks the better of "accept above threshold" and "accept at or above threshold".
inline PostedPrice round_deterministic(const PostedPrice& price, const MarketInstance& instance) {
  if (!instance.single_good()) throw ValidationError("posted prices are defined for a single good");
  if (price.boundary_probability == 0.0 || price.boundary_probability == 1.0) return price;
  const PostedPrice strict{price.threshold_value, 0.0};
  const PostedPrice inclusive{price.threshold_value, 1.0};
  const double r0 = analytic_sale_rates(from_posted_price(strict, instance), instance).reward_rate;
  const double r1 = analytic_sale_rates(from_posted_price(inclusive, instance), instance).reward_rate;
  return r1 >= r0 ? inclusive : strict;
}

inline nlohmann::json to_json(const PolicySpec& policy) {
  nlohmann::json p = nlohmann::json::array();
  for (std::size_t i = 0; i < policy.num_goods(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (std::size_t j = 0; j < policy.num_buyers(); ++j) row.push_back(policy.p(i, j));
    p.push_back(std::move(row));
  }
  return {{"alpha", policy.alpha}, {"w", policy.w}, {"p", std::move(p)}};
}

inline nlohmann::json to_json(const PostedPrice& price) {
  return {{"threshold", price.threshold_value}, {"boundary_p", price.boundary_probability}};
}

inline PolicySpec policy_from_json(const nlohmann::json& doc, const MarketInstance& instance) {
  if (!doc.is_object()) throw ParseError("policy document must be a JSON object");
  if (doc.contains("threshold")) {
    detail::reject_unknown_keys(doc, {"threshold", "boundary_p"}, "posted price");
    return from_posted_price({detail::require_number(doc, "threshold", "posted price"),
                              detail::require_number(doc, "boundary_p", "posted price")},
                             instance);
  }
  detail::reject_unknown_keys(doc, {"alpha", "w", "p"}, "policy");
  const double alpha = detail::require_number(doc, "alpha", "policy");
  const auto& wj = detail::require(doc, "w", "policy");
  const auto& pj = detail::require(doc, "p", "policy");
  if (!wj.is_array() || !pj.is_array()) throw ParseError("policy 'w' and 'p' must be arrays");
  std::vector<double> w;
  for (const auto& v : wj) {
    if (!v.is_number()) throw ParseError("policy 'w' entries must be numbers");
    w.push_back(v.get<double>());
  }
  if (pj.size() != instance.num_goods()) throw ValidationError("policy 'p' needs one row per good");
  SaleRateMatrix p(instance.num_goods(), instance.num_buyers());
  for (std::size_t i = 0; i < pj.size(); ++i) {
    if (!pj[i].is_array() || pj[i].size() != instance.num_buyers())
      throw ValidationError("policy 'p' row " + std::to_string(i) + " needs one entry per buyer type");
    for (std::size_t j = 0; j < instance.num_buyers(); ++j) {
      if (!pj[i][j].is_number()) throw ParseError("policy 'p' entries must be numbers");
      p(i, j) = pj[i][j].get<double>();
    }
  }
  return make_policy(instance, alpha, std::move(w), std::move(p));
}

}  // namespace spi
