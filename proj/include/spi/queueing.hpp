#pragma once

// Birth-death chains for per-good inventory and the closed-form bound
// functions built on their stationary availability.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <utility>
#include <variant>
#include <vector>

#include "spi/error.hpp"
#include "spi/model.hpp"

namespace spi {

/// Unbounded series stop once the next term is below this fraction of the running sum.
inline constexpr double kSeriesRelativeTolerance = 1e-15;
/// Hard cap on the number of series terms for unbounded capacity.
inline constexpr int kSeriesMaxTerms = 10'000;

/// Inventory chain rule: up-rate lambda, down-rate q*mu + gamma_star out of state q.
struct InventoryRates {
  double supply_rate;
  double perish_rate;
  double sale_rate;  // gamma_star, rate of buyers whose bid the seller permits
};

class BirthDeathSpec {
 public:
  /// Explicit chain on {0..C}: up_rates[q-1] moves q-1 -> q, down_rates[q-1] moves q -> q-1.
  static BirthDeathSpec finite(std::vector<double> up_rates, std::vector<double> down_rates) {
    if (up_rates.size() != down_rates.size() || up_rates.empty())
      throw ValidationError("birth-death chain needs matching, nonempty up/down rate vectors");
    for (std::size_t q = 0; q < up_rates.size(); ++q)
      if (!(up_rates[q] >= 0.0) || !(down_rates[q] >= 0.0))
        throw ValidationError("birth-death rates must be nonnegative");
    BirthDeathSpec spec;
    spec.rates_ = Explicit{std::move(up_rates), std::move(down_rates)};
    return spec;
  }

  /// The inventory chain of a single good; unbounded capacity keeps the rule symbolic.
  static BirthDeathSpec inventory(InventoryRates rates, Capacity capacity) {
    if (!(rates.supply_rate >= 0.0) || !(rates.perish_rate >= 0.0) || !(rates.sale_rate >= 0.0))
      throw ValidationError("inventory chain rates must be nonnegative");
    if (capacity.is_unbounded()) {
      if (!(rates.perish_rate > 0.0))
        throw ValidationError("unbounded inventory chain requires a positive perish rate");
      BirthDeathSpec spec;
      spec.rates_ = rates;
      return spec;
    }
    const int c = capacity.value();
    std::vector<double> up(static_cast<std::size_t>(c), rates.supply_rate);
    std::vector<double> down(static_cast<std::size_t>(c));
    for (int q = 1; q <= c; ++q) down[static_cast<std::size_t>(q - 1)] = q * rates.perish_rate + rates.sale_rate;
    return finite(std::move(up), std::move(down));
  }

  bool unbounded() const noexcept { return std::holds_alternative<InventoryRates>(rates_); }

  /// Number of finite states minus one; only meaningful for explicit chains.
  std::size_t capacity() const { return std::get<Explicit>(rates_).up.size(); }

  /// Rate from q-1 to q, q >= 1.
  double up(std::size_t q) const {
    if (const auto* r = std::get_if<InventoryRates>(&rates_)) return r->supply_rate;
    return std::get<Explicit>(rates_).up[q - 1];
  }

  /// Rate from q to q-1, q >= 1.
  double down(std::size_t q) const {
    if (const auto* r = std::get_if<InventoryRates>(&rates_))
      return static_cast<double>(q) * r->perish_rate + r->sale_rate;
    return std::get<Explicit>(rates_).down[q - 1];
  }

 private:
  struct Explicit {
    std::vector<double> up;
    std::vector<double> down;
  };
  BirthDeathSpec() = default;
  std::variant<Explicit, InventoryRates> rates_;
};

struct StationaryDistribution {
  std::vector<double> probabilities;  // states 0..C (truncated for unbounded chains)
  bool truncated = false;

  double at_least_one() const { return 1.0 - probabilities.front(); }
};

/// Solves the stationary law through detailed balance, in log space.
inline StationaryDistribution stationary_distribution(const BirthDeathSpec& spec) {
  std::vector<double> log_weight{0.0};
  double log_sum = 0.0;
  const auto log_add = [](double a, double b) {
    if (a < b) std::swap(a, b);
    return a + std::log1p(std::exp(b - a));
  };

  const std::size_t limit = spec.unbounded() ? static_cast<std::size_t>(kSeriesMaxTerms) : spec.capacity();
  bool truncated = false;
  for (std::size_t q = 1; q <= limit; ++q) {
    const double up = spec.up(q);
    const double down = spec.down(q);
    if (up == 0.0) break;  // states >= q unreachable
    if (!(down > 0.0))
      throw NumericError("birth-death chain not positive recurrent: zero down-rate out of state " + std::to_string(q));
    const double lw = log_weight.back() + std::log(up) - std::log(down);
    log_weight.push_back(lw);
    log_sum = log_add(log_sum, lw);
    if (spec.unbounded()) {
      const double next_ratio = spec.up(q + 1) / spec.down(q + 1);
      if (next_ratio < 1.0 && lw + std::log(next_ratio) - log_sum < std::log(kSeriesRelativeTolerance)) {
        truncated = true;
        break;
      }
      if (q == limit) truncated = true;
    }
  }

  StationaryDistribution out;
  out.truncated = truncated;
  out.probabilities.reserve(log_weight.size());
  for (double lw : log_weight) out.probabilities.push_back(std::exp(lw - log_sum));
  if (!spec.unbounded()) out.probabilities.resize(spec.capacity() + 1, 0.0);
  return out;
}

namespace detail {

/// tail = sum_{q=1}^{C} prod_{r=1}^{q} factor(r), stored as value * exp(log_scale).
struct SeriesTail {
  double value = 0.0;
  double log_scale = 0.0;

  /// c*tail / (1 + c*tail), i.e. 1 - (1 + c*tail)^{-1}, without cancellation.
  double saturation(double c = 1.0) const {
    const double scaled = c * value;
    if (scaled == 0.0) return 0.0;
    return scaled / (std::exp(-log_scale) + scaled);
  }
};

template <class Factor>
SeriesTail product_series(Factor factor, Capacity capacity) {
  constexpr double kRescale = 1e200;
  const double log_rescale = std::log(kRescale);
  SeriesTail tail;
  double term = 1.0;
  const long long limit = capacity.is_unbounded() ? kSeriesMaxTerms : capacity.value();
  for (long long q = 1; q <= limit; ++q) {
    const double f = factor(static_cast<double>(q));
    if (!std::isfinite(f)) throw NumericError("series factor is not finite at q=" + std::to_string(q));
    term *= f;
    tail.value += term;
    if (term == 0.0) break;
    if (tail.value > kRescale) {
      tail.value /= kRescale;
      term /= kRescale;
      tail.log_scale += log_rescale;
    }
    const double next_factor = factor(static_cast<double>(q + 1));
    if (next_factor < 1.0) {
      const double running = tail.value + std::exp(-tail.log_scale);
      // finite capacities cut only at the double-precision floor
      const double tol = capacity.is_unbounded() ? kSeriesRelativeTolerance : 1e-18;
      if (term * next_factor < tol * running) break;
    }
  }
  return tail;
}

inline double one_minus_exp_neg(double x) { return -std::expm1(-x); }

}  // namespace detail

/// Stationary probability that at least one item is available under a policy
/// selling to permitted buyers arriving at rate gamma_star.
inline double availability_probability(double supply_rate, double perish_rate, double gamma_star,
                                       Capacity capacity) {
  if (capacity.is_unbounded() && !(perish_rate > 0.0))
    throw ValidationError("unbounded availability requires a positive perish rate");
  const auto tail = detail::product_series(
      [&](double r) {
        const double down = r * perish_rate + gamma_star;
        if (!(down > 0.0)) throw NumericError("zero down-rate in inventory chain");
        return supply_rate / down;
      },
      capacity);
  return tail.saturation();
}

struct AvailabilityBounds {
  double lower;
  double upper;
};

/// Sandwich from replacing r*mu + gamma_star by r*(mu + gamma_star) (lower) or r*mu (upper).
inline AvailabilityBounds availability_bounds(double supply_rate, double perish_rate, double gamma_star,
                                              Capacity capacity) {
  const auto truncated_exp = [&](double x) {
    if (capacity.is_unbounded()) return detail::one_minus_exp_neg(x);
    return detail::product_series([x](double r) { return x / r; }, capacity).saturation();
  };
  return {truncated_exp(supply_rate / (perish_rate + gamma_star)), truncated_exp(supply_rate / perish_rate)};
}

/// (1 - (sum_{q<=C} x^q/q!)^{-1}) / x.
inline double g1(Capacity capacity, double x) {
  if (!(x > 0.0)) throw ValidationError("g1 requires x > 0");
  if (capacity.is_unbounded()) return detail::one_minus_exp_neg(x) / x;
  return detail::product_series([x](double r) { return x / r; }, capacity).saturation() / x;
}

/// (1 - (1/6 + 5/6 * sum_{q<=C} (6x/5)^q/q!)^{-1}) / x.
inline double g2(Capacity capacity, double x) {
  if (!(x > 0.0)) throw ValidationError("g2 requires x > 0");
  const double y = 6.0 * x / 5.0;
  if (capacity.is_unbounded()) {
    const double t = (5.0 / 6.0) * std::expm1(y);
    return t / (1.0 + t) / x;
  }
  return detail::product_series([y](double r) { return y / r; }, capacity).saturation(5.0 / 6.0) / x;
}

/// Availability over w for an LP-driven policy with permitted rate alpha*z/(1-e^{-z}), mu = 1.
inline double multi_bound_function(double z, double alpha, Capacity capacity) {
  if (!(z > 0.0)) throw ValidationError("multi_bound_function requires z > 0");
  const double w = detail::one_minus_exp_neg(z);
  return availability_probability(z, 1.0, alpha * z / w, capacity) / w;
}

/// C = 2, alpha = 1 case; bounded below by 1/2.
inline double half_bound_function(double lambda) {
  if (!(lambda > 0.0)) throw ValidationError("half_bound_function requires lambda > 0");
  return multi_bound_function(lambda, 1.0, Capacity::finite(2));
}

/// Ratio of capacity-C to unbounded availability for the instance mu = 1, gamma = lambda.
inline double capacity_ratio_limit(int capacity, double lambda) {
  if (!(lambda > 0.0)) throw ValidationError("capacity_ratio_limit requires lambda > 0");
  return availability_probability(lambda, 1.0, lambda, Capacity::finite(capacity)) /
         availability_probability(lambda, 1.0, lambda, Capacity::unbounded());
}

/// Lower bound on the LP_on approximation of the posted-price policy with capacity C.
inline double online_ratio_lower_bound(Capacity capacity) {
  const double x = detail::one_minus_exp_neg(12.0 / 5.0);
  return std::min(g1(capacity, x), g2(capacity, 1.0));
}

}  // namespace spi
