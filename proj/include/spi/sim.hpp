#pragma once

// Event-driven market simulation, trajectory replay, and the offline
// matching oracle.
//
// simulate_policy tracks per-good counts only: A_i available items and P_i
// present items (available plus sold-but-not-yet-perished). Every present
// item perishes at rate mu_i, so the next event is drawn from competing
// exponential clocks with total rate sum lambda_i + sum P_i mu_i + sum gamma_j.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <deque>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "spi/csv.hpp"
#include "spi/error.hpp"
#include "spi/matching.hpp"
#include "spi/model.hpp"
#include "spi/policy.hpp"
#include "spi/queueing.hpp"

namespace spi {

inline constexpr int kBatchCount = 20;

struct Estimate {
  double value = std::numeric_limits<double>::quiet_NaN();
  double se = std::numeric_limits<double>::quiet_NaN();
};

/// Raw counters for one batch-means window.
struct BatchStats {
  double duration = 0.0;
  std::vector<long long> arrivals;         // per buyer type
  std::vector<long long> seen;             // per good: arrivals finding A_i >= 1
  std::vector<double> time_available;      // per good: time with A_i >= 1
  std::vector<long long> sales;            // n x m
  std::vector<long long> reach_available;  // n x m: R_ij and A_i >= 1
  std::vector<long long> tilde_reach;      // n x m: no earlier good both present and permitted
  std::vector<long long> supplied;         // per good
  std::vector<long long> perished_unsold;  // per good
  std::vector<long long> discarded;        // per good

  BatchStats() = default;
  BatchStats(std::size_t n, std::size_t m)
      : arrivals(m, 0),
        seen(n, 0),
        time_available(n, 0.0),
        sales(n * m, 0),
        reach_available(n * m, 0),
        tilde_reach(n * m, 0),
        supplied(n, 0),
        perished_unsold(n, 0),
        discarded(n, 0) {}
};

struct SimReport {
  std::size_t goods = 0;
  std::size_t buyers = 0;
  double horizon = 0.0;
  double burn_in = 0.0;
  int replications = 1;
  std::vector<double> values;  // v_ij, n x m
  std::vector<BatchStats> batches;

  Estimate reward_rate;
  std::vector<Estimate> sale_rates;                    // n x m
  std::vector<Estimate> availability_time_fraction;    // per good
  std::vector<Estimate> arrival_seen_fraction;         // per good
  std::vector<Estimate> reach_and_available_fraction;  // n x m, per type-j arrival
  std::vector<Estimate> tilde_reach_fraction;          // n x m, per type-j arrival
  std::vector<Estimate> sale_flow;                     // per good
  std::vector<Estimate> perish_unsold_flow;            // per good
  std::vector<Estimate> discard_flow;                  // per good

  const Estimate& sale_rate(std::size_t i, std::size_t j) const { return sale_rates[i * buyers + j]; }
  const Estimate& reach_and_available(std::size_t i, std::size_t j) const {
    return reach_and_available_fraction[i * buyers + j];
  }
  const Estimate& tilde_reach(std::size_t i, std::size_t j) const { return tilde_reach_fraction[i * buyers + j]; }
  double measured_time() const {
    double t = 0.0;
    for (const auto& b : batches) t += b.duration;
    return t;
  }
};

namespace detail {

inline double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

inline double exponential(std::mt19937_64& rng, double rate) { return -std::log1p(-uniform01(rng)) / rate; }

/// Uniform integer in [0, bound) by multiply-shift.
inline std::size_t bounded(std::mt19937_64& rng, std::size_t bound) {
  return static_cast<std::size_t>((static_cast<unsigned __int128>(rng()) * bound) >> 64);
}

inline std::mt19937_64 make_rng(std::uint64_t seed) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)};
  return std::mt19937_64(seq);
}

/// Pooled ratio sum(num)/sum(den) with a batch-means standard error over batches with den > 0.
template <class Num, class Den>
Estimate ratio_estimate(const std::vector<BatchStats>& batches, Num num, Den den) {
  double total_num = 0.0;
  double total_den = 0.0;
  std::vector<double> ratios;
  ratios.reserve(batches.size());
  for (const auto& b : batches) {
    const double n = num(b);
    const double d = den(b);
    total_num += n;
    total_den += d;
    if (d > 0.0) ratios.push_back(n / d);
  }
  Estimate e;
  if (total_den > 0.0) e.value = total_num / total_den;
  if (ratios.size() >= 2) {
    const double mean = std::accumulate(ratios.begin(), ratios.end(), 0.0) / static_cast<double>(ratios.size());
    double ss = 0.0;
    for (double r : ratios) ss += (r - mean) * (r - mean);
    e.se = std::sqrt(ss / static_cast<double>(ratios.size() - 1) / static_cast<double>(ratios.size()));
  }
  return e;
}

}  // namespace detail

/// Recomputes every estimate from the raw batch counters.
inline void finalize(SimReport& r) {
  const std::size_t n = r.goods;
  const std::size_t m = r.buyers;
  const auto& B = r.batches;
  const auto duration = [](const BatchStats& b) { return b.duration; };

  r.sale_rates.assign(n * m, {});
  r.reach_and_available_fraction.assign(n * m, {});
  r.tilde_reach_fraction.assign(n * m, {});
  for (std::size_t k = 0; k < n * m; ++k) {
    const std::size_t j = k % m;
    const auto arrivals = [j](const BatchStats& b) { return static_cast<double>(b.arrivals[j]); };
    r.sale_rates[k] = detail::ratio_estimate(B, [k](const BatchStats& b) { return double(b.sales[k]); }, duration);
    r.reach_and_available_fraction[k] =
        detail::ratio_estimate(B, [k](const BatchStats& b) { return double(b.reach_available[k]); }, arrivals);
    r.tilde_reach_fraction[k] =
        detail::ratio_estimate(B, [k](const BatchStats& b) { return double(b.tilde_reach[k]); }, arrivals);
  }

  // reward is assembled from the pooled sale rates so that it equals sum v * s_hat exactly
  const auto batch_reward = [&](const BatchStats& b) {
    double s = 0.0;
    for (std::size_t k = 0; k < n * m; ++k) s += r.values[k] * static_cast<double>(b.sales[k]);
    return s;
  };
  r.reward_rate = detail::ratio_estimate(B, batch_reward, duration);
  if (r.measured_time() > 0.0) {
    double reward = 0.0;
    for (std::size_t k = 0; k < n * m; ++k) reward += r.values[k] * r.sale_rates[k].value;
    r.reward_rate.value = reward;
  }

  r.availability_time_fraction.assign(n, {});
  r.arrival_seen_fraction.assign(n, {});
  r.sale_flow.assign(n, {});
  r.perish_unsold_flow.assign(n, {});
  r.discard_flow.assign(n, {});
  const auto all_arrivals = [](const BatchStats& b) {
    return static_cast<double>(std::accumulate(b.arrivals.begin(), b.arrivals.end(), 0LL));
  };
  for (std::size_t i = 0; i < n; ++i) {
    r.availability_time_fraction[i] =
        detail::ratio_estimate(B, [i](const BatchStats& b) { return b.time_available[i]; }, duration);
    r.arrival_seen_fraction[i] =
        detail::ratio_estimate(B, [i](const BatchStats& b) { return double(b.seen[i]); }, all_arrivals);
    r.sale_flow[i] = detail::ratio_estimate(
        B,
        [i, m](const BatchStats& b) {
          long long s = 0;
          for (std::size_t j = 0; j < m; ++j) s += b.sales[i * m + j];
          return double(s);
        },
        duration);
    r.perish_unsold_flow[i] =
        detail::ratio_estimate(B, [i](const BatchStats& b) { return double(b.perished_unsold[i]); }, duration);
    r.discard_flow[i] = detail::ratio_estimate(B, [i](const BatchStats& b) { return double(b.discarded[i]); }, duration);
  }
}

inline double default_burn_in(const MarketInstance& instance) {
  double min_mu = std::numeric_limits<double>::infinity();
  for (const auto& g : instance.goods()) min_mu = std::min(min_mu, g.perish_rate);
  return 100.0 / min_mu;
}

inline void check_policy_shape(const MarketInstance& instance, const PolicySpec& policy) {
  if (policy.num_goods() != instance.num_goods() || policy.num_buyers() != instance.num_buyers())
    throw ValidationError("policy does not match the instance dimensions");
}

/// Runs the policy on [0, horizon], collecting statistics on [burn_in, horizon] in kBatchCount windows.
inline SimReport simulate_policy(const MarketInstance& instance, const PolicySpec& policy, double horizon,
                                 double burn_in, std::uint64_t seed) {
  if (!(horizon > 0.0) || !std::isfinite(horizon)) throw ValidationError("horizon must be positive and finite");
  if (!(burn_in >= 0.0) || !(burn_in < horizon)) throw ValidationError("burn-in must lie in [0, horizon)");
  check_policy_shape(instance, policy);

  const std::size_t n = instance.num_goods();
  const std::size_t m = instance.num_buyers();
  const Capacity capacity = instance.capacity();

  SimReport report;
  report.goods = n;
  report.buyers = m;
  report.horizon = horizon;
  report.burn_in = burn_in;
  report.values.resize(n * m);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) report.values[i * m + j] = instance.value(i, j);
  report.batches.assign(kBatchCount, BatchStats(n, m));

  std::vector<double> lambda(n), mu(n);
  double lambda_total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    lambda[i] = instance.good(i).supply_rate;
    mu[i] = instance.good(i).perish_rate;
    lambda_total += lambda[i];
  }
  std::vector<double> gamma(m);
  for (std::size_t j = 0; j < m; ++j) gamma[j] = instance.buyer(j).arrival_rate;
  const double gamma_total = instance.total_arrival_rate();
  const std::vector<double>& p = policy.p.flat();

  std::vector<long long> available(n, 0), present(n, 0);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  auto rng = detail::make_rng(seed);

  const double window = (horizon - burn_in) / kBatchCount;
  int batch = -1;  // -1 during burn-in
  double boundary = burn_in;
  double clock = 0.0;  // time up to which occupancy has been accumulated
  BatchStats* stats = nullptr;

  const auto accumulate_until = [&](double t1) {
    while (batch < kBatchCount && boundary <= t1) {
      if (stats)
        for (std::size_t i = 0; i < n; ++i)
          if (available[i] > 0) stats->time_available[i] += boundary - clock;
      clock = boundary;
      ++batch;
      stats = batch < kBatchCount ? &report.batches[static_cast<std::size_t>(batch)] : nullptr;
      boundary = batch == kBatchCount - 1 ? horizon : burn_in + (batch + 1) * window;
    }
    if (stats)
      for (std::size_t i = 0; i < n; ++i)
        if (available[i] > 0) stats->time_available[i] += t1 - clock;
    clock = t1;
  };

  double t = 0.0;
  for (;;) {
    double perish_total = 0.0;
    for (std::size_t i = 0; i < n; ++i) perish_total += static_cast<double>(present[i]) * mu[i];
    const double total = lambda_total + perish_total + gamma_total;
    const double t_next = t + detail::exponential(rng, total);
    if (t_next >= horizon) {
      accumulate_until(horizon);
      break;
    }
    accumulate_until(t_next);
    t = t_next;

    double u = detail::uniform01(rng) * total;
    if (u < lambda_total) {
      std::size_t i = 0;
      while (i + 1 < n && u >= lambda[i]) u -= lambda[i++];
      if (stats) ++stats->supplied[i];
      if (capacity.full(available[i])) {
        if (stats) ++stats->discarded[i];
      } else {
        ++available[i];
        ++present[i];
      }
      continue;
    }
    u -= lambda_total;
    if (u < perish_total) {
      std::size_t i = 0;
      for (; i + 1 < n; ++i) {
        const double segment = static_cast<double>(present[i]) * mu[i];
        if (u < segment) break;
        u -= segment;
      }
      while (present[i] == 0) --i;  // rounding can only overshoot past the last nonempty segment
      // the position inside good i's segment picks which present item perishes
      if (u < static_cast<double>(available[i]) * mu[i]) {
        --available[i];
        if (stats) ++stats->perished_unsold[i];
      }
      --present[i];
      continue;
    }
    u -= perish_total;
    std::size_t j = 0;
    while (j + 1 < m && u >= gamma[j]) u -= gamma[j++];
    while (gamma[j] == 0.0) --j;  // rounding can only overshoot past the last positive rate

    if (stats) {
      ++stats->arrivals[j];
      for (std::size_t i = 0; i < n; ++i)
        if (available[i] > 0) ++stats->seen[i];
    }
    for (std::size_t k = n; k > 1; --k) std::swap(order[k - 1], order[detail::bounded(rng, k)]);
    bool blocked = false;  // some earlier good was present and permitted
    for (std::size_t k = 0; k < n; ++k) {
      const std::size_t i = order[k];
      const std::size_t ij = i * m + j;
      if (stats) {
        if (available[i] > 0) ++stats->reach_available[ij];
        if (!blocked) ++stats->tilde_reach[ij];
      }
      if (available[i] == 0 && (present[i] == 0 || blocked)) continue;
      const double pij = p[ij];
      const bool permit = pij >= 1.0 || (pij > 0.0 && detail::uniform01(rng) < pij);
      if (!permit) continue;
      if (available[i] > 0) {
        --available[i];
        if (stats) ++stats->sales[ij];
        break;  // later goods are neither reached nor tilde-reached
      }
      blocked = true;  // present (sold, unperished) and permitted
    }
  }

  // the final window absorbs rounding in the boundary arithmetic
  for (int b = 0; b < kBatchCount; ++b)
    report.batches[static_cast<std::size_t>(b)].duration =
        (b == kBatchCount - 1 ? horizon : burn_in + (b + 1) * window) - (burn_in + b * window);
  finalize(report);
  return report;
}

/// Seed of replication r, decorrelated from neighbouring base seeds by splitmix64.
inline std::uint64_t replication_seed(std::uint64_t seed, std::uint64_t r) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (r + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Thread cap from SPI_THREADS, defaulting to hardware concurrency.
inline unsigned thread_limit() {
  if (const char* env = std::getenv("SPI_THREADS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v >= 1) return static_cast<unsigned>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

/// Runs fn(r) for r in [0, count) on up to `threads` workers; results are stored by index.
template <class Fn>
auto parallel_map(std::size_t count, unsigned threads, Fn fn) -> std::vector<decltype(fn(std::size_t{}))> {
  std::vector<std::optional<decltype(fn(std::size_t{}))>> slots(count);
  std::vector<std::exception_ptr> errors(count);
  const auto work = [&](std::size_t start, std::size_t stride) {
    for (std::size_t r = start; r < count; r += stride) {
      try {
        slots[r].emplace(fn(r));
      } catch (...) {
        errors[r] = std::current_exception();
      }
    }
  };
  const std::size_t workers = std::min<std::size_t>(std::max(1u, threads), count);
  if (workers <= 1) {
    work(0, 1);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work, w, workers);
    for (auto& th : pool) th.join();
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
  std::vector<decltype(fn(std::size_t{}))> out;
  out.reserve(count);
  for (auto& s : slots) out.push_back(std::move(*s));
  return out;
}

/// Pools replications: batches are concatenated and estimates recomputed.
inline SimReport merge_reports(const std::vector<SimReport>& reports) {
  if (reports.empty()) throw ValidationError("nothing to merge");
  SimReport out = reports.front();
  out.replications = 0;
  out.batches.clear();
  for (const auto& r : reports) {
    if (r.goods != out.goods || r.buyers != out.buyers || r.values != out.values)
      throw ValidationError("cannot merge reports of different instances");
    out.replications += r.replications;
    out.batches.insert(out.batches.end(), r.batches.begin(), r.batches.end());
  }
  finalize(out);
  return out;
}

inline SimReport simulate_replications(const MarketInstance& instance, const PolicySpec& policy, double horizon,
                                       double burn_in, std::uint64_t seed, int replications,
                                       unsigned threads = thread_limit()) {
  if (replications < 1) throw ValidationError("replications must be >= 1");
  if (replications == 1) return simulate_policy(instance, policy, horizon, burn_in, seed);
  const auto reports = parallel_map(static_cast<std::size_t>(replications), threads, [&](std::size_t r) {
    return simulate_policy(instance, policy, horizon, burn_in, replication_seed(seed, r));
  });
  return merge_reports(reports);
}

inline std::string to_csv(const SimReport& r) {
  std::ostringstream out;
  out << "good,buyer,s_hat,stderr\n";
  for (std::size_t i = 0; i < r.goods; ++i)
    for (std::size_t j = 0; j < r.buyers; ++j)
      out << i << ',' << j << ',' << format_number(r.sale_rate(i, j).value) << ','
          << format_number(r.sale_rate(i, j).se) << '\n';
  out << "reward_rate," << format_number(r.reward_rate.value) << ',' << format_number(r.reward_rate.se) << '\n';
  for (std::size_t i = 0; i < r.goods; ++i)
    out << "availability_" << i << ',' << format_number(r.availability_time_fraction[i].value) << ','
        << format_number(r.availability_time_fraction[i].se) << '\n';
  for (std::size_t i = 0; i < r.goods; ++i)
    out << "seen_" << i << ',' << format_number(r.arrival_seen_fraction[i].value) << ','
        << format_number(r.arrival_seen_fraction[i].se) << '\n';
  return out.str();
}

// ---------------------------------------------------------------------------
// Checks on simulation reports

struct PastaRow {
  double discrepancy = 0.0;
  double combined_se = 0.0;
  bool applicable = true;
  bool pass = true;
};

struct PastaCheck {
  std::vector<PastaRow> goods;
  bool pass = true;
};

/// |seen fraction - time fraction| against 4 * sqrt(se_seen^2 + se_time^2).
inline PastaCheck pasta_check(const SimReport& report, double sigmas = 4.0) {
  PastaCheck out;
  for (std::size_t i = 0; i < report.goods; ++i) {
    const auto& seen = report.arrival_seen_fraction[i];
    const auto& time = report.availability_time_fraction[i];
    PastaRow row;
    if (std::isnan(seen.value) || std::isnan(time.value)) {
      row.applicable = false;
      row.discrepancy = std::numeric_limits<double>::quiet_NaN();
      row.combined_se = std::numeric_limits<double>::quiet_NaN();
    } else {
      row.discrepancy = std::abs(seen.value - time.value);
      row.combined_se = std::hypot(std::isnan(seen.se) ? 0.0 : seen.se, std::isnan(time.se) ? 0.0 : time.se);
      row.pass = row.discrepancy <= sigmas * row.combined_se;
    }
    out.pass = out.pass && row.pass;
    out.goods.push_back(row);
  }
  return out;
}

struct ConservationRow {
  double outflow = 0.0;  // sales + unsold perishing + discards, per unit time
  double supply_rate = 0.0;
  double se = 0.0;  // sqrt of the summed component variances
  bool pass = true;
};

struct ConservationCheck {
  std::vector<ConservationRow> goods;
  bool pass = true;
};

inline ConservationCheck conservation_check(const SimReport& report, const MarketInstance& instance,
                                            double sigmas = 3.0) {
  ConservationCheck out;
  const auto var = [](const Estimate& e) { return std::isnan(e.se) ? 0.0 : e.se * e.se; };
  for (std::size_t i = 0; i < report.goods; ++i) {
    ConservationRow row;
    row.outflow = report.sale_flow[i].value + report.perish_unsold_flow[i].value + report.discard_flow[i].value;
    row.supply_rate = instance.good(i).supply_rate;
    row.se = std::sqrt(var(report.sale_flow[i]) + var(report.perish_unsold_flow[i]) + var(report.discard_flow[i]));
    row.pass = std::abs(row.outflow - row.supply_rate) <= sigmas * row.se;
    out.pass = out.pass && row.pass;
    out.goods.push_back(row);
  }
  return out;
}

struct DominanceRecord {
  std::size_t good = 0;
  std::size_t buyer = 0;
  Estimate reach_and_available;  // P[R_ij and A_i >= 1]
  Estimate tilde_reach;          // P[R~_ij]
  double tilde_availability = 0.0;  // P_C[A~_i >= 1], analytic
  Estimate slack;                   // reach_and_available - tilde_reach * tilde_availability
};

/// Per-(i, j) check that reaching an available good dominates the product bound; zero-rate types are skipped.
inline std::vector<DominanceRecord> dominance_check(const MarketInstance& instance, const PolicySpec& policy,
                                                    const SimReport& report) {
  if (instance.single_good()) throw ValidationError("dominance check is vacuous for a single good");
  check_policy_shape(instance, policy);
  const std::size_t m = instance.num_buyers();
  std::vector<DominanceRecord> out;
  for (std::size_t i = 0; i < instance.num_goods(); ++i) {
    const auto& g = instance.good(i);
    const double tilde_avail =
        availability_probability(g.supply_rate, g.perish_rate, policy.permitted_rate[i], instance.capacity());
    for (std::size_t j = 0; j < m; ++j) {
      if (instance.buyer(j).arrival_rate == 0.0) continue;
      const std::size_t k = i * m + j;
      DominanceRecord rec;
      rec.good = i;
      rec.buyer = j;
      rec.reach_and_available = report.reach_and_available(i, j);
      rec.tilde_reach = report.tilde_reach(i, j);
      rec.tilde_availability = tilde_avail;
      rec.slack = detail::ratio_estimate(
          report.batches,
          [k, tilde_avail](const BatchStats& b) {
            return static_cast<double>(b.reach_available[k]) - static_cast<double>(b.tilde_reach[k]) * tilde_avail;
          },
          [j](const BatchStats& b) { return static_cast<double>(b.arrivals[j]); });
      out.push_back(rec);
    }
  }
  return out;
}

inline std::vector<DominanceRecord> dominance_check(const MarketInstance& instance, const PolicySpec& policy,
                                                    double horizon, std::uint64_t seed) {
  if (instance.single_good()) throw ValidationError("dominance check is vacuous for a single good");
  const double burn_in = std::min(default_burn_in(instance), horizon / 10.0);
  return dominance_check(instance, policy, simulate_policy(instance, policy, horizon, burn_in, seed));
}

// ---------------------------------------------------------------------------
// Realized randomness, replay, and the offline oracle

struct TrajectoryItem {
  std::size_t good;
  double arrival;
  double perish;
  bool discarded = false;
};

struct BuyerArrival {
  std::size_t type;
  double time;
};

/// One realization of all market randomness on [0, horizon]. Each buyer arrival carries its
/// scan order over goods and one uniform per good; the permit for good i is uniform < p_ij.
struct Trajectory {
  double horizon = 0.0;
  std::size_t goods = 0;
  std::vector<TrajectoryItem> items;  // sorted by arrival time
  std::vector<BuyerArrival> buyers;   // sorted by arrival time
  std::vector<std::uint32_t> orders;  // goods entries per buyer
  std::vector<double> permit_draws;   // goods entries per buyer

  std::span<const std::uint32_t> order(std::size_t b) const { return {orders.data() + b * goods, goods}; }
  std::span<const double> permit_draw(std::size_t b) const { return {permit_draws.data() + b * goods, goods}; }
};

inline Trajectory sample_trajectory(const MarketInstance& instance, double horizon, std::uint64_t seed) {
  if (!(horizon > 0.0) || !std::isfinite(horizon)) throw ValidationError("horizon must be positive and finite");
  auto rng = detail::make_rng(seed);
  Trajectory tr;
  tr.horizon = horizon;
  tr.goods = instance.num_goods();
  for (std::size_t i = 0; i < instance.num_goods(); ++i) {
    const auto& g = instance.good(i);
    for (double t = detail::exponential(rng, g.supply_rate); t < horizon; t += detail::exponential(rng, g.supply_rate))
      tr.items.push_back({i, t, t + detail::exponential(rng, g.perish_rate), false});
  }
  std::stable_sort(tr.items.begin(), tr.items.end(),
                   [](const TrajectoryItem& a, const TrajectoryItem& b) { return a.arrival < b.arrival; });

  const double gamma_total = instance.total_arrival_rate();
  if (gamma_total > 0.0) {
    std::vector<std::uint32_t> order(tr.goods);
    for (double t = detail::exponential(rng, gamma_total); t < horizon; t += detail::exponential(rng, gamma_total)) {
      double u = detail::uniform01(rng) * gamma_total;
      std::size_t j = 0;
      while (j + 1 < instance.num_buyers() && u >= instance.buyer(j).arrival_rate) u -= instance.buyer(j++).arrival_rate;
      while (instance.buyer(j).arrival_rate == 0.0) --j;
      tr.buyers.push_back({j, t});
      std::iota(order.begin(), order.end(), 0u);
      for (std::size_t k = tr.goods; k > 1; --k) std::swap(order[k - 1], order[detail::bounded(rng, k)]);
      tr.orders.insert(tr.orders.end(), order.begin(), order.end());
      for (std::size_t k = 0; k < tr.goods; ++k) tr.permit_draws.push_back(detail::uniform01(rng));
    }
  }
  return tr;
}

struct ReplayOutcome {
  Trajectory trajectory;  // discard flags filled in
  SaleRateMatrix sales;   // counts
  double reward = 0.0;    // total value collected on [0, horizon]

  double reward_rate() const { return reward / trajectory.horizon; }
};

/// Plays the policy against a fixed realization; each sale takes the oldest available item.
inline ReplayOutcome replay_policy(const MarketInstance& instance, const PolicySpec& policy, Trajectory trajectory) {
  check_policy_shape(instance, policy);
  if (trajectory.goods != instance.num_goods()) throw ValidationError("trajectory does not match the instance");
  const std::size_t n = instance.num_goods();
  const std::size_t m = instance.num_buyers();
  auto& items = trajectory.items;

  // event kinds ordered for equal times: perish, then supply, then buyer
  struct Event {
    double time;
    int kind;  // 0 perish, 1 supply, 2 buyer
    std::size_t index;
  };
  std::vector<Event> events;
  events.reserve(2 * items.size() + trajectory.buyers.size());
  for (std::size_t k = 0; k < items.size(); ++k) {
    events.push_back({items[k].arrival, 1, k});
    if (items[k].perish < trajectory.horizon) events.push_back({items[k].perish, 0, k});
  }
  for (std::size_t b = 0; b < trajectory.buyers.size(); ++b) events.push_back({trajectory.buyers[b].time, 2, b});
  std::stable_sort(events.begin(), events.end(), [](const Event& a, const Event& b) {
    return a.time < b.time || (a.time == b.time && a.kind < b.kind);
  });

  enum class State : unsigned char { Pending, Available, Sold, Gone };
  std::vector<State> state(items.size(), State::Pending);
  std::vector<std::deque<std::size_t>> shelf(n);
  std::vector<long long> available(n, 0), present(n, 0);
  ReplayOutcome out{{}, SaleRateMatrix(n, m), 0.0};

  for (const Event& e : events) {
    if (e.kind == 1) {
      auto& it = items[e.index];
      it.discarded = instance.capacity().full(available[it.good]);
      if (it.discarded) {
        state[e.index] = State::Gone;
        continue;
      }
      state[e.index] = State::Available;
      shelf[it.good].push_back(e.index);
      ++available[it.good];
      ++present[it.good];
    } else if (e.kind == 0) {
      const auto& it = items[e.index];
      if (state[e.index] == State::Available) {
        --available[it.good];
        --present[it.good];
      } else if (state[e.index] == State::Sold) {
        --present[it.good];
      }
      state[e.index] = State::Gone;
    } else {
      const std::size_t j = trajectory.buyers[e.index].type;
      const auto order = trajectory.order(e.index);
      const auto draws = trajectory.permit_draw(e.index);
      for (std::size_t k = 0; k < n; ++k) {
        const std::size_t i = order[k];
        if (available[i] == 0 || !(draws[i] < policy.p(i, j))) continue;
        auto& q = shelf[i];
        while (state[q.front()] != State::Available) q.pop_front();
        state[q.front()] = State::Sold;
        q.pop_front();
        --available[i];
        out.sales(i, j) += 1.0;
        out.reward += instance.value(i, j);
        break;
      }
    }
  }
  out.trajectory = std::move(trajectory);
  return out;
}

struct OfflineResult {
  double value_rate = 0.0;
  double matched_count_rate = 0.0;
  double value_rate_se = std::numeric_limits<double>::quiet_NaN();
  std::size_t components = 0;
  std::size_t largest_component = 0;  // items plus buyers
};

/// Maximum-weight matching of items to buyers arriving within their lifetimes, solved per busy period.
/// Items alive at the horizon keep their edges to earlier buyers only.
inline OfflineResult offline_matching(const MarketInstance& instance, const Trajectory& trajectory) {
  if (trajectory.goods != instance.num_goods()) throw ValidationError("trajectory does not match the instance");
  const auto& items = trajectory.items;
  const auto& buyers = trajectory.buyers;
  const double horizon = trajectory.horizon;
  OfflineResult out;
  std::vector<double> batch_value(kBatchCount, 0.0);
  double total_value = 0.0;
  double total_matched = 0.0;

  std::size_t next_item = 0;
  std::size_t next_buyer = 0;
  while (next_item < items.size()) {
    // a busy period starts at the next item arrival and lasts until no item is present
    const std::size_t first_item = next_item;
    const double start = items[first_item].arrival;
    double busy_until = items[first_item].perish;
    std::size_t last_item = first_item + 1;
    while (last_item < items.size() && items[last_item].arrival < busy_until) {
      busy_until = std::max(busy_until, items[last_item].perish);
      ++last_item;
    }
    while (next_buyer < buyers.size() && buyers[next_buyer].time < start) ++next_buyer;
    const std::size_t first_buyer = next_buyer;
    while (next_buyer < buyers.size() && buyers[next_buyer].time < busy_until) ++next_buyer;

    std::vector<WeightedEdge> edges;
    std::vector<std::size_t> active;
    std::size_t cursor = first_item;
    for (std::size_t b = first_buyer; b < next_buyer; ++b) {
      const double t = buyers[b].time;
      while (cursor < last_item && items[cursor].arrival <= t) active.push_back(cursor++);
      std::erase_if(active, [&](std::size_t k) { return items[k].perish <= t; });
      for (std::size_t k : active) {
        const double v = instance.value(items[k].good, buyers[b].type);
        if (v > 0.0) edges.push_back({k - first_item, b - first_buyer, v});
      }
    }
    if (!edges.empty()) {
      const auto match = max_weight_matching(last_item - first_item, next_buyer - first_buyer, edges);
      total_value += match.value;
      total_matched += static_cast<double>(match.pairs.size());
      const auto batch = std::min<std::size_t>(kBatchCount - 1, static_cast<std::size_t>(start / horizon * kBatchCount));
      batch_value[batch] += match.value;
    }
    ++out.components;
    out.largest_component = std::max(out.largest_component, (last_item - first_item) + (next_buyer - first_buyer));
    next_item = last_item;
  }

  out.value_rate = total_value / horizon;
  out.matched_count_rate = total_matched / horizon;
  const double window = horizon / kBatchCount;
  double mean = 0.0;
  for (double v : batch_value) mean += v / window;
  mean /= kBatchCount;
  double ss = 0.0;
  for (double v : batch_value) ss += (v / window - mean) * (v / window - mean);
  out.value_rate_se = std::sqrt(ss / (kBatchCount - 1) / kBatchCount);
  return out;
}

/// Offline oracle on a freshly sampled trajectory; unbounded capacity only.
inline OfflineResult simulate_offline_matching(const MarketInstance& instance, double horizon, std::uint64_t seed) {
  if (!instance.capacity().is_unbounded())
    throw ValidationError("the offline oracle is defined for unbounded capacity only");
  return offline_matching(instance, sample_trajectory(instance, horizon, seed));
}

}  // namespace spi
