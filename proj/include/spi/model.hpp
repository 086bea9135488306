#pragma once

// Market instances: goods with Poisson supply and exponential perishing,
// buyer types with Poisson arrivals and per-good bids, inventory capacity.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "spi/error.hpp"

namespace spi {

/// Inventory capacity: a positive item limit per good, or unbounded.
class Capacity {
 public:
  static Capacity unbounded() { return Capacity{}; }
  static Capacity finite(int limit) {
    if (limit < 1) throw ValidationError("capacity must be >= 1, got " + std::to_string(limit));
    Capacity c;
    c.limit_ = limit;
    return c;
  }

  bool is_unbounded() const noexcept { return !limit_.has_value(); }
  bool is_finite() const noexcept { return limit_.has_value(); }

  int value() const {
    if (!limit_) throw ValidationError("unbounded capacity has no finite value");
    return *limit_;
  }

  /// True when a good holding `available` items must discard the next arrival.
  bool full(long long available) const noexcept { return limit_ && available >= *limit_; }

  std::string to_string() const { return limit_ ? std::to_string(*limit_) : "unbounded"; }

  friend bool operator==(const Capacity&, const Capacity&) = default;

 private:
  Capacity() = default;
  std::optional<int> limit_;
};

struct GoodSpec {
  double supply_rate;  // lambda_i
  double perish_rate;  // mu_i

  friend bool operator==(const GoodSpec&, const GoodSpec&) = default;
};

struct BuyerTypeSpec {
  double arrival_rate;         // gamma_j
  std::vector<double> values;  // v_ij, indexed by good

  friend bool operator==(const BuyerTypeSpec&, const BuyerTypeSpec&) = default;
};

/// n x m grid of nonnegative per-(good, buyer type) sale rates, row-major by good.
class SaleRateMatrix {
 public:
  SaleRateMatrix() = default;
  SaleRateMatrix(std::size_t goods, std::size_t buyers)
      : goods_(goods), buyers_(buyers), rates_(goods * buyers, 0.0) {}

  std::size_t goods() const noexcept { return goods_; }
  std::size_t buyers() const noexcept { return buyers_; }

  double& operator()(std::size_t i, std::size_t j) { return rates_[i * buyers_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return rates_[i * buyers_ + j]; }

  const std::vector<double>& flat() const noexcept { return rates_; }
  std::vector<double>& flat() noexcept { return rates_; }

  double good_total(std::size_t i) const {
    double s = 0.0;
    for (std::size_t j = 0; j < buyers_; ++j) s += (*this)(i, j);
    return s;
  }

  double buyer_total(std::size_t j) const {
    double s = 0.0;
    for (std::size_t i = 0; i < goods_; ++i) s += (*this)(i, j);
    return s;
  }

  friend bool operator==(const SaleRateMatrix&, const SaleRateMatrix&) = default;

 private:
  std::size_t goods_ = 0;
  std::size_t buyers_ = 0;
  std::vector<double> rates_;
};

class MarketInstance {
 public:
  /// Validates and builds an instance; throws ValidationError on any violated invariant.
  MarketInstance(std::vector<GoodSpec> goods, std::vector<BuyerTypeSpec> buyers, Capacity capacity)
      : goods_(std::move(goods)), buyers_(std::move(buyers)), capacity_(capacity) {
    validate();
  }

  std::size_t num_goods() const noexcept { return goods_.size(); }
  std::size_t num_buyers() const noexcept { return buyers_.size(); }
  const std::vector<GoodSpec>& goods() const noexcept { return goods_; }
  const std::vector<BuyerTypeSpec>& buyers() const noexcept { return buyers_; }
  const GoodSpec& good(std::size_t i) const { return goods_.at(i); }
  const BuyerTypeSpec& buyer(std::size_t j) const { return buyers_.at(j); }
  Capacity capacity() const noexcept { return capacity_; }

  double value(std::size_t i, std::size_t j) const { return buyers_[j].values[i]; }

  double total_arrival_rate() const {
    return std::accumulate(buyers_.begin(), buyers_.end(), 0.0,
                           [](double acc, const BuyerTypeSpec& b) { return acc + b.arrival_rate; });
  }

  bool single_good() const noexcept { return goods_.size() == 1; }

  MarketInstance with_capacity(Capacity capacity) const {
    return MarketInstance(goods_, buyers_, capacity);
  }

  /// Inner product sum_ij v_ij * x_ij.
  double reward(const SaleRateMatrix& x) const {
    double r = 0.0;
    for (std::size_t i = 0; i < num_goods(); ++i)
      for (std::size_t j = 0; j < num_buyers(); ++j) r += value(i, j) * x(i, j);
    return r;
  }

  friend bool operator==(const MarketInstance&, const MarketInstance&) = default;

 private:
  void validate() const {
    if (goods_.empty()) throw ValidationError("instance needs at least one good");
    if (buyers_.empty()) throw ValidationError("instance needs at least one buyer type");
    for (std::size_t i = 0; i < goods_.size(); ++i) {
      const auto& g = goods_[i];
      if (!(g.supply_rate > 0.0) || !std::isfinite(g.supply_rate))
        throw ValidationError("good " + std::to_string(i) + ": supply rate must be positive and finite");
      if (!(g.perish_rate > 0.0) || !std::isfinite(g.perish_rate))
        throw ValidationError("good " + std::to_string(i) + ": perish rate must be positive and finite");
    }
    for (std::size_t j = 0; j < buyers_.size(); ++j) {
      const auto& b = buyers_[j];
      if (!(b.arrival_rate >= 0.0) || !std::isfinite(b.arrival_rate))
        throw ValidationError("buyer " + std::to_string(j) + ": arrival rate must be nonnegative and finite");
      if (b.values.size() != goods_.size())
        throw ValidationError("buyer " + std::to_string(j) + ": expected " + std::to_string(goods_.size()) +
                              " values, got " + std::to_string(b.values.size()));
      for (double v : b.values)
        if (!(v >= 0.0) || !std::isfinite(v))
          throw ValidationError("buyer " + std::to_string(j) + ": values must be nonnegative and finite");
    }
  }

  std::vector<GoodSpec> goods_;
  std::vector<BuyerTypeSpec> buyers_;
  Capacity capacity_;
};

namespace detail {

inline void reject_unknown_keys(const nlohmann::json& obj, std::initializer_list<std::string_view> allowed,
                                std::string_view where) {
  for (const auto& [key, _] : obj.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
      throw ParseError("unknown key '" + key + "' in " + std::string(where));
  }
}

inline const nlohmann::json& require(const nlohmann::json& obj, const char* key, std::string_view where) {
  auto it = obj.find(key);
  if (it == obj.end()) throw ParseError("missing key '" + std::string(key) + "' in " + std::string(where));
  return *it;
}

inline double require_number(const nlohmann::json& obj, const char* key, std::string_view where) {
  const auto& v = require(obj, key, where);
  if (!v.is_number()) throw ParseError("'" + std::string(key) + "' in " + std::string(where) + " must be a number");
  return v.get<double>();
}

}  // namespace detail

/// Parses an instance document (JSON with keys goods, buyers, capacity).
inline MarketInstance load_instance(std::string_view source) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(source);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("instance is not valid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw ParseError("instance document must be a JSON object");
  detail::reject_unknown_keys(doc, {"goods", "buyers", "capacity"}, "instance");

  const auto& goods_json = detail::require(doc, "goods", "instance");
  const auto& buyers_json = detail::require(doc, "buyers", "instance");
  const auto& cap_json = detail::require(doc, "capacity", "instance");
  if (!goods_json.is_array()) throw ParseError("'goods' must be an array");
  if (!buyers_json.is_array()) throw ParseError("'buyers' must be an array");

  std::vector<GoodSpec> goods;
  for (const auto& g : goods_json) {
    if (!g.is_object()) throw ParseError("each good must be an object");
    detail::reject_unknown_keys(g, {"lambda", "mu"}, "good");
    goods.push_back({detail::require_number(g, "lambda", "good"), detail::require_number(g, "mu", "good")});
  }

  std::vector<BuyerTypeSpec> buyers;
  for (const auto& b : buyers_json) {
    if (!b.is_object()) throw ParseError("each buyer must be an object");
    detail::reject_unknown_keys(b, {"gamma", "values"}, "buyer");
    BuyerTypeSpec spec{detail::require_number(b, "gamma", "buyer"), {}};
    const auto& vals = detail::require(b, "values", "buyer");
    if (!vals.is_array()) throw ParseError("'values' must be an array");
    for (const auto& v : vals) {
      if (!v.is_number()) throw ParseError("buyer values must be numbers");
      spec.values.push_back(v.get<double>());
    }
    buyers.push_back(std::move(spec));
  }

  Capacity capacity = Capacity::unbounded();
  if (!cap_json.is_null()) {
    if (!cap_json.is_number_integer()) throw ParseError("'capacity' must be a positive integer or null");
    const auto c = cap_json.get<long long>();
    if (c < 1) throw ValidationError("capacity must be >= 1");
    if (c > 1'000'000'000) throw ValidationError("capacity too large; use null for unbounded");
    capacity = Capacity::finite(static_cast<int>(c));
  }
  return MarketInstance(std::move(goods), std::move(buyers), capacity);
}

inline MarketInstance load_instance_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open instance file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return load_instance(ss.str());
}

inline nlohmann::json to_json(const MarketInstance& instance) {
  nlohmann::json doc;
  doc["goods"] = nlohmann::json::array();
  for (const auto& g : instance.goods()) doc["goods"].push_back({{"lambda", g.supply_rate}, {"mu", g.perish_rate}});
  doc["buyers"] = nlohmann::json::array();
  for (const auto& b : instance.buyers()) doc["buyers"].push_back({{"gamma", b.arrival_rate}, {"values", b.values}});
  if (instance.capacity().is_unbounded())
    doc["capacity"] = nullptr;
  else
    doc["capacity"] = instance.capacity().value();
  return doc;
}

inline std::string serialize_instance(const MarketInstance& instance) { return to_json(instance).dump(2); }

struct NormalizedInstance {
  MarketInstance instance;
  double time_scale;  // multiply normalized reward rates by this to recover original rates
};

/// Rescales time so the single good perishes at rate 1.
inline NormalizedInstance normalize_single_good(const MarketInstance& instance) {
  if (!instance.single_good()) throw ValidationError("normalize_single_good requires exactly one good");
  const double mu = instance.good(0).perish_rate;
  std::vector<GoodSpec> goods{{instance.good(0).supply_rate / mu, 1.0}};
  std::vector<BuyerTypeSpec> buyers = instance.buyers();
  for (auto& b : buyers) b.arrival_rate /= mu;
  return {MarketInstance(std::move(goods), std::move(buyers), instance.capacity()), mu};
}

/// Sorts single-good buyer types by strictly decreasing value, merging equal values.
inline MarketInstance canonicalize_buyers(const MarketInstance& instance) {
  if (!instance.single_good()) throw ValidationError("canonicalize_buyers requires exactly one good");
  std::vector<BuyerTypeSpec> sorted = instance.buyers();
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const BuyerTypeSpec& a, const BuyerTypeSpec& b) { return a.values[0] > b.values[0]; });
  std::vector<BuyerTypeSpec> merged;
  for (auto& b : sorted) {
    if (!merged.empty() && merged.back().values[0] == b.values[0])
      merged.back().arrival_rate += b.arrival_rate;
    else
      merged.push_back(std::move(b));
  }
  return MarketInstance(instance.goods(), std::move(merged), instance.capacity());
}

}  // namespace spi
