// spi: command-line experiment harness.
//
// Exit codes: 0 success, 1 a requested check failed, 2 usage or input error, 3 numeric error.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "spi/experiments.hpp"

namespace {

using namespace spi;

constexpr int kExitCheckFailed = 1;
constexpr int kExitUsage = 2;
constexpr int kExitNumeric = 3;

struct Options {
  std::string instance_path;
  std::string capacity;
  std::string benchmark = "lp-off";
  std::string w_rule = "pasta";
  std::optional<double> alpha;
  double horizon = 1e5;
  std::optional<double> burn_in;
  int reps = 1;
  std::uint64_t seed = 1;
  std::string out;
  std::string policy_path;
  bool sell_all = false;
  bool posted = false;
  std::vector<double> eps{0.1, 0.01, 0.001};
  GridSpec grid;
  std::string perturb;
};

/// Writes to --out atomically (temp file then rename), or to stdout.
void emit(const Options& o, const std::string& text) {
  if (o.out.empty()) {
    std::cout << text;
    return;
  }
  const std::filesystem::path target(o.out);
  auto tmp = target;
  tmp += ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw ParseError("cannot write '" + tmp.string() + "'");
    f << text;
    if (!f.flush()) throw ParseError("cannot write '" + tmp.string() + "'");
  }
  std::filesystem::rename(tmp, target);
}

MarketInstance load(const Options& o) {
  if (o.instance_path.empty()) throw ParseError("--instance is required");
  auto instance = load_instance_file(o.instance_path);
  if (o.capacity.empty()) return instance;
  if (o.capacity == "unbounded") return instance.with_capacity(Capacity::unbounded());
  std::size_t used = 0;
  int c = 0;
  try {
    c = std::stoi(o.capacity, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != o.capacity.size()) throw ParseError("--capacity must be a positive integer or 'unbounded'");
  return instance.with_capacity(Capacity::finite(c));
}

double alpha_for(const Options& o, const MarketInstance& instance) {
  return o.alpha.value_or(instance.single_good() ? 1.0 : 0.75);
}

double burn_in_for(const Options& o, const MarketInstance& instance) {
  if (o.burn_in) return *o.burn_in;
  return std::min(default_burn_in(instance), o.horizon / 10.0);
}

/// The policy named by --policy / --sell-to-all, or the one built from the benchmark solution.
PolicySpec policy_for(const Options& o, const MarketInstance& instance) {
  if (o.sell_all) return sell_to_all(instance);
  if (!o.policy_path.empty()) {
    std::ifstream f(o.policy_path);
    if (!f) throw ParseError("cannot open policy file '" + o.policy_path + "'");
    nlohmann::json doc;
    try {
      f >> doc;
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(std::string("policy is not valid JSON: ") + e.what());
    }
    return policy_from_json(doc, instance);
  }
  const auto sol = solve(instance, parse_benchmark(o.benchmark));
  if (!sol.optimal()) throw NumericError(sol.diagnostics);
  return build(instance, sol, alpha_for(o, instance), parse_w_rule(o.w_rule));
}

MarketInstance maybe_canonical(const MarketInstance& instance) {
  return instance.single_good() ? canonicalize_buyers(instance) : instance;
}

int cmd_solve(const Options& o) {
  const auto sol = solve(load(o), parse_benchmark(o.benchmark));
  if (!sol.optimal()) throw NumericError(sol.diagnostics);
  emit(o, to_csv(sol));
  return 0;
}

int cmd_policy(const Options& o) {
  const auto instance = maybe_canonical(load(o));
  const auto policy = policy_for(o, instance);
  if (o.posted) {
    emit(o, to_json(to_posted_price(policy, instance)).dump(2) + "\n");
  } else {
    emit(o, to_json(policy).dump(2) + "\n");
  }
  return 0;
}

int cmd_simulate(const Options& o) {
  const auto instance = maybe_canonical(load(o));
  const auto policy = policy_for(o, instance);
  const auto report = simulate_replications(instance, policy, o.horizon, burn_in_for(o, instance), o.seed, o.reps);
  const auto pasta = pasta_check(report);
  const auto flow = conservation_check(report, instance);
  std::string text = to_csv(report);
  text += std::string("pasta_check,") + (pasta.pass ? "pass" : "FAIL") + "\n";
  text += std::string("conservation_check,") + (flow.pass ? "pass" : "FAIL") + "\n";
  emit(o, text);
  return pasta.pass && flow.pass ? 0 : kExitCheckFailed;
}

int cmd_eval(const Options& o) {
  const auto instance = maybe_canonical(load(o));
  if (!instance.single_good()) throw ValidationError("eval requires a single-good instance");
  std::optional<LpSolution> sol;
  PolicySpec policy;
  if (o.sell_all || !o.policy_path.empty()) {
    policy = policy_for(o, instance);
  } else {
    sol = solve(instance, parse_benchmark(o.benchmark));
    if (!sol->optimal()) throw NumericError(sol->diagnostics);
    policy = build(instance, *sol, alpha_for(o, instance), parse_w_rule(o.w_rule));
  }
  const auto rates = analytic_sale_rates(policy, instance);
  std::ostringstream out;
  out << "buyer,value,p,x_star,s,ratio\n";
  for (std::size_t j = 0; j < instance.num_buyers(); ++j) {
    const double x = sol ? sol->rates(0, j) : std::numeric_limits<double>::quiet_NaN();
    out << j << ',' << format_number(instance.value(0, j)) << ',' << format_number(policy.p(0, j)) << ','
        << format_number(x) << ',' << format_number(rates.sale_rates[j]) << ','
        << format_number(x > 0.0 ? rates.sale_rates[j] / x : std::numeric_limits<double>::quiet_NaN()) << '\n';
  }
  out << "\nmetric,value\n";
  out << "availability," << format_number(rates.availability) << '\n';
  out << "permitted_rate," << format_number(rates.permitted_rate) << '\n';
  out << "reward_rate," << format_number(rates.reward_rate) << '\n';
  if (sol) {
    out << "benchmark_objective," << format_number(sol->objective) << '\n';
    if (sol->objective > 0.0) out << "ratio," << format_number(rates.reward_rate / sol->objective) << '\n';
  }
  if (policy.alpha == 1.0) {
    try {
      const auto price = to_posted_price(policy, instance);
      const auto rounded = round_deterministic(price, instance);
      out << "posted_threshold," << format_number(price.threshold_value) << '\n';
      out << "posted_boundary_p," << format_number(price.boundary_probability) << '\n';
      out << "rounded_boundary_p," << format_number(rounded.boundary_probability) << '\n';
      out << "rounded_reward_rate,"
          << format_number(analytic_sale_rates(from_posted_price(rounded, instance), instance).reward_rate) << '\n';
    } catch (const NotPostedPriceError&) {
    }
  }
  emit(o, out.str());
  return 0;
}

int cmd_compete(const Options& o) {
  const auto instance = load(o);
  CompeteConfig cfg;
  cfg.benchmark = parse_benchmark(o.benchmark);
  cfg.rule = parse_w_rule(o.w_rule);
  cfg.alpha = alpha_for(o, instance);
  cfg.horizon = o.horizon;
  cfg.burn_in = o.burn_in;
  cfg.replications = o.reps;
  cfg.seed = o.seed;
  const auto result = compete(instance, cfg);
  emit(o, compete_csv(result));
  return result.pass() ? 0 : kExitCheckFailed;
}

int cmd_table2(const Options& o) {
  emit(o, table2_csv(table2()));
  return 0;
}

int cmd_gaps(const Options& o) {
  emit(o, gap_report_csv(gap_report(load(o))));
  return 0;
}

int cmd_hardness(const Options& o) {
  std::vector<HardnessRow> rows;
  for (double e : o.eps) rows.push_back(hardness_row(e));
  emit(o, hardness_csv(rows));
  return 0;
}

int cmd_verify_bounds(const Options& o) {
  VerifyBoundsOptions v;
  v.grid = o.grid;
  v.perturb = o.perturb;
  const auto rows = verify_bounds(v);
  emit(o, verify_bounds_csv(rows));
  return all_pass(rows) ? 0 : kExitCheckFailed;
}

int cmd_offline(const Options& o) {
  const auto instance = load(o);
  if (o.reps < 1) throw ValidationError("--reps must be >= 1");
  const auto results = parallel_map(static_cast<std::size_t>(o.reps), thread_limit(), [&](std::size_t r) {
    return simulate_offline_matching(instance, o.horizon, o.reps == 1 ? o.seed : replication_seed(o.seed, r));
  });
  std::ostringstream out;
  out << "replication,value_rate,value_rate_stderr,matched_count_rate,components,largest_component\n";
  for (std::size_t r = 0; r < results.size(); ++r)
    out << r << ',' << format_number(results[r].value_rate) << ',' << format_number(results[r].value_rate_se) << ','
        << format_number(results[r].matched_count_rate) << ',' << results[r].components << ','
        << results[r].largest_component << '\n';
  emit(o, out.str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Stationary prophet inequality toolkit"};
  app.require_subcommand(1);
  Options o;

  const auto add_instance = [&](CLI::App* sub) {
    sub->add_option("--instance", o.instance_path, "Instance JSON file")->required()->check(CLI::ExistingFile);
    sub->add_option("--capacity", o.capacity, "Override capacity: N or 'unbounded'");
  };
  const auto add_policy = [&](CLI::App* sub) {
    sub->add_option("--benchmark", o.benchmark, "Benchmark LP")
        ->check(CLI::IsMember({"rb-off", "rb-on", "lp-off", "lp-on"}));
    sub->add_option("--w-rule", o.w_rule, "Normalization rule")->check(CLI::IsMember({"pasta", "collina", "online"}));
    sub->add_option("--alpha", o.alpha, "Permit scale (default 1 single-good, 3/4 multi-good)")
        ->check(CLI::Range(0.0, 1.0));
  };
  const auto add_policy_source = [&](CLI::App* sub) {
    auto* file = sub->add_option("--policy", o.policy_path, "Policy JSON (overrides the benchmark pipeline)");
    sub->add_flag("--sell-to-all", o.sell_all, "Permit every sale")->excludes(file);
  };
  const auto add_sim = [&](CLI::App* sub) {
    sub->add_option("--horizon", o.horizon, "Simulated time")->check(CLI::PositiveNumber);
    sub->add_option("--burn-in", o.burn_in, "Warm-up time excluded from statistics")->check(CLI::NonNegativeNumber);
    sub->add_option("--reps", o.reps, "Independent replications")->check(CLI::PositiveNumber);
    sub->add_option("--seed", o.seed, "Base random seed");
  };
  const auto add_out = [&](CLI::App* sub) { sub->add_option("--out", o.out, "Output path (default stdout)"); };

  auto* solve_cmd = app.add_subcommand("solve", "Solve a benchmark LP");
  add_instance(solve_cmd);
  solve_cmd->add_option("--benchmark", o.benchmark, "Benchmark LP")
      ->check(CLI::IsMember({"rb-off", "rb-on", "lp-off", "lp-on"}));
  add_out(solve_cmd);

  auto* policy_cmd = app.add_subcommand("policy", "Build a policy from a benchmark solution");
  add_instance(policy_cmd);
  add_policy(policy_cmd);
  policy_cmd->add_flag("--posted", o.posted, "Emit the posted-price form (single good, alpha = 1)");
  add_out(policy_cmd);

  auto* sim_cmd = app.add_subcommand("simulate", "Simulate a policy");
  add_instance(sim_cmd);
  add_policy(sim_cmd);
  add_policy_source(sim_cmd);
  add_sim(sim_cmd);
  add_out(sim_cmd);

  auto* eval_cmd = app.add_subcommand("eval", "Closed-form evaluation of a single-good policy");
  add_instance(eval_cmd);
  add_policy(eval_cmd);
  add_policy_source(eval_cmd);
  add_out(eval_cmd);

  auto* compete_cmd = app.add_subcommand("compete", "Solve, build, evaluate and simulate; compare to the benchmark");
  add_instance(compete_cmd);
  add_policy(compete_cmd);
  add_sim(compete_cmd);
  add_out(compete_cmd);

  auto* table2_cmd = app.add_subcommand("table2", "Approximation bounds for C = 1..5");
  add_out(table2_cmd);

  auto* gaps_cmd = app.add_subcommand("gaps", "All four benchmark objectives and their ratios");
  add_instance(gaps_cmd);
  add_out(gaps_cmd);

  auto* hardness_cmd = app.add_subcommand("hardness", "Online-vs-offline ratios on the hardness family");
  hardness_cmd->add_option("--eps", o.eps, "Values of eps")->check(CLI::PositiveNumber)->delimiter(',');
  add_out(hardness_cmd);

  auto* verify_cmd = app.add_subcommand("verify-bounds", "Grid verification of the analytic inequalities");
  verify_cmd->add_option("--grid-lo", o.grid.lo, "Smallest grid point")->check(CLI::PositiveNumber);
  verify_cmd->add_option("--grid-hi", o.grid.hi, "Largest grid point")->check(CLI::PositiveNumber);
  verify_cmd->add_option("--grid-points", o.grid.points, "Number of log-spaced points")->check(CLI::PositiveNumber);
  verify_cmd->add_option("--perturb", o.perturb, "Shift the named check by -0.01 (test hook)");
  add_out(verify_cmd);

  auto* offline_cmd = app.add_subcommand("offline-oracle", "Offline maximum-weight matching value (unbounded C)");
  add_instance(offline_cmd);
  add_sim(offline_cmd);
  add_out(offline_cmd);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (*solve_cmd) return cmd_solve(o);
    if (*policy_cmd) return cmd_policy(o);
    if (*sim_cmd) return cmd_simulate(o);
    if (*eval_cmd) return cmd_eval(o);
    if (*compete_cmd) return cmd_compete(o);
    if (*table2_cmd) return cmd_table2(o);
    if (*gaps_cmd) return cmd_gaps(o);
    if (*hardness_cmd) return cmd_hardness(o);
    if (*verify_cmd) return cmd_verify_bounds(o);
    if (*offline_cmd) return cmd_offline(o);
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  }
  return kExitUsage;
}
