// Acceptance suite: one check per release criterion, each printing a
// single PASS/FAIL line. Run with a criterion number to run just that one.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

#include "json.hpp"

#include "oracles.hpp"
#include "rlsched/cli.hpp"
#include "rlsched/cost_model.hpp"
#include "rlsched/partition.hpp"
#include "rlsched/plan_io.hpp"
#include "rlsched/rollout_milp.hpp"
#include "rlsched/scheduler.hpp"
#include "rlsched/simulator.hpp"
#include "test_fixtures.hpp"

using namespace rlsched;
using namespace rlsched::testing;
namespace fs = std::filesystem;

namespace {

double now_seconds() {
  return std::chrono::duration<double>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

struct CheckContext {
  std::string detail;
  bool ok = true;

  void require(bool condition, const std::string& message) {
    if (!condition && ok) {
      ok = false;
      detail = message;
    }
  }
};

ReplicaConfig synthetic_config(std::vector<int> v, double h) {
  ReplicaConfig c;
  c.type_counts = std::move(v);
  c.tp_per_stage = {1};
  c.machine_footprint = {1};
  c.throughput = h;
  return c;
}

// ---- criterion 1: MILP optimality on 200 random small instances ----------
bool milp_optimality(CheckContext& ctx) {
  double start = now_seconds();
  SplitMix64 rng(0xACCE1);
  for (int round = 0; round < 200; ++round) {
    int types = 1 + static_cast<int>(rng.next_below(2));
    std::vector<int> caps(static_cast<size_t>(types), 0);
    int total = 1 + static_cast<int>(rng.next_below(6));
    for (int t = 0; t < total; ++t) {
      caps[static_cast<size_t>(rng.next_below(static_cast<std::uint64_t>(types)))]++;
    }
    int n_configs = 1 + static_cast<int>(rng.next_below(8));
    std::vector<ReplicaConfig> configs;
    for (int c = 0; c < n_configs; ++c) {
      std::vector<int> v(static_cast<size_t>(types), 0);
      int t = static_cast<int>(rng.next_below(static_cast<std::uint64_t>(types)));
      int most = std::max(1, caps[static_cast<size_t>(t)]);
      v[static_cast<size_t>(t)] = 1 + static_cast<int>(rng.next_below(static_cast<std::uint64_t>(most)));
      configs.push_back(synthetic_config(std::move(v), 5 + rng.next_double() * 300));
    }
    double rollouts = 1 + static_cast<double>(rng.next_below(20));
    double len = 1 + rng.next_double() * 900;

    auto brute = oracle::brute_milp(configs, caps, rollouts, len);
    try {
      RolloutPlan plan = solve_milp(configs, caps, rollouts, len);
      ctx.require(brute.feasible, "solver found a plan the oracle calls infeasible");
      if (!ctx.ok) return false;
      ctx.require(nearly_equal(plan.makespan, brute.theta, 1e-9),
                  "makespan mismatch: solver " + std::to_string(plan.makespan) + " vs brute " +
                      std::to_string(brute.theta));
    } catch (const InfeasibleError&) {
      ctx.require(!brute.feasible, "solver infeasible but oracle found a plan");
    }
    if (!ctx.ok) return false;
  }
  double elapsed = now_seconds() - start;
  ctx.require(elapsed < 60.0, "exceeded the 60 s budget: " + std::to_string(elapsed));
  ctx.detail = "200 instances, " + std::to_string(elapsed) + " s";
  return ctx.ok;
}

// ---- criterion 2: partition optimality --------------------------------
bool partition_optimality(CheckContext& ctx) {
  double start = now_seconds();
  SplitMix64 rng(0xACCE2);
  int exact_checked = 0;
  while (exact_checked < 100) {
    RandomInstance inst = random_instance(rng, 4 + static_cast<int>(rng.next_below(7)));
    int n = inst.cluster.size();
    if (n < 2 || n > 10) continue;
    unsigned mask = 1 + static_cast<unsigned>(rng.next_below((1ull << n) - 2));
    std::vector<int> subset;
    for (int d = 0; d < n; ++d) {
      if (mask & (1u << d)) subset.push_back(d);
    }
    if (subset.empty() || static_cast<int>(subset.size()) == n) continue;
    double f = compute_fraction(inst.cluster, subset);
    GammaState gamma;
    gamma.gamma_l = std::max(0.0, f - 0.02 - rng.next_double() * 0.1);
    gamma.gamma_h = std::min(1.0, f + 0.02 + rng.next_double() * 0.1);

    PartitionResult got = graph_partition(inst.cluster, gamma);
    auto brute = oracle::brute_partition(inst.cluster, gamma.gamma_l, gamma.gamma_h);
    ctx.require(brute.feasible, "oracle found the band infeasible after a subset seeded it");
    if (!ctx.ok) return false;
    ctx.require(nearly_equal(got.objective, brute.objective, 1e-9),
                "objective mismatch at N=" + std::to_string(n));
    if (!ctx.ok) return false;
    exact_checked++;
  }

  // heuristic tier: local search within 2% on N <= 12
  int local_checked = 0;
  PartitionOptions local;
  local.force_local_search = true;
  while (local_checked < 40) {
    RandomInstance inst = random_instance(rng, 8 + static_cast<int>(rng.next_below(5)));
    int n = inst.cluster.size();
    if (n < 4 || n > 12) continue;
    GammaState gamma;
    double lo = 0.15 + rng.next_double() * 0.3;
    gamma.gamma_l = lo;
    gamma.gamma_h = lo + 0.15 + rng.next_double() * 0.3;
    oracle::BrutePartitionResult brute;
    try {
      brute = oracle::brute_partition(inst.cluster, gamma.gamma_l, gamma.gamma_h);
    } catch (const ValidationError&) {
      continue;
    }
    if (!brute.feasible) continue;
    PartitionResult got;
    try {
      got = graph_partition(inst.cluster, gamma, local);
    } catch (const BandInfeasibleError&) {
      ctx.require(false, "local search missed a feasible band at N=" + std::to_string(n));
      return false;
    }
    ctx.require(got.objective >= 0.98 * brute.objective,
                "local search below 98% of optimum at N=" + std::to_string(n));
    if (!ctx.ok) return false;
    local_checked++;
  }
  double elapsed = now_seconds() - start;
  ctx.require(elapsed < 120.0, "exceeded the 120 s budget: " + std::to_string(elapsed));
  ctx.detail = "100 exact + 40 local instances, " + std::to_string(elapsed) + " s";
  return ctx.ok;
}

// ---- criterion 3: end-to-end near-optimality ---------------------------
bool end_to_end_near_optimality(CheckContext& ctx) {
  SplitMix64 rng(0xACCE3);
  int checked = 0;
  int attempts = 0;
  double worst_ratio = 0;
  while (checked < 50 && attempts < 400) {
    attempts++;
    RandomInstance inst = random_instance(rng, 4 + static_cast<int>(rng.next_below(5)));
    if (inst.cluster.size() < 3 || inst.cluster.size() > 8) continue;
    SchedulerOptions options;
    options.expand_window = false;
    ScheduledPlan plan;
    try {
      plan = schedule(inst.cluster, inst.work, inst.calib, options).plan;
    } catch (const InfeasibleError&) {
      continue;
    }
    auto optimum =
        oracle::exhaustive_schedule_optimum(inst.cluster, inst.work, inst.calib, plan.window);
    if (!optimum.feasible) continue;
    double ratio = plan.costs.objective() / optimum.objective;
    worst_ratio = std::max(worst_ratio, ratio);
    ctx.require(ratio <= 1.10 + 1e-9,
                "plan " + std::to_string(plan.costs.objective()) + " vs optimum " +
                    std::to_string(optimum.objective) + " (ratio " + std::to_string(ratio) + ")");
    if (!ctx.ok) return false;
    checked++;
  }
  ctx.require(checked == 50, "only " + std::to_string(checked) + " feasible instances");
  ctx.detail = "50 instances, worst ratio " + std::to_string(worst_ratio);
  return ctx.ok;
}

// ---- criterion 4: staleness invariant ----------------------------------
bool staleness_invariant(CheckContext& ctx) {
  SplitMix64 rng(0xACCE4);
  int plans_checked = 0;
  long long steps_total = 0;
  int attempts = 0;
  while (plans_checked < 20 && attempts < 200) {
    attempts++;
    RandomInstance inst = random_instance(rng, 4 + static_cast<int>(rng.next_below(4)));
    if (inst.cluster.size() < 2) continue;
    int eta = std::vector<int>{0, 1, 2, 4}[plans_checked % 4];
    inst.work.staleness = eta;
    SchedulerOptions options;
    options.expand_window = false;
    ScheduledPlan plan;
    try {
      plan = schedule(inst.cluster, inst.work, inst.calib, options).plan;
    } catch (const InfeasibleError&) {
      continue;
    }
    SimReport report = simulate(plan, inst.cluster, inst.work, inst.calib, 50, 1234 + attempts);
    steps_total += report.steps_completed;
    ctx.require(report.max_staleness_observed <= eta,
                "staleness " + std::to_string(report.max_staleness_observed) + " > eta " +
                    std::to_string(eta));
    if (!ctx.ok) return false;

    if (eta == 0) {
      // zero overlap between rollout generation and training busy intervals
      std::vector<std::pair<double, double>> rollout, train;
      for (const auto& ev : report.event_log) {
        if (ev.kind == SimEventKind::rollout_complete) {
          if (rollout.empty() || rollout.back() != std::make_pair(ev.aux, ev.time)) {
            rollout.emplace_back(ev.aux, ev.time);
          }
        } else if (ev.kind == SimEventKind::train_step_done) {
          train.emplace_back(ev.aux, ev.time);
        }
      }
      for (const auto& [rs, re] : rollout) {
        for (const auto& [ts, te] : train) {
          ctx.require(std::min(re, te) - std::max(rs, ts) <= 1e-9,
                      "rollout and training intervals overlap at eta=0");
          if (!ctx.ok) return false;
        }
      }
    }
    plans_checked++;
  }
  ctx.require(plans_checked == 20, "only " + std::to_string(plans_checked) + " plans simulated");
  ctx.detail = std::to_string(plans_checked) + " plans, " + std::to_string(steps_total) +
               " simulated steps";
  return ctx.ok;
}

// ---- criterion 5: simulator-model consistency --------------------------
bool simulator_model_consistency(CheckContext& ctx) {
  SplitMix64 rng(0xACCE5);
  int checked = 0;
  int attempts = 0;
  double worst = 0;
  while (checked < 20 && attempts < 200) {
    attempts++;
    RandomInstance inst = random_instance(rng, 4 + static_cast<int>(rng.next_below(4)));
    if (inst.cluster.size() < 2) continue;
    // deterministic length distribution; a batch large enough that the
    // staleness window can keep every replica streaming, which is the
    // regime the window-averaged analytic model describes
    inst.work.length_dist =
        LengthDistribution::point(512 + static_cast<int>(rng.next_below(1537)));
    inst.work.batch_rollouts = 32 + static_cast<int>(rng.next_below(33));
    inst.work.staleness = 2 + static_cast<int>(rng.next_below(3));
    SchedulerOptions options;
    options.expand_window = false;
    ScheduledPlan plan;
    try {
      plan = schedule(inst.cluster, inst.work, inst.calib, options).plan;
    } catch (const InfeasibleError&) {
      continue;
    }
    SimReport report = simulate(plan, inst.cluster, inst.work, inst.calib, 40, 99);
    // per-step prediction: sync latency plus the slower of generation
    // (incl. reward) and training
    double predicted =
        (std::max(plan.costs.c_train, plan.costs.c_rollout + plan.costs.c_reward) +
         plan.costs.c_update) /
        plan.window;
    double rel = std::abs(report.avg_step_time_steady - predicted) / predicted;
    worst = std::max(worst, rel);
    ctx.require(rel <= 0.15, "simulated " + std::to_string(report.avg_step_time_steady) +
                                 " vs predicted " + std::to_string(predicted) +
                                 " (rel " + std::to_string(rel) + ")");
    if (!ctx.ok) return false;
    checked++;
  }
  ctx.require(checked == 20, "only " + std::to_string(checked) + " plans checked");
  ctx.detail = "20 plans, worst relative gap " + std::to_string(worst);
  return ctx.ok;
}

// ---- criterion 6: calibration cost-efficiency ratios -------------------
bool calibration_ratios(CheckContext& ctx) {
  ClusterGraph cluster = desk_mixed_cluster();
  WorkloadSpec work = math_workload();
  Calibration calib = fit_calibration(cluster, work, profiled_costs_1p5b());

  auto infer_cost = [&](int type) {
    ReplicaConfig config = synthetic_config(
        type == 0 ? std::vector<int>{1, 0} : std::vector<int>{0, 1}, 0);
    auto h = replica_throughput(config, cluster, work, calib);
    return cluster.types[static_cast<size_t>(type)].price_per_hour / 3600.0 / h.value();
  };
  auto train_cost = [&](int type, int device) {
    TrainPlan plan;
    plan.stages.push_back(PipelineStage{{device}, 1, 1, work.num_layers});
    double per_step = train_step_cost(plan, cluster, work, calib, 1);
    double tps = work.tokens_per_step() / per_step;
    return cluster.types[static_cast<size_t>(type)].price_per_hour / 3600.0 / tps;
  };

  double infer_ratio = infer_cost(0) / infer_cost(1);        // H20 advantage generating
  double train_ratio = train_cost(1, 24) / train_cost(0, 0); // H800 advantage training
  ctx.require(std::abs(infer_ratio - 2.71) <= 0.10,
              "inference ratio " + std::to_string(infer_ratio));
  ctx.require(std::abs(train_ratio - 3.11) <= 0.10,
              "training ratio " + std::to_string(train_ratio));
  ctx.detail = "inference H20:H800 = " + std::to_string(infer_ratio) +
               ", training H800:H20 = " + std::to_string(train_ratio);
  return ctx.ok;
}

// ---- criterion 7: calibrated scenario ordering -------------------------
bool scenario_ordering(CheckContext& ctx) {
  fs::path data = fs::path(RLSCHED_DATA_DIR);
  fs::path out = fs::temp_directory_path() / "rlsched-acceptance-compare";
  fs::remove_all(out);
  int code = run_cli({"compare", (data / "scenarios/budget_h800.json").string(),
                      (data / "scenarios/budget_h20.json").string(),
                      (data / "scenarios/budget_mixed.json").string(), "--steps", "30",
                      "--out", out.string()});
  ctx.require(code == kExitOk, "compare exited with " + std::to_string(code));
  if (!ctx.ok) return false;
  auto table = nlohmann::json::parse(read_file((out / "compare.json").string()));
  double mixed = 0, best_homogeneous = 1e300, worst_homogeneous = 0;
  for (const auto& row : table) {
    double step = row["avg_step_time_s"].get<double>();
    if (row["scenario"] == "mixed") {
      mixed = step;
    } else {
      best_homogeneous = std::min(best_homogeneous, step);
      worst_homogeneous = std::max(worst_homogeneous, step);
    }
  }
  ctx.require(mixed > 0, "mixed scenario missing from the table");
  ctx.require(mixed < best_homogeneous, "mixed is not the fastest scenario");
  double speedup = worst_homogeneous / mixed;
  ctx.require(speedup >= 1.4, "speedup vs worst homogeneous " + std::to_string(speedup));
  ctx.detail = "mixed " + std::to_string(mixed) + " s/step, speedup vs worst " +
               std::to_string(speedup) + "x";
  return ctx.ok;
}

// ---- criterion 8: price arithmetic -------------------------------------
bool price_arithmetic(CheckContext& ctx) {
  ClusterGraph cluster = desk_mixed_cluster();
  ScheduledPlan plan;
  for (int d = 0; d < 16; ++d) plan.partition.train_set.push_back(d);
  for (int d = 16; d < 48; ++d) plan.partition.rollout_set.push_back(d);
  SimReport report;
  for (int d = 16; d < 24; ++d) report.used_rollout_devices.push_back(d);
  CostTable table = cost_report(report, plan, cluster, math_workload());
  // 24 H800 at $5.28/h
  ctx.require(std::abs(table.cluster_per_hour - 126.72) < 1e-9,
              "got " + std::to_string(table.cluster_per_hour));
  char rendered[32];
  std::snprintf(rendered, sizeof(rendered), "%.2f", table.cluster_per_hour);
  ctx.require(std::string(rendered) == "126.72", std::string("renders as ") + rendered);
  ctx.require(!table.per_token.has_value(), "zero-throughput report must omit $/token");
  ctx.detail = "24 x $5.28/h = $" + std::string(rendered) + "/h";
  return ctx.ok;
}

// ---- criterion 9: convergence behavior ---------------------------------
bool convergence_behavior(CheckContext& ctx) {
  SplitMix64 rng(0xACCE9);
  int runs = 0;
  int attempts = 0;
  while (runs < 25 && attempts < 200) {
    attempts++;
    RandomInstance inst = random_instance(rng, 3 + static_cast<int>(rng.next_below(6)));
    if (inst.cluster.size() < 2) continue;
    SchedulerOptions options;
    options.expand_window = false;
    try {
      ScheduleOutcome outcome = schedule(inst.cluster, inst.work, inst.calib, options);
      ctx.require(outcome.plan.iterations_run <= options.iteration_cap,
                  "iteration cap exceeded");
      if (!ctx.ok) return false;
      runs++;
    } catch (const InfeasibleError&) {
      continue;
    }
  }
  ctx.require(runs == 25, "only " + std::to_string(runs) + " runs completed");

  GammaState state = initial_gamma();
  for (int n = 1; n <= 50; ++n) {
    state = refine_gamma(state, (n % 3 == 0) ? 2.0 : 1.0, 1.5);
    ctx.require(state.r - state.q == std::ldexp(1.0, -n),
                "interval width after " + std::to_string(n) + " calls is not 2^-n");
    if (!ctx.ok) return false;
  }
  ctx.detail = "25 runs within the cap; interval width exact through 2^-50";
  return ctx.ok;
}

// ---- criterion 10: determinism ------------------------------------------
bool determinism(CheckContext& ctx) {
  SplitMix64 rng(0xACCEA);
  int scenarios = 0;
  int attempts = 0;
  while (scenarios < 10 && attempts < 100) {
    attempts++;
    RandomInstance inst = random_instance(rng, 3 + static_cast<int>(rng.next_below(5)));
    if (inst.cluster.size() < 2) continue;
    SchedulerOptions options;
    ScheduledPlan plan_a, plan_b;
    try {
      plan_a = schedule(inst.cluster, inst.work, inst.calib, options).plan;
      plan_b = schedule(inst.cluster, inst.work, inst.calib, options).plan;
    } catch (const InfeasibleError&) {
      continue;
    }
    std::string a = plan_to_json(plan_a);
    std::string b = plan_to_json(plan_b);
    ctx.require(a == b, "plan bytes differ between reruns");
    if (!ctx.ok) return false;

    SimReport sim_a = simulate(plan_a, inst.cluster, inst.work, inst.calib, 20, 777);
    SimReport sim_b = simulate(plan_b, inst.cluster, inst.work, inst.calib, 20, 777);
    ctx.require(sim_report_to_json(sim_a, plan_a.window) ==
                    sim_report_to_json(sim_b, plan_b.window),
                "simulation reports differ between reruns");
    ctx.require(export_event_log(sim_a) == export_event_log(sim_b),
                "event logs differ between reruns");
    if (!ctx.ok) return false;
    scenarios++;
  }
  ctx.require(scenarios == 10, "only " + std::to_string(scenarios) + " scenarios checked");
  ctx.detail = "10 scenarios, plans and reports byte-identical";
  return ctx.ok;
}

struct Criterion {
  int number;
  const char* name;
  std::function<bool(CheckContext&)> run;
};

const std::vector<Criterion>& criteria() {
  static const std::vector<Criterion> list = {
      {1, "MILP optimality vs brute force", milp_optimality},
      {2, "partition optimality vs brute force", partition_optimality},
      {3, "end-to-end within 1.10x of exhaustive optimum", end_to_end_near_optimality},
      {4, "staleness bound holds in simulation", staleness_invariant},
      {5, "simulator tracks the analytic step time", simulator_model_consistency},
      {6, "calibration cost-efficiency ratios", calibration_ratios},
      {7, "calibrated scenario ordering", scenario_ordering},
      {8, "price arithmetic", price_arithmetic},
      {9, "convergence behavior", convergence_behavior},
      {10, "determinism of plans and reports", determinism},
  };
  return list;
}

}  // namespace

int main(int argc, char** argv) {
  int only = 0;
  if (argc > 1) only = std::atoi(argv[1]);
  int failures = 0;
  for (const auto& criterion : criteria()) {
    if (only != 0 && criterion.number != only) continue;
    CheckContext ctx;
    bool ok = false;
    try {
      ok = criterion.run(ctx);
    } catch (const std::exception& e) {
      ctx.detail = std::string("exception: ") + e.what();
      ok = false;
    }
    std::printf("criterion %2d [%s] %s%s%s\n", criterion.number, ok ? "PASS" : "FAIL",
                criterion.name, ctx.detail.empty() ? "" : " -- ", ctx.detail.c_str());
    std::fflush(stdout);
    if (!ok) failures++;
  }
  return failures == 0 ? 0 : 1;
}
