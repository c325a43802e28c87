#include "rlsched/cli.hpp"

#include <filesystem>
#include <iostream>

#include "CLI11.hpp"
#include "json.hpp"

#include "rlsched/calibration.hpp"
#include "rlsched/cluster.hpp"
#include "rlsched/plan_io.hpp"
#include "rlsched/rollout_milp.hpp"
#include "rlsched/scheduler.hpp"
#include "rlsched/simulator.hpp"
#include "rlsched/workload.hpp"

namespace rlsched {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

namespace {

constexpr std::uint64_t kDefaultSeed = 4276115;

struct CommonInputs {
  std::string cluster_path;
  std::string workload_path;
  std::string calibration_path;
};

struct Loaded {
  ClusterGraph cluster;
  WorkloadSpec work;
  Calibration calib;
};

Loaded load_inputs(const CommonInputs& in) {
  Loaded out{load_cluster_file(in.cluster_path), load_workload_file(in.workload_path), {}};
  if (!in.calibration_path.empty()) {
    out.calib = load_calibration_file(in.calibration_path, out.cluster, out.work);
  } else {
    out.calib = default_calibration(out.cluster);
  }
  return out;
}

void ensure_out_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) {
    throw ValidationError("cannot create output directory: " + dir);
  }
}

struct ScenarioRun {
  std::string name;
  ScheduledPlan plan;
  SimReport report;
  CostTable costs;
};

ScenarioRun run_scenario(const std::string& scenario_path, int steps, std::uint64_t seed,
                         const SchedulerOptions& sched_options) {
  nlohmann::json doc = nlohmann::json::parse(read_file(scenario_path), nullptr, false);
  if (doc.is_discarded()) {
    throw ParseError("scenario document is not valid JSON: " + scenario_path);
  }
  fs::path base = fs::path(scenario_path).parent_path();
  auto resolve = [&](const std::string& p) {
    fs::path path(p);
    return path.is_absolute() ? path.string() : (base / path).string();
  };
  CommonInputs inputs;
  try {
    inputs.cluster_path = resolve(doc.at("cluster").get<std::string>());
    inputs.workload_path = resolve(doc.at("workload").get<std::string>());
    if (doc.contains("calibration")) {
      inputs.calibration_path = resolve(doc["calibration"].get<std::string>());
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("scenario document " + scenario_path + ": " + e.what());
  }
  Loaded loaded = load_inputs(inputs);
  ScenarioRun run;
  run.name = doc.value("name", fs::path(scenario_path).stem().string());
  run.plan = schedule(loaded.cluster, loaded.work, loaded.calib, sched_options).plan;
  run.report = simulate(run.plan, loaded.cluster, loaded.work, loaded.calib, steps, seed);
  run.costs = cost_report(run.report, run.plan, loaded.cluster, loaded.work);
  return run;
}

int dispatch(const std::vector<std::string>& args) {
  CLI::App app{"scheduler and simulator for asynchronous RL training on heterogeneous GPUs"};
  app.require_subcommand(1);

  CommonInputs inputs;
  std::string out_dir = "out";
  std::string plan_path;
  std::vector<std::string> scenario_paths;
  int steps = 30;
  std::uint64_t seed = kDefaultSeed;
  int eta = -1;
  double gamma_band = 0.05;
  int restarts = 16;
  int delta_override = -1;

  auto add_common = [&](CLI::App* cmd, bool calibration) {
    cmd->add_option("--cluster", inputs.cluster_path, "cluster description file")->required();
    cmd->add_option("--workload", inputs.workload_path, "workload description file")->required();
    if (calibration) {
      cmd->add_option("--calibration", inputs.calibration_path, "calibration file");
    }
    cmd->add_option("--seed", seed, "seed for every stochastic choice");
  };

  CLI::App* cmd_schedule = app.add_subcommand("schedule", "compute a scheduled plan");
  add_common(cmd_schedule, true);
  cmd_schedule->add_option("--out", out_dir, "output directory");
  cmd_schedule->add_option("--eta", eta, "override the workload staleness bound");
  cmd_schedule->add_option("--gamma-band", gamma_band, "band widening step on infeasibility");
  cmd_schedule->add_option("--restarts", restarts, "partition local-search restarts");

  CLI::App* cmd_simulate = app.add_subcommand("simulate", "simulate a scheduled plan");
  add_common(cmd_simulate, true);
  cmd_simulate->add_option("--plan", plan_path, "plan document")->required();
  cmd_simulate->add_option("--steps", steps, "training steps to simulate");
  cmd_simulate->add_option("--out", out_dir, "output directory");

  CLI::App* cmd_compare = app.add_subcommand("compare", "schedule+simulate several scenarios");
  cmd_compare->add_option("scenarios", scenario_paths, "scenario files")->expected(-1);
  cmd_compare->add_option("--steps", steps, "training steps to simulate");
  cmd_compare->add_option("--seed", seed, "seed for every stochastic choice");
  cmd_compare->add_option("--out", out_dir, "output directory");
  cmd_compare->add_option("--gamma-band", gamma_band, "band widening step on infeasibility");
  cmd_compare->add_option("--restarts", restarts, "partition local-search restarts");

  CLI::App* cmd_validate = app.add_subcommand("validate-cluster", "parse and check a cluster file");
  cmd_validate->add_option("--cluster", inputs.cluster_path, "cluster description file")
      ->required();

  CLI::App* cmd_dump = app.add_subcommand("dump-milp", "dump a rollout solver instance");
  add_common(cmd_dump, true);
  cmd_dump->add_option("--eta", eta, "override the workload staleness bound");
  cmd_dump->add_option("--delta", delta_override, "window size (default eta+1)");
  cmd_dump->add_option("--out", out_dir, "output directory");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {  // --help
      std::cout << app.help() << std::flush;
      return kExitOk;
    }
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  }

  auto sched_options = [&]() {
    SchedulerOptions o;
    o.band_widen_step = gamma_band;
    o.partition.restarts = restarts;
    o.partition.seed = seed;
    if (eta >= 0) o.eta_override = eta;
    return o;
  };

  if (cmd_schedule->parsed()) {
    Loaded loaded = load_inputs(inputs);
    ScheduleOutcome outcome = schedule(loaded.cluster, loaded.work, loaded.calib, sched_options());
    ensure_out_dir(out_dir);
    write_file((fs::path(out_dir) / "plan.json").string(), plan_to_json(outcome.plan));
    ExplainReport report = explain(outcome.plan, loaded.cluster, loaded.work, loaded.calib);
    write_file((fs::path(out_dir) / "explain.json").string(), report.json);
    write_file((fs::path(out_dir) / "explain.txt").string(), report.text);
    std::cout << report.text << std::flush;
    return kExitOk;
  }

  if (cmd_simulate->parsed()) {
    Loaded loaded = load_inputs(inputs);
    ScheduledPlan plan = plan_from_file(plan_path);
    if (plan.workload_fingerprint != loaded.work.fingerprint) {
      throw MismatchError("plan was scheduled for a different workload (fingerprint mismatch)");
    }
    if (!inputs.calibration_path.empty() &&
        plan.calibration_fingerprint != loaded.calib.fingerprint) {
      throw MismatchError("plan was scheduled for a different calibration (fingerprint mismatch)");
    }
    WorkloadSpec work = loaded.work;
    work.staleness = plan.staleness;
    SimReport report = simulate(plan, loaded.cluster, work, loaded.calib, steps, seed);
    CostTable table = cost_report(report, plan, loaded.cluster, work);
    ensure_out_dir(out_dir);
    write_file((fs::path(out_dir) / "sim_report.json").string(),
               sim_report_to_json(report, std::min(plan.window, steps - 1)));
    write_file((fs::path(out_dir) / "cost_table.json").string(), cost_table_to_json(table));
    write_file((fs::path(out_dir) / "events.log").string(), export_event_log(report));
    std::cout << "steps: " << report.steps_completed
              << ", avg step time: " << report.avg_step_time
              << " s, throughput: " << report.throughput_tokens_per_s << " tok/s\n";
    return kExitOk;
  }

  if (cmd_compare->parsed()) {
    if (scenario_paths.size() < 2) {
      std::cerr << "usage error: compare needs at least two scenario files\n";
      return kExitUsage;
    }
    std::vector<ScenarioRun> runs;
    for (const auto& path : scenario_paths) {
      runs.push_back(run_scenario(path, steps, seed, sched_options()));
    }
    ordered_json table = ordered_json::array();
    double base_step = runs.front().report.avg_step_time;
    for (const auto& run : runs) {
      ordered_json row;
      row["scenario"] = run.name;
      row["avg_step_time_s"] = run.report.avg_step_time;
      row["throughput_tokens_per_s"] = run.report.throughput_tokens_per_s;
      row["dollars_per_hour"] = run.costs.cluster_per_hour;
      if (run.costs.per_token) row["dollars_per_token"] = *run.costs.per_token;
      row["speedup_vs_first"] = base_step / run.report.avg_step_time;
      table.push_back(row);
    }
    ensure_out_dir(out_dir);
    write_file((fs::path(out_dir) / "compare.json").string(), table.dump(2) + "\n");
    std::cout << "scenario            step_time_s   tokens/s      $/h      speedup\n";
    for (const auto& row : table) {
      std::printf("%-18s %12.4f %10.2f %9.2f %9.2fx\n",
                  row["scenario"].get<std::string>().c_str(),
                  row["avg_step_time_s"].get<double>(),
                  row["throughput_tokens_per_s"].get<double>(),
                  row["dollars_per_hour"].get<double>(),
                  row["speedup_vs_first"].get<double>());
    }
    return kExitOk;
  }

  if (cmd_validate->parsed()) {
    ClusterGraph cluster = load_cluster_file(inputs.cluster_path);
    std::cout << "cluster ok: " << cluster.size() << " devices, " << cluster.types.size()
              << " gpu types, " << cluster.machines.size() << " machines\n";
    for (const auto& warning : cluster.warnings) {
      std::cout << "warning: " << warning << "\n";
    }
    return kExitOk;
  }

  if (cmd_dump->parsed()) {
    Loaded loaded = load_inputs(inputs);
    int effective_eta = eta >= 0 ? eta : loaded.work.staleness;
    int delta = delta_override > 0 ? delta_override : initial_window(effective_eta);
    std::vector<int> all_devices;
    for (const auto& d : loaded.cluster.devices) all_devices.push_back(d.id);
    auto configs = enumerate_configs(all_devices, loaded.cluster, loaded.work, loaded.calib);
    std::string dump = dump_milp_instance(
        configs, rollout_capacities(all_devices, loaded.cluster),
        static_cast<double>(loaded.work.batch_rollouts) * delta, loaded.work.length_dist.mean());
    ensure_out_dir(out_dir);
    write_file((fs::path(out_dir) / "milp_instance.txt").string(), dump);
    std::cout << dump;
    return kExitOk;
  }

  return kExitUsage;
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
  try {
    return dispatch(args);
  } catch (const MismatchError& e) {
    std::cerr << "mismatch: " << e.what() << "\n";
    return kExitMismatch;
  } catch (const InfeasibleError& e) {
    std::cerr << "infeasible: " << e.what() << "\n";
    return kExitInfeasible;
  } catch (const ParseError& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return kExitInputError;
  } catch (const ValidationError& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return kExitInputError;
  }
}

int run_cli(int argc, const char* const* argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run_cli(args);
}

}  // namespace rlsched
