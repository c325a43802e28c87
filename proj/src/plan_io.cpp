#include "rlsched/plan_io.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace rlsched {

using nlohmann::json;
using ordered_json = nlohmann::ordered_json;

namespace {

constexpr const char* kPlanFormat = "rlsched-plan/1";

ordered_json stage_to_json(const PipelineStage& stage) {
  return ordered_json{{"devices", stage.devices},
                      {"tp", stage.tp_degree},
                      {"dp", stage.dp_degree},
                      {"layers", stage.layer_count}};
}

ordered_json config_to_json(const ReplicaConfig& config) {
  return ordered_json{{"type_counts", config.type_counts},
                      {"tp_per_stage", config.tp_per_stage},
                      {"throughput_tps", config.throughput},
                      {"machine_footprint", config.machine_footprint}};
}

ReplicaConfig config_from_json(const json& j) {
  ReplicaConfig config;
  config.type_counts = j.at("type_counts").get<std::vector<int>>();
  config.tp_per_stage = j.at("tp_per_stage").get<std::vector<int>>();
  config.throughput = j.at("throughput_tps").get<double>();
  config.machine_footprint = j.at("machine_footprint").get<std::vector<int>>();
  return config;
}

}  // namespace

std::string plan_to_json(const ScheduledPlan& plan) {
  ordered_json doc;
  doc["format"] = kPlanFormat;
  doc["cluster_fingerprint"] = plan.cluster_fingerprint;
  doc["calibration_fingerprint"] = plan.calibration_fingerprint;
  doc["workload_fingerprint"] = plan.workload_fingerprint;
  doc["window_steps"] = plan.window;
  doc["staleness"] = plan.staleness;
  doc["iterations_run"] = plan.iterations_run;
  doc["converged"] = plan.converged;
  doc["partition"] = {{"train", plan.partition.train_set},
                      {"rollout", plan.partition.rollout_set}};
  ordered_json stages = ordered_json::array();
  for (const auto& stage : plan.train_plan.stages) stages.push_back(stage_to_json(stage));
  doc["train_plan"] = {{"stages", stages}, {"cost_s", plan.train_plan.predicted_cost}};
  ordered_json entries = ordered_json::array();
  for (const auto& entry : plan.rollout_plan.entries) {
    ordered_json e = config_to_json(entry.config);
    e["replicas"] = entry.replicas;
    e["workload_rollouts"] = entry.workload;
    entries.push_back(e);
  }
  doc["rollout_plan"] = {{"entries", entries},
                         {"makespan_s", plan.rollout_plan.makespan},
                         {"total_rollouts", plan.rollout_plan.total_rollouts}};
  doc["costs"] = {{"train_s", plan.costs.c_train},
                  {"rollout_s", plan.costs.c_rollout},
                  {"reward_s", plan.costs.c_reward},
                  {"update_s", plan.costs.c_update},
                  {"infer_total_s", plan.costs.c_infer_total},
                  {"window_steps", plan.costs.window}};
  return doc.dump(2) + "\n";
}

ScheduledPlan plan_from_json(const std::string& json_text) {
  json doc = json::parse(json_text, nullptr, false);
  if (doc.is_discarded()) {
    throw ParseError("plan document is not valid JSON");
  }
  ScheduledPlan plan;
  try {
    if (doc.at("format").get<std::string>() != kPlanFormat) {
      throw ParseError("unsupported plan format: " + doc["format"].dump());
    }
    plan.cluster_fingerprint = doc.at("cluster_fingerprint").get<std::string>();
    plan.calibration_fingerprint = doc.at("calibration_fingerprint").get<std::string>();
    plan.workload_fingerprint = doc.at("workload_fingerprint").get<std::string>();
    plan.window = doc.at("window_steps").get<int>();
    plan.staleness = doc.at("staleness").get<int>();
    plan.iterations_run = doc.at("iterations_run").get<int>();
    plan.converged = doc.at("converged").get<bool>();
    plan.partition.train_set = doc.at("partition").at("train").get<std::vector<int>>();
    plan.partition.rollout_set = doc.at("partition").at("rollout").get<std::vector<int>>();
    for (const auto& s : doc.at("train_plan").at("stages")) {
      PipelineStage stage;
      stage.devices = s.at("devices").get<std::vector<int>>();
      stage.tp_degree = s.at("tp").get<int>();
      stage.dp_degree = s.at("dp").get<int>();
      stage.layer_count = s.at("layers").get<int>();
      plan.train_plan.stages.push_back(std::move(stage));
    }
    plan.train_plan.predicted_cost = doc.at("train_plan").at("cost_s").get<double>();
    for (const auto& e : doc.at("rollout_plan").at("entries")) {
      RolloutEntry entry;
      entry.config = config_from_json(e);
      entry.replicas = e.at("replicas").get<int>();
      entry.workload = e.at("workload_rollouts").get<double>();
      plan.rollout_plan.entries.push_back(std::move(entry));
    }
    plan.rollout_plan.makespan = doc.at("rollout_plan").at("makespan_s").get<double>();
    plan.rollout_plan.total_rollouts = doc.at("rollout_plan").at("total_rollouts").get<double>();
    const auto& costs = doc.at("costs");
    plan.costs.c_train = costs.at("train_s").get<double>();
    plan.costs.c_rollout = costs.at("rollout_s").get<double>();
    plan.costs.c_reward = costs.at("reward_s").get<double>();
    plan.costs.c_update = costs.at("update_s").get<double>();
    plan.costs.c_infer_total = costs.at("infer_total_s").get<double>();
    plan.costs.window = costs.at("window_steps").get<int>();
  } catch (const json::exception& e) {
    throw ParseError(std::string("plan document: ") + e.what());
  }
  return plan;
}

ScheduledPlan plan_from_file(const std::string& path) {
  return plan_from_json(read_file(path));
}

ExplainReport explain(const ScheduledPlan& plan, const ClusterGraph& cluster,
                      const WorkloadSpec& work, const Calibration& calib) {
  ordered_json doc;
  doc["window_steps"] = plan.window;
  doc["staleness"] = plan.staleness;
  doc["converged"] = plan.converged;
  doc["iterations_run"] = plan.iterations_run;

  ordered_json roles = ordered_json::array();
  std::vector<std::string> role(static_cast<size_t>(cluster.size()), "idle");
  for (int id : plan.partition.train_set) role[static_cast<size_t>(id)] = "train";
  for (int id : plan.partition.rollout_set) role[static_cast<size_t>(id)] = "rollout";
  for (int id = 0; id < cluster.size(); ++id) {
    const GpuDevice& d = cluster.device(id);
    roles.push_back(ordered_json{{"device", id},
                                 {"gpu_type", cluster.types[static_cast<size_t>(d.gpu_type)].name},
                                 {"machine", cluster.machines[static_cast<size_t>(d.machine_id)].name},
                                 {"role", role[static_cast<size_t>(id)]}});
  }
  doc["devices"] = roles;

  ordered_json stages = ordered_json::array();
  for (const auto& stage : plan.train_plan.stages) {
    stages.push_back(stage_to_json(stage));
  }
  doc["train_plan"] = {{"stages", stages}, {"cost_s", plan.train_plan.predicted_cost}};

  ordered_json replica_table = ordered_json::array();
  for (const auto& entry : plan.rollout_plan.entries) {
    ordered_json row = config_to_json(entry.config);
    row["replicas"] = entry.replicas;
    row["workload_rollouts"] = entry.workload;
    replica_table.push_back(row);
  }
  doc["replica_table"] = replica_table;

  doc["costs"] = {{"train_s", plan.costs.c_train},
                  {"rollout_s", plan.costs.c_rollout},
                  {"reward_s", plan.costs.c_reward},
                  {"update_s", plan.costs.c_update},
                  {"infer_total_s", plan.costs.c_infer_total},
                  {"window_steps", plan.costs.window}};

  // weight-sync latency plus the slower side, per step
  double step_time =
      (std::max(plan.costs.c_train, plan.costs.c_rollout + plan.costs.c_reward) +
       plan.costs.c_update) /
      plan.window;
  double tokens_per_s = step_time > 0 ? work.tokens_per_step() / step_time : 0;
  doc["predicted_step_time_s"] = step_time;
  doc["predicted_tokens_per_s"] = tokens_per_s;

  double train_price = 0;
  for (int id : plan.partition.train_set) train_price += cluster.device(id).price_per_hour;
  double rollout_price = 0;
  int used_rollout_devices = 0;
  for (const auto& entry : plan.rollout_plan.entries) {
    int type = entry.config.gpu_type();
    int devices = entry.replicas * entry.config.total_devices();
    used_rollout_devices += devices;
    rollout_price += devices * cluster.types[static_cast<size_t>(type)].price_per_hour;
  }
  doc["dollars_per_hour"] = {{"train", train_price},
                             {"rollout", rollout_price},
                             {"total", train_price + rollout_price}};
  if (tokens_per_s > 0) {
    doc["dollars_per_token"] = (train_price + rollout_price) / 3600.0 / tokens_per_s;
  }

  // side-attributed per-token rates while each side is busy
  if (plan.costs.c_train > 0) {
    double train_tps = work.tokens_per_step() * plan.window / plan.costs.c_train;
    doc["train_side_per_token"] = train_price / 3600.0 / train_tps;
  }
  double agg = plan.rollout_plan.aggregate_throughput();
  if (agg > 0) {
    doc["rollout_side_per_token"] = rollout_price / 3600.0 / agg;
  }
  doc["calibration_fingerprint"] = plan.calibration_fingerprint;

  ExplainReport report;
  report.json = doc.dump(2) + "\n";

  std::ostringstream text;
  text << "scheduled plan (window " << plan.window << " steps, eta " << plan.staleness << ")\n";
  text << "  converged: " << (plan.converged ? "yes" : "no") << " after " << plan.iterations_run
       << " iterations\n";
  text << "  train devices: " << plan.partition.train_set.size()
       << ", rollout devices: " << plan.partition.rollout_set.size() << " (" << used_rollout_devices
       << " in replicas)\n";
  text << "  pipeline stages:\n";
  for (size_t s = 0; s < plan.train_plan.stages.size(); ++s) {
    const auto& stage = plan.train_plan.stages[s];
    text << "    stage " << s << ": " << stage.devices.size() << " devices, tp=" << stage.tp_degree
         << " dp=" << stage.dp_degree << " layers=" << stage.layer_count << "\n";
  }
  text << "  replicas:\n";
  for (const auto& entry : plan.rollout_plan.entries) {
    text << "    y=" << entry.replicas << " x " << entry.config.total_devices()
         << " device(s), stages=" << entry.config.stage_count()
         << ", h=" << entry.config.throughput << " tok/s, workload=" << entry.workload << "\n";
  }
  text << "  costs (s/window): train=" << plan.costs.c_train
       << " rollout=" << plan.costs.c_rollout << " reward=" << plan.costs.c_reward
       << " update=" << plan.costs.c_update << " infer_total=" << plan.costs.c_infer_total << "\n";
  text << "  predicted step time: " << step_time << " s, tokens/s: " << tokens_per_s << "\n";
  text << "  price: $" << train_price + rollout_price << "/h\n";
  report.text = text.str();
  (void)calib;
  return report;
}

std::string sim_report_to_json(const SimReport& report, int warmup_steps) {
  ordered_json doc;
  doc["steps_completed"] = report.steps_completed;
  doc["avg_step_time_s"] = report.avg_step_time;
  doc["avg_step_time_steady_s"] = report.avg_step_time_steady;
  doc["warmup_steps_excluded"] = warmup_steps;
  doc["throughput_tokens_per_s"] = report.throughput_tokens_per_s;
  doc["max_staleness_observed"] = report.max_staleness_observed;
  doc["rollout_stall_time_s"] = report.rollout_stall_time;
  doc["trainer_wait_time_s"] = report.trainer_wait_time;
  doc["rollout_busy_time_s"] = report.rollout_busy_time;
  doc["train_busy_time_s"] = report.train_busy_time;
  doc["sync_time_total_s"] = report.sync_time_total;
  doc["reward_time_total_s"] = report.reward_time_total;
  doc["rollouts"] = {{"produced", report.rollouts_produced},
                     {"consumed", report.rollouts_consumed},
                     {"pending", report.rollouts_pending},
                     {"in_flight", report.rollouts_in_flight}};
  doc["tokens_consumed"] = report.tokens_consumed;
  doc["total_time_s"] = report.total_time;
  if (report.dollar_cost_per_token) {
    doc["dollar_cost_per_token"] = *report.dollar_cost_per_token;
  }
  doc["used_rollout_devices"] = report.used_rollout_devices;
  return doc.dump(2) + "\n";
}

std::string cost_table_to_json(const CostTable& table) {
  ordered_json doc;
  doc["cluster_per_hour"] = table.cluster_per_hour;
  doc["train_side_per_hour"] = table.train_side_per_hour;
  doc["rollout_side_per_hour"] = table.rollout_side_per_hour;
  if (table.per_token) doc["per_token"] = *table.per_token;
  if (table.train_side_per_token) doc["train_side_per_token"] = *table.train_side_per_token;
  if (table.rollout_side_per_token) doc["rollout_side_per_token"] = *table.rollout_side_per_token;
  return doc.dump(2) + "\n";
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw ValidationError("cannot write file: " + path);
  }
  out << content;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw ParseError("cannot open file: " + path);
  }
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace rlsched
