#pragma once

#include <string>

#include "rlsched/calibration.hpp"
#include "rlsched/cluster.hpp"
#include "rlsched/plans.hpp"
#include "rlsched/simulator.hpp"
#include "rlsched/workload.hpp"

namespace rlsched {

// Versioned plan document; round-trips losslessly.
std::string plan_to_json(const ScheduledPlan& plan);
ScheduledPlan plan_from_json(const std::string& json_text);
ScheduledPlan plan_from_file(const std::string& path);

struct ExplainReport {
  std::string json;  // machine-readable
  std::string text;  // human-readable
};

// Renders a scheduled plan: per-device roles, stage layout, replica table,
// cost breakdown, predicted throughput and dollar rates.
ExplainReport explain(const ScheduledPlan& plan, const ClusterGraph& cluster,
                      const WorkloadSpec& work, const Calibration& calib);

std::string sim_report_to_json(const SimReport& report, int warmup_steps);
std::string cost_table_to_json(const CostTable& table);

void write_file(const std::string& path, const std::string& content);
std::string read_file(const std::string& path);

}  // namespace rlsched
