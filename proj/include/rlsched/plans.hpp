#pragma once

#include <string>
#include <vector>

#include "rlsched/cluster.hpp"

namespace rlsched {

struct PipelineStage {
  std::vector<int> devices;  // sorted ids, type-homogeneous, |devices| = tp * dp
  int tp_degree = 1;
  int dp_degree = 1;
  int layer_count = 0;
};

// Training execution plan (sigma): an ordered pipeline over D_T.
struct TrainPlan {
  std::vector<PipelineStage> stages;
  double predicted_cost = 0;  // seconds per delta-window

  std::vector<int> dp_degrees() const {
    std::vector<int> out;
    out.reserve(stages.size());
    for (const auto& s : stages) out.push_back(s.dp_degree);
    return out;
  }
  int total_layers() const {
    int n = 0;
    for (const auto& s : stages) n += s.layer_count;
    return n;
  }
  std::vector<int> all_devices() const {
    std::vector<int> out;
    for (const auto& s : stages) out.insert(out.end(), s.devices.begin(), s.devices.end());
    return out;
  }
};

struct PackingAssignment {
  // per-DP-worker sequence ids (input order preserved within a worker)
  std::vector<std::vector<int>> sequences;
  std::vector<long long> token_totals;
};

// Template for one rollout inference replica (psi).
struct ReplicaConfig {
  std::vector<int> type_counts;      // devices used per gpu type (v)
  std::vector<int> tp_per_stage;     // TP degree of each pipeline stage (s)
  double throughput = 0;             // estimated tokens/s (h)
  std::vector<int> machine_footprint;  // devices taken from each host machine

  int total_devices() const {
    int n = 0;
    for (int c : type_counts) n += c;
    return n;
  }
  int stage_count() const { return static_cast<int>(tp_per_stage.size()); }
  // Type-pure by construction; index of the single type used.
  int gpu_type() const {
    for (size_t t = 0; t < type_counts.size(); ++t) {
      if (type_counts[t] > 0) return static_cast<int>(t);
    }
    return -1;
  }
};

struct RolloutEntry {
  ReplicaConfig config;
  int replicas = 0;       // y
  double workload = 0;    // x, rollouts assigned over the window
};

// Rollout execution plan (tau).
struct RolloutPlan {
  std::vector<RolloutEntry> entries;
  double makespan = 0;        // Theta, seconds
  double total_rollouts = 0;  // B

  double aggregate_throughput() const {
    double h = 0;
    for (const auto& e : entries) h += e.replicas * e.config.throughput;
    return h;
  }
};

struct CostEstimate {
  double c_train = 0;        // C_T, seconds per window
  double c_rollout = 0;      // generation makespan
  double c_reward = 0;
  double c_update = 0;       // weight synchronization
  double c_infer_total = 0;  // C_I = c_rollout + c_reward + c_update
  int window = 1;            // delta steps

  double objective() const { return std::max(c_train, c_infer_total); }
};

struct ScheduledPlan {
  DevicePartition partition;
  TrainPlan train_plan;
  RolloutPlan rollout_plan;
  CostEstimate costs;
  int window = 1;
  int staleness = 0;  // eta the plan was scheduled for
  int iterations_run = 0;
  bool converged = false;
  std::string cluster_fingerprint;
  std::string calibration_fingerprint;
  std::string workload_fingerprint;
};

}  // namespace rlsched
