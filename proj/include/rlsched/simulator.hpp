#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "rlsched/calibration.hpp"
#include "rlsched/cluster.hpp"
#include "rlsched/plans.hpp"
#include "rlsched/workload.hpp"

namespace rlsched {

enum class SimEventKind {
  rollout_complete,
  batch_ready,
  train_step_done,
  weight_sync_begin,
  weight_sync_end,
  rollout_stall_begin,
  rollout_stall_end,
};

const char* to_string(SimEventKind kind);

struct SimEvent {
  double time = 0;
  SimEventKind kind{};
  int actor = -1;          // replica index, or -1 for the trainer
  long long id = -1;       // rollout id / step index
  long long version = -1;  // weight version attached to the event
  double aux = 0;          // interval start (batch start, step start)
};

struct SimReport {
  int steps_completed = 0;
  // Wall time per step: per-step weight-sync latency plus whichever of the
  // rollout side and the train side bound that step.
  double avg_step_time = 0;
  double avg_step_time_steady = 0;  // same, excluding the first delta steps
  double throughput_tokens_per_s = 0;
  long long max_staleness_observed = 0;
  double rollout_stall_time = 0;
  double trainer_wait_time = 0;
  double rollout_busy_time = 0;
  double train_busy_time = 0;
  double sync_time_total = 0;
  double reward_time_total = 0;
  long long rollouts_produced = 0;
  long long rollouts_consumed = 0;
  long long rollouts_pending = 0;    // completed, not yet consumed
  long long rollouts_in_flight = 0;  // started, not yet completed
  long long tokens_consumed = 0;
  double total_time = 0;
  std::optional<double> dollar_cost_per_token;
  std::vector<int> used_rollout_devices;  // concrete ids assigned to replicas
  std::vector<SimEvent> event_log;
};

struct SimOptions {
  int sync_every = 1;
  bool record_events = true;
};

// Event-level simulation of the asynchronous loop under a scheduled plan:
// replicas generate length-sampled rollout batches, the trainer consumes
// batch_rollouts per step FIFO under the staleness gate, weight syncs pause
// both sides. Deterministic for a fixed seed.
SimReport simulate(const ScheduledPlan& plan, const ClusterGraph& cluster,
                   const WorkloadSpec& work, const Calibration& calib, int steps,
                   std::uint64_t seed, const SimOptions& options = {});

struct CostTable {
  double cluster_per_hour = 0;             // all devices named by the plan
  double train_side_per_hour = 0;
  double rollout_side_per_hour = 0;
  std::optional<double> per_token;         // $/token at simulated throughput
  std::optional<double> train_side_per_token;
  std::optional<double> rollout_side_per_token;
};

// Dollar view of a finished simulation; absent fields mean zero throughput.
CostTable cost_report(const SimReport& report, const ScheduledPlan& plan,
                      const ClusterGraph& cluster, const WorkloadSpec& work);

// Line-oriented export of the event log: "time kind actor id version aux".
std::string export_event_log(const SimReport& report);

}  // namespace rlsched
