#pragma once

#include <optional>

#include "rlsched/calibration.hpp"
#include "rlsched/cluster.hpp"
#include "rlsched/partition.hpp"
#include "rlsched/plans.hpp"
#include "rlsched/rollout_milp.hpp"
#include "rlsched/train_search.hpp"
#include "rlsched/workload.hpp"

namespace rlsched {

struct SchedulerOptions {
  int stable_iters = 20;       // K: consecutive stable iterations to converge
  int iteration_cap = 200;
  double stability_tol = 0.005;  // "stable" = within 0.5% of the streak anchor
  double balance_tol = 0.02;     // stop refining gamma once |C_T-C_I| <= 2% of max
  double interval_min = 1e-3;    // ... or once the search interval is this narrow
  double band_widen_step = 0.05;
  int delta_cap = 64;
  bool expand_window = true;   // adaptive delta; off = single pass at eta+1
  // Extra exploration feeding best-ever tracking only: how many top
  // partition candidates to cost per band, and how many evenly spaced
  // gamma probes to take during the initialization iteration.
  int candidate_width = 8;
  int grid_probes = 15;
  std::optional<int> eta_override;
  std::optional<DevicePartition> initial_partition;
  TrainSearchOptions train;
  RolloutSearchOptions rollout;
  PartitionOptions partition;
};

// Per-iteration record, kept for diagnostics and tests.
struct IterationTrace {
  double gamma_mid = 0;
  double c_train = 0;
  double c_infer = 0;
  double objective = 0;
};

struct ScheduleOutcome {
  ScheduledPlan plan;
  std::vector<IterationTrace> trace;
};

// Alternates Search-Phase (constrained_search + MILP) and Repartition-Phase
// (graph_partition steered by refine_gamma) until max{C_T, C_I} is stable
// for K iterations, wrapped in adaptive window expansion. Returns the
// best-ever plan, preferring plans with C_I >= C_T.
ScheduleOutcome schedule(const ClusterGraph& cluster, const WorkloadSpec& work,
                         const Calibration& calib, const SchedulerOptions& options = {});

}  // namespace rlsched
