#pragma once

#include <optional>

#include "rlsched/calibration.hpp"
#include "rlsched/cluster.hpp"
#include "rlsched/plans.hpp"
#include "rlsched/workload.hpp"

namespace rlsched {

// Analytic cost model. Training and prefill are treated as compute-bound,
// decode as HBM-IO-bound; each gpu type carries two fitted efficiency
// scalars (compute, IO). All estimators are pure functions.

struct TrainStageCost {
  double compute = 0;
  double tp_comm = 0;
  double dp_comm = 0;
  double total() const { return compute + tp_comm + dp_comm; }
};

struct TrainCostBreakdown {
  std::vector<TrainStageCost> stages;
  double fill_drain = 0;
  double stage_transfers = 0;
  double per_step = 0;
};

// Compute + collective-communication time of one pipeline stage for one
// training step; layer_count is interpreted against total_layers.
TrainStageCost train_stage_cost(const PipelineStage& stage, const ClusterGraph& cluster,
                                const WorkloadSpec& work, const Calibration& calib,
                                int total_layers);

TrainCostBreakdown train_cost_breakdown(const TrainPlan& plan, const ClusterGraph& cluster,
                                        const WorkloadSpec& work, const Calibration& calib);

// delta-window training cost C_Train = window * per-step time.
double train_step_cost(const TrainPlan& plan, const ClusterGraph& cluster,
                       const WorkloadSpec& work, const Calibration& calib, int window);

// Layer share of pipeline stage `index` when `layers` are split evenly
// across `stages` (remainder to the leading stages).
int layers_for_stage(int layers, int stages, int index);

// Concurrent rollouts a replica can hold, limited by KV-cache memory.
// Returns 0 when the weights alone do not fit.
int replica_concurrency(const ReplicaConfig& config, const ClusterGraph& cluster,
                        const WorkloadSpec& work, const CostModelParams& params);

// Decode roofline at an explicit concurrency (no feasibility check):
// min(IO-bound rate, compute-bound rate) with a per-stage latency penalty.
double replica_rate_at(const ReplicaConfig& config, const ClusterGraph& cluster,
                       const WorkloadSpec& work, const Calibration& calib, double concurrency);

// Estimated tokens/s of one replica, or nullopt when memory-infeasible.
std::optional<double> replica_throughput(const ReplicaConfig& config, const ClusterGraph& cluster,
                                         const WorkloadSpec& work, const Calibration& calib);

// delta-window weight broadcast cost: window transfers over the bottleneck
// cross-partition link plus one fixed latency term.
double weight_sync_cost(const TrainPlan& train_plan, const RolloutPlan& rollout_plan,
                        const DevicePartition& partition, const ClusterGraph& cluster,
                        const WorkloadSpec& work, const Calibration& calib, int window);

// Per-device memory footprints in GB.
double mem_cumsum_train(const PipelineStage& stage, const WorkloadSpec& work,
                        const CostModelParams& params);
double mem_cumsum_rollout(const ReplicaConfig& config, int stage_index, int concurrency,
                          const ClusterGraph& cluster, const WorkloadSpec& work,
                          const CostModelParams& params);
// Dispatcher for a device that appears in a train plan.
double mem_cumsum(const GpuDevice& device, const TrainPlan& plan, const WorkloadSpec& work,
                  const CostModelParams& params);

// True when every device of the plan fits within its HBM capacity.
bool train_plan_fits(const TrainPlan& plan, const ClusterGraph& cluster,
                     const WorkloadSpec& work, const CostModelParams& params);

}  // namespace rlsched
