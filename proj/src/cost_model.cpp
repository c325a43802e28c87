#include "rlsched/cost_model.hpp"

#include <algorithm>
#include <cmath>

namespace rlsched {

namespace {

constexpr double kActivationBytes = 2.0;  // fp16 activations

double min_link_within_groups(const ClusterGraph& cluster, const std::vector<int>& devices,
                              int group_size, bool strided, int stride) {
  // Devices are grouped either as consecutive chunks (TP groups) or strided
  // across chunks (DP groups). Returns the minimum link bandwidth over all
  // intra-group pairs.
  double min_bw = kInf;
  int n = static_cast<int>(devices.size());
  int groups = n / group_size;
  for (int g = 0; g < groups; ++g) {
    for (int i = 0; i < group_size; ++i) {
      for (int j = i + 1; j < group_size; ++j) {
        int a, b;
        if (strided) {
          a = devices[static_cast<size_t>(i * stride + g)];
          b = devices[static_cast<size_t>(j * stride + g)];
        } else {
          a = devices[static_cast<size_t>(g * group_size + i)];
          b = devices[static_cast<size_t>(g * group_size + j)];
        }
        min_bw = std::min(min_bw, cluster.link(a, b));
      }
    }
  }
  return min_bw;
}

double min_link_between(const ClusterGraph& cluster, const std::vector<int>& a,
                        const std::vector<int>& b) {
  double min_bw = kInf;
  for (int da : a) {
    for (int db : b) {
      min_bw = std::min(min_bw, cluster.link(da, db));
    }
  }
  return min_bw;
}

}  // namespace

int layers_for_stage(int layers, int stages, int index) {
  int base = layers / stages;
  int extra = layers % stages;
  return base + (index < extra ? 1 : 0);
}

TrainStageCost train_stage_cost(const PipelineStage& stage, const ClusterGraph& cluster,
                                const WorkloadSpec& work, const Calibration& calib,
                                int total_layers) {
  TrainStageCost cost;
  const double tokens = work.tokens_per_step();
  const GpuDevice& first = cluster.device(stage.devices.front());
  const std::string& type_name = cluster.types[static_cast<size_t>(first.gpu_type)].name;
  const TypeEfficiency& eff = calib.for_type(type_name);

  double stage_flops_capacity = 0;
  for (int d : stage.devices) stage_flops_capacity += cluster.device(d).flops;

  double layer_frac = total_layers > 0 ? static_cast<double>(stage.layer_count) / total_layers : 0;
  double flops_needed = work.train_flops_per_token() * tokens * layer_frac;
  cost.compute = flops_needed / (eff.compute_efficiency * stage_flops_capacity);

  if (stage.tp_degree > 1 && tokens > 0) {
    double beta = min_link_within_groups(cluster, stage.devices, stage.tp_degree,
                                         /*strided=*/false, 0);
    double per_replica_tokens = tokens / stage.dp_degree;
    double volume = calib.params.tp_allreduce_coeff * stage.layer_count * per_replica_tokens *
                    work.hidden_dim * kActivationBytes * 2.0 *
                    (stage.tp_degree - 1) / stage.tp_degree;
    cost.tp_comm = volume / beta;
  }
  if (stage.dp_degree > 1) {
    double beta = min_link_within_groups(cluster, stage.devices, stage.dp_degree,
                                         /*strided=*/true, stage.tp_degree);
    double shard_bytes = work.params() * layer_frac * calib.params.grad_bytes_per_param /
                         stage.tp_degree;
    double volume = 2.0 * shard_bytes * (stage.dp_degree - 1) / stage.dp_degree;
    cost.dp_comm = volume / beta;
  }
  return cost;
}

TrainCostBreakdown train_cost_breakdown(const TrainPlan& plan, const ClusterGraph& cluster,
                                        const WorkloadSpec& work, const Calibration& calib) {
  TrainCostBreakdown out;
  const double tokens = work.tokens_per_step();
  const int total_layers = plan.total_layers();
  const int stage_count = static_cast<int>(plan.stages.size());

  double max_stage_time = 0;
  double max_compute = 0;
  for (const auto& stage : plan.stages) {
    TrainStageCost cost = train_stage_cost(stage, cluster, work, calib, total_layers);
    out.stages.push_back(cost);
    max_stage_time = std::max(max_stage_time, cost.total());
    max_compute = std::max(max_compute, cost.compute);
  }

  if (stage_count > 1) {
    out.fill_drain = static_cast<double>(stage_count - 1) / work.micro_batches * max_compute;
    if (tokens > 0) {
      for (int s = 0; s + 1 < stage_count; ++s) {
        double beta = min_link_between(cluster, plan.stages[static_cast<size_t>(s)].devices,
                                       plan.stages[static_cast<size_t>(s + 1)].devices);
        out.stage_transfers += tokens * work.hidden_dim * kActivationBytes / beta;
      }
    }
  }
  out.per_step = max_stage_time + out.fill_drain + out.stage_transfers;
  return out;
}

double train_step_cost(const TrainPlan& plan, const ClusterGraph& cluster,
                       const WorkloadSpec& work, const Calibration& calib, int window) {
  return window * train_cost_breakdown(plan, cluster, work, calib).per_step;
}

int replica_concurrency(const ReplicaConfig& config, const ClusterGraph& cluster,
                        const WorkloadSpec& work, const CostModelParams& params) {
  const int type = config.gpu_type();
  if (type < 0) return 0;
  const GpuTypeInfo& info = cluster.types[static_cast<size_t>(type)];
  const int stages = config.stage_count();
  int best = params.max_concurrency;
  for (int s = 0; s < stages; ++s) {
    int layers = layers_for_stage(work.num_layers, stages, s);
    int tp = config.tp_per_stage[static_cast<size_t>(s)];
    double layer_frac = static_cast<double>(layers) / work.num_layers;
    double weight_bytes = work.params() * layer_frac * work.bytes_per_param_infer / tp;
    double free_bytes = info.hbm_capacity - weight_bytes;
    if (free_bytes < 0) return 0;
    double kv_seq_bytes = work.kv_bytes_per_token() * work.mean_total_len() * layer_frac / tp;
    if (kv_seq_bytes > 0) {
      best = std::min(best, static_cast<int>(free_bytes / kv_seq_bytes));
    }
  }
  return std::max(best, 0);
}

double replica_rate_at(const ReplicaConfig& config, const ClusterGraph& cluster,
                       const WorkloadSpec& work, const Calibration& calib, double concurrency) {
  double agg_bw = 0;
  double agg_flops = 0;
  for (size_t t = 0; t < config.type_counts.size(); ++t) {
    if (config.type_counts[t] == 0) continue;
    const GpuTypeInfo& info = cluster.types[t];
    const TypeEfficiency& eff = calib.for_type(info.name);
    agg_bw += config.type_counts[t] * info.hbm_bandwidth * eff.io_efficiency;
    agg_flops += config.type_counts[t] * info.flops * eff.compute_efficiency;
  }
  double io_rate = concurrency * agg_bw / work.model_bytes_infer();
  double compute_rate = agg_flops / work.infer_flops_per_token();
  double penalty = 1.0 + calib.params.stage_latency_penalty * (config.stage_count() - 1);
  return std::min(io_rate, compute_rate) / penalty;
}

std::optional<double> replica_throughput(const ReplicaConfig& config, const ClusterGraph& cluster,
                                         const WorkloadSpec& work, const Calibration& calib) {
  int concurrency = replica_concurrency(config, cluster, work, calib.params);
  if (concurrency < 1) return std::nullopt;
  return replica_rate_at(config, cluster, work, calib, concurrency);
}

double weight_sync_cost(const TrainPlan& /*train_plan*/, const RolloutPlan& rollout_plan,
                        const DevicePartition& partition, const ClusterGraph& cluster,
                        const WorkloadSpec& work, const Calibration& calib, int window) {
  double bottleneck = kInf;
  for (const auto& entry : rollout_plan.entries) {
    if (entry.replicas < 1) continue;
    int type = entry.config.gpu_type();
    // Best entry link into any rollout device of the replica's type.
    double best = 0;
    for (int dt : partition.train_set) {
      for (int di : partition.rollout_set) {
        if (cluster.device(di).gpu_type != type) continue;
        best = std::max(best, cluster.link(dt, di));
      }
    }
    if (best > 0) bottleneck = std::min(bottleneck, best);
  }
  double transfer = 0;
  if (bottleneck < kInf && work.model_bytes_infer() > 0) {
    transfer = work.model_bytes_infer() / bottleneck;
  }
  return window * transfer + calib.params.sync_latency_s;
}

double mem_cumsum_train(const PipelineStage& stage, const WorkloadSpec& work,
                        const CostModelParams& params) {
  double layer_frac = static_cast<double>(stage.layer_count) / work.num_layers;
  double weight_bytes = work.params() * layer_frac * work.bytes_per_param_train / stage.tp_degree;
  double tokens_per_microbatch =
      work.tokens_per_step() / stage.dp_degree / work.micro_batches;
  double act_bytes = params.activation_coeff * tokens_per_microbatch * work.hidden_dim *
                     kActivationBytes * stage.layer_count / stage.tp_degree;
  return (weight_bytes + act_bytes) / 1e9;
}

double mem_cumsum_rollout(const ReplicaConfig& config, int stage_index, int concurrency,
                          const ClusterGraph& /*cluster*/, const WorkloadSpec& work,
                          const CostModelParams& /*params*/) {
  int stages = config.stage_count();
  int layers = layers_for_stage(work.num_layers, stages, stage_index);
  int tp = config.tp_per_stage[static_cast<size_t>(stage_index)];
  double layer_frac = static_cast<double>(layers) / work.num_layers;
  double weight_bytes = work.params() * layer_frac * work.bytes_per_param_infer / tp;
  double kv_bytes = concurrency * work.mean_total_len() * work.kv_bytes_per_token() *
                    layer_frac / tp;
  return (weight_bytes + kv_bytes) / 1e9;
}

double mem_cumsum(const GpuDevice& device, const TrainPlan& plan, const WorkloadSpec& work,
                  const CostModelParams& params) {
  for (const auto& stage : plan.stages) {
    if (std::find(stage.devices.begin(), stage.devices.end(), device.id) != stage.devices.end()) {
      return mem_cumsum_train(stage, work, params);
    }
  }
  throw ValidationError("device " + std::to_string(device.id) + " is not in the train plan");
}

bool train_plan_fits(const TrainPlan& plan, const ClusterGraph& cluster,
                     const WorkloadSpec& work, const CostModelParams& params) {
  for (const auto& stage : plan.stages) {
    double need_gb = mem_cumsum_train(stage, work, params);
    for (int d : stage.devices) {
      if (need_gb * 1e9 > cluster.device(d).hbm_capacity) return false;
    }
  }
  return true;
}

}  // namespace rlsched
