#include "rlsched/rollout_milp.hpp"

#include <algorithm>
#include <map>
#include <sstream>

#include "rlsched/cost_model.hpp"

namespace rlsched {

namespace {

// Non-increasing TP multisets of length `stages` drawn from {1,2,4,8}.
void tp_multisets(int stages, int max_tp, std::vector<int>& acc,
                  std::vector<std::vector<int>>& out) {
  if (static_cast<int>(acc.size()) == stages) {
    out.push_back(acc);
    return;
  }
  for (int tp : {8, 4, 2, 1}) {
    if (tp > max_tp) continue;
    acc.push_back(tp);
    tp_multisets(stages, tp, acc, out);
    acc.pop_back();
  }
}

}  // namespace

std::vector<int> rollout_capacities(const std::vector<int>& rollout_set,
                                    const ClusterGraph& cluster) {
  std::vector<int> caps(cluster.types.size(), 0);
  for (int id : rollout_set) {
    caps[static_cast<size_t>(cluster.device(id).gpu_type)]++;
  }
  return caps;
}

std::vector<ReplicaConfig> enumerate_configs(const std::vector<int>& rollout_set,
                                             const ClusterGraph& cluster,
                                             const WorkloadSpec& work, const Calibration& calib,
                                             const RolloutSearchOptions& options) {
  if (rollout_set.empty()) {
    throw ValidationError("enumerate_configs requires a non-empty rollout set");
  }
  std::vector<ReplicaConfig> out;
  const int type_count = static_cast<int>(cluster.types.size());
  for (int t = 0; t < type_count; ++t) {
    // available devices per machine of this type
    std::map<int, int> machine_avail;
    for (int id : rollout_set) {
      const GpuDevice& d = cluster.device(id);
      if (d.gpu_type == t) machine_avail[d.machine_id]++;
    }
    if (machine_avail.empty()) continue;
    std::vector<int> avail;
    for (auto& [m, c] : machine_avail) avail.push_back(c);
    std::sort(avail.rbegin(), avail.rend());

    int max_stages = std::min<int>({options.max_stages, static_cast<int>(avail.size()),
                                    work.num_layers});
    for (int stages = 1; stages <= max_stages; ++stages) {
      std::vector<std::vector<int>> multisets;
      std::vector<int> acc;
      tp_multisets(stages, 8, acc, multisets);
      for (const auto& tps : multisets) {
        // stage k takes the k-th largest machine; TP stays within it
        bool fits = true;
        for (int s = 0; s < stages; ++s) {
          if (tps[static_cast<size_t>(s)] > avail[static_cast<size_t>(s)]) {
            fits = false;
            break;
          }
        }
        if (!fits) continue;
        ReplicaConfig config;
        config.type_counts.assign(static_cast<size_t>(type_count), 0);
        for (int tp : tps) config.type_counts[static_cast<size_t>(t)] += tp;
        config.tp_per_stage = tps;
        config.machine_footprint = tps;
        auto h = replica_throughput(config, cluster, work, calib);
        if (!h) continue;
        config.throughput = *h;
        out.push_back(std::move(config));
      }
    }
  }
  return out;
}

RolloutPlan solve_milp(const std::vector<ReplicaConfig>& configs,
                       const std::vector<int>& capacities, double total_rollouts,
                       double mean_len) {
  RolloutPlan plan;
  plan.total_rollouts = total_rollouts;
  if (total_rollouts <= 0) {
    return plan;  // nothing to schedule
  }
  if (configs.empty()) {
    throw InfeasibleError("no replica configuration available");
  }
  const int dims = static_cast<int>(capacities.size());

  // Mixed-radix lattice over the capacity vector.
  std::vector<long long> stride(static_cast<size_t>(dims), 1);
  long long states = 1;
  for (int t = 0; t < dims; ++t) {
    stride[static_cast<size_t>(t)] = states;
    states *= capacities[static_cast<size_t>(t)] + 1;
    if (states > 50'000'000) {
      throw ValidationError("capacity lattice too large for the exact solver");
    }
  }

  std::vector<double> best(static_cast<size_t>(states), 0.0);
  std::vector<int> choice(static_cast<size_t>(states), -1);
  std::vector<int> state_vec(static_cast<size_t>(dims), 0);
  for (long long s = 0; s < states; ++s) {
    long long rem = s;
    for (int t = dims - 1; t >= 0; --t) {
      state_vec[static_cast<size_t>(t)] = static_cast<int>(rem / stride[static_cast<size_t>(t)]);
      rem %= stride[static_cast<size_t>(t)];
    }
    for (size_t c = 0; c < configs.size(); ++c) {
      long long prev = s;
      bool ok = true;
      for (int t = 0; t < dims; ++t) {
        int need = configs[c].type_counts[static_cast<size_t>(t)];
        if (state_vec[static_cast<size_t>(t)] < need) {
          ok = false;
          break;
        }
        prev -= static_cast<long long>(need) * stride[static_cast<size_t>(t)];
      }
      if (!ok) continue;
      double candidate = best[static_cast<size_t>(prev)] + configs[c].throughput;
      if (candidate > best[static_cast<size_t>(s)]) {
        best[static_cast<size_t>(s)] = candidate;
        choice[static_cast<size_t>(s)] = static_cast<int>(c);
      }
    }
  }

  long long full = states - 1;
  double aggregate = best[static_cast<size_t>(full)];
  if (aggregate <= 0) {
    throw InfeasibleError("rollout capacity cannot host any replica");
  }

  std::vector<int> counts(configs.size(), 0);
  long long cursor = full;
  while (choice[static_cast<size_t>(cursor)] >= 0) {
    int c = choice[static_cast<size_t>(cursor)];
    counts[static_cast<size_t>(c)]++;
    for (int t = 0; t < dims; ++t) {
      cursor -= static_cast<long long>(configs[static_cast<size_t>(c)].type_counts[static_cast<size_t>(t)]) *
                stride[static_cast<size_t>(t)];
    }
  }

  plan.makespan = total_rollouts * mean_len / aggregate;
  for (size_t c = 0; c < configs.size(); ++c) {
    if (counts[c] == 0) continue;
    RolloutEntry entry;
    entry.config = configs[c];
    entry.replicas = counts[c];
    entry.workload = total_rollouts * counts[c] * configs[c].throughput / aggregate;
    plan.entries.push_back(std::move(entry));
  }
  return plan;
}

std::string dump_milp_instance(const std::vector<ReplicaConfig>& configs,
                               const std::vector<int>& capacities, double total_rollouts,
                               double mean_len) {
  std::ostringstream out;
  out.precision(17);
  out << "# milp-instance v1\n";
  out << "capacities:";
  for (int c : capacities) out << ' ' << c;
  out << "\nB: " << total_rollouts << "\nlen: " << mean_len << '\n';
  for (const auto& config : configs) {
    out << "config:";
    for (int v : config.type_counts) out << ' ' << v;
    out << " |";
    for (int tp : config.tp_per_stage) out << ' ' << tp;
    out << " | " << config.throughput << '\n';
  }
  return out.str();
}

}  // namespace rlsched
