#include "rlsched/train_search.hpp"

#include <algorithm>
#include <map>
#include <numeric>

#include "rlsched/cost_model.hpp"

namespace rlsched {

namespace {

std::vector<int> canonical_order(const ClusterGraph& cluster, std::vector<int> ids) {
  std::sort(ids.begin(), ids.end(), [&](int a, int b) {
    const GpuDevice& da = cluster.device(a);
    const GpuDevice& db = cluster.device(b);
    if (da.gpu_type != db.gpu_type) return da.gpu_type < db.gpu_type;
    if (da.machine_id != db.machine_id) return da.machine_id < db.machine_id;
    return a < b;
  });
  return ids;
}

struct TypeRun {
  int type = -1;
  std::vector<int> devices;
  std::vector<int> cut_positions;  // allowed block boundaries (1..len-1)
};

std::vector<TypeRun> build_runs(const ClusterGraph& cluster, const std::vector<int>& ordered,
                                bool device_granularity) {
  std::vector<TypeRun> runs;
  for (int id : ordered) {
    int type = cluster.device(id).gpu_type;
    if (runs.empty() || runs.back().type != type) {
      runs.push_back(TypeRun{type, {}, {}});
    }
    runs.back().devices.push_back(id);
  }
  for (auto& run : runs) {
    for (size_t i = 1; i < run.devices.size(); ++i) {
      bool machine_edge = cluster.device(run.devices[i]).machine_id !=
                          cluster.device(run.devices[i - 1]).machine_id;
      if (device_granularity || machine_edge) {
        run.cut_positions.push_back(static_cast<int>(i));
      }
    }
  }
  return runs;
}

// All ways to split one run into `blocks` contiguous pieces at allowed cuts.
void run_compositions(const TypeRun& run, int blocks, size_t next_cut, std::vector<int>& chosen,
                      std::vector<std::vector<std::vector<int>>>& out) {
  if (static_cast<int>(chosen.size()) == blocks - 1) {
    std::vector<std::vector<int>> pieces;
    int prev = 0;
    for (int cut : chosen) {
      pieces.emplace_back(run.devices.begin() + prev, run.devices.begin() + cut);
      prev = cut;
    }
    pieces.emplace_back(run.devices.begin() + prev, run.devices.end());
    out.push_back(std::move(pieces));
    return;
  }
  int remaining = blocks - 1 - static_cast<int>(chosen.size());
  for (size_t c = next_cut; c + static_cast<size_t>(remaining) <= run.cut_positions.size(); ++c) {
    chosen.push_back(run.cut_positions[c]);
    run_compositions(run, blocks, c + 1, chosen, out);
    chosen.pop_back();
  }
}

int max_devices_per_machine(const ClusterGraph& cluster, const std::vector<int>& block) {
  std::map<int, int> counts;
  int best = 0;
  for (int id : block) {
    best = std::max(best, ++counts[cluster.device(id).machine_id]);
  }
  return best;
}

std::vector<std::pair<int, int>> tp_dp_options(const ClusterGraph& cluster,
                                               const std::vector<int>& block) {
  std::vector<std::pair<int, int>> options;
  int n = static_cast<int>(block.size());
  int per_machine = max_devices_per_machine(cluster, block);
  for (int tp : {1, 2, 4, 8}) {
    if (tp > per_machine || n % tp != 0) continue;
    options.emplace_back(tp, n / tp);
  }
  return options;
}

struct Enumerator {
  const ClusterGraph& cluster;
  const WorkloadSpec& work;
  const std::vector<TypeRun>& runs;
  int max_stages = 0;
  int max_per_run = 0;
  // one entry per complete stage-block assignment
  std::vector<std::vector<std::vector<int>>> block_lists;

  void recurse(size_t run_idx, int stages_used, std::vector<std::vector<int>>& acc) {
    if (run_idx == runs.size()) {
      block_lists.push_back(acc);
      return;
    }
    const TypeRun& run = runs[run_idx];
    int remaining_runs = static_cast<int>(runs.size() - run_idx - 1);
    for (int k = 1; k <= std::min<int>(max_per_run, static_cast<int>(run.devices.size())); ++k) {
      if (stages_used + k + remaining_runs > max_stages) break;
      std::vector<std::vector<std::vector<int>>> comps;
      std::vector<int> chosen;
      run_compositions(run, k, 0, chosen, comps);
      for (auto& comp : comps) {
        size_t before = acc.size();
        for (auto& piece : comp) acc.push_back(piece);
        recurse(run_idx + 1, stages_used + k, acc);
        acc.resize(before);
      }
    }
  }
};

std::vector<std::vector<std::vector<int>>> enumerate_block_lists(
    const std::vector<int>& train_set, const ClusterGraph& cluster, const WorkloadSpec& work,
    const TrainSearchOptions& options) {
  std::vector<int> ordered = canonical_order(cluster, train_set);
  bool device_gran =
      static_cast<int>(ordered.size()) <= options.device_granularity_limit;
  std::vector<TypeRun> runs = build_runs(cluster, ordered, device_gran);
  Enumerator en{cluster, work, runs, 0, 0, {}};
  en.max_per_run = options.max_stages_per_type;
  en.max_stages = std::min<int>(work.num_layers,
                                static_cast<int>(runs.size()) * options.max_stages_per_type);
  std::vector<std::vector<int>> acc;
  if (en.max_stages >= static_cast<int>(runs.size())) {
    en.recurse(0, 0, acc);
  }
  return en.block_lists;
}

}  // namespace

std::vector<int> allocate_layers(int num_layers, const std::vector<double>& stage_flops) {
  int stages = static_cast<int>(stage_flops.size());
  if (stages < 1 || num_layers < stages) {
    throw ValidationError("cannot allocate " + std::to_string(num_layers) + " layers to " +
                          std::to_string(stages) + " stages");
  }
  double total = std::accumulate(stage_flops.begin(), stage_flops.end(), 0.0);
  std::vector<int> layers(static_cast<size_t>(stages), 0);
  std::vector<std::pair<double, int>> remainders;
  int assigned = 0;
  for (int s = 0; s < stages; ++s) {
    double share = num_layers * stage_flops[static_cast<size_t>(s)] / total;
    layers[static_cast<size_t>(s)] = static_cast<int>(share);
    assigned += layers[static_cast<size_t>(s)];
    remainders.emplace_back(share - layers[static_cast<size_t>(s)], s);
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (int i = 0; i < num_layers - assigned; ++i) {
    layers[static_cast<size_t>(remainders[static_cast<size_t>(i) % remainders.size()].second)]++;
  }
  // every stage needs at least one layer
  for (int s = 0; s < stages; ++s) {
    while (layers[static_cast<size_t>(s)] == 0) {
      int donor = static_cast<int>(
          std::max_element(layers.begin(), layers.end()) - layers.begin());
      layers[static_cast<size_t>(donor)]--;
      layers[static_cast<size_t>(s)]++;
    }
  }
  return layers;
}

std::vector<TrainPlan> enumerate_train_candidates(const std::vector<int>& train_set,
                                                  const ClusterGraph& cluster,
                                                  const WorkloadSpec& work,
                                                  const TrainSearchOptions& options) {
  std::vector<TrainPlan> out;
  for (const auto& blocks : enumerate_block_lists(train_set, cluster, work, options)) {
    std::vector<double> stage_flops;
    for (const auto& block : blocks) {
      double f = 0;
      for (int id : block) f += cluster.device(id).flops;
      stage_flops.push_back(f);
    }
    std::vector<int> layers = allocate_layers(work.num_layers, stage_flops);
    std::vector<std::vector<std::pair<int, int>>> per_stage;
    for (const auto& block : blocks) per_stage.push_back(tp_dp_options(cluster, block));

    std::vector<size_t> pick(blocks.size(), 0);
    while (true) {
      TrainPlan plan;
      for (size_t s = 0; s < blocks.size(); ++s) {
        PipelineStage stage;
        stage.devices = blocks[s];
        stage.tp_degree = per_stage[s][pick[s]].first;
        stage.dp_degree = per_stage[s][pick[s]].second;
        stage.layer_count = layers[s];
        plan.stages.push_back(std::move(stage));
      }
      out.push_back(std::move(plan));
      size_t i = 0;
      while (i < pick.size() && ++pick[i] == per_stage[i].size()) {
        pick[i] = 0;
        ++i;
      }
      if (i == pick.size()) break;
    }
  }
  return out;
}

std::optional<TrainSearchResult> constrained_search(const std::vector<int>& train_set,
                                                    const ClusterGraph& cluster,
                                                    const WorkloadSpec& work,
                                                    const Calibration& calib, int window,
                                                    const TrainSearchOptions& options) {
  if (train_set.empty()) {
    throw ValidationError("constrained_search requires a non-empty train set");
  }
  std::optional<TrainSearchResult> best;
  for (const auto& blocks : enumerate_block_lists(train_set, cluster, work, options)) {
    std::vector<double> stage_flops;
    for (const auto& block : blocks) {
      double f = 0;
      for (int id : block) f += cluster.device(id).flops;
      stage_flops.push_back(f);
    }
    std::vector<int> layers = allocate_layers(work.num_layers, stage_flops);

    // The per-step objective is monotone in each stage's communication time,
    // so the best (tp, dp) can be chosen per stage among memory-feasible
    // options.
    TrainPlan plan;
    bool dead = false;
    for (size_t s = 0; s < blocks.size(); ++s) {
      PipelineStage chosen;
      double best_comm = -1;
      for (auto [tp, dp] : tp_dp_options(cluster, blocks[s])) {
        PipelineStage stage;
        stage.devices = blocks[s];
        stage.tp_degree = tp;
        stage.dp_degree = dp;
        stage.layer_count = layers[s];
        double need_gb = mem_cumsum_train(stage, work, calib.params);
        if (need_gb * 1e9 > cluster.device(stage.devices.front()).hbm_capacity) continue;
        // comm terms only; compute is identical across options
        TrainStageCost sc = train_stage_cost(stage, cluster, work, calib, work.num_layers);
        double comm = sc.tp_comm + sc.dp_comm;
        if (best_comm < 0 || comm < best_comm) {
          best_comm = comm;
          chosen = stage;
        }
      }
      if (best_comm < 0) {
        dead = true;
        break;
      }
      plan.stages.push_back(std::move(chosen));
    }
    if (dead) continue;

    double cost = train_step_cost(plan, cluster, work, calib, window);
    if (!best || cost < best->cost) {
      plan.predicted_cost = cost;
      best = TrainSearchResult{std::move(plan), cost};
    }
  }
  return best;
}

PackingAssignment pack_sequences(const std::vector<long long>& token_lengths, int dp_workers) {
  if (dp_workers < 1) {
    throw ValidationError("pack_sequences requires at least one DP worker");
  }
  PackingAssignment out;
  out.sequences.resize(static_cast<size_t>(dp_workers));
  out.token_totals.assign(static_cast<size_t>(dp_workers), 0);
  for (size_t i = 0; i < token_lengths.size(); ++i) {
    int target = 0;
    for (int w = 1; w < dp_workers; ++w) {
      if (out.token_totals[static_cast<size_t>(w)] < out.token_totals[static_cast<size_t>(target)]) {
        target = w;
      }
    }
    out.sequences[static_cast<size_t>(target)].push_back(static_cast<int>(i));
    out.token_totals[static_cast<size_t>(target)] += token_lengths[i];
  }
  return out;
}

}  // namespace rlsched
