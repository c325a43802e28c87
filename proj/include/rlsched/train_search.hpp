#pragma once

#include <optional>

#include "rlsched/calibration.hpp"
#include "rlsched/cluster.hpp"
#include "rlsched/plans.hpp"
#include "rlsched/workload.hpp"

namespace rlsched {

struct TrainSearchOptions {
  int max_stages_per_type = 4;
  // At or below this many devices, stage boundaries may fall anywhere;
  // above it they are restricted to machine edges to keep enumeration small.
  int device_granularity_limit = 16;
};

struct TrainSearchResult {
  TrainPlan plan;
  double cost = 0;  // C_T, seconds per window
};

// Enumerates type-constrained pipeline strategies over D_T (contiguous
// type-homogeneous stage blocks, TP in {1,2,4,8} bounded by per-machine
// device counts, layers allocated proportionally to stage FLOPS by largest
// remainder) and returns the cheapest memory-feasible plan. nullopt when no
// candidate fits in memory.
std::optional<TrainSearchResult> constrained_search(const std::vector<int>& train_set,
                                                    const ClusterGraph& cluster,
                                                    const WorkloadSpec& work,
                                                    const Calibration& calib, int window,
                                                    const TrainSearchOptions& options = {});

// Enumerates every candidate plan constrained_search considers, in search
// order. Exposed so tests can re-evaluate the space exhaustively.
std::vector<TrainPlan> enumerate_train_candidates(const std::vector<int>& train_set,
                                                  const ClusterGraph& cluster,
                                                  const WorkloadSpec& work,
                                                  const TrainSearchOptions& options = {});

// Proportional layer allocation with largest-remainder rounding and a
// minimum of one layer per stage.
std::vector<int> allocate_layers(int num_layers, const std::vector<double>& stage_flops);

// Greedy packing: each sequence goes to the least-loaded DP worker
// (by token count), ties to the lowest worker index.
PackingAssignment pack_sequences(const std::vector<long long>& token_lengths, int dp_workers);

}  // namespace rlsched
