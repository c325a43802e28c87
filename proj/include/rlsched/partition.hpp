#pragma once

#include <cstdint>

#include "rlsched/cluster.hpp"

namespace rlsched {

// Binary-search state for the compute fraction assigned to training.
struct GammaState {
  double q = 0;        // lower search bound
  double r = 1;        // upper search bound
  double gamma_l = 1;  // band lower edge
  double gamma_h = 1;  // band upper edge
};

inline GammaState initial_gamma() { return GammaState{}; }

// Halves the search interval toward the more expensive side and centres the
// band on the new midpoint.
GammaState refine_gamma(GammaState state, double c_train, double c_infer);

struct PartitionOptions {
  int exact_threshold = 12;  // exhaustive enumeration at or below this many units
  int restarts = 16;
  std::uint64_t seed = 0x5eedULL;
  double band_epsilon = 1e-9;
  bool force_local_search = false;   // test hook for the heuristic tier
  bool machine_granularity = false;  // move whole machines instead of devices
};

struct PartitionResult {
  DevicePartition partition;
  double objective = 0;
  double compute_fraction = 0;
};

// Objective of Graph_Partition: fraction of pairwise link bandwidth internal
// to D_T plus fraction of HBM bandwidth in D_I.
double partition_objective(const ClusterGraph& cluster, const std::vector<int>& train_set);

double compute_fraction(const ClusterGraph& cluster, const std::vector<int>& train_set);

// Maximizes the objective subject to the compute-fraction band
// [gamma_l - eps, gamma_h + eps]. Exhaustive for small unit counts, greedy
// seed + steepest-ascent local search with restarts otherwise. Throws
// BandInfeasibleError when no bisection satisfies the band.
PartitionResult graph_partition(const ClusterGraph& cluster, const GammaState& gamma,
                                const PartitionOptions& options = {});

// The k best band-feasible bisections with distinct objective values,
// best first. Element 0 is what graph_partition returns.
std::vector<PartitionResult> graph_partition_candidates(const ClusterGraph& cluster,
                                                        const GammaState& gamma,
                                                        const PartitionOptions& options, int k);

}  // namespace rlsched
