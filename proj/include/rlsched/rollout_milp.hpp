#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "rlsched/calibration.hpp"
#include "rlsched/cluster.hpp"
#include "rlsched/plans.hpp"
#include "rlsched/workload.hpp"

namespace rlsched {

struct RolloutSearchOptions {
  int max_stages = 4;
};

// All feasible replica configurations over D_I: type-pure device sets, TP in
// {1,2,4,8} confined to single machines, pipeline stages on distinct
// machines of the same type, memory-feasible, tagged with estimated
// throughput and deduplicated by (v, s).
std::vector<ReplicaConfig> enumerate_configs(const std::vector<int>& rollout_set,
                                             const ClusterGraph& cluster,
                                             const WorkloadSpec& work, const Calibration& calib,
                                             const RolloutSearchOptions& options = {});

// Per-type device counts of a rollout set (the capacity vector i_t).
std::vector<int> rollout_capacities(const std::vector<int>& rollout_set,
                                    const ClusterGraph& cluster);

// Solves the makespan program exactly: integer replica counts y maximizing
// aggregate throughput under per-type capacities (dynamic program over the
// capacity lattice), then workload shares x equalizing finish times.
// Throws InfeasibleError when B > 0 and no replica fits.
RolloutPlan solve_milp(const std::vector<ReplicaConfig>& configs,
                       const std::vector<int>& capacities, double total_rollouts,
                       double mean_len);

// Text dump of a solver instance for offline replay (one record per config).
std::string dump_milp_instance(const std::vector<ReplicaConfig>& configs,
                               const std::vector<int>& capacities, double total_rollouts,
                               double mean_len);

// First window size tried for a staleness bound.
inline int initial_window(int eta) { return eta + 1; }

inline int expand_window(int delta, int cap = 64) { return std::min(2 * delta, cap); }

// Adaptive window sizing: the window doubles until the per-step cost is
// stable (within tol) for two consecutive expansions or the cap is reached.
class WindowExpander {
 public:
  explicit WindowExpander(int eta, int cap = 64, double tol = 0.01)
      : delta_(initial_window(eta)), cap_(std::min(std::max(initial_window(eta), 1), cap)),
        tol_(tol) {
    delta_ = std::min(std::max(delta_, 1), cap);
    cap_ = cap;
  }

  int delta() const { return delta_; }

  // Records the per-step cost observed at the current delta. Returns true
  // when expansion should stop (stable twice in a row, or cap reached).
  bool stable_after(double per_step_cost) {
    bool stable = has_last_ && std::abs(per_step_cost - last_) <= tol_ * std::abs(last_);
    streak_ = stable ? streak_ + 1 : 0;
    last_ = per_step_cost;
    has_last_ = true;
    return streak_ >= 2 || delta_ >= cap_;
  }

  void expand() { delta_ = expand_window(delta_, cap_); }

 private:
  int delta_;
  int cap_;
  double tol_;
  double last_ = 0;
  bool has_last_ = false;
  int streak_ = 0;
};

}  // namespace rlsched
