#include "rlsched/scheduler.hpp"

#include <algorithm>
#include <cmath>

#include "rlsched/cost_model.hpp"

namespace rlsched {

namespace {

struct IterationResult {
  PartitionResult partition;
  std::optional<TrainSearchResult> train;
  std::optional<RolloutPlan> rollout;
  CostEstimate costs;
  bool feasible() const { return train.has_value() && rollout.has_value(); }
};

// graph_partition with the band progressively widened on infeasibility.
std::vector<PartitionResult> partition_with_widening(const ClusterGraph& cluster,
                                                     const GammaState& gamma,
                                                     const SchedulerOptions& options) {
  double widen = 0;
  while (true) {
    GammaState g = gamma;
    g.gamma_l = std::max(0.0, gamma.gamma_l - widen);
    g.gamma_h = std::min(1.0, gamma.gamma_h + widen);
    try {
      return graph_partition_candidates(cluster, g, options.partition,
                                        std::max(1, options.candidate_width));
    } catch (const BandInfeasibleError&) {
      if (g.gamma_l <= 0.0 && g.gamma_h >= 1.0) {
        throw InfeasibleError(
            "no feasible bisection exists even with an unconstrained band");
      }
      widen += options.band_widen_step;
    }
  }
}

IterationResult evaluate_partition(const PartitionResult& part, const ClusterGraph& cluster,
                                   const WorkloadSpec& work, const Calibration& calib,
                                   int window, const SchedulerOptions& options) {
  IterationResult it;
  it.partition = part;
  it.costs.window = window;
  it.costs.c_reward = work.reward_cost_const;

  it.train = constrained_search(part.partition.train_set, cluster, work, calib, window,
                                options.train);
  double total_rollouts = static_cast<double>(work.batch_rollouts) * window;
  auto configs = enumerate_configs(part.partition.rollout_set, cluster, work, calib,
                                   options.rollout);
  if (!configs.empty()) {
    try {
      it.rollout = solve_milp(configs, rollout_capacities(part.partition.rollout_set, cluster),
                              total_rollouts, work.length_dist.mean());
    } catch (const InfeasibleError&) {
      it.rollout.reset();
    }
  }

  it.costs.c_train = it.train ? it.train->cost : kInf;
  if (it.rollout && it.train) {
    it.costs.c_rollout = it.rollout->makespan;
    it.costs.c_update = weight_sync_cost(it.train->plan, *it.rollout, part.partition, cluster,
                                         work, calib, window);
    it.costs.c_infer_total = it.costs.c_rollout + it.costs.c_reward + it.costs.c_update;
  } else {
    it.costs.c_rollout = it.rollout ? it.rollout->makespan : kInf;
    it.costs.c_infer_total = kInf;
  }
  return it;
}

struct BestTracker {
  std::optional<IterationResult> conforming;  // C_I >= C_T
  std::optional<IterationResult> any;

  void offer(const IterationResult& it) {
    if (!it.feasible()) return;
    double m = it.costs.objective();
    if (!any || m < any->costs.objective()) any = it;
    if (it.costs.c_infer_total >= it.costs.c_train) {
      if (!conforming || m < conforming->costs.objective()) conforming = it;
    }
  }

  const IterationResult* result() const {
    if (conforming) return &*conforming;
    if (any) return &*any;
    return nullptr;
  }
};

struct AlgorithmRun {
  std::optional<IterationResult> best;
  std::vector<IterationTrace> trace;
  int iterations = 0;
  bool converged = false;
};

// Memoizes the search phase per train set: partitions recur across gamma
// values and probe passes, and the estimators are pure.
struct SearchPhase {
  const ClusterGraph& cluster;
  const WorkloadSpec& work;
  const Calibration& calib;
  int window;
  const SchedulerOptions& options;
  std::map<std::vector<int>, IterationResult> memo;

  const IterationResult& eval(const PartitionResult& part) {
    auto found = memo.find(part.partition.train_set);
    if (found != memo.end()) return found->second;
    IterationResult it = evaluate_partition(part, cluster, work, calib, window, options);
    return memo.emplace(part.partition.train_set, std::move(it)).first->second;
  }
};

AlgorithmRun run_two_phase(const ClusterGraph& cluster, const WorkloadSpec& work,
                           const Calibration& calib, int window,
                           const SchedulerOptions& options) {
  AlgorithmRun run;
  GammaState gamma = initial_gamma();
  bool gamma_frozen = false;
  BestTracker best;
  SearchPhase search{cluster, work, calib, window, options, {}};

  std::optional<IterationResult> cached;
  bool reuse = false;
  double anchor = 0;
  bool has_anchor = false;
  int streak = 0;
  int train_failures = 0;
  int rollout_failures = 0;

  for (int iter = 1; iter <= options.iteration_cap; ++iter) {
    run.iterations = iter;
    IterationResult it;
    if (reuse && cached) {
      it = *cached;
    } else {
      std::vector<PartitionResult> candidates;
      if (iter == 1 && options.initial_partition) {
        PartitionResult part;
        part.partition = *options.initial_partition;
        part.partition.validate(cluster);
        part.objective = partition_objective(cluster, part.partition.train_set);
        part.compute_fraction = compute_fraction(cluster, part.partition.train_set);
        gamma.gamma_l = gamma.gamma_h = part.compute_fraction;
        candidates.push_back(std::move(part));
      } else {
        candidates = partition_with_widening(cluster, gamma, options);
      }
      it = search.eval(candidates.front());
      for (size_t c = 1; c < candidates.size(); ++c) {
        best.offer(search.eval(candidates[c]));
      }
      if (iter == 1) {
        // Probe a coarse gamma grid once; the evaluations only feed
        // best-ever tracking, not the binary search.
        for (int p = 1; p <= options.grid_probes; ++p) {
          GammaState probe = gamma;
          probe.gamma_l = probe.gamma_h =
              static_cast<double>(p) / (options.grid_probes + 1);
          for (const auto& part : partition_with_widening(cluster, probe, options)) {
            best.offer(search.eval(part));
          }
        }
        // Type-aligned prefix probes: grow the train side one device at a
        // time with each gpu type leading, the alignment the cost model
        // ultimately rewards.
        for (size_t lead = 0; lead < cluster.types.size(); ++lead) {
          std::vector<int> order;
          for (const auto& d : cluster.devices) order.push_back(d.id);
          std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
            int ta = cluster.device(a).gpu_type;
            int tb = cluster.device(b).gpu_type;
            bool la = ta == static_cast<int>(lead);
            bool lb = tb == static_cast<int>(lead);
            if (la != lb) return la;
            if (ta != tb) return ta < tb;
            return a < b;
          });
          PartitionResult part;
          for (size_t m = 0; m + 1 < order.size(); ++m) {
            part.partition.train_set.push_back(order[m]);
            std::sort(part.partition.train_set.begin(), part.partition.train_set.end());
            part.partition.rollout_set.clear();
            for (size_t r = m + 1; r < order.size(); ++r) {
              part.partition.rollout_set.push_back(order[r]);
            }
            std::sort(part.partition.rollout_set.begin(), part.partition.rollout_set.end());
            part.compute_fraction = compute_fraction(cluster, part.partition.train_set);
            best.offer(search.eval(part));
          }
        }
      }
      cached = it;
    }
    if (!it.train) train_failures++;
    if (!it.rollout) rollout_failures++;
    best.offer(it);

    double m = it.costs.objective();
    run.trace.push_back(IterationTrace{(gamma.gamma_l + gamma.gamma_h) / 2, it.costs.c_train,
                                       it.costs.c_infer_total, m});

    if (has_anchor && std::abs(m - anchor) <= options.stability_tol * std::abs(anchor)) {
      streak++;
    } else {
      anchor = m;
      has_anchor = true;
      streak = 0;
    }
    if (streak >= options.stable_iters) {
      run.converged = true;
      break;
    }

    if (!gamma_frozen) {
      double c_t = it.costs.c_train;
      double c_i = it.costs.c_infer_total;
      bool balanced = it.feasible() &&
                      std::abs(c_t - c_i) <= options.balance_tol * std::max(c_t, c_i);
      if (balanced || (gamma.r - gamma.q) < options.interval_min) {
        gamma_frozen = true;
      } else if (iter == 1) {
        // The seed evaluation (gamma = 1, or the explicit initial
        // partition) does not narrow the interval; the binary search
        // proper starts at the midpoint.
        gamma.gamma_l = gamma.gamma_h = (gamma.q + gamma.r) / 2;
        cached.reset();
      } else {
        gamma = refine_gamma(gamma, c_t, c_i);
        cached.reset();
      }
    }
    // Once gamma is frozen the iteration is a fixed point; reuse it.
    reuse = gamma_frozen && cached.has_value();
  }

  const IterationResult* final_result = best.result();
  if (final_result == nullptr) {
    throw InfeasibleError(
        "no feasible plan at any visited partition (train-side failures: " +
        std::to_string(train_failures) +
        ", rollout-side failures: " + std::to_string(rollout_failures) +
        "); binding constraint is device memory vs. capacity");
  }
  run.best = *final_result;
  return run;
}

}  // namespace

ScheduleOutcome schedule(const ClusterGraph& cluster, const WorkloadSpec& work,
                         const Calibration& calib, const SchedulerOptions& options) {
  if (cluster.size() < 2) {
    throw InfeasibleError("scheduling requires at least two devices");
  }
  int eta = options.eta_override.value_or(work.staleness);
  WorkloadSpec effective = work;
  effective.staleness = eta;

  WindowExpander expander(eta, options.delta_cap);
  AlgorithmRun run;
  while (true) {
    run = run_two_phase(cluster, effective, calib, expander.delta(), options);
    double per_step = run.best->costs.objective() / expander.delta();
    if (!options.expand_window || expander.stable_after(per_step)) break;
    expander.expand();
  }

  ScheduleOutcome outcome;
  const IterationResult& best = *run.best;
  outcome.plan.partition = best.partition.partition;
  outcome.plan.train_plan = best.train->plan;
  outcome.plan.rollout_plan = *best.rollout;
  outcome.plan.costs = best.costs;
  outcome.plan.window = expander.delta();
  outcome.plan.staleness = eta;
  outcome.plan.iterations_run = run.iterations;
  outcome.plan.converged = run.converged;
  outcome.plan.cluster_fingerprint = cluster.fingerprint;
  outcome.plan.calibration_fingerprint = calib.fingerprint;
  outcome.plan.workload_fingerprint = effective.fingerprint;
  outcome.trace = run.trace;
  return outcome;
}

}  // namespace rlsched
