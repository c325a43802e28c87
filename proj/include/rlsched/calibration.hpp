#pragma once

#include <map>
#include <optional>
#include <string>

#include "rlsched/cluster.hpp"
#include "rlsched/workload.hpp"

namespace rlsched {

struct TypeEfficiency {
  double compute_efficiency = 0.35;  // fraction of peak FLOPS realized
  double io_efficiency = 0.6;        // fraction of peak HBM bandwidth realized
};

// Knobs of the analytic cost model that are not per-type.
struct CostModelParams {
  double sync_latency_s = 1.0;        // fixed latency per weight broadcast window
  double stage_latency_penalty = 0.15;  // throughput divisor term per extra pipeline stage
  int max_concurrency = 4;            // cap on concurrent rollout streams per replica
  double activation_coeff = 4.0;      // activation bytes multiplier for training memory
  double tp_allreduce_coeff = 4.0;    // activation all-reduces per layer (fwd+bwd)
  double grad_bytes_per_param = 2.0;  // gradient bytes synchronized across DP
};

// Profiled per-token dollar costs used to fit per-type efficiencies.
struct PerTokenCostTarget {
  double inference = 0;  // $ per generated token
  double training = 0;   // $ per trained token
};

struct Calibration {
  std::map<std::string, TypeEfficiency> per_type;
  CostModelParams params;
  std::string fingerprint;

  const TypeEfficiency& for_type(const std::string& name) const;
  std::string canonical_json() const;
};

// Solves for per-type efficiencies such that a single-device replica of each
// type reproduces the profiled per-token costs: the IO roofline branch is
// fitted to the inference cost and the compute branch to the training cost.
Calibration fit_calibration(const ClusterGraph& cluster, const WorkloadSpec& work,
                            const std::map<std::string, PerTokenCostTarget>& targets,
                            const CostModelParams& params = {});

// Loads a calibration file. The file either carries explicit per-type
// efficiencies or per-token cost targets to fit them from (requires cluster
// and workload context).
Calibration load_calibration_json(const std::string& json_text, const ClusterGraph& cluster,
                                  const WorkloadSpec& work);
Calibration load_calibration_file(const std::string& path, const ClusterGraph& cluster,
                                  const WorkloadSpec& work);

// Defaults for every type in the cluster; used when no file is given.
Calibration default_calibration(const ClusterGraph& cluster);

}  // namespace rlsched
