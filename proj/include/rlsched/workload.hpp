#pragma once

#include <string>
#include <utility>
#include <vector>

#include "rlsched/common.hpp"

namespace rlsched {

// Distribution of generated rollout lengths (output tokens), profiled during
// cold start. Stored as a normalized histogram sorted by length.
class LengthDistribution {
 public:
  LengthDistribution() = default;
  explicit LengthDistribution(std::vector<std::pair<int, double>> histogram);

  static LengthDistribution point(int length) {
    return LengthDistribution({{length, 1.0}});
  }

  const std::vector<std::pair<int, double>>& histogram() const { return histogram_; }
  double mean() const { return mean_; }
  bool deterministic() const { return histogram_.size() == 1; }

  // Smallest length whose CDF reaches q, q in [0, 1].
  int quantile(double q) const;

  // Inverse-CDF sampling from a uniform draw in [0, 1).
  int sample(double uniform01) const;

 private:
  std::vector<std::pair<int, double>> histogram_;
  std::vector<double> cdf_;
  double mean_ = 0;
};

struct WorkloadSpec {
  double model_params_b = 0;   // parameter count, billions
  int num_layers = 0;
  int hidden_dim = 0;
  int batch_rollouts = 0;      // rollouts consumed per training step
  int prompt_len = 0;
  LengthDistribution length_dist;
  int staleness = 0;           // eta, max weight-version gap
  double bytes_per_param_train = 18.0;
  double bytes_per_param_infer = 2.0;
  double reward_cost_const = 0.0;  // seconds per delta-window
  int micro_batches = 8;

  double params() const { return model_params_b * 1e9; }
  double model_bytes_infer() const { return params() * bytes_per_param_infer; }
  double mean_total_len() const { return prompt_len + length_dist.mean(); }
  double tokens_per_step() const { return batch_rollouts * mean_total_len(); }
  double train_flops_per_token() const { return 6.0 * params(); }
  double infer_flops_per_token() const { return 2.0 * params(); }
  // K and V, 2 bytes per element, full model depth.
  double kv_bytes_per_token() const { return 4.0 * hidden_dim * num_layers; }

  void validate() const;
  std::string fingerprint;
};

WorkloadSpec load_workload_json(const std::string& json_text);
WorkloadSpec load_workload_file(const std::string& path);

}  // namespace rlsched
