#include "rlsched/workload.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace rlsched {

using nlohmann::json;

LengthDistribution::LengthDistribution(std::vector<std::pair<int, double>> histogram)
    : histogram_(std::move(histogram)) {
  if (histogram_.empty()) {
    throw ValidationError("length distribution must have at least one bucket");
  }
  std::sort(histogram_.begin(), histogram_.end());
  double total = 0;
  for (auto& [len, p] : histogram_) {
    if (len <= 0) {
      throw ValidationError("rollout lengths must be positive integers");
    }
    if (p < 0) {
      throw ValidationError("length probabilities must be non-negative");
    }
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-9) {
    throw ValidationError("length probabilities must sum to 1 (got " +
                          std::to_string(total) + ")");
  }
  double cum = 0;
  for (auto& [len, p] : histogram_) {
    mean_ += len * p;
    cum += p;
    cdf_.push_back(cum);
  }
  cdf_.back() = 1.0;
}

int LengthDistribution::quantile(double q) const {
  q = std::clamp(q, 0.0, 1.0);
  for (size_t i = 0; i < cdf_.size(); ++i) {
    if (cdf_[i] >= q - 1e-12) return histogram_[i].first;
  }
  return histogram_.back().first;
}

int LengthDistribution::sample(double uniform01) const {
  for (size_t i = 0; i < cdf_.size(); ++i) {
    if (uniform01 < cdf_[i]) return histogram_[i].first;
  }
  return histogram_.back().first;
}

void WorkloadSpec::validate() const {
  if (!(model_params_b > 0)) throw ValidationError("model.params_billion must be > 0");
  if (num_layers < 1) throw ValidationError("model.num_layers must be >= 1");
  if (hidden_dim < 1) throw ValidationError("model.hidden_dim must be >= 1");
  if (batch_rollouts < 1) throw ValidationError("batch_rollouts must be >= 1");
  if (prompt_len < 0) throw ValidationError("prompt_len must be >= 0");
  if (staleness < 0) throw ValidationError("staleness must be >= 0");
  if (!(bytes_per_param_train > 0)) throw ValidationError("bytes_per_param_train must be > 0");
  if (!(bytes_per_param_infer > 0)) throw ValidationError("bytes_per_param_infer must be > 0");
  if (reward_cost_const < 0) throw ValidationError("reward_cost_const must be >= 0");
  if (micro_batches < 1) throw ValidationError("micro_batches must be >= 1");
}

WorkloadSpec load_workload_json(const std::string& json_text) {
  json doc = json::parse(json_text, nullptr, false);
  if (doc.is_discarded()) {
    throw ParseError("workload document is not valid JSON");
  }
  WorkloadSpec w;
  w.fingerprint = fingerprint_hex(doc.dump());
  try {
    const json& model = doc.at("model");
    w.model_params_b = model.at("params_billion").get<double>();
    w.num_layers = model.at("num_layers").get<int>();
    w.hidden_dim = model.at("hidden_dim").get<int>();
    w.batch_rollouts = doc.at("batch_rollouts").get<int>();
    w.prompt_len = doc.at("prompt_len").get<int>();
    w.staleness = doc.at("staleness").get<int>();
    std::vector<std::pair<int, double>> hist;
    for (const auto& bucket : doc.at("length_dist").at("histogram")) {
      hist.emplace_back(bucket.at(0).get<int>(), bucket.at(1).get<double>());
    }
    w.length_dist = LengthDistribution(std::move(hist));
    w.bytes_per_param_train = doc.value("bytes_per_param_train", 18.0);
    w.bytes_per_param_infer = doc.value("bytes_per_param_infer", 2.0);
    w.reward_cost_const = doc.value("reward_cost_const", 0.0);
    w.micro_batches = doc.value("micro_batches", 8);
  } catch (const json::exception& e) {
    throw ParseError(std::string("workload document: ") + e.what());
  }
  w.validate();
  return w;
}

WorkloadSpec load_workload_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw ParseError("cannot open workload file: " + path);
  }
  std::stringstream ss;
  ss << in.rdbuf();
  return load_workload_json(ss.str());
}

}  // namespace rlsched
