#include "rlsched/calibration.hpp"

#include <fstream>
#include <sstream>

#include "json.hpp"

#include "rlsched/cost_model.hpp"

namespace rlsched {

using nlohmann::json;
using ordered_json = nlohmann::ordered_json;

const TypeEfficiency& Calibration::for_type(const std::string& name) const {
  auto it = per_type.find(name);
  if (it == per_type.end()) {
    throw ValidationError("no calibration entry for gpu_type '" + name + "'");
  }
  return it->second;
}

std::string Calibration::canonical_json() const {
  ordered_json doc;
  for (const auto& [name, eff] : per_type) {
    doc["types"][name] = {{"compute_efficiency", eff.compute_efficiency},
                          {"io_efficiency", eff.io_efficiency}};
  }
  doc["model"] = {{"sync_latency_s", params.sync_latency_s},
                  {"stage_latency_penalty", params.stage_latency_penalty},
                  {"max_concurrency", params.max_concurrency},
                  {"activation_coeff", params.activation_coeff},
                  {"tp_allreduce_coeff", params.tp_allreduce_coeff},
                  {"grad_bytes_per_param", params.grad_bytes_per_param}};
  return doc.dump();
}

namespace {

void check_efficiency(double v, const std::string& what) {
  if (!(v > 0) || v > 1.0) {
    throw ValidationError(what + " must lie in (0, 1], got " + std::to_string(v));
  }
}

ReplicaConfig single_device_config(const ClusterGraph& cluster, int type) {
  ReplicaConfig config;
  config.type_counts.assign(cluster.types.size(), 0);
  config.type_counts[static_cast<size_t>(type)] = 1;
  config.tp_per_stage = {1};
  config.machine_footprint = {1};
  return config;
}

CostModelParams params_from_json(const json& doc) {
  CostModelParams p;
  if (doc.contains("model")) {
    const json& m = doc["model"];
    p.sync_latency_s = m.value("sync_latency_s", p.sync_latency_s);
    p.stage_latency_penalty = m.value("stage_latency_penalty", p.stage_latency_penalty);
    p.max_concurrency = m.value("max_concurrency", p.max_concurrency);
    p.activation_coeff = m.value("activation_coeff", p.activation_coeff);
    p.tp_allreduce_coeff = m.value("tp_allreduce_coeff", p.tp_allreduce_coeff);
    p.grad_bytes_per_param = m.value("grad_bytes_per_param", p.grad_bytes_per_param);
  }
  return p;
}

}  // namespace

Calibration fit_calibration(const ClusterGraph& cluster, const WorkloadSpec& work,
                            const std::map<std::string, PerTokenCostTarget>& targets,
                            const CostModelParams& params) {
  Calibration calib;
  calib.params = params;
  for (size_t t = 0; t < cluster.types.size(); ++t) {
    const GpuTypeInfo& info = cluster.types[t];
    auto it = targets.find(info.name);
    if (it == targets.end()) {
      throw ValidationError("no per-token cost target for gpu_type '" + info.name + "'");
    }
    const PerTokenCostTarget& target = it->second;
    if (!(target.inference > 0) || !(target.training > 0)) {
      throw ValidationError("per-token cost targets must be positive for '" + info.name + "'");
    }
    if (!(info.price_per_hour > 0)) {
      throw ValidationError("fitting requires a positive price for '" + info.name + "'");
    }
    double price_per_s = info.price_per_hour / 3600.0;

    // Compute branch from the training cost: tokens/s = eff * F / (6 P).
    double train_tps = price_per_s / target.training;
    TypeEfficiency eff;
    eff.compute_efficiency = train_tps * work.train_flops_per_token() / info.flops;
    check_efficiency(eff.compute_efficiency, "fitted compute_efficiency for '" + info.name + "'");

    // IO branch from the inference cost at the concurrency a single device
    // of this type sustains.
    ReplicaConfig probe = single_device_config(cluster, static_cast<int>(t));
    int concurrency = replica_concurrency(probe, cluster, work, params);
    if (concurrency < 1) {
      throw InfeasibleError("model does not fit on a single '" + info.name +
                            "' device; cannot fit io_efficiency");
    }
    double infer_tps = price_per_s / target.inference;
    double raw_io_rate = concurrency * info.hbm_bandwidth / work.model_bytes_infer();
    eff.io_efficiency = infer_tps / raw_io_rate;
    check_efficiency(eff.io_efficiency, "fitted io_efficiency for '" + info.name + "'");

    calib.per_type[info.name] = eff;
  }
  calib.fingerprint = fingerprint_hex(calib.canonical_json());
  return calib;
}

Calibration load_calibration_json(const std::string& json_text, const ClusterGraph& cluster,
                                  const WorkloadSpec& work) {
  json doc = json::parse(json_text, nullptr, false);
  if (doc.is_discarded()) {
    throw ParseError("calibration document is not valid JSON");
  }
  CostModelParams params = params_from_json(doc);

  if (doc.contains("fit_targets")) {
    std::map<std::string, PerTokenCostTarget> targets;
    for (auto it = doc["fit_targets"].begin(); it != doc["fit_targets"].end(); ++it) {
      PerTokenCostTarget t;
      t.inference = it.value().at("per_token_inference_cost").get<double>();
      t.training = it.value().at("per_token_training_cost").get<double>();
      targets[it.key()] = t;
    }
    return fit_calibration(cluster, work, targets, params);
  }

  if (!doc.contains("types")) {
    throw ParseError("calibration document needs either 'types' or 'fit_targets'");
  }
  Calibration calib;
  calib.params = params;
  for (auto it = doc["types"].begin(); it != doc["types"].end(); ++it) {
    TypeEfficiency eff;
    try {
      eff.compute_efficiency = it.value().at("compute_efficiency").get<double>();
      eff.io_efficiency = it.value().at("io_efficiency").get<double>();
    } catch (const json::exception& e) {
      throw ParseError("calibration types." + it.key() + ": " + e.what());
    }
    check_efficiency(eff.compute_efficiency, "types." + it.key() + ".compute_efficiency");
    check_efficiency(eff.io_efficiency, "types." + it.key() + ".io_efficiency");
    calib.per_type[it.key()] = eff;
  }
  for (const auto& type : cluster.types) {
    calib.for_type(type.name);
  }
  (void)work;
  calib.fingerprint = fingerprint_hex(calib.canonical_json());
  return calib;
}

Calibration load_calibration_file(const std::string& path, const ClusterGraph& cluster,
                                  const WorkloadSpec& work) {
  std::ifstream in(path);
  if (!in) {
    throw ParseError("cannot open calibration file: " + path);
  }
  std::stringstream ss;
  ss << in.rdbuf();
  return load_calibration_json(ss.str(), cluster, work);
}

Calibration default_calibration(const ClusterGraph& cluster) {
  Calibration calib;
  for (const auto& type : cluster.types) {
    calib.per_type[type.name] = TypeEfficiency{};
  }
  calib.fingerprint = fingerprint_hex(calib.canonical_json());
  return calib;
}

}  // namespace rlsched
