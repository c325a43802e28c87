#include "test_fixtures.hpp"

#include <sstream>

#include "json.hpp"

namespace rlsched::testing {

using ordered_json = nlohmann::ordered_json;

std::string cluster_json(const std::vector<TypeSpec>& types,
                         const std::vector<MachineSpec>& machines, double inter_gbps,
                         double cross_gbps) {
  ordered_json doc;
  doc["gpu_types"] = ordered_json::array();
  ordered_json intra;
  for (const auto& t : types) {
    doc["gpu_types"].push_back({{"name", t.name},
                                {"flops_tflops", t.tflops},
                                {"hbm_gbps", t.hbm_gbps},
                                {"hbm_gb", t.hbm_gb},
                                {"price_per_hour", t.price}});
    intra[t.name] = t.intra_gbps;
  }
  doc["machines"] = ordered_json::array();
  for (const auto& m : machines) {
    doc["machines"].push_back({{"id", m.name}, {"gpu_type", m.type}, {"count", m.count}});
  }
  doc["bandwidth"] = {{"intra_machine_gbps", intra},
                      {"inter_machine_gbps", inter_gbps},
                      {"cross_type_gbps", cross_gbps}};
  return doc.dump(2);
}

ClusterGraph build_cluster(const std::vector<TypeSpec>& types,
                           const std::vector<MachineSpec>& machines, double inter_gbps,
                           double cross_gbps) {
  return load_cluster_json(cluster_json(types, machines, inter_gbps, cross_gbps));
}

ClusterGraph desk_mixed_cluster() {
  std::vector<TypeSpec> types = {
      {"H800", 756, 2000, 80, 5.28, 200},
      {"H20", 148, 4000, 96, 1.85, 450},
  };
  std::vector<MachineSpec> machines;
  for (int i = 0; i < 3; ++i) machines.push_back({"h800-" + std::to_string(i), "H800", 8});
  for (int i = 0; i < 3; ++i) machines.push_back({"h20-" + std::to_string(i), "H20", 8});
  return build_cluster(types, machines);
}

ClusterGraph uniform_cluster(int n, double tflops, double hbm_gbps, double hbm_gb, double price) {
  return build_cluster({{"G", tflops, hbm_gbps, hbm_gb, price, 200}}, {{"m0", "G", n}});
}

WorkloadSpec small_workload() {
  WorkloadSpec w;
  w.model_params_b = 1.5;
  w.num_layers = 28;
  w.hidden_dim = 1536;
  w.batch_rollouts = 16;
  w.prompt_len = 256;
  w.length_dist = LengthDistribution({{800, 0.5}, {1200, 0.5}});
  w.staleness = 4;
  w.fingerprint = "test-workload";
  w.validate();
  return w;
}

WorkloadSpec math_workload(double params_b, int layers, int hidden) {
  WorkloadSpec w;
  w.model_params_b = params_b;
  w.num_layers = layers;
  w.hidden_dim = hidden;
  w.batch_rollouts = 64;
  w.prompt_len = 512;
  w.length_dist = LengthDistribution({{1024, 0.5}, {2048, 0.5}});
  w.staleness = 4;
  w.fingerprint = "math-workload";
  w.validate();
  return w;
}

std::map<std::string, PerTokenCostTarget> profiled_costs_1p5b() {
  return {{"H800", {5.58e-3, 1.66e-3}}, {"H20", {2.06e-3, 5.16e-3}}};
}

std::map<std::string, PerTokenCostTarget> profiled_costs_14b() {
  return {{"H800", {3.43e-2, 0.99e-2}}, {"H20", {1.27e-2, 3.10e-2}}};
}

Calibration flat_calibration(const ClusterGraph& cluster, double compute_eff, double io_eff) {
  Calibration calib;
  for (const auto& t : cluster.types) {
    calib.per_type[t.name] = TypeEfficiency{compute_eff, io_eff};
  }
  calib.fingerprint = fingerprint_hex(calib.canonical_json());
  return calib;
}

RandomInstance random_instance(SplitMix64& rng, int max_devices, int max_types) {
  RandomInstance inst;
  int type_count = 1 + static_cast<int>(rng.next_below(static_cast<std::uint64_t>(max_types)));
  std::vector<TypeSpec> types;
  for (int t = 0; t < type_count; ++t) {
    TypeSpec spec;
    spec.name = "T" + std::to_string(t);
    spec.tflops = 100 + rng.next_double() * 700;
    spec.hbm_gbps = 1000 + rng.next_double() * 3000;
    spec.hbm_gb = 64 + rng.next_double() * 64;
    spec.price = 1.0 + rng.next_double() * 5.0;
    spec.intra_gbps = 150 + rng.next_double() * 300;
    types.push_back(spec);
  }
  // spread devices over 1..3 machines per type, at least 1 device per type
  std::vector<MachineSpec> machines;
  int budget = max_devices;
  for (int t = 0; t < type_count; ++t) {
    int type_budget = (t == type_count - 1)
                          ? budget
                          : 1 + static_cast<int>(rng.next_below(
                                    static_cast<std::uint64_t>(budget - (type_count - 1 - t))));
    budget -= type_budget;
    int machine_idx = 0;
    while (type_budget > 0) {
      int count = 1 + static_cast<int>(rng.next_below(static_cast<std::uint64_t>(type_budget)));
      machines.push_back({"m" + std::to_string(t) + "-" + std::to_string(machine_idx++),
                          types[static_cast<size_t>(t)].name, count});
      type_budget -= count;
    }
  }
  inst.cluster = build_cluster(types, machines, 4 + rng.next_double() * 8,
                               1 + rng.next_double() * 3);

  WorkloadSpec w;
  w.model_params_b = 0.5 + rng.next_double() * 1.5;
  w.num_layers = 8 + static_cast<int>(rng.next_below(25));
  w.hidden_dim = 512 + static_cast<int>(rng.next_below(1537));
  w.batch_rollouts = 4 + static_cast<int>(rng.next_below(29));
  w.prompt_len = 64 + static_cast<int>(rng.next_below(449));
  if (rng.next_double() < 0.5) {
    w.length_dist = LengthDistribution::point(256 + static_cast<int>(rng.next_below(1793)));
  } else {
    int a = 128 + static_cast<int>(rng.next_below(1025));
    int b = a + 64 + static_cast<int>(rng.next_below(1025));
    double p = 0.25 + rng.next_double() * 0.5;
    w.length_dist = LengthDistribution({{a, p}, {b, 1.0 - p}});
  }
  w.staleness = static_cast<int>(rng.next_below(5));
  w.reward_cost_const = 0;
  w.micro_batches = 4 + static_cast<int>(rng.next_below(5));
  w.fingerprint = "random-workload";
  w.validate();
  inst.work = w;

  inst.calib = flat_calibration(inst.cluster, 0.2 + rng.next_double() * 0.6,
                                0.2 + rng.next_double() * 0.6);
  return inst;
}

}  // namespace rlsched::testing
