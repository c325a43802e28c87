#include "rlsched/cluster.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "json.hpp"

namespace rlsched {

using nlohmann::json;

namespace {

double require_positive(double v, const std::string& path) {
  if (!(v > 0)) {
    throw ValidationError(path + " must be > 0, got " + std::to_string(v));
  }
  return v;
}

double require_non_negative(double v, const std::string& path) {
  if (!(v >= 0)) {
    throw ValidationError(path + " must be >= 0, got " + std::to_string(v));
  }
  return v;
}

json parse_document(const std::string& text) {
  json doc = json::parse(text, nullptr, false);
  if (doc.is_discarded()) {
    throw ParseError("cluster document is not valid JSON");
  }
  return doc;
}

template <typename T>
T get_field(const json& obj, const std::string& key, const std::string& path) {
  if (!obj.contains(key)) {
    throw ParseError("missing field " + path + "." + key);
  }
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw ParseError("field " + path + "." + key + " has the wrong type");
  }
}

}  // namespace

int ClusterGraph::type_of(const std::string& name) const {
  for (size_t i = 0; i < types.size(); ++i) {
    if (types[i].name == name) return static_cast<int>(i);
  }
  throw ValidationError("unknown gpu_type '" + name + "'");
}

void DevicePartition::validate(const ClusterGraph& cluster) const {
  if (train_set.empty() || rollout_set.empty()) {
    throw ValidationError("both partition sides must be non-empty");
  }
  std::vector<char> seen(static_cast<size_t>(cluster.size()), 0);
  for (const auto* side : {&train_set, &rollout_set}) {
    for (int id : *side) {
      cluster.device(id);
      if (seen[static_cast<size_t>(id)]++) {
        throw ValidationError("device " + std::to_string(id) +
                              " appears twice in the partition");
      }
    }
  }
  for (int id = 0; id < cluster.size(); ++id) {
    if (!seen[static_cast<size_t>(id)]) {
      throw ValidationError("device " + std::to_string(id) +
                            " is missing from the partition");
    }
  }
}

ClusterGraph load_cluster_json(const std::string& json_text) {
  json doc = parse_document(json_text);
  ClusterGraph g;
  g.fingerprint = fingerprint_hex(doc.dump());

  if (!doc.contains("gpu_types") || !doc["gpu_types"].is_array() || doc["gpu_types"].empty()) {
    throw ParseError("gpu_types must be a non-empty array");
  }
  for (size_t i = 0; i < doc["gpu_types"].size(); ++i) {
    const json& t = doc["gpu_types"][i];
    std::string path = "gpu_types[" + std::to_string(i) + "]";
    GpuTypeInfo info;
    info.name = get_field<std::string>(t, "name", path);
    info.flops = require_positive(get_field<double>(t, "flops_tflops", path), path + ".flops_tflops") * 1e12;
    info.hbm_bandwidth = require_positive(get_field<double>(t, "hbm_gbps", path), path + ".hbm_gbps") * 1e9;
    info.hbm_capacity = require_positive(get_field<double>(t, "hbm_gb", path), path + ".hbm_gb") * 1e9;
    info.price_per_hour = require_non_negative(get_field<double>(t, "price_per_hour", path), path + ".price_per_hour");
    for (const auto& prev : g.types) {
      if (prev.name == info.name) {
        throw ValidationError("duplicate gpu_type '" + info.name + "'");
      }
    }
    g.types.push_back(info);
  }
  g.type_counts.assign(g.types.size(), 0);

  if (!doc.contains("machines") || !doc["machines"].is_array() || doc["machines"].empty()) {
    throw ParseError("machines must be a non-empty array");
  }
  std::set<std::string> machine_names;
  for (size_t i = 0; i < doc["machines"].size(); ++i) {
    const json& m = doc["machines"][i];
    std::string path = "machines[" + std::to_string(i) + "]";
    MachineInfo machine;
    machine.name = get_field<std::string>(m, "id", path);
    if (!machine_names.insert(machine.name).second) {
      throw ValidationError("duplicate machine id '" + machine.name + "'");
    }
    machine.gpu_type = g.type_of(get_field<std::string>(m, "gpu_type", path));
    int count = get_field<int>(m, "count", path);
    if (count < 1) {
      throw ValidationError(path + ".count must be >= 1");
    }
    const GpuTypeInfo& info = g.types[static_cast<size_t>(machine.gpu_type)];
    int machine_idx = static_cast<int>(g.machines.size());
    for (int k = 0; k < count; ++k) {
      GpuDevice d;
      d.id = static_cast<int>(g.devices.size());
      d.gpu_type = machine.gpu_type;
      d.machine_id = machine_idx;
      d.flops = info.flops;
      d.hbm_bandwidth = info.hbm_bandwidth;
      d.hbm_capacity = info.hbm_capacity;
      d.price_per_hour = info.price_per_hour;
      machine.device_ids.push_back(d.id);
      g.devices.push_back(d);
    }
    g.type_counts[static_cast<size_t>(machine.gpu_type)] += count;
    g.machines.push_back(std::move(machine));
  }

  const int n = g.size();
  g.links.assign(static_cast<size_t>(n) * static_cast<size_t>(n), 0.0);

  if (!doc.contains("bandwidth")) {
    throw ParseError("missing field bandwidth");
  }
  const json& bw = doc["bandwidth"];
  std::map<std::string, double> intra;
  if (!bw.contains("intra_machine_gbps")) {
    throw ParseError("missing field bandwidth.intra_machine_gbps");
  }
  if (bw["intra_machine_gbps"].is_number()) {
    double v = require_positive(bw["intra_machine_gbps"].get<double>(), "bandwidth.intra_machine_gbps");
    for (const auto& t : g.types) intra[t.name] = v;
  } else {
    for (auto it = bw["intra_machine_gbps"].begin(); it != bw["intra_machine_gbps"].end(); ++it) {
      g.type_of(it.key());
      intra[it.key()] = require_positive(it.value().get<double>(),
                                         "bandwidth.intra_machine_gbps." + it.key());
    }
    for (const auto& t : g.types) {
      if (!intra.count(t.name)) {
        throw ParseError("bandwidth.intra_machine_gbps missing entry for type '" + t.name + "'");
      }
    }
  }
  double inter = require_positive(get_field<double>(bw, "inter_machine_gbps", "bandwidth"),
                                  "bandwidth.inter_machine_gbps");
  double cross = g.types.size() > 1
                     ? require_positive(get_field<double>(bw, "cross_type_gbps", "bandwidth"),
                                        "bandwidth.cross_type_gbps")
                     : bw.value("cross_type_gbps", inter);

  // Machine-pair bandwidth in GB/s, before expansion to device pairs.
  auto machine_pair_gbps = [&](const MachineInfo& a, const MachineInfo& b) {
    if (a.gpu_type != b.gpu_type) return cross;
    return inter;
  };

  for (int a = 0; a < n; ++a) {
    for (int b = a + 1; b < n; ++b) {
      const GpuDevice& da = g.devices[static_cast<size_t>(a)];
      const GpuDevice& db = g.devices[static_cast<size_t>(b)];
      double gbps;
      if (da.machine_id == db.machine_id) {
        gbps = intra.at(g.types[static_cast<size_t>(da.gpu_type)].name);
      } else {
        gbps = machine_pair_gbps(g.machines[static_cast<size_t>(da.machine_id)],
                                 g.machines[static_cast<size_t>(db.machine_id)]);
      }
      g.links[static_cast<size_t>(a) * static_cast<size_t>(n) + static_cast<size_t>(b)] = gbps * 1e9;
      g.links[static_cast<size_t>(b) * static_cast<size_t>(n) + static_cast<size_t>(a)] = gbps * 1e9;
    }
  }

  if (bw.contains("overrides")) {
    for (size_t i = 0; i < bw["overrides"].size(); ++i) {
      const json& ov = bw["overrides"][i];
      std::string path = "bandwidth.overrides[" + std::to_string(i) + "]";
      std::string ma = get_field<std::string>(ov, "a", path);
      std::string mb = get_field<std::string>(ov, "b", path);
      double gbps = require_positive(get_field<double>(ov, "gbps", path), path + ".gbps");
      int ia = -1, ib = -1;
      for (size_t m = 0; m < g.machines.size(); ++m) {
        if (g.machines[m].name == ma) ia = static_cast<int>(m);
        if (g.machines[m].name == mb) ib = static_cast<int>(m);
      }
      if (ia < 0 || ib < 0) {
        throw ValidationError(path + " references an unknown machine id");
      }
      if (ia == ib) {
        throw ValidationError(path + " must name two distinct machines");
      }
      for (int a : g.machines[static_cast<size_t>(ia)].device_ids) {
        for (int b : g.machines[static_cast<size_t>(ib)].device_ids) {
          g.links[static_cast<size_t>(a) * static_cast<size_t>(n) + static_cast<size_t>(b)] = gbps * 1e9;
          g.links[static_cast<size_t>(b) * static_cast<size_t>(n) + static_cast<size_t>(a)] = gbps * 1e9;
        }
      }
    }
  }

  // Intra-machine bandwidth below any inter-machine link is suspicious but
  // allowed.
  for (const auto& machine : g.machines) {
    if (machine.device_ids.size() < 2) continue;
    double intra_bw = g.link(machine.device_ids[0], machine.device_ids[1]);
    double max_ext = 0;
    for (int d : machine.device_ids) {
      for (int other = 0; other < n; ++other) {
        if (g.devices[static_cast<size_t>(other)].machine_id != g.devices[static_cast<size_t>(d)].machine_id) {
          max_ext = std::max(max_ext, g.link(d, other));
        }
      }
    }
    if (max_ext > intra_bw) {
      std::ostringstream w;
      w << "machine '" << machine.name << "' has intra-machine bandwidth "
        << intra_bw / 1e9 << " GB/s below an external link (" << max_ext / 1e9 << " GB/s)";
      g.warnings.push_back(w.str());
    }
  }

  int total = 0;
  for (int c : g.type_counts) total += c;
  if (total != n) {
    throw ValidationError("type_counts do not sum to the device count");
  }
  return g;
}

ClusterGraph load_cluster_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw ParseError("cannot open cluster file: " + path);
  }
  std::stringstream ss;
  ss << in.rdbuf();
  return load_cluster_json(ss.str());
}

ClusterAggregate aggregate(const ClusterGraph& cluster, const std::vector<int>& subset) {
  ClusterAggregate out;
  for (size_t i = 0; i < subset.size(); ++i) {
    const GpuDevice& d = cluster.device(subset[i]);
    out.sum_flops += d.flops;
    out.sum_hbm_bw += d.hbm_bandwidth;
    for (size_t j = i + 1; j < subset.size(); ++j) {
      out.sum_internal_link_bw += cluster.link(subset[i], subset[j]);
    }
  }
  return out;
}

}  // namespace rlsched
