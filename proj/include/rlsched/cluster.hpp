#pragma once

#include <string>
#include <vector>

#include "rlsched/common.hpp"

namespace rlsched {

// Capabilities are stored in SI units: FLOP/s, bytes/s, bytes. Input
// documents use TFLOPS / GB/s / GB and are converted on load.
struct GpuTypeInfo {
  std::string name;
  double flops = 0;          // peak tensor FLOP/s
  double hbm_bandwidth = 0;  // bytes/s
  double hbm_capacity = 0;   // bytes
  double price_per_hour = 0;
};

struct GpuDevice {
  int id = -1;
  int gpu_type = -1;   // index into ClusterGraph::types
  int machine_id = -1; // index into ClusterGraph::machines
  double flops = 0;
  double hbm_bandwidth = 0;
  double hbm_capacity = 0;
  double price_per_hour = 0;
};

struct MachineInfo {
  std::string name;
  int gpu_type = -1;
  std::vector<int> device_ids;
};

struct ClusterGraph {
  std::vector<GpuTypeInfo> types;
  std::vector<MachineInfo> machines;
  std::vector<GpuDevice> devices;
  std::vector<int> type_counts;   // devices per type, sums to N
  std::vector<double> links;      // N x N symmetric bandwidth matrix, bytes/s
  std::vector<std::string> warnings;
  std::string fingerprint;        // content hash of the source document

  int size() const { return static_cast<int>(devices.size()); }

  double link(int a, int b) const {
    return links[static_cast<size_t>(a) * devices.size() + static_cast<size_t>(b)];
  }

  const GpuDevice& device(int id) const {
    if (id < 0 || id >= size()) {
      throw ValidationError("unknown device id " + std::to_string(id));
    }
    return devices[static_cast<size_t>(id)];
  }

  int type_of(const std::string& name) const;
};

struct DevicePartition {
  std::vector<int> train_set;    // sorted device ids
  std::vector<int> rollout_set;  // sorted device ids

  // union = all devices, intersection empty, both non-empty
  void validate(const ClusterGraph& cluster) const;
};

struct ClusterAggregate {
  double sum_flops = 0;
  double sum_hbm_bw = 0;
  double sum_internal_link_bw = 0;  // over unordered pairs within the subset
};

// Parses and validates a cluster description document (see README for the
// schema). Expands class-level bandwidths (intra-machine per type,
// inter-machine same-type, cross-type, plus machine-pair overrides) into the
// full pairwise matrix.
ClusterGraph load_cluster_json(const std::string& json_text);
ClusterGraph load_cluster_file(const std::string& path);

ClusterAggregate aggregate(const ClusterGraph& cluster, const std::vector<int>& subset);

}  // namespace rlsched
