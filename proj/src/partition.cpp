#include "rlsched/partition.hpp"

#include <algorithm>
#include <numeric>

#include "rlsched/common.hpp"

namespace rlsched {

GammaState refine_gamma(GammaState state, double c_train, double c_infer) {
  if (c_train < c_infer) {
    state.r = (state.q + state.r) / 2.0;
  } else {
    state.q = (state.q + state.r) / 2.0;
  }
  double mid = (state.q + state.r) / 2.0;
  state.gamma_l = mid;
  state.gamma_h = mid;
  return state;
}

namespace {

// A unit is one movable atom: a single device, or a whole machine when
// machine granularity is requested.
struct Units {
  std::vector<std::vector<int>> members;  // device ids per unit
  std::vector<double> flops;
  std::vector<double> hbm;
  std::vector<double> internal_link;       // link bandwidth inside the unit
  std::vector<std::vector<double>> cross;  // pairwise link bandwidth between units
  double total_flops = 0;
  double total_hbm = 0;
  double total_link = 0;
};

Units build_units(const ClusterGraph& cluster, bool machine_granularity) {
  Units u;
  // machine granularity needs at least two movable atoms
  if (machine_granularity && cluster.machines.size() >= 2) {
    for (const auto& machine : cluster.machines) {
      u.members.push_back(machine.device_ids);
    }
  } else {
    for (const auto& d : cluster.devices) {
      u.members.push_back({d.id});
    }
  }
  size_t n = u.members.size();
  u.flops.assign(n, 0);
  u.hbm.assign(n, 0);
  u.internal_link.assign(n, 0);
  u.cross.assign(n, std::vector<double>(n, 0));
  for (size_t i = 0; i < n; ++i) {
    for (size_t a = 0; a < u.members[i].size(); ++a) {
      const GpuDevice& d = cluster.device(u.members[i][a]);
      u.flops[i] += d.flops;
      u.hbm[i] += d.hbm_bandwidth;
      for (size_t b = a + 1; b < u.members[i].size(); ++b) {
        u.internal_link[i] += cluster.link(u.members[i][a], u.members[i][b]);
      }
    }
    for (size_t j = i + 1; j < n; ++j) {
      double bw = 0;
      for (int a : u.members[i]) {
        for (int b : u.members[j]) {
          bw += cluster.link(a, b);
        }
      }
      u.cross[i][j] = u.cross[j][i] = bw;
    }
  }
  u.total_flops = std::accumulate(u.flops.begin(), u.flops.end(), 0.0);
  u.total_hbm = std::accumulate(u.hbm.begin(), u.hbm.end(), 0.0);
  for (size_t i = 0; i < n; ++i) {
    u.total_link += u.internal_link[i];
    for (size_t j = i + 1; j < n; ++j) u.total_link += u.cross[i][j];
  }
  return u;
}

// Incremental view of one bisection over units.
struct State {
  const Units& u;
  std::vector<char> in_train;
  std::vector<double> link_to_train;  // per unit, cross bandwidth into D_T
  double link_train = 0;
  double hbm_train = 0;
  double flops_train = 0;
  int train_count = 0;

  explicit State(const Units& units) : u(units) {
    in_train.assign(u.members.size(), 0);
    link_to_train.assign(u.members.size(), 0);
  }

  void add(size_t i) {
    link_train += link_to_train[i] + u.internal_link[i];
    hbm_train += u.hbm[i];
    flops_train += u.flops[i];
    train_count++;
    in_train[i] = 1;
    for (size_t j = 0; j < u.members.size(); ++j) {
      if (j != i) link_to_train[j] += u.cross[i][j];
    }
  }

  void remove(size_t i) {
    in_train[i] = 0;
    for (size_t j = 0; j < u.members.size(); ++j) {
      if (j != i) link_to_train[j] -= u.cross[i][j];
    }
    link_train -= link_to_train[i] + u.internal_link[i];
    hbm_train -= u.hbm[i];
    flops_train -= u.flops[i];
    train_count--;
  }

  double objective() const {
    double link_frac = u.total_link > 0 ? link_train / u.total_link : 0;
    return link_frac + (u.total_hbm - hbm_train) / u.total_hbm;
  }

  double fraction() const { return flops_train / u.total_flops; }

  double objective_after_move(size_t i, bool to_train) const {
    double lt = link_train;
    if (to_train) {
      lt += link_to_train[i] + u.internal_link[i];
    } else {
      lt -= link_to_train[i] + u.internal_link[i];
    }
    double hbm = hbm_train + (to_train ? u.hbm[i] : -u.hbm[i]);
    double link_frac = u.total_link > 0 ? lt / u.total_link : 0;
    return link_frac + (u.total_hbm - hbm) / u.total_hbm;
  }

  double fraction_after_move(size_t i, bool to_train) const {
    return (flops_train + (to_train ? u.flops[i] : -u.flops[i])) / u.total_flops;
  }

  // swap a (train) with b (rollout)
  double objective_after_swap(size_t a, size_t b) const {
    double lt = link_train - (link_to_train[a] + u.internal_link[a]) +
                (link_to_train[b] + u.internal_link[b]) - u.cross[a][b];
    double hbm = hbm_train - u.hbm[a] + u.hbm[b];
    double link_frac = u.total_link > 0 ? lt / u.total_link : 0;
    return link_frac + (u.total_hbm - hbm) / u.total_hbm;
  }

  double fraction_after_swap(size_t a, size_t b) const {
    return (flops_train - u.flops[a] + u.flops[b]) / u.total_flops;
  }

  std::vector<int> train_devices() const {
    std::vector<int> out;
    for (size_t i = 0; i < in_train.size(); ++i) {
      if (in_train[i]) out.insert(out.end(), u.members[i].begin(), u.members[i].end());
    }
    std::sort(out.begin(), out.end());
    return out;
  }
};

struct Band {
  double lo;
  double hi;
  bool contains(double f) const { return f >= lo && f <= hi; }
};

// Keeps the k best results. Two bisections are considered equivalent when
// both the objective and the per-machine device counts of the train side
// match; the lexicographically smallest train set represents the class.
struct TopK {
  TopK(int k, const ClusterGraph& cluster)
      : k_(static_cast<size_t>(k)), cluster_(cluster) {}

  struct Entry {
    double objective;
    std::vector<int> footprint;
    std::vector<int> train;
  };

  void offer(double obj, std::vector<int> train_ids) {
    std::vector<int> footprint(cluster_.machines.size(), 0);
    for (int id : train_ids) {
      footprint[static_cast<size_t>(cluster_.device(id).machine_id)]++;
    }
    for (auto& entry : items_) {
      if (std::abs(entry.objective - obj) <= 1e-12 && entry.footprint == footprint) {
        if (train_ids < entry.train) entry.train = std::move(train_ids);
        return;
      }
    }
    items_.push_back(Entry{obj, std::move(footprint), std::move(train_ids)});
    std::sort(items_.begin(), items_.end(), [](const Entry& a, const Entry& b) {
      if (a.objective != b.objective) return a.objective > b.objective;
      return a.train < b.train;
    });
    if (items_.size() > k_) items_.pop_back();
  }

  bool empty() const { return items_.empty(); }
  const std::vector<Entry>& items() const { return items_; }

 private:
  size_t k_;
  const ClusterGraph& cluster_;
  std::vector<Entry> items_;
};

void exact_enumeration(const Units& u, const Band& band, TopK& best) {
  size_t n = u.members.size();
  for (std::uint64_t mask = 1; mask + 1 < (1ull << n); ++mask) {
    State s(u);
    for (size_t i = 0; i < n; ++i) {
      if (mask & (1ull << i)) s.add(i);
    }
    if (!band.contains(s.fraction())) continue;
    best.offer(s.objective(), s.train_devices());
  }
}

bool greedy_seed(State& st, const Band& band, const std::vector<size_t>& order,
                 double target_fraction) {
  const int n = static_cast<int>(st.u.members.size());
  for (size_t i : order) {
    if (st.fraction() >= target_fraction) break;
    if (st.train_count + 1 >= n) break;
    st.add(i);
  }
  // Pump the compute fraction into the band: drop small units when above,
  // add units when below, preferring ones that do not overshoot.
  for (int guard = 0; guard < 4 * n; ++guard) {
    double f = st.fraction();
    if (band.contains(f)) break;
    if (f > band.hi) {
      if (st.train_count <= 1) return false;
      size_t pick = st.u.members.size();
      for (size_t i = 0; i < st.in_train.size(); ++i) {
        if (st.in_train[i] && (pick == st.u.members.size() || st.u.flops[i] < st.u.flops[pick])) {
          pick = i;
        }
      }
      st.remove(pick);
    } else {
      if (st.train_count + 1 >= n) return false;
      size_t pick = st.u.members.size();
      for (size_t i : order) {
        if (st.in_train[i]) continue;
        if (st.fraction_after_move(i, true) <= band.hi + 1e-15) {
          pick = i;
          break;
        }
      }
      if (pick == st.u.members.size()) {
        for (size_t i = 0; i < st.in_train.size(); ++i) {
          if (!st.in_train[i] &&
              (pick == st.u.members.size() || st.u.flops[i] < st.u.flops[pick])) {
            pick = i;
          }
        }
        if (pick == st.u.members.size()) return false;
      }
      st.add(pick);
    }
  }
  return band.contains(st.fraction()) && st.train_count > 0 && st.train_count < n;
}

void local_search(const Units& u, const Band& band, const PartitionOptions& options, TopK& best) {
  size_t n = u.members.size();
  std::vector<double> base_score(n);
  for (size_t i = 0; i < n; ++i) {
    double link_density = 0;
    for (size_t j = 0; j < n; ++j) {
      if (j != i) link_density += u.cross[i][j];
    }
    link_density += 2.0 * u.internal_link[i];
    if (n > 1) link_density /= static_cast<double>(n - 1);
    base_score[i] = link_density * u.flops[i];
  }

  for (int restart = 0; restart < options.restarts; ++restart) {
    SplitMix64 rng(options.seed + static_cast<std::uint64_t>(restart) * 0x9e3779b97f4a7c15ull);
    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), size_t{0});
    std::vector<double> score = base_score;
    if (restart > 0) {
      for (auto& s : score) s *= 0.5 + rng.next_double();
    }
    std::stable_sort(order.begin(), order.end(),
                     [&](size_t a, size_t b) { return score[a] > score[b]; });

    // sweep seed sizes across the band so each restart explores a
    // different compute fraction
    double band_hi = std::min(band.hi, 1.0);
    double band_lo = std::max(band.lo, 0.0);
    double target =
        band_lo + (restart + 0.5) / options.restarts * (band_hi - band_lo);
    State st(u);
    if (!greedy_seed(st, band, order, target)) continue;

    // steepest-ascent over single moves and swaps
    while (true) {
      double cur = st.objective();
      double best_gain = 1e-12;
      int move_kind = -1;  // 0 = move, 1 = swap
      size_t mi = 0, mj = 0;
      for (size_t i = 0; i < n; ++i) {
        bool to_train = !st.in_train[i];
        if (to_train && st.train_count + 1 == static_cast<int>(n)) continue;
        if (!to_train && st.train_count == 1) continue;
        if (!band.contains(st.fraction_after_move(i, to_train))) continue;
        double gain = st.objective_after_move(i, to_train) - cur;
        if (gain > best_gain) {
          best_gain = gain;
          move_kind = 0;
          mi = i;
        }
      }
      for (size_t a = 0; a < n; ++a) {
        if (!st.in_train[a]) continue;
        for (size_t b = 0; b < n; ++b) {
          if (st.in_train[b]) continue;
          if (!band.contains(st.fraction_after_swap(a, b))) continue;
          double gain = st.objective_after_swap(a, b) - cur;
          if (gain > best_gain) {
            best_gain = gain;
            move_kind = 1;
            mi = a;
            mj = b;
          }
        }
      }
      if (move_kind < 0) break;
      if (move_kind == 0) {
        if (st.in_train[mi]) {
          st.remove(mi);
        } else {
          st.add(mi);
        }
      } else {
        st.remove(mi);
        st.add(mj);
      }
    }
    best.offer(st.objective(), st.train_devices());
  }
}

}  // namespace

double partition_objective(const ClusterGraph& cluster, const std::vector<int>& train_set) {
  Units u = build_units(cluster, false);
  State st(u);
  for (int id : train_set) st.add(static_cast<size_t>(id));
  return st.objective();
}

double compute_fraction(const ClusterGraph& cluster, const std::vector<int>& train_set) {
  double total = 0;
  double train = 0;
  for (const auto& d : cluster.devices) total += d.flops;
  for (int id : train_set) train += cluster.device(id).flops;
  return train / total;
}

std::vector<PartitionResult> graph_partition_candidates(const ClusterGraph& cluster,
                                                        const GammaState& gamma,
                                                        const PartitionOptions& options, int k) {
  if (cluster.size() < 2) {
    throw ValidationError("graph_partition requires at least two devices");
  }
  Units u = build_units(cluster, options.machine_granularity);
  Band band{gamma.gamma_l - options.band_epsilon, gamma.gamma_h + options.band_epsilon};

  TopK best(k, cluster);
  size_t n = u.members.size();
  if (!options.force_local_search && static_cast<int>(n) <= options.exact_threshold && n <= 20) {
    exact_enumeration(u, band, best);
  } else {
    local_search(u, band, options, best);
  }
  if (best.empty()) {
    throw BandInfeasibleError("no bisection satisfies the compute-fraction band [" +
                              std::to_string(gamma.gamma_l) + ", " +
                              std::to_string(gamma.gamma_h) + "]");
  }

  std::vector<PartitionResult> results;
  for (const auto& entry : best.items()) {
    PartitionResult result;
    result.objective = entry.objective;
    result.partition.train_set = entry.train;
    for (const auto& d : cluster.devices) {
      if (!std::binary_search(entry.train.begin(), entry.train.end(), d.id)) {
        result.partition.rollout_set.push_back(d.id);
      }
    }
    result.compute_fraction = compute_fraction(cluster, result.partition.train_set);
    result.partition.validate(cluster);
    results.push_back(std::move(result));
  }
  return results;
}

PartitionResult graph_partition(const ClusterGraph& cluster, const GammaState& gamma,
                                const PartitionOptions& options) {
  return graph_partition_candidates(cluster, gamma, options, 1).front();
}

}  // namespace rlsched
