#include "rlsched/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <queue>
#include <sstream>

#include "rlsched/cost_model.hpp"

namespace rlsched {

const char* to_string(SimEventKind kind) {
  switch (kind) {
    case SimEventKind::rollout_complete: return "rollout_complete";
    case SimEventKind::batch_ready: return "batch_ready";
    case SimEventKind::train_step_done: return "train_step_done";
    case SimEventKind::weight_sync_begin: return "weight_sync_begin";
    case SimEventKind::weight_sync_end: return "weight_sync_end";
    case SimEventKind::rollout_stall_begin: return "rollout_stall_begin";
    case SimEventKind::rollout_stall_end: return "rollout_stall_end";
  }
  return "unknown";
}

namespace {

constexpr long long kEtaUnbounded = 1'000'000;

enum class PendingKind { batch_done = 0, train_done = 1, sync_done = 2 };

struct Pending {
  double time;
  PendingKind kind;
  long long seq;
  int replica;     // for batch_done
  long long epoch; // invalidates paused batches

  bool operator>(const Pending& other) const {
    if (time != other.time) return time > other.time;
    if (kind != other.kind) return kind > other.kind;
    return seq > other.seq;
  }
};

struct Replica {
  double throughput = 0;
  int capacity = 1;
  long long version = 0;         // weights currently loaded
  long long batch_version = 0;   // weights the in-flight batch started with
  long long batch_reserved = 0;  // worst-case global rank of the batch's last rollout
  bool generating = false;
  bool stalled = false;
  double stall_start = 0;
  double batch_start = 0;
  double batch_end = 0;
  int batch_size = 0;
  long long epoch = 0;
  SplitMix64 rng{0};
  std::vector<int> batch_lengths;
};

struct QueuedRollout {
  long long id;
  long long version;
  int output_len;
};

struct Sim {
  const ScheduledPlan& plan;
  const ClusterGraph& cluster;
  const WorkloadSpec& work;
  const Calibration& calib;
  const SimOptions& options;
  int steps_target;

  std::vector<Replica> replicas;
  std::deque<QueuedRollout> queue;
  std::priority_queue<Pending, std::vector<Pending>, std::greater<Pending>> events;
  long long event_seq = 0;

  long long trainer_version = 0;
  int steps_started = 0;
  int steps_done = 0;
  bool training = false;
  bool syncing = false;
  double trainer_free_since = 0;
  double train_step_start = 0;

  long long produced = 0;
  long long started = 0;  // rollouts begun (in flight or completed)
  long long consumed = 0;
  long long next_rollout_id = 0;
  long long max_staleness = 0;
  long long tokens_consumed = 0;

  double train_time = 0;
  double sync_time = 0;
  double reward_time = 0;
  long long eta = 0;

  SimReport report;
  std::vector<double> step_end_times;

  Sim(const ScheduledPlan& p, const ClusterGraph& c, const WorkloadSpec& w,
      const Calibration& cal, const SimOptions& o, int steps)
      : plan(p), cluster(c), work(w), calib(cal), options(o), steps_target(steps) {}

  void log(double t, SimEventKind kind, int actor, long long id, long long version, double aux) {
    if (options.record_events) {
      report.event_log.push_back(SimEvent{t, kind, actor, id, version, aux});
    }
  }

  void push(double t, PendingKind kind, int replica, long long epoch) {
    events.push(Pending{t, kind, event_seq++, replica, epoch});
  }

  long long rank_budget(long long version) const {
    return work.batch_rollouts * options.sync_every * (version + eta + 1);
  }

  // Staleness gate. A rollout's final queue rank is the number of rollouts
  // whose batches complete no later than its own, so a new batch must (a)
  // keep its own worst-case rank within the budget of its start version and
  // (b) leave enough slack in every in-flight batch it would complete ahead
  // of. Returns the admissible batch size given sampled lengths; may be
  // smaller than `want`.
  int gated_batch_size(const Replica& r, double now, int want,
                       const std::vector<int>& lengths) const {
    if (eta >= kEtaUnbounded) return want;
    int b = want;
    for (int guard = 0; guard <= static_cast<int>(replicas.size()) + 2 && b > 0; ++guard) {
      double tokens = 0;
      for (int i = 0; i < b; ++i) tokens += lengths[static_cast<size_t>(i)];
      // future sync pauses shift every in-flight end equally, so absolute
      // completion times order correctly
      double our_end = now + tokens / r.throughput;

      long long ahead = consumed + static_cast<long long>(queue.size());
      long long leapfrog_slack = std::numeric_limits<long long>::max();
      for (const auto& other : replicas) {
        if (!other.generating) continue;
        if (other.batch_end >= our_end) {
          // we would finish first and push this batch's rollouts back
          leapfrog_slack = std::min(
              leapfrog_slack, rank_budget(other.batch_version) - other.batch_reserved);
        }
        if (other.batch_end <= our_end) {
          ahead += other.batch_size;
        }
      }
      long long own = rank_budget(r.version) - ahead;
      long long cap = std::min(own, leapfrog_slack);
      if (b <= cap) return b;
      b = static_cast<int>(std::max<long long>(cap, 0));
    }
    return b;
  }

  void try_start_replica(int idx, double now) {
    Replica& r = replicas[static_cast<size_t>(idx)];
    if (r.generating || syncing) return;
    int want = r.capacity;
    std::vector<int> lengths;
    lengths.reserve(static_cast<size_t>(want));
    for (int i = 0; i < want; ++i) {
      lengths.push_back(work.length_dist.sample(r.rng.next_double()));
    }
    int batch = gated_batch_size(r, now, want, lengths);
    if (batch <= 0) {
      if (!r.stalled) {
        r.stalled = true;
        r.stall_start = now;
        log(now, SimEventKind::rollout_stall_begin, idx, -1, r.version, 0);
      }
      return;
    }
    if (r.stalled) {
      r.stalled = false;
      report.rollout_stall_time += now - r.stall_start;
      log(now, SimEventKind::rollout_stall_end, idx, -1, r.version, r.stall_start);
    }
    r.batch_lengths.assign(lengths.begin(), lengths.begin() + batch);
    double tokens = 0;
    for (int len : r.batch_lengths) tokens += len;
    double our_end = now + tokens / r.throughput;
    // debit every in-flight batch this one may complete ahead of
    long long ahead = consumed + static_cast<long long>(queue.size());
    for (auto& other : replicas) {
      if (!other.generating) continue;
      if (other.batch_end >= our_end) other.batch_reserved += batch;
      if (other.batch_end <= our_end) ahead += other.batch_size;
    }
    r.generating = true;
    r.batch_start = now;
    r.batch_version = r.version;  // rollouts carry the version at batch start
    r.batch_size = batch;
    r.batch_end = our_end;
    r.batch_reserved = ahead + batch;
    started += batch;
    push(r.batch_end, PendingKind::batch_done, idx, r.epoch);
  }

  void on_batch_done(int idx, double now) {
    Replica& r = replicas[static_cast<size_t>(idx)];
    r.generating = false;
    produced += r.batch_size;
    report.rollout_busy_time += now - r.batch_start;
    for (int len : r.batch_lengths) {
      queue.push_back(QueuedRollout{next_rollout_id, r.batch_version, len});
      log(now, SimEventKind::rollout_complete, idx, next_rollout_id, r.batch_version,
          r.batch_start);
      next_rollout_id++;
    }
    try_start_training(now);
    try_start_replica(idx, now);
  }

  void try_start_training(double now) {
    if (training || syncing) return;
    if (steps_started >= steps_target) return;
    if (static_cast<long long>(queue.size()) < work.batch_rollouts) return;
    log(now, SimEventKind::batch_ready, -1, steps_started + 1, trainer_version, 0);
    for (int i = 0; i < work.batch_rollouts; ++i) {
      QueuedRollout rollout = queue.front();
      queue.pop_front();
      long long staleness = trainer_version - rollout.version;
      max_staleness = std::max(max_staleness, staleness);
      tokens_consumed += work.prompt_len + rollout.output_len;
      consumed++;
    }
    report.trainer_wait_time += now - trainer_free_since;
    training = true;
    steps_started++;
    // reward computation precedes the gradient step; it occupies the
    // rollout side of the pipeline
    report.reward_time_total += reward_time;
    report.rollout_busy_time += reward_time;
    train_step_start = now + reward_time;
    push(train_step_start + train_time, PendingKind::train_done, -1, 0);
  }

  void on_train_done(double now) {
    training = false;
    steps_done++;
    report.train_busy_time += train_time;
    log(now, SimEventKind::train_step_done, -1, steps_done, trainer_version, train_step_start);
    if (steps_done % options.sync_every == 0) {
      syncing = true;
      log(now, SimEventKind::weight_sync_begin, -1, steps_done, trainer_version, 0);
      report.sync_time_total += sync_time;
      // the broadcast pauses every replica mid-batch
      for (size_t i = 0; i < replicas.size(); ++i) {
        Replica& r = replicas[i];
        if (r.generating) {
          r.epoch++;
          r.batch_end += sync_time;
          push(r.batch_end, PendingKind::batch_done, static_cast<int>(i), r.epoch);
        }
      }
      push(now + sync_time, PendingKind::sync_done, -1, 0);
    } else {
      trainer_free_since = now;
      finish_step(now);
      try_start_training(now);
    }
  }

  void on_sync_done(double now) {
    syncing = false;
    trainer_version++;
    log(now, SimEventKind::weight_sync_end, -1, steps_done, trainer_version, 0);
    for (auto& r : replicas) r.version = trainer_version;
    trainer_free_since = now;
    finish_step(now);
    try_start_training(now);
    for (size_t i = 0; i < replicas.size(); ++i) {
      if (!replicas[i].generating) try_start_replica(static_cast<int>(i), now);
    }
  }

  void finish_step(double now) { step_end_times.push_back(now); }

  void run(std::uint64_t seed) {
    eta = std::min<long long>(work.staleness, kEtaUnbounded);
    train_time = plan.costs.c_train / plan.window;
    sync_time = plan.costs.c_update / plan.window;
    reward_time = plan.costs.c_reward / plan.window;

    // instantiate replicas and bind concrete rollout devices
    std::vector<std::deque<int>> free_by_type(cluster.types.size());
    for (int id : plan.partition.rollout_set) {
      free_by_type[static_cast<size_t>(cluster.device(id).gpu_type)].push_back(id);
    }
    for (const auto& entry : plan.rollout_plan.entries) {
      int type = entry.config.gpu_type();
      int per_replica = entry.config.total_devices();
      int concurrency = replica_concurrency(entry.config, cluster, work, calib.params);
      for (int k = 0; k < entry.replicas; ++k) {
        Replica r;
        r.throughput = entry.config.throughput;
        r.capacity = std::max(1, concurrency);
        r.rng = SplitMix64(seed ^ (0x9e3779b97f4a7c15ull *
                                   (static_cast<std::uint64_t>(replicas.size()) + 1)));
        for (int d = 0; d < per_replica; ++d) {
          if (free_by_type[static_cast<size_t>(type)].empty()) {
            throw ValidationError("rollout plan needs more devices than the partition holds");
          }
          report.used_rollout_devices.push_back(free_by_type[static_cast<size_t>(type)].front());
          free_by_type[static_cast<size_t>(type)].pop_front();
        }
        replicas.push_back(std::move(r));
      }
    }
    if (replicas.empty()) {
      throw ValidationError("plan has no rollout replicas to simulate");
    }

    for (size_t i = 0; i < replicas.size(); ++i) {
      try_start_replica(static_cast<int>(i), 0.0);
    }

    double now = 0;
    while (steps_done < steps_target || syncing) {
      if (events.empty()) {
        throw ValidationError("simulation deadlocked; plan and workload are inconsistent");
      }
      Pending ev = events.top();
      events.pop();
      now = ev.time;
      switch (ev.kind) {
        case PendingKind::batch_done: {
          Replica& r = replicas[static_cast<size_t>(ev.replica)];
          if (!r.generating || ev.epoch != r.epoch) break;  // superseded by a pause
          on_batch_done(ev.replica, now);
          break;
        }
        case PendingKind::train_done:
          on_train_done(now);
          break;
        case PendingKind::sync_done:
          on_sync_done(now);
          break;
      }
    }

    report.steps_completed = steps_done;
    report.total_time = now;
    report.max_staleness_observed = max_staleness;
    report.rollouts_produced = produced;
    report.rollouts_consumed = consumed;
    report.rollouts_pending = produced - consumed;
    report.rollouts_in_flight = started - produced;
    report.tokens_consumed = tokens_consumed;
    report.avg_step_time = now / steps_target;
    int warmup = std::min(plan.window, steps_target - 1);
    if (warmup >= 1 && steps_target > warmup) {
      double warm_end = step_end_times[static_cast<size_t>(warmup - 1)];
      report.avg_step_time_steady = (now - warm_end) / (steps_target - warmup);
    } else {
      report.avg_step_time_steady = report.avg_step_time;
    }
    if (now > 0) {
      report.throughput_tokens_per_s = static_cast<double>(tokens_consumed) / now;
    }
  }
};

}  // namespace

SimReport simulate(const ScheduledPlan& plan, const ClusterGraph& cluster,
                   const WorkloadSpec& work, const Calibration& calib, int steps,
                   std::uint64_t seed, const SimOptions& options) {
  if (steps < 1) {
    throw ValidationError("simulation needs at least one step");
  }
  if (!plan.cluster_fingerprint.empty() && plan.cluster_fingerprint != cluster.fingerprint) {
    throw MismatchError("plan was scheduled for a different cluster (fingerprint mismatch)");
  }
  plan.partition.validate(cluster);
  SimOptions opts = options;
  if (opts.sync_every < 1) opts.sync_every = 1;
  Sim sim(plan, cluster, work, calib, opts, steps);
  sim.run(seed);
  SimReport report = std::move(sim.report);

  // dollar cost at simulated throughput
  double per_hour = 0;
  for (int id : plan.partition.train_set) per_hour += cluster.device(id).price_per_hour;
  for (int id : report.used_rollout_devices) per_hour += cluster.device(id).price_per_hour;
  if (report.throughput_tokens_per_s > 0) {
    report.dollar_cost_per_token = per_hour / 3600.0 / report.throughput_tokens_per_s;
  }
  return report;
}

CostTable cost_report(const SimReport& report, const ScheduledPlan& plan,
                      const ClusterGraph& cluster, const WorkloadSpec& work) {
  CostTable table;
  for (int id : plan.partition.train_set) {
    table.train_side_per_hour += cluster.device(id).price_per_hour;
  }
  for (int id : report.used_rollout_devices) {
    table.rollout_side_per_hour += cluster.device(id).price_per_hour;
  }
  table.cluster_per_hour = table.train_side_per_hour + table.rollout_side_per_hour;
  if (report.throughput_tokens_per_s > 0) {
    table.per_token = table.cluster_per_hour / 3600.0 / report.throughput_tokens_per_s;
  }
  if (report.total_time > 0 && report.rollouts_consumed > 0) {
    double generated_tokens =
        static_cast<double>(report.tokens_consumed) -
        static_cast<double>(report.rollouts_consumed) * work.prompt_len;
    if (generated_tokens > 0) {
      table.rollout_side_per_token =
          table.rollout_side_per_hour / 3600.0 / (generated_tokens / report.total_time);
    }
    if (report.tokens_consumed > 0) {
      table.train_side_per_token =
          table.train_side_per_hour / 3600.0 /
          (static_cast<double>(report.tokens_consumed) / report.total_time);
    }
  }
  return table;
}

std::string export_event_log(const SimReport& report) {
  std::ostringstream out;
  out.precision(17);
  for (const auto& ev : report.event_log) {
    out << ev.time << ' ' << to_string(ev.kind) << ' ' << ev.actor << ' ' << ev.id << ' '
        << ev.version << ' ' << ev.aux << '\n';
  }
  return out.str();
}

}  // namespace rlsched
