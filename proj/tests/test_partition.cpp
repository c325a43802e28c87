#include "doctest.h"

#include <cmath>

#include "oracles.hpp"
#include "rlsched/partition.hpp"
#include "test_fixtures.hpp"

using namespace rlsched;
using namespace rlsched::testing;

TEST_CASE("gamma refinement follows the binary-search rule") {
  GammaState g = initial_gamma();
  CHECK(g.gamma_l == 1.0);
  CHECK(g.gamma_h == 1.0);

  GammaState down = refine_gamma(g, 1.0, 2.0);  // C_T < C_I
  CHECK(down.q == 0.0);
  CHECK(down.r == 0.5);
  CHECK(down.gamma_l == doctest::Approx(0.25));
  CHECK(down.gamma_h == doctest::Approx(0.25));

  GammaState up = refine_gamma(g, 2.0, 1.0);  // C_T >= C_I
  CHECK(up.q == 0.5);
  CHECK(up.r == 1.0);
  CHECK(up.gamma_l == doctest::Approx(0.75));

  // interval width is exactly 2^-n after n refinements
  GammaState s = initial_gamma();
  for (int n = 1; n <= 40; ++n) {
    s = refine_gamma(s, (n % 2 == 0) ? 1.0 : 2.0, 1.5);
    CHECK(s.r - s.q == std::ldexp(1.0, -n));
    CHECK(s.gamma_l == (s.q + s.r) / 2);
  }
  CHECK(s.r - s.q < 1e-6);
}

TEST_CASE("two fast-link devices train, two high-HBM devices generate") {
  ClusterGraph g = build_cluster({{"H800ish", 756, 2000, 80, 5.28, 200},
                                  {"H20ish", 148, 4000, 96, 1.85, 450}},
                                 {{"a", "H800ish", 2}, {"b", "H20ish", 2}});
  GammaState gamma;
  gamma.gamma_l = 0.5;
  gamma.gamma_h = 1.0;
  PartitionResult result = graph_partition(g, gamma);
  CHECK(result.partition.train_set == std::vector<int>{0, 1});
  CHECK(result.partition.rollout_set == std::vector<int>{2, 3});

  auto brute = oracle::brute_partition(g, 0.5, 1.0);
  REQUIRE(brute.feasible);
  CHECK(result.objective == doctest::Approx(brute.objective).epsilon(1e-12));
}

TEST_CASE("an all-training band is infeasible") {
  ClusterGraph g = uniform_cluster(4);
  GammaState gamma;  // gamma_l = gamma_h = 1: rollout side would be empty
  CHECK_THROWS_AS(graph_partition(g, gamma), BandInfeasibleError);
}

TEST_CASE("identical devices tie-break to the lowest train ids") {
  ClusterGraph g = uniform_cluster(4);
  GammaState gamma;
  gamma.gamma_l = 0.4;
  gamma.gamma_h = 0.6;
  PartitionResult result = graph_partition(g, gamma);
  CHECK(result.partition.train_set == std::vector<int>{0, 1});
  CHECK(result.compute_fraction == doctest::Approx(0.5));
}

TEST_CASE("returned partitions respect the band and match the oracle") {
  SplitMix64 rng(42);
  for (int round = 0; round < 20; ++round) {
    RandomInstance inst = random_instance(rng, 4 + static_cast<int>(rng.next_below(7)));
    int n = inst.cluster.size();
    if (n < 2) continue;
    // pick a feasible band around a random subset's fraction
    unsigned mask =
        1 + static_cast<unsigned>(rng.next_below((1ull << n) - 2));
    std::vector<int> subset;
    for (int d = 0; d < n; ++d) {
      if (mask & (1u << d)) subset.push_back(d);
    }
    if (subset.empty() || static_cast<int>(subset.size()) == n) continue;
    double f = compute_fraction(inst.cluster, subset);
    GammaState gamma;
    gamma.gamma_l = std::max(0.0, f - 0.05);
    gamma.gamma_h = std::min(1.0, f + 0.05);

    PartitionResult result = graph_partition(inst.cluster, gamma);
    CHECK(result.compute_fraction >= gamma.gamma_l - 1e-9);
    CHECK(result.compute_fraction <= gamma.gamma_h + 1e-9);
    result.partition.validate(inst.cluster);

    auto brute = oracle::brute_partition(inst.cluster, gamma.gamma_l, gamma.gamma_h);
    REQUIRE(brute.feasible);
    CHECK(result.objective == doctest::Approx(brute.objective).epsilon(1e-9));
  }
}

TEST_CASE("local-search tier is feasible and locally optimal") {
  SplitMix64 rng(99);
  PartitionOptions options;
  options.force_local_search = true;
  for (int round = 0; round < 10; ++round) {
    RandomInstance inst = random_instance(rng, 10);
    int n = inst.cluster.size();
    if (n < 3) continue;
    GammaState gamma;
    gamma.gamma_l = 0.2;
    gamma.gamma_h = 0.8;
    PartitionResult result = graph_partition(inst.cluster, gamma, options);
    result.partition.validate(inst.cluster);

    // no feasible single-device move improves the objective
    double base = partition_objective(inst.cluster, result.partition.train_set);
    for (int d = 0; d < n; ++d) {
      std::vector<int> train = result.partition.train_set;
      auto it = std::find(train.begin(), train.end(), d);
      if (it != train.end()) {
        if (train.size() == 1) continue;
        train.erase(it);
      } else {
        if (result.partition.rollout_set.size() == 1) continue;
        train.push_back(d);
        std::sort(train.begin(), train.end());
      }
      double f = compute_fraction(inst.cluster, train);
      if (f < gamma.gamma_l - 1e-9 || f > gamma.gamma_h + 1e-9) continue;
      CHECK(partition_objective(inst.cluster, train) <= base + 1e-9);
    }
  }
}

TEST_CASE("machine granularity moves whole machines") {
  ClusterGraph g = desk_mixed_cluster();
  PartitionOptions options;
  options.machine_granularity = true;
  GammaState gamma;
  gamma.gamma_l = 0.5;
  gamma.gamma_h = 0.95;
  PartitionResult result = graph_partition(g, gamma, options);
  result.partition.validate(g);
  for (const auto& machine : g.machines) {
    bool in_train = std::binary_search(result.partition.train_set.begin(),
                                       result.partition.train_set.end(),
                                       machine.device_ids.front());
    for (int d : machine.device_ids) {
      CHECK(std::binary_search(result.partition.train_set.begin(),
                               result.partition.train_set.end(), d) == in_train);
    }
  }
}
