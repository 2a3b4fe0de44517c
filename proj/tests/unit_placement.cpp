// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <random>

#include "doctest.h"
#include "elfstore/error.hpp"
#include "elfstore/placement.hpp"

using namespace elfstore;

namespace {

struct Population {
  std::map<FogId, std::vector<EdgeStat>> edges;
  SummaryMap summaries;
  GlobalMatrix g;
};

Population make_population(std::mt19937_64& rng, int fogs, int per_fog, double mean, double sd,
                           std::uint64_t capacity = 1 << 24) {
  Population p;
  std::normal_distribution<double> rel(mean, sd);
  int next = 1;
  for (int f = 1; f <= fogs; ++f) {
    auto& list = p.edges[FogId(f)];
    for (int e = 0; e < per_fog; ++e) {
      const double r = std::clamp(rel(rng), 0.5, 0.999);
      list.push_back({EdgeId(next++), r, capacity - (rng() % 1024)});
    }
    p.summaries.emplace(FogId(f), summarize_partition(FogId(f), list));
  }
  std::vector<PartitionSummary> all;
  for (const auto& [f, s] : p.summaries) all.push_back(s);
  p.g = build_global_matrix(all);
  return p;
}

// Conservative contribution recomputed from the raw edges rather than the
// summary helpers.
double oracle_contribution(const std::vector<EdgeStat>& edges, bool high_rel) {
  std::vector<double> r;
  for (const auto& e : edges) r.push_back(e.reliability);
  std::sort(r.begin(), r.end());
  return high_rel ? r[r.size() / 2] : r.front();
}

}  // namespace

TEST_CASE("reliability inequality worked examples") {
  const std::vector<double> three = {0.80, 0.91, 0.95};
  const std::vector<double> two = {0.95, 0.99};
  const std::vector<double> weak = {0.80, 0.91};
  CHECK(reliability_satisfied(0.999, three));
  CHECK(reliability_satisfied(0.999, two));
  CHECK_FALSE(reliability_satisfied(0.999, weak));
  CHECK_FALSE(reliability_satisfied(0.5, {}));
  CHECK(combined_reliability(three) == doctest::Approx(1 - 0.2 * 0.09 * 0.05));
  CHECK(required_reliability(0.999, weak) == doctest::Approx(1 - 0.001 / 0.018));
  CHECK(required_reliability(0.999, two) == 0.0);
}

TEST_CASE("contribution rule") {
  PartitionSummary s;
  s.fog = FogId(1);
  s.r_min = 0.8;
  s.r_med = 0.9;
  s.r_max = 0.95;
  s.c = {1, 1, 1, 1};
  CHECK(contribution_of(s, Quadrant::LL) == 0.8);
  CHECK(contribution_of(s, Quadrant::HL) == 0.8);
  CHECK(contribution_of(s, Quadrant::HH) == 0.9);
  CHECK(contribution_of(s, Quadrant::LH) == 0.9);
  s.c = {1, 0, 0, 0};
  try {
    contribution_of(s, Quadrant::LL);
    FAIL("expected no_edge");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::no_edge);
  }
}

TEST_CASE("two-fog toy instance by hand") {
  const std::vector<EdgeStat> a = {{EdgeId(1), 0.80, 100}, {EdgeId(2), 0.90, 200}};
  const std::vector<EdgeStat> b = {{EdgeId(3), 0.85, 300}, {EdgeId(4), 0.95, 400}};
  SummaryMap sm;
  sm.emplace(FogId(1), summarize_partition(FogId(1), a));
  sm.emplace(FogId(2), summarize_partition(FogId(2), b));
  const std::vector<PartitionSummary> all = {sm.at(FogId(1)), sm.at(FogId(2))};
  const auto g = build_global_matrix(all);
  ReplicaRequirement req;
  req.block_size = 50;
  req.target_reliability = 0.95;
  req.min_replicas = 2;
  req.max_replicas = 4;
  const auto plan = choose_replica_fogs(g, sm, req, 1);
  REQUIRE(plan.replica_count >= 2);
  double failure = 1;
  for (const auto& c : plan.choices) {
    failure *= 1 - c.contribution;
    CHECK(c.contribution == contribution_of(sm.at(c.fog), c.hint));
  }
  CHECK(1 - plan.achieved_reliability_bound == doctest::Approx(failure));
  CHECK_FALSE(plan.reliability_unmet);
  CHECK(plan.choices[0].fog != plan.choices[1].fog);
}

TEST_CASE("input validation") {
  std::mt19937_64 rng(1);
  const auto p = make_population(rng, 2, 2, 0.9, 0.03);
  ReplicaRequirement req;
  req.block_size = 10;
  req.target_reliability = 1.0;
  CHECK_THROWS_AS(choose_replica_fogs(p.g, p.summaries, req, 1), Error);
  req.target_reliability = 0.9;
  req.min_replicas = 3;
  req.max_replicas = 2;
  CHECK_THROWS_AS(choose_replica_fogs(p.g, p.summaries, req, 1), Error);
  req.min_replicas = 5;
  req.max_replicas = 6;
  try {
    choose_replica_fogs(p.g, p.summaries, req, 1);
    FAIL("expected insufficient_capacity");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::insufficient_capacity);
  }
  req.min_replicas = 1;
  req.block_size = 1ULL << 40;
  CHECK_THROWS_AS(choose_replica_fogs(p.g, p.summaries, req, 1), Error);
}

TEST_CASE("property: plan invariants over random populations") {
  std::mt19937_64 rng(99);
  const double targets[] = {0.9, 0.99, 0.999, 0.9999};
  for (int trial = 0; trial < 400; ++trial) {
    const int fogs = 1 + static_cast<int>(rng() % 6);
    const int per = 1 + static_cast<int>(rng() % 6);
    const auto p = make_population(rng, fogs, per, 0.85, 0.06);
    ReplicaRequirement req;
    req.block_size = 100;
    req.target_reliability = targets[rng() % 4];
    req.min_replicas = 1 + static_cast<int>(rng() % 2);
    req.max_replicas = req.min_replicas + static_cast<int>(rng() % 4);
    const bool edge_client = rng() % 2 == 0;
    if (edge_client) {
      const FogId home(1 + static_cast<int>(rng() % fogs));
      req.client_fog = home;
      req.client_is_edge = true;
      req.client_edge_reliability = p.edges.at(home).front().reliability;
    }
    if (req.min_replicas > fogs * per) continue;
    const std::uint64_t seed = rng();
    const auto plan = choose_replica_fogs(p.g, p.summaries, req, seed);

    CHECK(plan.replica_count == static_cast<int>(plan.choices.size()));
    CHECK(plan.replica_count >= req.min_replicas);
    CHECK(plan.replica_count <= req.max_replicas);
    const auto contrib = plan.contributions();
    if (!plan.reliability_unmet) {
      CHECK(reliability_satisfied(req.target_reliability, contrib));
    } else {
      // Either the cap was hit or every edge already holds a replica.
      CHECK((plan.replica_count == req.max_replicas || plan.replica_count == fogs * per));
    }
    // Minimality: no shorter prefix (respecting the lower bound) would do.
    if (plan.replica_count > req.min_replicas) {
      const std::span<const double> prefix(contrib.data(), contrib.size() - 1);
      CHECK_FALSE(reliability_satisfied(req.target_reliability, prefix));
    }
    std::set<FogId> used;
    std::map<FogId, int> per_fog;
    for (std::size_t i = 0; i < plan.choices.size(); ++i) {
      const auto& c = plan.choices[i];
      ++per_fog[c.fog];
      used.insert(c.fog);
      if (c.local_pinned) {
        CHECK(i == 0);
        CHECK(c.contribution == *req.client_edge_reliability);
        continue;
      }
      CHECK(c.contribution ==
            oracle_contribution(p.edges.at(c.fog), high_reliability(c.hint)));
      // Never more replicas in a fog quadrant than it has edges.
      CHECK(static_cast<std::uint32_t>(per_fog[c.fog]) <= p.summaries.at(c.fog).edge_total);
    }
    if (edge_client) CHECK(plan.choices[0].fog == *req.client_fog);
    const bool reused = std::any_of(per_fog.begin(), per_fog.end(),
                                    [](const auto& kv) { return kv.second > 1; });
    CHECK(reused == plan.fog_reuse);
    if (reused) CHECK(used.size() == p.summaries.size());

    const auto again = choose_replica_fogs(p.g, p.summaries, req, seed);
    CHECK(again.choices == plan.choices);
  }
}

TEST_CASE("replication factor on small and large populations") {
  std::mt19937_64 rng(2024);
  std::set<int> small_q, large_q;
  for (int trial = 0; trial < 50; ++trial) {
    const auto p = make_population(rng, 4, 4, 0.90, 0.03);
    ReplicaRequirement req;
    req.block_size = 1000;
    req.target_reliability = 0.99;
    for (int i = 0; i < 20; ++i) small_q.insert(choose_replica_fogs(p.g, p.summaries, req, rng()).replica_count);
  }
  CHECK(small_q.size() >= 1);
  CHECK(*small_q.begin() >= 2);
  CHECK(*small_q.rbegin() <= 3);

  const auto p = make_population(rng, 16, 16, 0.80, 0.05);
  const double targets[] = {0.9, 0.99, 0.999, 0.9999};
  for (int i = 0; i < 400; ++i) {
    ReplicaRequirement req;
    req.block_size = 1000;
    req.target_reliability = targets[i % 4];
    // Clients sit on edges, so the first replica is their own device.
    const FogId home(1 + i % 16);
    req.client_fog = home;
    req.client_is_edge = true;
    req.client_edge_reliability = p.edges.at(home)[(i / 16) % 16].reliability;
    large_q.insert(choose_replica_fogs(p.g, p.summaries, req, rng()).replica_count);
  }
  std::string seen;
  for (int q : large_q) seen += std::to_string(q) + " ";
  CAPTURE(seen);
  CHECK(large_q == std::set<int>{2, 3, 4, 5});
}

TEST_CASE("edge choice inside a fog") {
  const std::vector<EdgeStat> edges = {{EdgeId(1), 0.85, 10}, {EdgeId(2), 0.88, 10},
                                       {EdgeId(3), 0.95, 90}, {EdgeId(4), 0.97, 80}};
  const auto s = summarize_partition(FogId(1), edges);
  REQUIRE(s.count(Quadrant::LL) == 2);
  CHECK(choose_edge_in_fog(edges, s, Quadrant::LL, 5) == EdgeId(1));
  CHECK(choose_edge_in_fog(edges, s, Quadrant::HH, 5) == EdgeId(3));
  // Nothing in HL: fall back to the least reliable edge with room.
  CHECK(choose_edge_in_fog(edges, s, Quadrant::HL, 5) == EdgeId(1));
  CHECK(choose_edge_in_fog(edges, s, Quadrant::LL, 50) == EdgeId(3));
  CHECK(choose_edge_in_fog(edges, s, Quadrant::LL, 5, 0.86) == EdgeId(2));
  CHECK(choose_edge_in_fog(edges, s, Quadrant::LL, 5, 0.0, {EdgeId(1)}) == EdgeId(2));
  try {
    choose_edge_in_fog(edges, s, Quadrant::LL, 1000);
    FAIL("expected no_capacity");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::no_capacity);
  }
}

TEST_CASE("property: edge choice matches a filter-and-min scan and is conservative") {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<EdgeStat> edges;
    for (int i = 0; i < 16; ++i) {
      edges.push_back({EdgeId(i), 0.5 + 0.49 * static_cast<double>(rng() % 1000) / 1000,
                       rng() % 200});
    }
    const auto s = summarize_partition(FogId(1), edges);
    const Quadrant hint = kAllQuadrants[rng() % 4];
    const std::uint64_t size = rng() % 150;
    const double floor = s.count(hint) > 0 ? contribution_of(s, hint) : 0.0;

    auto scan = [&](bool want_hint) -> std::optional<EdgeId> {
      std::optional<EdgeStat> best;
      for (const auto& e : edges) {
        if (e.free_storage < size || e.reliability < floor) continue;
        const bool in = local_quadrant(s, e.reliability, e.free_storage) == hint;
        if (in != want_hint) continue;
        if (!best || std::pair(e.reliability, e.edge) < std::pair(best->reliability, best->edge)) best = e;
      }
      return best ? std::optional(best->edge) : std::nullopt;
    };
    auto expect = scan(true);
    if (!expect) expect = scan(false);
    if (!expect) {
      CHECK_THROWS_AS(choose_edge_in_fog(edges, s, hint, size, floor), Error);
      continue;
    }
    const EdgeId got = choose_edge_in_fog(edges, s, hint, size, floor);
    CHECK(got == *expect);
    const auto it = std::find_if(edges.begin(), edges.end(), [&](const auto& e) { return e.edge == got; });
    CHECK(it->reliability >= floor);
  }
}

TEST_CASE("recovery target") {
  SummaryMap sm;
  auto fog = [&](int id, double r) {
    const std::vector<EdgeStat> one = {{EdgeId(id * 10), r, 1000}};
    sm.emplace(FogId(id), summarize_partition(FogId(id), one));
  };
  fog(1, 0.80);
  fog(2, 0.86);
  fog(3, 0.95);
  std::vector<PartitionSummary> all;
  for (const auto& [f, s] : sm) all.push_back(s);
  const auto g = build_global_matrix(all);
  CHECK(choose_recovery_fog(g, sm, 0.85, 10, {}).fog == FogId(2));
  CHECK(choose_recovery_fog(g, sm, 0.85, 10, {FogId(2), FogId(3)}).fog == FogId(1));
  CHECK(choose_recovery_fog(g, sm, 0.85, 10, {}, 0.9).fog == FogId(3));
  const auto weak = choose_recovery_fog(g, sm, 0.85, 10, {FogId(3)}, 0.9);
  CHECK(weak.below_floor);
  CHECK(weak.fog == FogId(2));
  CHECK_THROWS_AS(choose_recovery_fog(g, sm, 0.85, 10, {FogId(1), FogId(2), FogId(3)}), Error);
  CHECK_THROWS_AS(choose_recovery_fog(g, sm, 0.85, 5000, {}), Error);
}

TEST_CASE("property: recovery target matches a nearest-contribution scan") {
  std::mt19937_64 rng(41);
  for (int trial = 0; trial < 200; ++trial) {
    const auto p = make_population(rng, 6, 5, 0.85, 0.06);
    const double failed = 0.6 + 0.39 * static_cast<double>(rng() % 1000) / 1000;
    std::set<FogId> exclude;
    for (int f = 1; f <= 6; ++f) {
      if (rng() % 3 == 0) exclude.insert(FogId(f));
    }
    if (exclude.size() == 6) exclude.erase(exclude.begin());
    double best_d = 1e9;
    FogId best_fog;
    for (const auto& [f, edges] : p.edges) {
      if (exclude.contains(f)) continue;
      for (bool hi : {true, false}) {
        const double c = oracle_contribution(edges, hi);
        const double d = std::abs(c - failed);
        if (d < best_d) {
          best_d = d;
          best_fog = f;
        }
      }
    }
    const auto got = choose_recovery_fog(p.g, p.summaries, failed, 10, exclude);
    CHECK(std::abs(got.contribution - failed) == doctest::Approx(best_d));
    CHECK(got.fog == best_fog);
  }
}
