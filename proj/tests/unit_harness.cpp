// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <sstream>

#include "doctest.h"
#include "elfstore/error.hpp"
#include "elfstore/harness.hpp"

using namespace elfstore;

namespace {

ClusterSpec spec_with_seed(std::uint64_t seed) {
  ClusterSpec s;
  s.seed = seed;
  return s;
}

WorkloadSpec mixed(int clients, int blocks, int ops) {
  WorkloadSpec w;
  w.clients = clients;
  w.blocks_per_client = blocks;
  w.ops_per_client = ops;
  w.mix = parse_mix("put=0.1,get=0.5,find=0.2,meta=0.2");
  return w;
}

std::string run_report(std::uint64_t seed) {
  SimCluster c(spec_with_seed(seed));
  c.run_workload(mixed(6, 8, 20));
  c.fail_edge(FailurePolicy::least_reliable);
  c.await_recovery();
  return c.report().dump();
}

// "a.b.c  value" rows from the table renderer.
std::map<std::string, std::string> parse_table(const std::string& text) {
  std::map<std::string, std::string> out;
  std::istringstream in(text);
  std::string key, value;
  while (in >> key >> value) out[key] = value;
  return out;
}

}  // namespace

TEST_CASE("identical spec, workload and seed give byte-identical reports") {
  const auto a = run_report(21);
  const auto b = run_report(21);
  CHECK(a == b);
  CHECK(a != run_report(22));
}

TEST_CASE("report structure and internal consistency") {
  SimCluster c(spec_with_seed(4));
  c.run_workload(mixed(8, 10, 25));
  const json r = c.report();
  CHECK(r.at("schema_version") == 1);
  for (const char* k : {"cluster", "edges", "workloads", "ops", "replication", "put_data_path",
                        "local_reads", "find", "meta", "leases", "recovery", "audits",
                        "matrix_series", "transport", "virtual_time"}) {
    CHECK_MESSAGE(r.contains(k), k);
  }
  const auto& rep = r.at("replication");
  std::uint64_t total = 0;
  double weighted = 0;
  for (const auto& [q, n] : rep.at("histogram").items()) {
    const int qi = std::stoi(q);
    CHECK(qi >= 2);
    CHECK(qi <= 5);
    total += n.get<std::uint64_t>();
    weighted += qi * n.get<double>();
  }
  CHECK(total == rep.at("puts").get<std::uint64_t>());
  CHECK(rep.at("mean_q").get<double>() == doctest::Approx(weighted / static_cast<double>(total)));

  const auto& lr = r.at("local_reads");
  CHECK(lr.at("fraction").get<double>() ==
        doctest::Approx(lr.at("local").get<double>() / lr.at("gets").get<double>()));
  CHECK(r.at("edges").size() == 16);
  CHECK(r.at("find").at("false_negatives") == 0);

  // Every meta rejection was genuinely stale.
  CHECK(r.at("meta").at("stale") == r.at("meta").at("stale_genuine"));
  CHECK(c.audit("end").passed);
}

TEST_CASE("table rendering agrees with the JSON") {
  SimCluster c(spec_with_seed(8));
  c.run_workload(mixed(4, 5, 10));
  const json r = c.report();
  const auto rows = parse_table(report_table(r));
  CHECK(rows.at("schema_version") == "1");
  CHECK(std::stod(rows.at("replication.mean_q")) ==
        doctest::Approx(r.at("replication").at("mean_q").get<double>()));
  CHECK(std::stoull(rows.at("local_reads.gets")) == r.at("local_reads").at("gets").get<std::uint64_t>());
  CHECK(rows.at("cluster.fogs") == "4");
}

TEST_CASE("a cluster with no workload still reports") {
  SimCluster c(spec_with_seed(1));
  const json r = c.report();
  CHECK(r.at("replication").at("puts") == 0);
  CHECK(r.at("local_reads").at("gets") == 0);
  CHECK(r.at("audits").empty());
  CHECK_FALSE(report_table(r).empty());
  CHECK(c.audit("empty").passed);
}

TEST_CASE("spec JSON round-trips and mirrors the CLI names") {
  ClusterSpec s;
  s.fog_count = 6;
  s.edges_per_fog = 3;
  s.buddies = 1;
  s.rel_mean = 0.8;
  s.seed = 99;
  const auto j = to_json(s);
  CHECK(j.at("fogs") == 6);
  CHECK(j.at("edges_per_fog") == 3);
  const auto back = cluster_spec_from_json(j);
  CHECK(to_json(back) == j);

  WorkloadSpec w;
  w.clients = 3;
  w.leasing = true;
  w.reliabilities = {{0.9, 0.5}, {0.999, 0.5}};
  w.mix = parse_mix("get=0.25,meta=0.75");
  const auto wj = to_json(w);
  CHECK(to_json(workload_spec_from_json(wj)) == wj);

  const auto m = parse_mix("put=0.2,get=0.8");
  CHECK(m.put == 0.2);
  CHECK(m.get == 0.8);
  CHECK(m.find == 0.0);
  CHECK(parse_mix("meta_update=1").meta_update == 1.0);
  CHECK_THROWS_AS(parse_mix("jump=1"), Error);

  auto from_cli_like = workload_spec_from_json(json::parse(
      R"({"clients": 2, "reliabilities": [0.9, 0.99], "mix": "get=1", "size": 4096})"));
  CHECK(from_cli_like.clients == 2);
  REQUIRE(from_cli_like.reliabilities.size() == 2);
  CHECK(from_cli_like.reliabilities[1].value == 0.99);
  CHECK(from_cli_like.block_sizes.at(0).value == 4096);
}

TEST_CASE("invalid specs are rejected") {
  ClusterSpec s;
  s.fog_count = 0;
  CHECK_THROWS_AS(SimCluster{s}, Error);
  s = ClusterSpec{};
  s.buddies = 4;
  CHECK_THROWS_AS(SimCluster{s}, Error);
  s = ClusterSpec{};
  s.rel_std = -1;
  CHECK_THROWS_AS(s.validate(), Error);

  WorkloadSpec w;
  w.min_replicas = 3;
  w.max_replicas = 2;
  CHECK_THROWS_AS(w.validate(), Error);
  w = WorkloadSpec{};
  w.reliabilities = {{1.0, 1.0}};
  CHECK_THROWS_AS(w.validate(), Error);
}

TEST_CASE("leased writers on one stream commit in contiguous runs") {
  SimCluster c(spec_with_seed(12));
  WorkloadSpec w;
  w.clients = 3;
  w.blocks_per_client = 10;
  w.leasing = true;
  w.shared_stream = true;
  c.run_workload(w);
  const auto& committed = c.committed();
  REQUIRE(committed.size() == 30);
  const StreamId stream = committed.front().first.stream;
  std::optional<StreamRecord> rec;
  for (FogId f : c.topology().fog_ids()) {
    if (!rec) rec = c.fog(f).stream_record(stream);
  }
  REQUIRE(rec);
  CHECK(rec->registry.size() == 30);
  // Runs of one session key never interleave.
  std::vector<std::string> order;
  for (const auto& e : c.fog(rec->owner).audit_log()) {
    if (e.op == "put" && e.stream == stream) order.push_back(e.session_key);
  }
  REQUIRE(order.size() == 30);
  std::set<std::string> finished;
  for (std::size_t i = 0; i < order.size(); ++i) {
    CHECK_FALSE(order[i].empty());
    if (i > 0 && order[i] != order[i - 1]) {
      CHECK_FALSE(finished.contains(order[i]));
      finished.insert(order[i - 1]);
    }
  }
  CHECK(c.report().at("leases").at("opens").get<int>() >= 6);
}

TEST_CASE("uniform local-read fraction follows the replica-spread expectation") {
  // A reader's fog holds the block if it wrote it, or if one of the other
  // q-1 replicas landed there; those go to q-1 distinct fogs out of F-1.
  for (int fogs : {4, 8, 16}) {
    for (std::uint64_t seed : {1, 2}) {
      ClusterSpec s;
      s.fog_count = fogs;
      s.edges_per_fog = 4;
      s.rel_mean = 0.90;
      s.rel_std = 0.03;
      s.seed = seed;
      WorkloadSpec w;
      w.clients = 16;
      w.blocks_per_client = 25;
      w.ops_per_client = 50;
      w.mix = OpMix{0, 1, 0, 0};
      SimCluster c(s);
      c.run_workload(w);
      const json r = c.report();
      const double F = fogs;
      const double q = r.at("replication").at("mean_q").get<double>();
      const double expected = 1 / F + (1 - 1 / F) * (q - 1) / (F - 1);
      const double got = r.at("local_reads").at("fraction").get<double>();
      CAPTURE(fogs);
      CAPTURE(seed);
      CHECK(std::abs(got - expected) <= 0.10);
    }
  }
}
