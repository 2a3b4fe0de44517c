// SPDX-License-Identifier: Apache-2.0
//
// Fog service behavior through the typed client on a small simulated cluster.

#include <algorithm>
#include <set>

#include "doctest.h"
#include "elfstore/client.hpp"
#include "elfstore/crypto.hpp"
#include "elfstore/error.hpp"
#include "elfstore/harness.hpp"
#include "elfstore/placement.hpp"

using namespace elfstore;

namespace {

ClusterSpec small_spec(std::uint64_t seed = 5) {
  ClusterSpec s;
  s.fog_count = 4;
  s.edges_per_fog = 4;
  s.seed = seed;
  return s;
}

Payload bytes_of(const std::string& tag, std::size_t n = 2048) {
  std::string s;
  while (s.size() < n) s += tag;
  s.resize(n);
  return Payload::from_string(s);
}

Errc code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return Errc::internal;
}

// Edges that really hold a block, read from the stores themselves.
std::vector<EdgeId> holders(SimCluster& c, const BlockKey& key) {
  std::vector<EdgeId> out;
  for (const auto& info : c.edge_infos()) {
    if (info.alive && c.edge(info.id).store().get(key)) out.push_back(info.id);
  }
  return out;
}

}  // namespace

TEST_CASE("create, put and get through the parent fog") {
  SimCluster c(small_spec());
  auto client = c.client_on(EdgeId(1), "c1");
  const FogId owner = client.create_stream("s1", {{"kind", "temp", true}, {"room", "a", false}}, 0.99);
  CHECK(owner == FogId(1));
  CHECK(code_of([&] { client.create_stream("s1", {}, 0.99); }) == Errc::already_exists);

  const auto data = bytes_of("block-0");
  auto put = client.put_block("s1", "b0", {{"seq", 0}}, data);
  CHECK(put.owner == FogId(1));
  CHECK(put.md5 == crypto::md5_hex(data.bytes()));
  REQUIRE(put.replicas.size() >= 2);
  CHECK(put.replicas.size() <= 5);
  // The first replica sits on the client's own edge with its real reliability.
  CHECK(put.replicas[0].local);
  CHECK(put.replicas[0].edge == EdgeId(1));
  CHECK(put.replicas[0].reliability == c.edge_infos()[0].reliability);

  std::vector<double> contributions;
  std::set<EdgeId> edges;
  for (const auto& r : put.replicas) {
    contributions.push_back(r.contribution);
    edges.insert(r.edge);
    // Conservative: the edge actually chosen is at least as reliable.
    CHECK(r.reliability >= r.contribution - 1e-12);
  }
  CHECK(edges.size() == put.replicas.size());
  CHECK(put.bound == doctest::Approx(combined_reliability(contributions)));
  CHECK(put.reliability_unmet == !reliability_satisfied(0.99, contributions));

  auto actual = holders(c, {"s1", "b0"});
  CHECK(std::set<EdgeId>(actual.begin(), actual.end()) == edges);

  auto got = client.get_block("s1", "b0");
  CHECK(got.data == data);
  CHECK(got.local);

  // A client elsewhere reads the same bytes.
  auto far = c.client_on(EdgeId(16), "c2");
  auto got2 = far.get_block("s1", "b0");
  CHECK(got2.data == data);
  CHECK(got2.md5 == put.md5);

  CHECK(code_of([&] { client.put_block("s1", "b0", {}, data); }) == Errc::already_exists);
  CHECK(code_of([&] { client.get_block("s1", "missing"); }) == Errc::not_found);
  CHECK(code_of([&] { client.put_block("nope", "b", {}, data); }) == Errc::not_found);
}

TEST_CASE("find reaches every block from every fog after one gossip round") {
  SimCluster c(small_spec(9));
  std::vector<BlockKey> keys;
  for (const auto& info : c.edge_infos()) {
    auto cl = c.client_on(info.id, "w" + std::to_string(info.id.value));
    const std::string s = "s" + std::to_string(info.id.value);
    cl.create_stream(s, {{"site", "x" + std::to_string(info.fog.value), true}}, 0.99);
    for (int b = 0; b < 3; ++b) {
      const std::string bid = "b" + std::to_string(b);
      cl.put_block(s, bid, {{"color", b == 0 ? "red" : "blue"}}, bytes_of(s + bid, 512));
      keys.push_back({s, bid});
    }
  }
  c.advance(1);
  for (FogId f : c.topology().fog_ids()) {
    const EdgeId e(static_cast<std::int32_t>((f.value - 1) * 4 + 1));
    auto cl = c.client_on(e, "reader");
    for (const auto& k : keys) {
      auto r = cl.find_block({{"blockId", k.block}, {"streamId", k.stream}});
      REQUIRE(r.matches.size() == 1);
      CHECK(r.matches[0].key == k);
      CHECK(r.hops <= 2);
      // Every reported fog really hosts a replica.
      auto hs = holders(c, k);
      for (FogId hf : r.matches[0].fogs) {
        CHECK(std::any_of(hs.begin(), hs.end(), [&](EdgeId h) {
          return c.edge_infos()[static_cast<std::size_t>(h.value - 1)].fog == hf;
        }));
      }
    }
    // The nearest tier with hits answers; an exhaustive search sees all.
    auto reds = cl.find_block({{"color", "red"}});
    CHECK_FALSE(reds.matches.empty());
    CHECK(cl.find_block({{"color", "red"}}, true).matches.size() == c.edge_infos().size());
    CHECK(cl.find_block({{"color", "red"}, {"streamId", "s6"}}).matches.size() == 1);
    CHECK(cl.find_stream({{"site", "x2"}}, true).size() == 4);
  }
  auto none = c.client_on(EdgeId(1), "r").find_block({{"color", "green"}});
  CHECK(none.matches.empty());
}

TEST_CASE("soft leases: exclusivity, renewal and audit trail") {
  SimCluster c(small_spec());
  auto a = c.client_on(EdgeId(2), "alice");
  auto b = c.client_on(EdgeId(7), "bob");
  a.create_stream("shared", {}, 0.99);

  auto grant = a.open_stream("shared");
  CHECK(grant.session_key.size() == 32);
  CHECK(grant.duration == 100.0);
  CHECK(code_of([&] { b.open_stream("shared"); }) == Errc::lease_unavailable);

  a.put_block("shared", "a0", {}, bytes_of("a0"));
  auto renewed = a.renew_lease("shared");
  CHECK(renewed.duration == 100.0);
  a.close_stream("shared");
  CHECK_FALSE(a.holds_lease("shared"));

  auto g2 = b.open_stream("shared");
  CHECK(g2.session_key != grant.session_key);
  b.put_block("shared", "b0", {}, bytes_of("b0"));
  // Alice's old session is gone.
  CHECK(code_of([&] { a.renew_lease("shared"); }) != Errc::internal);
  b.close_stream("shared");

  const auto log = c.fog(FogId(1)).audit_log();
  auto has = [&](const std::string& op, const std::string& block, const std::string& client,
                 const std::string& key) {
    return std::any_of(log.begin(), log.end(), [&](const AuditEntry& e) {
      return e.op == op && e.block == block && e.client == client && e.session_key == key;
    });
  };
  CHECK(has("put", "a0", "alice", grant.session_key));
  CHECK(has("put", "b0", "bob", g2.session_key));
  CHECK(has("open", "", "alice", grant.session_key));
  CHECK(has("close", "", "bob", g2.session_key));
}

TEST_CASE("stream metadata test-and-set") {
  SimCluster c(small_spec());
  auto a = c.client_on(EdgeId(3), "a");
  auto b = c.client_on(EdgeId(12), "b");
  a.create_stream("m", {{"unit", "C", true}, {"state", "idle", false}}, 0.9);

  auto meta = b.get_stream_meta("m", true);
  CHECK(meta.version == 1);
  CHECK(meta.owner == FogId(1));
  CHECK(meta.static_props.at("unit") == PropertyValue("C"));
  CHECK(meta.dynamic_props.at("state") == PropertyValue("idle"));

  CHECK(a.update_stream_meta("m", {{"state", "busy"}}, 1) == 2);
  CHECK(code_of([&] { b.update_stream_meta("m", {{"state", "off"}}, 1); }) == Errc::stale_version);
  CHECK(b.update_stream_meta("m", {{"state", "off"}}, 2) == 3);
  CHECK(code_of([&] { a.update_stream_meta("m", {{"unit", "F"}}, 3); }) == Errc::invalid_argument);

  auto after = a.get_stream_meta("m", true);
  CHECK(after.version == 3);
  CHECK(after.dynamic_props.at("state") == PropertyValue("off"));
  CHECK(after.static_props.at("unit") == PropertyValue("C"));
}

TEST_CASE("update overwrites every replica") {
  SimCluster c(small_spec());
  auto cl = c.client_on(EdgeId(5), "u");
  cl.create_stream("s", {}, 0.99);
  cl.put_block("s", "b", {}, bytes_of("old"));
  const auto fresh = bytes_of("new!");
  cl.update_block("s", "b", fresh);
  for (EdgeId e : holders(c, {"s", "b"})) {
    CHECK(c.edge(e).store().get({"s", "b"})->payload == fresh);
  }
  CHECK(c.client_on(EdgeId(14), "r").get_block("s", "b").data == fresh);
  auto list = cl.list_blocks("s");
  REQUIRE(list.size() == 1);
  CHECK(list[0].second == crypto::md5_hex(fresh.bytes()));
}

TEST_CASE("a failed edge's blocks are re-replicated") {
  SimCluster c(small_spec(3));
  WorkloadSpec w;
  w.clients = 8;
  w.blocks_per_client = 20;
  c.run_workload(w);
  const EdgeId victim = c.fail_edge(FailurePolicy::least_reliable);
  CHECK_FALSE(c.edge_infos()[static_cast<std::size_t>(victim.value - 1)].alive);
  const auto& rec = c.await_recovery();
  CHECK(rec.edge == victim);
  REQUIRE(rec.recovery);
  CHECK(rec.recovery->blocks.size() == rec.hosted);
  CHECK(rec.recovery->recovered_count() == rec.hosted);
  REQUIRE(rec.audit);
  CHECK(rec.audit->passed);
  CHECK(code_of([&] { c.fail_edge(FailurePolicy::specific, victim); }) == Errc::nothing_to_fail);
}
