// SPDX-License-Identifier: Apache-2.0

#include <filesystem>
#include <random>

#include "doctest.h"
#include "elfstore/codec.hpp"
#include "elfstore/crypto.hpp"
#include "elfstore/edge_node.hpp"

using namespace elfstore;

namespace {

struct FixedClock final : Clock {
  double t = 5.0;
  double now() const override { return t; }
};

// Records the last heartbeat and acks it.
struct FakeParent final : Handler {
  std::optional<HeartbeatPayload> last;
  bool ack = true;
  Reply handle(const Message& m) override {
    last = heartbeat_from_json(m.args);
    if (!ack) return Reply::success();
    return Reply::success({{"acked_seq", last->seq}});
  }
};

Message store_msg(const std::string& op, const BlockKey& key, const std::string& text) {
  const auto p = Payload::from_string(text);
  Message m{op, {{"key", key}, {"md5", crypto::md5_hex(p.bytes())}, {"reliability", 0.99},
                 {"props", std::vector<Property>{{"blockId", key.block}}}},
            p, 0};
  return m;
}

std::filesystem::path fresh_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("elfstore-test-" + name);
  std::filesystem::remove_all(dir);
  return dir;
}

}  // namespace

TEST_CASE("store, read, duplicate and overwrite semantics") {
  FixedClock clock;
  EdgeNode edge({EdgeId(3), "e3", "f1", 0.9, 100}, std::make_unique<MemoryReplicaStore>(), clock);
  const BlockKey k{"s", "b1"};

  auto r = edge.handle(store_msg("store_replica", k, "0123456789"));
  REQUIRE(r.ok);
  CHECK(r.result.at("free") == 90);
  CHECK(edge.free_storage() == 90);

  auto read = edge.handle({"read_replica", {{"key", k}}, std::nullopt, 0});
  REQUIRE(read.ok);
  CHECK(read.payload->bytes() == Payload::from_string("0123456789").bytes());
  CHECK(read.result.at("md5") == crypto::md5_hex(std::string_view("0123456789")));

  // Same bytes again is idempotent; different bytes are a conflict.
  CHECK(edge.handle(store_msg("store_replica", k, "0123456789")).ok);
  CHECK(edge.handle(store_msg("store_replica", k, "other")).code == Errc::already_exists);

  CHECK(edge.handle(store_msg("overwrite_replica", k, "abc")).ok);
  CHECK(edge.free_storage() == 97);
  CHECK(edge.handle(store_msg("overwrite_replica", {"s", "nope"}, "abc")).code == Errc::not_found);

  CHECK(edge.handle({"read_replica", {{"key", BlockKey{"s", "zz"}}}, std::nullopt, 0}).code ==
        Errc::not_found);
  CHECK(edge.handle({"delete_replica", {{"key", k}}, std::nullopt, 0}).ok);
  CHECK(edge.free_storage() == 100);
  CHECK(edge.handle({"bogus", {}, std::nullopt, 0}).code == Errc::protocol);
}

TEST_CASE("integrity and capacity are enforced") {
  FixedClock clock;
  auto store = std::make_unique<MemoryReplicaStore>();
  auto* raw = store.get();
  EdgeNode edge({EdgeId(1), "e1", "f1", 0.9, 16}, std::move(store), clock);

  auto bad = store_msg("store_replica", {"s", "x"}, "abcd");
  bad.args["md5"] = crypto::md5_hex(std::string_view("abce"));
  CHECK(edge.handle(bad).code == Errc::integrity);

  CHECK(edge.handle(store_msg("store_replica", {"s", "a"}, std::string(10, 'a'))).ok);
  CHECK(edge.handle(store_msg("store_replica", {"s", "b"}, std::string(7, 'b'))).code ==
        Errc::no_capacity);
  CHECK(edge.handle(store_msg("store_replica", {"s", "b"}, std::string(6, 'b'))).ok);
  CHECK(edge.free_storage() == 0);

  raw->corrupt({"s", "a"});
  CHECK(edge.handle({"read_replica", {{"key", BlockKey{"s", "a"}}}, std::nullopt, 0}).code ==
        Errc::integrity);
}

TEST_CASE("heartbeats carry unacknowledged tuples, then a full report after restart") {
  FixedClock clock;
  InProcTransport t;
  FakeParent parent;
  t.attach("f1", &parent);
  EdgeNode edge({EdgeId(2), "e2", "f1", 0.87, 1000}, std::make_unique<MemoryReplicaStore>(), clock);
  t.attach("e2", &edge);

  edge.handle(store_msg("store_replica", {"s", "a"}, "aaaa"));
  edge.handle(store_msg("store_replica", {"s", "b"}, "bb"));

  parent.ack = false;
  REQUIRE(edge.send_heartbeat(t));
  CHECK(parent.last->tuples.size() == 2);
  CHECK(parent.last->stat.reliability == 0.87);
  CHECK(parent.last->stat.free_storage == 994);
  CHECK(parent.last->capacity == 1000);

  // Unacked tuples are resent; acked ones are not.
  parent.ack = true;
  REQUIRE(edge.send_heartbeat(t));
  CHECK(parent.last->tuples.size() == 2);
  REQUIRE(edge.send_heartbeat(t));
  CHECK(parent.last->tuples.empty());
  CHECK_FALSE(parent.last->full);

  edge.restart();
  REQUIRE(edge.send_heartbeat(t));
  CHECK(parent.last->full);
  CHECK(parent.last->tuples.size() == 2);

  t.set_down("f1", true);
  CHECK_FALSE(edge.send_heartbeat(t));
}

TEST_CASE("heartbeat JSON round-trips") {
  HeartbeatPayload hb;
  hb.stat = {EdgeId(4), 0.91, 1234};
  hb.capacity = 5000;
  hb.seq = 17;
  hb.full = true;
  hb.tuples.push_back({{"s", "b"}, {{"k", "v"}, {"n", 3}}, 12, "abc", 0.999});
  const auto back = heartbeat_from_json(to_json(hb, "e4"));
  CHECK(back.stat.edge == EdgeId(4));
  CHECK(back.stat.reliability == 0.91);
  CHECK(back.stat.free_storage == 1234);
  CHECK(back.capacity == 5000);
  CHECK(back.seq == 17);
  CHECK(back.full);
  REQUIRE(back.tuples.size() == 1);
  CHECK(back.tuples[0].key == BlockKey{"s", "b"});
  CHECK(back.tuples[0].props == hb.tuples[0].props);
  CHECK(back.tuples[0].stream_reliability == 0.999);
}

TEST_CASE("disk store persists replicas and escapes awkward ids") {
  const auto dir = fresh_dir("disk");
  const BlockKey odd{"a/b%c", "../x y"};
  StoredReplica r{odd, Payload::from_string("payload"), {{"k", "v"}}, "", 0.95, 1.5};
  r.md5 = crypto::md5_hex(r.payload.bytes());
  {
    DiskReplicaStore s(dir);
    s.put(r);
    s.put({{"plain", "b"}, Payload::from_string("xy"), {}, crypto::md5_hex(std::string_view("xy")), 0.9, 2});
    CHECK(s.used_bytes() == 9);
  }
  DiskReplicaStore reopened(dir);
  CHECK(reopened.used_bytes() == 9);
  auto keys = reopened.keys();
  CHECK(keys.size() == 2);
  auto got = reopened.get(odd);
  REQUIRE(got);
  CHECK(got->payload == r.payload);
  CHECK(got->md5 == r.md5);
  CHECK(got->props == r.props);
  CHECK(got->stream_reliability == 0.95);
  for (const auto& entry : std::filesystem::recursive_directory_iterator(dir)) {
    CHECK(entry.path().lexically_normal().string().rfind(dir.lexically_normal().string(), 0) == 0);
  }
  CHECK(reopened.erase(odd));
  CHECK_FALSE(reopened.get(odd));
  CHECK(reopened.used_bytes() == 2);
  std::filesystem::remove_all(dir);
}

TEST_CASE("property: memory and disk stores agree on random operation sequences") {
  const auto dir = fresh_dir("model");
  MemoryReplicaStore mem;
  DiskReplicaStore disk(dir);
  std::mt19937_64 rng(11);
  for (int i = 0; i < 300; ++i) {
    const BlockKey k{"s" + std::to_string(rng() % 3), "b" + std::to_string(rng() % 8)};
    if (rng() % 4 == 0) {
      CHECK(mem.erase(k) == disk.erase(k));
    } else {
      std::string text(rng() % 40, static_cast<char>('a' + rng() % 26));
      StoredReplica r{k, Payload::from_string(text), {}, crypto::md5_hex(std::string_view(text)), 0.9, 0};
      mem.put(r);
      disk.put(r);
    }
    CHECK(mem.used_bytes() == disk.used_bytes());
  }
  CHECK(mem.keys() == disk.keys());
  std::filesystem::remove_all(dir);
}
