// SPDX-License-Identifier: Apache-2.0

#include <atomic>
#include <cstring>
#include <thread>

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include "doctest.h"
#include "elfstore/error.hpp"
#include "elfstore/harness.hpp"
#include "elfstore/socket_transport.hpp"

using namespace elfstore;

namespace {

struct Counter final : Handler {
  std::atomic<int> calls{0};
  Reply handle(const Message& m) override {
    ++calls;
    if (m.op == "fail") return Reply::failure(Errc::not_found, "asked to fail");
    json r = {{"n", m.args.value("n", 0) + 1}};
    return Reply::success(r, m.payload);
  }
};

}  // namespace

TEST_CASE("endpoint parsing") {
  CHECK(split_endpoint("127.0.0.1:8080") == std::pair<std::string, std::uint16_t>{"127.0.0.1", 8080});
  CHECK_THROWS_AS(split_endpoint("nohost"), Error);
  CHECK_THROWS_AS(split_endpoint("h:99999"), Error);
  CHECK_THROWS_AS(split_endpoint("h:abc"), Error);
}

TEST_CASE("request/reply over loopback, concurrently, with payloads") {
  Counter h;
  SocketServer server(h, "127.0.0.1", 0);
  REQUIRE(server.port() != 0);
  SocketTransport t(5.0);

  auto r = t.call(server.endpoint(), {"inc", {{"n", 41}}, Payload::from_string("xyz"), 0});
  REQUIRE(r.ok);
  CHECK(r.result.at("n") == 42);
  CHECK(r.payload->bytes() == Payload::from_string("xyz").bytes());

  auto err = t.call(server.endpoint(), {"fail", {}, std::nullopt, 0});
  CHECK_FALSE(err.ok);
  CHECK(err.code == Errc::not_found);

  std::vector<std::thread> threads;
  std::atomic<int> good{0};
  for (int i = 0; i < 8; ++i) {
    threads.emplace_back([&, i] {
      for (int k = 0; k < 25; ++k) {
        auto rr = t.call(server.endpoint(), {"inc", {{"n", i * 100 + k}}, std::nullopt, 0});
        if (rr.ok && rr.result.at("n") == i * 100 + k + 1) ++good;
      }
    });
  }
  for (auto& th : threads) th.join();
  CHECK(good == 200);
  CHECK(h.calls == 202);

  server.stop();
  auto gone = t.call(server.endpoint(), {"inc", {}, std::nullopt, 0});
  CHECK_FALSE(gone.ok);
  CHECK(gone.code == Errc::unavailable);
}

TEST_CASE("garbage on the wire gets an error and a closed connection") {
  Counter h;
  SocketServer server(h, "127.0.0.1", 0);
  const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  REQUIRE(fd >= 0);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(server.port());
  ::inet_pton(AF_INET, "127.0.0.1", &addr.sin_addr);
  REQUIRE(::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr) == 0);
  const std::uint8_t junk[] = {0, 0, 0, 3, '{', '{', '{'};
  REQUIRE(::write(fd, junk, sizeof junk) == static_cast<ssize_t>(sizeof junk));
  std::vector<std::uint8_t> got;
  std::uint8_t buf[4096];
  for (;;) {
    const auto n = ::read(fd, buf, sizeof buf);
    if (n <= 0) break;
    got.insert(got.end(), buf, buf + n);
  }
  ::close(fd);
  FrameDecoder d;
  d.feed(got.data(), got.size());
  auto reply = d.next_reply();
  REQUIRE(reply);
  CHECK_FALSE(reply->ok);
  CHECK(reply->code == Errc::protocol);
  CHECK(h.calls == 0);
}

TEST_CASE("the cluster harness runs unchanged over TCP") {
  ClusterSpec s;
  s.seed = 17;
  s.transport = TransportKind::socket;
  SimCluster c(s);
  WorkloadSpec w;
  w.clients = 4;
  w.blocks_per_client = 6;
  w.ops_per_client = 10;
  w.mix = parse_mix("get=0.6,find=0.2,meta=0.2");
  c.run_workload(w);
  CHECK(c.committed().size() == 24);
  const json r = c.report();
  CHECK(r.at("cluster").at("transport") == "socket");
  CHECK(r.at("local_reads").at("checksum_mismatches") == 0);
  CHECK(r.at("meta").at("stale") == r.at("meta").at("stale_genuine"));
  CHECK(c.audit("socket").passed);

  c.fail_edge(FailurePolicy::least_reliable);
  const auto& rec = c.await_recovery();
  REQUIRE(rec.recovery);
  CHECK(rec.recovery->recovered_count() == rec.hosted);
  REQUIRE(rec.audit);
  CHECK(rec.audit->passed);
}
