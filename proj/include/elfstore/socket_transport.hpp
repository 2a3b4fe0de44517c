// SPDX-License-Identifier: Apache-2.0
//
// TCP transport speaking the length-prefixed frame protocol. Endpoints are
// "host:port". The server runs one thread per connection; the client keeps a
// small pool of idle connections per peer.

#pragma once

#include <atomic>
#include <map>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "elfstore/transport.hpp"

namespace elfstore {

class SocketServer {
 public:
  // Port 0 picks a free port; see port().
  SocketServer(Handler& handler, std::string host, std::uint16_t port);
  ~SocketServer();
  SocketServer(const SocketServer&) = delete;
  SocketServer& operator=(const SocketServer&) = delete;

  std::uint16_t port() const { return port_; }
  std::string endpoint() const { return host_ + ":" + std::to_string(port_); }
  void stop();

 private:
  void accept_loop();
  void serve(int fd);

  Handler& handler_;
  std::string host_;
  std::uint16_t port_ = 0;
  int listen_fd_ = -1;
  std::atomic<bool> stopping_{false};
  std::thread acceptor_;
  std::mutex mu_;
  std::vector<int> conns_;
  std::vector<std::thread> workers_;
};

class SocketTransport final : public Transport {
 public:
  explicit SocketTransport(double timeout_seconds = 30.0) : timeout_(timeout_seconds) {}
  ~SocketTransport() override;

  Reply call(const std::string& to, const Message& m) override;
  TransportStats stats() const override;

 private:
  int connect_to(const std::string& to) const;

  double timeout_;
  mutable std::mutex mu_;
  std::map<std::string, std::vector<int>> idle_;
  std::atomic<std::uint64_t> next_id_{1};
  std::atomic<std::uint64_t> messages_{0};
  std::atomic<std::uint64_t> bytes_{0};
  std::atomic<std::uint64_t> payload_bytes_{0};
};

// Splits "host:port"; throws Error(invalid_argument).
std::pair<std::string, std::uint16_t> split_endpoint(const std::string& endpoint);

}  // namespace elfstore
