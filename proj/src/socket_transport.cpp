// SPDX-License-Identifier: Apache-2.0

#include "elfstore/socket_transport.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

namespace elfstore {

namespace {

bool write_all(int fd, const std::vector<std::uint8_t>& bytes) {
  std::size_t done = 0;
  while (done < bytes.size()) {
    const ssize_t n = ::send(fd, bytes.data() + done, bytes.size() - done, MSG_NOSIGNAL);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) return false;
    done += static_cast<std::size_t>(n);
  }
  return true;
}

// Reads until the decoder yields one unit via `take`. False on EOF or error.
template <class T, class Take>
std::optional<T> read_one(int fd, FrameDecoder& dec, Take take) {
  std::uint8_t buf[64 * 1024];
  while (true) {
    if (auto v = take(dec)) return v;
    const ssize_t n = ::recv(fd, buf, sizeof buf, 0);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) return std::nullopt;
    dec.feed(buf, static_cast<std::size_t>(n));
  }
}

void set_timeout(int fd, double seconds) {
  timeval tv{};
  tv.tv_sec = static_cast<time_t>(seconds);
  tv.tv_usec = static_cast<suseconds_t>((seconds - static_cast<double>(tv.tv_sec)) * 1e6);
  ::setsockopt(fd, SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof tv);
  ::setsockopt(fd, SOL_SOCKET, SO_SNDTIMEO, &tv, sizeof tv);
}

}  // namespace

std::pair<std::string, std::uint16_t> split_endpoint(const std::string& endpoint) {
  const auto colon = endpoint.rfind(':');
  if (colon == std::string::npos || colon == 0 || colon + 1 == endpoint.size()) {
    throw Error(Errc::invalid_argument, "endpoint must be host:port, got '" + endpoint + "'");
  }
  int port = 0;
  try {
    port = std::stoi(endpoint.substr(colon + 1));
  } catch (const std::exception&) {
    port = -1;
  }
  if (port <= 0 || port > 65535) throw Error(Errc::invalid_argument, "bad port in '" + endpoint + "'");
  return {endpoint.substr(0, colon), static_cast<std::uint16_t>(port)};
}

SocketServer::SocketServer(Handler& handler, std::string host, std::uint16_t port)
    : handler_(handler), host_(std::move(host)) {
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  hints.ai_flags = AI_PASSIVE;
  addrinfo* res = nullptr;
  if (::getaddrinfo(host_.c_str(), std::to_string(port).c_str(), &hints, &res) != 0 || res == nullptr) {
    throw Error(Errc::invalid_config, "cannot resolve " + host_);
  }
  listen_fd_ = ::socket(res->ai_family, res->ai_socktype, res->ai_protocol);
  int one = 1;
  ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  if (listen_fd_ < 0 || ::bind(listen_fd_, res->ai_addr, res->ai_addrlen) != 0 ||
      ::listen(listen_fd_, 128) != 0) {
    const std::string why = std::strerror(errno);
    ::freeaddrinfo(res);
    if (listen_fd_ >= 0) ::close(listen_fd_);
    throw Error(Errc::invalid_config, "cannot listen on " + host_ + ":" + std::to_string(port) + ": " + why);
  }
  ::freeaddrinfo(res);
  sockaddr_in addr{};
  socklen_t len = sizeof addr;
  ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
  port_ = ntohs(addr.sin_port);
  acceptor_ = std::thread([this] { accept_loop(); });
}

SocketServer::~SocketServer() { stop(); }

void SocketServer::stop() {
  if (stopping_.exchange(true)) return;
  ::shutdown(listen_fd_, SHUT_RDWR);
  ::close(listen_fd_);
  if (acceptor_.joinable()) acceptor_.join();
  std::vector<std::thread> workers;
  {
    std::lock_guard lock(mu_);
    for (int fd : conns_) ::shutdown(fd, SHUT_RDWR);
    workers.swap(workers_);
  }
  for (auto& t : workers) t.join();
}

void SocketServer::accept_loop() {
  while (!stopping_) {
    const int fd = ::accept(listen_fd_, nullptr, nullptr);
    if (fd < 0) {
      if (errno == EINTR) continue;
      return;
    }
    int one = 1;
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
    std::lock_guard lock(mu_);
    if (stopping_) {
      ::close(fd);
      return;
    }
    conns_.push_back(fd);
    workers_.emplace_back([this, fd] { serve(fd); });
  }
}

void SocketServer::serve(int fd) {
  FrameDecoder dec;
  try {
    while (!stopping_) {
      auto m = read_one<Message>(fd, dec, [](FrameDecoder& d) { return d.next_message(); });
      if (!m) break;
      Reply r = handler_.handle(*m);
      r.request_id = m->request_id;
      if (!write_all(fd, encode(r))) break;
    }
  } catch (const Error& e) {
    // Malformed stream: tell the peer once, then drop the connection.
    Reply r = Reply::from_error(e);
    write_all(fd, encode(r));
  }
  std::lock_guard lock(mu_);
  std::erase(conns_, fd);
  ::close(fd);
}

SocketTransport::~SocketTransport() {
  std::lock_guard lock(mu_);
  for (auto& [ep, fds] : idle_) {
    for (int fd : fds) ::close(fd);
  }
}

int SocketTransport::connect_to(const std::string& to) const {
  const auto [host, port] = split_endpoint(to);
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  if (::getaddrinfo(host.c_str(), std::to_string(port).c_str(), &hints, &res) != 0 || res == nullptr) {
    return -1;
  }
  int fd = ::socket(res->ai_family, res->ai_socktype, res->ai_protocol);
  if (fd >= 0 && ::connect(fd, res->ai_addr, res->ai_addrlen) != 0) {
    ::close(fd);
    fd = -1;
  }
  ::freeaddrinfo(res);
  if (fd >= 0) {
    int one = 1;
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
    set_timeout(fd, timeout_);
  }
  return fd;
}

Reply SocketTransport::call(const std::string& to, const Message& m) {
  Message req = m;
  req.request_id = next_id_++;
  std::vector<std::uint8_t> bytes;
  try {
    bytes = encode(req);
  } catch (const Error& e) {
    return Reply::from_error(e);
  }
  ++messages_;
  bytes_ += bytes.size();
  if (req.payload) payload_bytes_ += req.payload->size();

  // A pooled connection may have been closed by the peer; retry once fresh.
  for (int attempt = 0; attempt < 2; ++attempt) {
    int fd = -1;
    bool pooled = false;
    {
      std::lock_guard lock(mu_);
      auto& pool = idle_[to];
      if (!pool.empty() && attempt == 0) {
        fd = pool.back();
        pool.pop_back();
        pooled = true;
      }
    }
    if (fd < 0) {
      try {
        fd = connect_to(to);
      } catch (const Error& e) {
        return Reply::from_error(e);
      }
    }
    if (fd < 0) return Reply::failure(Errc::unavailable, "cannot connect to " + to);
    FrameDecoder dec;
    std::optional<Reply> reply;
    try {
      if (write_all(fd, bytes)) {
        reply = read_one<Reply>(fd, dec, [](FrameDecoder& d) { return d.next_reply(); });
      }
    } catch (const Error& e) {
      ::close(fd);
      return Reply::from_error(e);
    }
    if (!reply) {
      ::close(fd);
      if (pooled) continue;
      return Reply::failure(Errc::unavailable, to + " did not answer");
    }
    if (reply->request_id != req.request_id) {
      ::close(fd);
      return Reply::failure(Errc::protocol, "reply for another request from " + to);
    }
    {
      std::lock_guard lock(mu_);
      idle_[to].push_back(fd);
    }
    bytes_ += wire_size(*reply);
    return std::move(*reply);
  }
  return Reply::failure(Errc::unavailable, to + " did not answer");
}

TransportStats SocketTransport::stats() const {
  return {messages_.load(), bytes_.load(), payload_bytes_.load()};
}

}  // namespace elfstore
