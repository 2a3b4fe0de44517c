// SPDX-License-Identifier: Apache-2.0

#include "elfstore/transport.hpp"

#include <algorithm>
#include <exception>
#include <mutex>
#include <queue>
#include <thread>

namespace elfstore {

double SteadyClock::now() const {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
}

namespace simtime {

namespace {
thread_local double t_elapsed = 0.0;
}

double elapsed() { return t_elapsed; }
void charge(double seconds) { t_elapsed += seconds; }
void reset(double seconds) { t_elapsed = seconds; }

}  // namespace simtime

void InProcTransport::attach(const std::string& key, Handler* node) {
  std::unique_lock lock(mu_);
  nodes_[key] = node;
  down_.erase(key);
}

void InProcTransport::detach(const std::string& key) {
  std::unique_lock lock(mu_);
  nodes_.erase(key);
}

void InProcTransport::set_down(const std::string& key, bool down) {
  std::unique_lock lock(mu_);
  if (down) {
    down_.insert(key);
  } else {
    down_.erase(key);
  }
}

bool InProcTransport::is_down(const std::string& key) const {
  std::shared_lock lock(mu_);
  return down_.contains(key);
}

Reply InProcTransport::call(const std::string& to, const Message& m) {
  Handler* node = nullptr;
  {
    std::shared_lock lock(mu_);
    auto it = nodes_.find(to);
    if (it != nodes_.end() && !down_.contains(to)) node = it->second;
  }
  const std::size_t out = wire_size(m);
  messages_.fetch_add(1, std::memory_order_relaxed);
  bytes_.fetch_add(out, std::memory_order_relaxed);
  if (m.payload) payload_bytes_.fetch_add(m.payload->size(), std::memory_order_relaxed);
  if (cost_) simtime::charge(cost_->cost(out));
  if (node == nullptr) return Reply::failure(Errc::unavailable, to + " is unreachable");

  Reply r;
  try {
    r = node->handle(m);
  } catch (const Error& e) {
    r = Reply::from_error(e);
  } catch (const std::exception& e) {
    r = Reply::failure(Errc::internal, e.what());
  }
  r.request_id = m.request_id;
  const std::size_t back = wire_size(r);
  bytes_.fetch_add(back, std::memory_order_relaxed);
  if (r.payload) payload_bytes_.fetch_add(r.payload->size(), std::memory_order_relaxed);
  if (cost_) simtime::charge(cost_->cost(back));
  return r;
}

TransportStats InProcTransport::stats() const {
  return {messages_.load(), bytes_.load(), payload_bytes_.load()};
}

void SimExecutor::run_all(std::vector<std::function<void()>> tasks) {
  const double base = simtime::elapsed();
  // Min-heap of lane finish times.
  std::priority_queue<double, std::vector<double>, std::greater<>> lanes;
  for (int i = 0; i < workers_; ++i) lanes.push(0.0);
  double makespan = 0.0;
  std::exception_ptr first;
  for (auto& task : tasks) {
    simtime::reset(0.0);
    try {
      task();
    } catch (...) {
      if (!first) first = std::current_exception();
    }
    const double start = lanes.top();
    lanes.pop();
    const double end = start + simtime::elapsed();
    lanes.push(end);
    makespan = std::max(makespan, end);
  }
  simtime::reset(base + makespan);
  if (first) std::rethrow_exception(first);
}

void ThreadExecutor::run_all(std::vector<std::function<void()>> tasks) {
  if (tasks.size() <= 1) {
    for (auto& t : tasks) t();
    return;
  }
  std::mutex mu;
  std::size_t next = 0;
  std::exception_ptr first;
  auto lane = [&] {
    for (;;) {
      std::function<void()>* task = nullptr;
      {
        std::lock_guard lock(mu);
        if (next == tasks.size()) return;
        task = &tasks[next++];
      }
      try {
        (*task)();
      } catch (...) {
        std::lock_guard lock(mu);
        if (!first) first = std::current_exception();
      }
    }
  };
  const auto n = std::min<std::size_t>(static_cast<std::size_t>(workers_), tasks.size());
  std::vector<std::jthread> threads;
  threads.reserve(n);
  for (std::size_t i = 0; i < n; ++i) threads.emplace_back(lane);
  threads.clear();
  if (first) std::rethrow_exception(first);
}

}  // namespace elfstore
