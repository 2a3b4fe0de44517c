// SPDX-License-Identifier: Apache-2.0
//
// How nodes reach each other, what time it is, and how concurrent work runs.
// The in-process transport is shared by the deterministic simulator and the
// threaded local mode. In simulation every call charges a per-hop latency plus
// a bandwidth term to a per-thread virtual stopwatch, and the sequential
// executor turns a batch of "concurrent" tasks into a list-scheduling makespan.

#pragma once

#include <atomic>
#include <chrono>
#include <functional>
#include <map>
#include <memory>
#include <set>
#include <shared_mutex>
#include <string>
#include <vector>

#include "elfstore/wire.hpp"

namespace elfstore {

class Handler {
 public:
  virtual ~Handler() = default;
  virtual Reply handle(const Message& m) = 0;
};

// Time in seconds.
class Clock {
 public:
  virtual ~Clock() = default;
  virtual double now() const = 0;
};

class SteadyClock final : public Clock {
 public:
  double now() const override;

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

namespace simtime {

// Virtual seconds charged to the current thread since the last reset.
double elapsed();
void charge(double seconds);
void reset(double seconds = 0.0);

}  // namespace simtime

// Event time set by the scheduler plus whatever the running step has charged.
class VirtualClock final : public Clock {
 public:
  double now() const override { return base_ + simtime::elapsed(); }
  void set_base(double t) { base_ = t; }
  double base() const { return base_; }

 private:
  double base_ = 0.0;
};

struct CostModel {
  double per_hop_seconds = 0.002;
  double bytes_per_second = 12.5e6;  // 100 Mbit/s

  double cost(std::size_t bytes) const {
    return per_hop_seconds + static_cast<double>(bytes) / bytes_per_second;
  }
};

struct TransportStats {
  std::uint64_t messages = 0;
  std::uint64_t bytes = 0;
  std::uint64_t payload_bytes = 0;
};

class Transport {
 public:
  virtual ~Transport() = default;
  // Never throws for remote failures: an unreachable peer yields
  // Reply::failure(unavailable).
  virtual Reply call(const std::string& to, const Message& m) = 0;
  virtual TransportStats stats() const = 0;
};

class InProcTransport final : public Transport {
 public:
  explicit InProcTransport(std::optional<CostModel> cost = std::nullopt) : cost_(cost) {}

  void attach(const std::string& key, Handler* node);
  void detach(const std::string& key);
  // A down node refuses every call as if its process were gone.
  void set_down(const std::string& key, bool down);
  bool is_down(const std::string& key) const;

  Reply call(const std::string& to, const Message& m) override;
  TransportStats stats() const override;

 private:
  std::optional<CostModel> cost_;
  mutable std::shared_mutex mu_;
  std::map<std::string, Handler*> nodes_;
  std::set<std::string> down_;
  std::atomic<std::uint64_t> messages_{0};
  std::atomic<std::uint64_t> bytes_{0};
  std::atomic<std::uint64_t> payload_bytes_{0};
};

class Executor {
 public:
  virtual ~Executor() = default;
  // Runs every task and returns once all have finished. The first exception
  // thrown by a task is rethrown after the rest complete.
  virtual void run_all(std::vector<std::function<void()>> tasks) = 0;
  virtual int workers() const = 0;
};

// Runs tasks one after another on the calling thread. Virtual time advances
// by the makespan of the tasks on `workers` parallel lanes, each task going to
// the lane that frees up first.
class SimExecutor final : public Executor {
 public:
  explicit SimExecutor(int workers = 10) : workers_(workers < 1 ? 1 : workers) {}
  void run_all(std::vector<std::function<void()>> tasks) override;
  int workers() const override { return workers_; }

 private:
  int workers_;
};

class ThreadExecutor final : public Executor {
 public:
  explicit ThreadExecutor(int workers = 10) : workers_(workers < 1 ? 1 : workers) {}
  void run_all(std::vector<std::function<void()>> tasks) override;
  int workers() const override { return workers_; }

 private:
  int workers_;
};

}  // namespace elfstore
