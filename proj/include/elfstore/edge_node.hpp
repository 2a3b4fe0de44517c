// SPDX-License-Identifier: Apache-2.0
//
// Edge device: stores block replicas, serves reads, and heartbeats its stats
// plus index tuples for newly stored blocks to its parent fog.

#pragma once

#include <deque>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include "elfstore/stats.hpp"
#include "elfstore/transport.hpp"
#include "elfstore/types.hpp"

namespace elfstore {

struct StoredReplica {
  BlockKey key;
  Payload payload;
  std::vector<Property> props;
  std::string md5;
  double stream_reliability = 0.0;
  double stored_at = 0.0;
};

class ReplicaStore {
 public:
  virtual ~ReplicaStore() = default;
  // Overwrites an existing replica of the same key.
  virtual void put(const StoredReplica& r) = 0;
  virtual std::optional<StoredReplica> get(const BlockKey& key) const = 0;
  virtual bool erase(const BlockKey& key) = 0;
  virtual std::vector<BlockKey> keys() const = 0;
  virtual std::uint64_t used_bytes() const = 0;
};

class MemoryReplicaStore final : public ReplicaStore {
 public:
  void put(const StoredReplica& r) override;
  std::optional<StoredReplica> get(const BlockKey& key) const override;
  bool erase(const BlockKey& key) override;
  std::vector<BlockKey> keys() const override;
  std::uint64_t used_bytes() const override { return used_; }

  // Test hook: flips a byte of a stored payload.
  void corrupt(const BlockKey& key);

 private:
  std::map<BlockKey, StoredReplica> items_;
  std::uint64_t used_ = 0;
};

// <root>/<stream>/<block>.blk holds the bytes and <block>.meta a JSON record.
// Ids are percent-escaped so any string is a safe path component.
class DiskReplicaStore final : public ReplicaStore {
 public:
  explicit DiskReplicaStore(std::filesystem::path root);
  void put(const StoredReplica& r) override;
  std::optional<StoredReplica> get(const BlockKey& key) const override;
  bool erase(const BlockKey& key) override;
  std::vector<BlockKey> keys() const override;
  std::uint64_t used_bytes() const override { return used_; }

 private:
  std::filesystem::path dir_of(const std::string& stream) const;
  std::uint64_t used_ = 0;
  std::map<BlockKey, std::uint64_t> sizes_;
  std::filesystem::path root_;
};

struct EdgeConfig {
  EdgeId id;
  std::string endpoint;  // how the parent reaches this edge
  std::string parent;    // parent fog endpoint
  double reliability = 0.9;
  std::uint64_t capacity = 0;
  double heartbeat_interval = 30.0;
};

struct IndexTuple {
  BlockKey key;
  std::vector<Property> props;
  std::uint64_t size = 0;
  std::string md5;
  double stream_reliability = 0.0;
};

struct HeartbeatPayload {
  EdgeStat stat;
  std::uint64_t capacity = 0;
  std::uint64_t seq = 0;
  // Tuples not yet acknowledged by the parent, or every hosted block after a
  // restart (full = true).
  std::vector<IndexTuple> tuples;
  bool full = false;
};

class EdgeNode final : public Handler {
 public:
  EdgeNode(EdgeConfig config, std::unique_ptr<ReplicaStore> store, Clock& clock);

  Reply handle(const Message& m) override;

  HeartbeatPayload heartbeat_payload() const;
  // Sends one heartbeat and applies the ack. Returns false when the parent
  // could not be reached.
  bool send_heartbeat(Transport& transport);
  void acknowledge(std::uint64_t seq);
  // Next heartbeat re-reports every hosted block.
  void restart();

  const EdgeConfig& config() const { return config_; }
  EdgeStat stat() const;
  std::uint64_t free_storage() const;
  std::vector<BlockKey> hosted() const;
  ReplicaStore& store() { return *store_; }

 private:
  Reply store_replica(const Message& m, bool overwrite);
  Reply read_replica(const Message& m) const;

  EdgeConfig config_;
  std::unique_ptr<ReplicaStore> store_;
  Clock& clock_;
  mutable std::shared_mutex mu_;
  std::deque<std::pair<std::uint64_t, IndexTuple>> pending_;
  std::uint64_t next_seq_ = 1;
  bool full_report_ = false;
};

json to_json(const HeartbeatPayload& hb, const std::string& endpoint);
HeartbeatPayload heartbeat_from_json(const json& j);

}  // namespace elfstore
