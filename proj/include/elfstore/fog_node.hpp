// SPDX-License-Identifier: Apache-2.0
//
// Fog service. A fog owns the streams created through it (metadata, block
// registry, leases, versions), indexes the blocks stored on its own edges,
// keeps Bloom filters and partition summaries learned from its peers, plans
// replica placement, and re-replicates blocks lost with a failed edge.
//
// All state lives behind one mutex that is never held across a call to
// another node, so a fog can safely call itself or be called back.

#pragma once

#include <list>
#include <map>
#include <mutex>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "elfstore/bloom.hpp"
#include "elfstore/edge_node.hpp"
#include "elfstore/overlay.hpp"
#include "elfstore/placement.hpp"
#include "elfstore/stats.hpp"
#include "elfstore/transport.hpp"

namespace elfstore {

struct FogConfig {
  FogId id;
  OverlayTopology topology;
  // Transport key of every fog, this one included.
  std::map<FogId, std::string> endpoints;
  double heartbeat_interval = 30.0;
  int miss_threshold = 3;
  double lease_duration = 100.0;
  int min_replicas = 2;
  int max_replicas = 5;
  std::size_t cache_capacity = 10'000;
  std::uint64_t max_block_bytes = 64ULL << 20;
  int buckets = kDefaultBuckets;
  std::uint64_t seed = 1;
};

struct Lease {
  std::string client;
  std::string session_key;
  double expiry = 0.0;
  int renew_count = 0;
};

struct StreamRecord {
  StreamId id;
  FogId owner;
  double reliability = 0.0;
  std::map<std::string, PropertyValue> static_props;
  std::map<std::string, PropertyValue> dynamic_props;
  std::uint64_t version = 1;
  std::vector<std::pair<BlockId, std::string>> registry;  // (block, md5) in append order
  std::map<BlockId, std::size_t> position;
  std::map<BlockId, std::string> pending_md5;  // updates in flight
  std::optional<Lease> lease;
};

// What a fog knows about a block hosted in its partition.
struct BlockRecord {
  BlockKey key;
  std::vector<Property> props;
  std::uint64_t size = 0;
  std::string md5;
  double stream_reliability = 0.0;
};

struct AuditEntry {
  double time = 0.0;
  std::string op;
  StreamId stream;
  BlockId block;
  std::string client;
  std::string session_key;
};

struct RecoveredBlock {
  BlockKey key;
  std::vector<FogId> targets;
  bool recovered = false;
  std::string error;
};

struct RecoveryEvent {
  EdgeId edge;
  double edge_reliability = 0.0;
  double detected_at = 0.0;
  std::vector<RecoveredBlock> blocks;
  std::size_t recovered_count() const;
};

struct EdgeEntry {
  EdgeStat stat;
  std::string endpoint;
  std::uint64_t capacity = 0;
  double last_heartbeat = 0.0;
  bool alive = true;
};

class FogNode final : public Handler {
 public:
  FogNode(FogConfig config, Transport& transport, Clock& clock, Executor& executor);

  Reply handle(const Message& m) override;

  // Overlay gossip. Run in this order to converge in one round: neighbors to
  // their buddy, buddy to buddy, buddies back to their neighbors.
  void gossip_to_buddy();
  void gossip_to_buddies();
  void gossip_to_neighbors();

  // Marks edges that missed too many heartbeats as failed and re-replicates
  // their blocks. Returns the newly failed edges.
  std::vector<EdgeId> detect_failures();

  FogId id() const { return config_.id; }
  const FogConfig& config() const { return config_; }
  bool is_buddy() const;

  // Snapshots for reports and audits.
  std::map<EdgeId, EdgeEntry> edges() const;
  std::set<IndexedBlock> index_entries() const;
  std::optional<BlockRecord> block_record(const BlockKey& key) const;
  std::vector<StreamRecord> owned_streams() const;
  std::optional<StreamRecord> stream_record(const StreamId& stream) const;
  std::vector<AuditEntry> audit_log() const;
  std::vector<RecoveryEvent> recoveries() const;
  std::optional<PartitionSummary> own_summary() const;
  // Global matrix over every summary this fog knows; nullopt with none.
  std::optional<GlobalMatrix> global_matrix() const;
  std::size_t known_summaries() const;
  std::size_t cache_size() const;

 private:
  using Args = const json&;

  // Client-facing operations.
  Reply create_stream(const Message& m);
  Reply put_block(const Message& m);
  Reply update_block(const Message& m);
  Reply get_block(const Message& m);
  Reply find_block(const Message& m);
  Reply find_stream(const Message& m);
  Reply get_stream_meta(const Message& m);
  Reply update_stream_meta(const Message& m);

  // Owner-side stream operations.
  Reply owner_op(const Message& m);
  Reply open_stream(Args a);
  Reply renew_lease(Args a);
  Reply close_stream(Args a);
  Reply begin_put(Args a);
  Reply commit_put(Args a);
  Reply begin_update(Args a);
  Reply commit_update(Args a);
  Reply block_md5(Args a);
  Reply list_blocks(Args a);
  Reply stream_meta(Args a);
  Reply set_stream_meta(Args a);

  // Partition-side operations.
  Reply store_replica(const Message& m);
  Reply fetch_replica(const Message& m);
  Reply overwrite_replica(const Message& m);
  Reply block_replicas(Args a);
  Reply search_local(Args a);
  Reply edge_heartbeat(Args a);
  Reply gossip(Args a);

  Reply call_fog(FogId fog, const Message& m);
  FogId owner_of(const StreamId& stream, std::optional<FogId> hint);
  Reply forward_to_owner(const StreamId& stream, const Message& m, std::optional<FogId> hint);
  void check_lease(const StreamRecord& s, const json& a, double now) const;

  struct SearchResult {
    // (stream, block) -> fogs holding it; for streams the block id is empty.
    std::map<BlockKey, std::set<FogId>> hits;
    int hops = 0;
  };
  SearchResult search(const Query& q, bool streams, bool exhaustive);
  std::set<FogId> broadcast_locate(const Query& q, bool streams);

  std::vector<std::pair<EdgeId, double>> replicas_here(const BlockKey& key) const;
  void index_replica(EdgeId edge, const BlockRecord& rec);
  void refresh_summary_locked();
  RecoveredBlock recover_block(const BlockKey& key, const BlockRecord& rec, double failed_r);
  GlobalMatrix matrix_locked() const;

  FogConfig config_;
  Transport& transport_;
  Clock& clock_;
  Executor& executor_;

  mutable std::mutex mu_;
  std::map<EdgeId, EdgeEntry> edges_;
  PartitionIndex index_;
  FilterSet filters_;
  std::map<BlockKey, BlockRecord> blocks_;
  std::map<StreamId, StreamRecord> streams_;
  // Summaries of every fog with a generation counter from its origin.
  std::map<FogId, std::pair<std::uint64_t, PartitionSummary>> summaries_;
  std::uint64_t summary_generation_ = 0;
  mutable std::optional<GlobalMatrix> matrix_cache_;
  std::mt19937_64 rng_;
  std::vector<AuditEntry> audit_;
  std::vector<RecoveryEvent> recoveries_;

  // LRU caches for stream owners and metadata fetched from other fogs.
  struct CachedMeta {
    FogId owner;
    json meta;  // null until fetched
    double fetched_at = 0.0;
  };
  std::list<StreamId> lru_;
  std::unordered_map<StreamId, std::pair<CachedMeta, std::list<StreamId>::iterator>> cache_;
  void cache_put(const StreamId& s, CachedMeta v);
  std::optional<CachedMeta> cache_get(const StreamId& s);
};

}  // namespace elfstore
