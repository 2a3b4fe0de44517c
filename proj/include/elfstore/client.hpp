// SPDX-License-Identifier: Apache-2.0
//
// Typed client for the fog service. A client talks to one fog (its parent)
// and, when it runs on an edge device, tells the fog which edge so the first
// replica of every put lands on that device.

#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "elfstore/transport.hpp"
#include "elfstore/types.hpp"

namespace elfstore {

struct ReplicaInfo {
  FogId fog;
  EdgeId edge;
  double reliability = 0;
  double contribution = 0;
  Quadrant hint = Quadrant::LL;
  bool local = false;
};

struct PutResult {
  FogId owner;
  std::vector<ReplicaInfo> replicas;
  double bound = 0;
  bool reliability_unmet = false;
  bool fog_reuse = false;
  std::string md5;
  std::vector<std::string> warnings;
};

struct GetResult {
  Payload data;
  std::string md5;
  std::vector<Property> props;
  bool local = false;
  FogId served_by;
  EdgeId edge;
  int hops = 0;
  bool fallback = false;
};

struct FindMatch {
  BlockKey key;
  std::vector<FogId> fogs;
};

struct FindResult {
  std::vector<FindMatch> matches;
  int hops = 0;
};

struct StreamMeta {
  StreamId stream;
  FogId owner;
  double reliability = 0;
  std::map<std::string, PropertyValue> static_props;
  std::map<std::string, PropertyValue> dynamic_props;
  std::uint64_t version = 0;
  std::uint64_t block_count = 0;
  bool cached = false;
};

struct LeaseGrant {
  std::string session_key;
  double duration = 0;
  double expiry = 0;
};

// Every call throws Error with the fog's error code on failure.
class FogClient {
 public:
  FogClient(Transport& transport, std::string fog_endpoint, std::string client_id,
            std::optional<EdgeId> edge = std::nullopt);

  const std::string& id() const { return client_id_; }
  const std::string& fog_endpoint() const { return fog_; }
  std::optional<EdgeId> edge() const { return edge_; }

  FogId create_stream(const StreamId& stream, const std::vector<StreamProperty>& props,
                      double reliability);

  LeaseGrant open_stream(const StreamId& stream, std::optional<double> duration = std::nullopt);
  LeaseGrant renew_lease(const StreamId& stream);
  void close_stream(const StreamId& stream);
  bool holds_lease(const StreamId& stream) const { return leases_.contains(stream); }
  // Drops a lease the fog reported as lost.
  void forget_lease(const StreamId& stream) { leases_.erase(stream); }

  // Uses the client's lease on the stream when it holds one.
  PutResult put_block(const StreamId& stream, const BlockId& block,
                      const std::vector<Property>& props, Payload data,
                      std::optional<int> min_replicas = std::nullopt,
                      std::optional<int> max_replicas = std::nullopt);
  void update_block(const StreamId& stream, const BlockId& block, Payload data);
  GetResult get_block(const StreamId& stream, const BlockId& block);

  FindResult find_block(const Query& query, bool exhaustive = false);
  std::vector<StreamId> find_stream(const Query& query, bool exhaustive = false);

  StreamMeta get_stream_meta(const StreamId& stream, bool latest = false);
  // Returns the new version. Throws Error(stale_version) when `version` is
  // not the owner's current version.
  std::uint64_t update_stream_meta(const StreamId& stream,
                                   const std::map<std::string, PropertyValue>& props,
                                   std::uint64_t version);

  // (block, md5) in append order.
  std::vector<std::pair<BlockId, std::string>> list_blocks(const StreamId& stream);

 private:
  json call(const std::string& op, json args, std::optional<Payload> payload = std::nullopt,
            Payload* payload_out = nullptr);

  Transport& transport_;
  std::string fog_;
  std::string client_id_;
  std::optional<EdgeId> edge_;
  std::map<StreamId, std::string> leases_;
  std::map<StreamId, FogId> owners_;
};

}  // namespace elfstore
