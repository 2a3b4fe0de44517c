// SPDX-License-Identifier: Apache-2.0
//
// Cluster harness: builds a fog/edge cluster in one process, drives client
// workloads through a discrete-event scheduler, injects edge failures and
// collects metrics. With the simulated transport a run is a pure function of
// (cluster spec, workloads, seed). The socket transport runs the same
// scheduler over loopback TCP with real threads inside each node.

#pragma once

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <queue>
#include <random>
#include <string>
#include <vector>

#include "elfstore/client.hpp"
#include "elfstore/edge_node.hpp"
#include "elfstore/fog_node.hpp"
#include "elfstore/transport.hpp"

namespace elfstore {

class SocketServer;

enum class TransportKind { simulated, socket };

struct ClusterSpec {
  int fog_count = 4;
  int edges_per_fog = 4;
  // Buddy parameter b; defaults to round(sqrt(fog_count)) - 1.
  std::optional<int> buddies;
  double rel_mean = 0.90;
  double rel_std = 0.03;
  std::uint64_t edge_capacity = 16ULL << 20;
  // Capacities are drawn uniformly from capacity * [1 - jitter, 1 + jitter].
  double capacity_jitter = 0.25;
  double heartbeat_interval = 1.0;
  int miss_threshold = 3;
  double lease_duration = 100.0;
  int buckets = kDefaultBuckets;
  int workers = 10;
  std::uint64_t seed = 42;
  TransportKind transport = TransportKind::simulated;
  CostModel cost;

  int buddy_count() const;
  void validate() const;
};

struct OpMix {
  double put = 0.0;
  double get = 1.0;
  double find = 0.0;
  double meta_update = 0.0;
};

template <class T>
struct Weighted {
  T value;
  double p = 1.0;
};

struct WorkloadSpec {
  int clients = 16;
  // Put phase: every client writes this many blocks first.
  int blocks_per_client = 100;
  // Mixed phase, after all puts finished: ops drawn from `mix`.
  int ops_per_client = 0;
  OpMix mix;
  std::vector<Weighted<std::uint64_t>> block_sizes = {{10 * 1024, 1.0}};
  std::vector<Weighted<double>> reliabilities = {{0.99, 1.0}};
  bool leasing = false;
  // A leasing client closes and re-opens its lease after this many puts.
  int lease_batch = 5;
  // All clients write into one stream instead of one stream each.
  bool shared_stream = false;
  // Streams whose dynamic metadata the meta_update ops contend on.
  int meta_streams = 4;
  int min_replicas = 2;
  int max_replicas = 5;
  // Defaults to a value derived from the cluster seed and the run index.
  std::optional<std::uint64_t> seed;

  void validate() const;
};

enum class FailurePolicy { least_reliable, specific };

struct AuditViolation {
  BlockKey key;
  std::string reason;
};

struct AuditResult {
  std::string label;
  double time = 0;
  std::size_t blocks = 0;
  std::size_t unmet_blocks = 0;
  bool passed = true;
  std::vector<AuditViolation> violations;
};

struct FailureRecord {
  EdgeId edge;
  FogId fog;
  double reliability = 0;
  double failed_at = 0;
  std::size_t hosted = 0;
  std::optional<RecoveryEvent> recovery;
  std::optional<AuditResult> audit;
};

struct MetaAttempt {
  StreamId stream;
  std::string client;
  std::uint64_t version_used = 0;
  std::uint64_t owner_version = 0;  // observed at the owner just before the attempt
  bool ok = false;
};

struct MatrixSample {
  double time = 0;
  double r_med = 0;
  double s_med = 0;
  std::array<double, 4> counts{};
};

struct OpStats {
  std::vector<double> durations;
  std::map<std::string, std::uint64_t> failures;
};

struct Metrics {
  std::map<std::string, OpStats> ops;
  std::map<int, std::uint64_t> replication;
  std::uint64_t unmet = 0;
  std::uint64_t fog_reuse = 0;
  std::map<int, std::uint64_t> data_path_hops;
  std::uint64_t gets = 0;
  std::uint64_t local_gets = 0;
  std::uint64_t get_fallbacks = 0;
  std::uint64_t get_mismatches = 0;
  std::uint64_t finds = 0;
  std::map<int, std::uint64_t> find_hops;
  // Misses on blocks committed before the latest gossip round.
  std::uint64_t find_false_negatives = 0;
  // Misses on blocks whose filters had not been gossiped yet.
  std::uint64_t find_not_yet_visible = 0;
  std::vector<MetaAttempt> meta;
  std::uint64_t lease_opens = 0;
  std::uint64_t lease_waits = 0;
  std::uint64_t lease_closes = 0;
  std::vector<MatrixSample> matrix_series;
  std::vector<FailureRecord> failures;
  std::vector<AuditResult> audits;
};

struct EdgeInfo {
  EdgeId id;
  FogId fog;
  double reliability = 0;
  std::uint64_t capacity = 0;
  std::string endpoint;
  bool alive = true;
};

class SimCluster {
 public:
  // Builds the overlay, starts every node, delivers the first heartbeats and
  // one gossip round. Throws Error(invalid_config) on a bad spec and
  // Error(internal) if the matrices did not converge.
  explicit SimCluster(ClusterSpec spec);
  ~SimCluster();
  SimCluster(const SimCluster&) = delete;
  SimCluster& operator=(const SimCluster&) = delete;

  const ClusterSpec& spec() const { return spec_; }
  const OverlayTopology& topology() const { return topology_; }
  const std::vector<EdgeInfo>& edge_infos() const { return edge_info_; }
  FogNode& fog(FogId id);
  EdgeNode& edge(EdgeId id);
  std::string fog_endpoint(FogId id) const;
  Transport& transport();
  double now() const { return clock_.base(); }

  // A client running on `edge`, talking to that edge's parent fog.
  FogClient client_on(EdgeId edge, std::string client_id);

  void run_workload(const WorkloadSpec& w);
  EdgeId fail_edge(FailurePolicy policy, std::optional<EdgeId> id = std::nullopt);
  // Runs heartbeat rounds until the failed edge's parent has recovered its
  // blocks, then audits durability. Returns the completed failure record.
  const FailureRecord& await_recovery();
  // Advances simulated time by whole heartbeat rounds.
  void advance(int rounds = 1);
  AuditResult audit(const std::string& label);

  const Metrics& metrics() const { return metrics_; }
  // Committed blocks with the md5 the harness expects, in commit order.
  const std::vector<std::pair<BlockKey, std::string>>& committed() const { return committed_; }
  json report() const;

 private:
  struct Actor;
  struct Event {
    double time;
    int klass;  // system events run before client events at equal times
    std::uint64_t seq;
    std::function<void()> fn;
    bool operator>(const Event& o) const {
      if (time != o.time) return time > o.time;
      if (klass != o.klass) return klass > o.klass;
      return seq > o.seq;
    }
  };

  void schedule(double t, int klass, std::function<void()> fn);
  void schedule_round(double t);
  void heartbeat_round();
  void gossip_round();
  void sample_matrix();
  void run_clients();
  void actor_step(Actor& a);
  bool put_step(Actor& a);
  bool mixed_step(Actor& a);
  void record(const std::string& op, double duration, const Error* failure);

  ClusterSpec spec_;
  OverlayTopology topology_;
  VirtualClock clock_;
  std::unique_ptr<Transport> transport_;
  InProcTransport* inproc_ = nullptr;
  std::unique_ptr<Executor> executor_;
  std::map<FogId, std::unique_ptr<FogNode>> fogs_;
  std::map<EdgeId, std::unique_ptr<EdgeNode>> edges_;
  std::vector<EdgeInfo> edge_info_;
  std::map<std::string, std::unique_ptr<Handler>> slots_;
  std::map<std::string, std::unique_ptr<SocketServer>> servers_;
  std::map<FogId, std::string> fog_endpoints_;

  std::priority_queue<Event, std::vector<Event>, std::greater<>> events_;
  std::uint64_t seq_ = 0;
  double next_round_ = 0;
  int pending_clients_ = 0;
  int workload_index_ = 0;
  std::vector<std::unique_ptr<Actor>> actors_;
  std::vector<std::pair<BlockKey, std::string>> committed_;
  // Gossip rounds completed when each block was committed.
  std::map<BlockKey, std::uint64_t> committed_at_;
  std::uint64_t gossip_rounds_ = 0;
  struct BlockTarget {
    double reliability = 0;
    bool unmet = false;
    int min_replicas = 1;
  };
  std::map<BlockKey, BlockTarget> block_target_;
  std::map<StreamId, FogId> stream_owner_;
  std::vector<StreamId> meta_streams_;
  int rounds_run_ = 0;
  std::vector<json> workload_specs_;
  std::mt19937_64 rng_;
  Metrics metrics_;
};

// JSON forms mirroring the CLI flags.
json to_json(const ClusterSpec& s);
ClusterSpec cluster_spec_from_json(const json& j);
json to_json(const WorkloadSpec& w);
WorkloadSpec workload_spec_from_json(const json& j);
// "put=0.2,get=0.8" style.
OpMix parse_mix(const std::string& s);

std::string report_table(const json& report);

}  // namespace elfstore
