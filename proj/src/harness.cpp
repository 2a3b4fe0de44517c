// SPDX-License-Identifier: Apache-2.0

#include "elfstore/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "elfstore/codec.hpp"
#include "elfstore/crypto.hpp"
#include "elfstore/socket_transport.hpp"

namespace elfstore {

namespace {

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

template <class T>
T draw(const std::vector<Weighted<T>>& options, std::mt19937_64& rng) {
  std::vector<double> w;
  for (const auto& o : options) w.push_back(o.p);
  std::discrete_distribution<std::size_t> d(w.begin(), w.end());
  return options[d(rng)].value;
}

Payload random_payload(std::uint64_t size, std::mt19937_64& rng) {
  std::vector<std::uint8_t> bytes(size);
  std::uint64_t x = rng();
  for (std::size_t i = 0; i < size; ++i) {
    if (i % 8 == 0) x = splitmix(x);
    bytes[i] = static_cast<std::uint8_t>(x >> (8 * (i % 8)));
  }
  return Payload(std::move(bytes));
}

template <class T>
void check_weights(const std::vector<Weighted<T>>& options, const char* what) {
  if (options.empty()) throw Error(Errc::invalid_config, std::string(what) + " must not be empty");
  double sum = 0;
  for (const auto& o : options) {
    if (o.p < 0) throw Error(Errc::invalid_config, std::string(what) + " has a negative probability");
    sum += o.p;
  }
  if (std::abs(sum - 1.0) > 1e-9) {
    throw Error(Errc::invalid_config, std::string(what) + " probabilities must sum to 1");
  }
}

// Forwards to a node created after its server socket.
class Slot final : public Handler {
 public:
  Handler* target = nullptr;
  Reply handle(const Message& m) override {
    if (target == nullptr) return Reply::failure(Errc::unavailable, "node not started");
    return target->handle(m);
  }
};

}  // namespace

int ClusterSpec::buddy_count() const {
  if (buddies) return *buddies;
  return std::max(0, static_cast<int>(std::lround(std::sqrt(static_cast<double>(fog_count)))) - 1);
}

void ClusterSpec::validate() const {
  if (fog_count < 1) throw Error(Errc::invalid_config, "fog_count must be >= 1");
  if (edges_per_fog < 1) throw Error(Errc::invalid_config, "edges_per_fog must be >= 1");
  const int b = buddy_count();
  if (b < 0 || b >= fog_count) throw Error(Errc::invalid_config, "buddies must satisfy 0 <= b < fog_count");
  if (!(rel_mean > 0 && rel_mean < 1) || rel_std < 0) {
    throw Error(Errc::invalid_config, "reliability distribution must have mean in (0,1) and stddev >= 0");
  }
  if (edge_capacity == 0) throw Error(Errc::invalid_config, "edge capacity must be positive");
  if (capacity_jitter < 0 || capacity_jitter >= 1) throw Error(Errc::invalid_config, "capacity_jitter must be in [0,1)");
  if (!(heartbeat_interval > 0)) throw Error(Errc::invalid_config, "heartbeat_interval must be positive");
  if (miss_threshold < 1) throw Error(Errc::invalid_config, "miss_threshold must be >= 1");
  if (workers < 1) throw Error(Errc::invalid_config, "workers must be >= 1");
}

void WorkloadSpec::validate() const {
  if (clients < 0 || blocks_per_client < 0 || ops_per_client < 0) {
    throw Error(Errc::invalid_config, "workload counts must be non-negative");
  }
  check_weights(block_sizes, "block_sizes");
  check_weights(reliabilities, "reliabilities");
  for (const auto& r : reliabilities) {
    if (!(r.value > 0 && r.value < 1)) throw Error(Errc::invalid_config, "stream reliability must be in (0,1)");
  }
  const double mix_sum = mix.put + mix.get + mix.find + mix.meta_update;
  if (mix.put < 0 || mix.get < 0 || mix.find < 0 || mix.meta_update < 0 ||
      (ops_per_client > 0 && std::abs(mix_sum - 1.0) > 1e-9)) {
    throw Error(Errc::invalid_config, "op mix weights must be non-negative and sum to 1");
  }
  if (min_replicas < 1 || min_replicas > max_replicas) {
    throw Error(Errc::invalid_config, "replica bounds must satisfy 1 <= min <= max");
  }
  if (lease_batch < 1) throw Error(Errc::invalid_config, "lease_batch must be >= 1");
  if (meta_streams < 1 && mix.meta_update > 0) throw Error(Errc::invalid_config, "meta_update needs meta_streams >= 1");
}

struct SimCluster::Actor {
  Actor(int i, std::string name, EdgeId e, FogClient c, std::uint64_t seed)
      : index(i), id(std::move(name)), edge(e), client(std::move(c)), rng(seed) {}

  int index = 0;
  std::string id;
  EdgeId edge;
  FogClient client;
  std::mt19937_64 rng;
  const WorkloadSpec* w = nullptr;
  StreamId stream;
  double reliability = 0.99;
  bool created = false;
  int puts_done = 0;
  int batch = 0;
  bool close_next = false;
  bool mixed = false;
  int mixed_done = 0;
  int extra_puts = 0;
  std::optional<std::pair<StreamId, std::uint64_t>> pending_meta;
};

SimCluster::SimCluster(ClusterSpec spec) : spec_(std::move(spec)), rng_(spec_.seed) {
  spec_.validate();
  std::vector<FogId> ids;
  for (int f = 1; f <= spec_.fog_count; ++f) ids.emplace_back(f);
  topology_ = build_overlay(ids, spec_.buddy_count());

  const bool sim = spec_.transport == TransportKind::simulated;
  if (sim) {
    auto t = std::make_unique<InProcTransport>(spec_.cost);
    inproc_ = t.get();
    transport_ = std::move(t);
    executor_ = std::make_unique<SimExecutor>(spec_.workers);
  } else {
    transport_ = std::make_unique<SocketTransport>();
    executor_ = std::make_unique<ThreadExecutor>(spec_.workers);
  }
  auto endpoint_for = [&](const std::string& name) {
    if (sim) return name;
    auto slot = std::make_unique<Slot>();
    auto server = std::make_unique<SocketServer>(*slot, "127.0.0.1", 0);
    const std::string ep = server->endpoint();
    slots_[ep] = std::move(slot);
    servers_[ep] = std::move(server);
    return ep;
  };
  auto bind = [&](const std::string& ep, Handler* node) {
    if (sim) {
      inproc_->attach(ep, node);
    } else {
      static_cast<Slot&>(*slots_.at(ep)).target = node;
    }
  };

  for (FogId f : ids) fog_endpoints_[f] = endpoint_for("fog/" + std::to_string(f.value));
  std::normal_distribution<double> rel(spec_.rel_mean, spec_.rel_std);
  std::uniform_real_distribution<double> jitter(1.0 - spec_.capacity_jitter, 1.0 + spec_.capacity_jitter);
  const int total = spec_.fog_count * spec_.edges_per_fog;
  for (int e = 1; e <= total; ++e) {
    EdgeInfo info;
    info.id = EdgeId(e);
    info.fog = FogId((e - 1) / spec_.edges_per_fog + 1);
    // Clamped into the open interval (0.5, 0.999).
    info.reliability = std::clamp(rel(rng_), 0.5001, 0.9989);
    info.capacity = static_cast<std::uint64_t>(std::llround(static_cast<double>(spec_.edge_capacity) * jitter(rng_)));
    info.endpoint = endpoint_for("edge/" + std::to_string(e));
    edge_info_.push_back(info);
  }

  for (FogId f : ids) {
    FogConfig c;
    c.id = f;
    c.topology = topology_;
    c.endpoints = fog_endpoints_;
    c.heartbeat_interval = spec_.heartbeat_interval;
    c.miss_threshold = spec_.miss_threshold;
    c.lease_duration = spec_.lease_duration;
    c.buckets = spec_.buckets;
    c.seed = spec_.seed;
    auto node = std::make_unique<FogNode>(std::move(c), *transport_, clock_, *executor_);
    bind(fog_endpoints_.at(f), node.get());
    fogs_.emplace(f, std::move(node));
  }
  for (const auto& info : edge_info_) {
    EdgeConfig c{info.id, info.endpoint, fog_endpoints_.at(info.fog), info.reliability, info.capacity,
                 spec_.heartbeat_interval};
    auto node = std::make_unique<EdgeNode>(c, std::make_unique<MemoryReplicaStore>(), clock_);
    bind(info.endpoint, node.get());
    edges_.emplace(info.id, std::move(node));
  }

  clock_.set_base(0.0);
  simtime::reset();
  heartbeat_round();
  clock_.set_base(clock_.now());
  for (const auto& [id, f] : fogs_) {
    if (f->known_summaries() != fogs_.size()) {
      throw Error(Errc::internal, "fog " + std::to_string(id.value) + " did not learn every partition summary");
    }
  }
  schedule_round(clock_.base() + spec_.heartbeat_interval);
}

SimCluster::~SimCluster() {
  for (auto& [ep, s] : servers_) s->stop();
}

FogNode& SimCluster::fog(FogId id) {
  auto it = fogs_.find(id);
  if (it == fogs_.end()) throw Error(Errc::not_found, "no fog " + std::to_string(id.value));
  return *it->second;
}

EdgeNode& SimCluster::edge(EdgeId id) {
  auto it = edges_.find(id);
  if (it == edges_.end()) throw Error(Errc::not_found, "no edge " + std::to_string(id.value));
  return *it->second;
}

std::string SimCluster::fog_endpoint(FogId id) const { return fog_endpoints_.at(id); }

Transport& SimCluster::transport() { return *transport_; }

FogClient SimCluster::client_on(EdgeId e, std::string client_id) {
  const auto& info = edge_info_.at(static_cast<std::size_t>(e.value - 1));
  return FogClient(*transport_, fog_endpoints_.at(info.fog), std::move(client_id), e);
}

// ---------------------------------------------------------------------------
// Scheduling

void SimCluster::schedule(double t, int klass, std::function<void()> fn) {
  events_.push(Event{t, klass, seq_++, std::move(fn)});
}

void SimCluster::schedule_round(double t) {
  schedule(t, 0, [this, t] {
    heartbeat_round();
    ++rounds_run_;
    schedule_round(t + spec_.heartbeat_interval);
  });
}

void SimCluster::heartbeat_round() {
  for (const auto& info : edge_info_) {
    if (info.alive) edges_.at(info.id)->send_heartbeat(*transport_);
  }
  for (auto& [id, f] : fogs_) f->detect_failures();
  gossip_round();
  sample_matrix();
}

void SimCluster::gossip_round() {
  for (auto& [id, f] : fogs_) f->gossip_to_buddy();
  for (auto& [id, f] : fogs_) f->gossip_to_buddies();
  for (auto& [id, f] : fogs_) f->gossip_to_neighbors();
  ++gossip_rounds_;
}

void SimCluster::sample_matrix() {
  auto g = fogs_.begin()->second->global_matrix();
  if (!g) return;
  metrics_.matrix_series.push_back({clock_.now(), g->r_med, g->s_med, g->quadrant_counts});
}

void SimCluster::run_clients() {
  while (pending_clients_ > 0) {
    if (events_.empty()) throw Error(Errc::internal, "scheduler ran dry with clients pending");
    Event e = events_.top();
    events_.pop();
    clock_.set_base(e.time);
    simtime::reset();
    e.fn();
  }
  clock_.set_base(clock_.base());
}

void SimCluster::advance(int rounds) {
  const int target = rounds_run_ + rounds;
  while (rounds_run_ < target && !events_.empty()) {
    Event e = events_.top();
    events_.pop();
    clock_.set_base(e.time);
    simtime::reset();
    e.fn();
  }
}

void SimCluster::record(const std::string& op, double duration, const Error* failure) {
  auto& s = metrics_.ops[op];
  if (failure != nullptr) {
    ++s.failures[std::string(to_string(failure->code()))];
  } else {
    s.durations.push_back(duration);
  }
}

// ---------------------------------------------------------------------------
// Workloads

void SimCluster::run_workload(const WorkloadSpec& w) {
  w.validate();
  const int widx = workload_index_++;
  WorkloadSpec spec = w;
  if (!spec.seed) spec.seed = splitmix(spec_.seed + 0x9e37ULL * static_cast<std::uint64_t>(widx + 1));
  workload_specs_.push_back(to_json(spec));
  std::mt19937_64 wrng(*spec.seed);
  const std::string prefix = "w" + std::to_string(widx);

  // Streams created up front by a setup client on the first edge.
  FogClient setup = client_on(edge_info_.front().id, prefix + "-setup");
  meta_streams_.clear();
  if (spec.ops_per_client > 0 && spec.mix.meta_update > 0) {
    for (int k = 0; k < spec.meta_streams; ++k) {
      const StreamId s = prefix + "-meta" + std::to_string(k);
      stream_owner_[s] = setup.create_stream(s, {{"kind", "meta", true}, {"counter", 0, false}}, 0.9);
      meta_streams_.push_back(s);
    }
  }
  StreamId shared;
  double shared_r = 0;
  if (spec.shared_stream) {
    shared = prefix + "-shared";
    shared_r = draw(spec.reliabilities, wrng);
    stream_owner_[shared] = setup.create_stream(shared, {{"kind", "shared", true}}, shared_r);
  }

  actors_.clear();
  for (int i = 0; i < spec.clients; ++i) {
    // Round-robin over fogs first so clients spread evenly across partitions.
    const int fog = i % spec_.fog_count;
    const int slot = (i / spec_.fog_count) % spec_.edges_per_fog;
    const EdgeId e(fog * spec_.edges_per_fog + slot + 1);
    const std::string id = prefix + "-c" + std::to_string(i);
    auto a = std::make_unique<Actor>(i, id, e, client_on(e, id), splitmix(*spec.seed + static_cast<std::uint64_t>(i)));
    a->w = &spec;
    if (spec.shared_stream) {
      a->stream = shared;
      a->reliability = shared_r;
      a->created = true;
    } else {
      a->stream = prefix + "-s" + std::to_string(i);
      a->reliability = draw(spec.reliabilities, a->rng);
    }
    actors_.push_back(std::move(a));
  }

  auto start_phase = [&](bool mixed) {
    pending_clients_ = 0;
    const double t = clock_.base();
    for (auto& a : actors_) {
      a->mixed = mixed;
      ++pending_clients_;
      Actor* p = a.get();
      schedule(t, 1, [this, p] { actor_step(*p); });
    }
    run_clients();
  };
  start_phase(false);
  if (spec.ops_per_client > 0) start_phase(true);
  actors_.clear();
  metrics_.audits.push_back(audit(prefix + " end"));
}

void SimCluster::actor_step(Actor& a) {
  const auto wall = std::chrono::steady_clock::now();
  const bool more = a.mixed ? mixed_step(a) : put_step(a);
  double step = simtime::elapsed();
  if (spec_.transport != TransportKind::simulated) {
    step = std::max(step, 1e-3);
    (void)wall;
  }
  if (more) {
    Actor* p = &a;
    schedule(clock_.base() + std::max(step, 1e-6), 1, [this, p] { actor_step(*p); });
  } else {
    --pending_clients_;
  }
}

namespace {

// Runs `fn`, returning the virtual (or wall) seconds it took.
template <class F>
double timed(bool sim, F&& fn) {
  const double before = simtime::elapsed();
  const auto wall = std::chrono::steady_clock::now();
  fn();
  if (sim) return simtime::elapsed() - before;
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - wall).count();
}

}  // namespace

bool SimCluster::put_step(Actor& a) {
  const WorkloadSpec& w = *a.w;
  const bool sim = spec_.transport == TransportKind::simulated;
  if (!a.created) {
    try {
      FogId owner;
      const double d = timed(sim, [&] {
        owner = a.client.create_stream(a.stream,
                                       {{"client", a.id, true},
                                        {"fog", static_cast<double>(edge_info_[a.edge.value - 1].fog.value), true},
                                        {"note", "", false}},
                                       a.reliability);
      });
      stream_owner_[a.stream] = owner;
      record("create_stream", d, nullptr);
    } catch (const Error& e) {
      record("create_stream", 0, &e);
      return false;
    }
    a.created = true;
    return w.blocks_per_client > 0;
  }
  if (a.close_next) {
    a.close_next = false;
    try {
      const double d = timed(sim, [&] { a.client.close_stream(a.stream); });
      ++metrics_.lease_closes;
      record("close_stream", d, nullptr);
    } catch (const Error& e) {
      record("close_stream", 0, &e);
    }
    return a.puts_done < w.blocks_per_client;
  }
  if (a.puts_done >= w.blocks_per_client) return false;
  if (w.leasing && !a.client.holds_lease(a.stream)) {
    try {
      const double d = timed(sim, [&] { a.client.open_stream(a.stream); });
      ++metrics_.lease_opens;
      record("open_stream", d, nullptr);
    } catch (const Error& e) {
      if (e.code() != Errc::lease_unavailable) throw;
      // Poll again shortly.
      ++metrics_.lease_waits;
      simtime::charge(0.01);
    }
    return true;
  }

  const BlockId block = (w.shared_stream ? "c" + std::to_string(a.index) + "-b" : "b") + std::to_string(a.puts_done);
  const Payload data = random_payload(draw(w.block_sizes, a.rng), a.rng);
  ++a.puts_done;
  try {
    PutResult res;
    const double d = timed(sim, [&] {
      res = a.client.put_block(a.stream, block, {{"seq", a.puts_done - 1}, {"writer", a.id}}, data,
                               w.min_replicas, w.max_replicas);
    });
    record("put_block", d, nullptr);
    const BlockKey key{a.stream, block};
    committed_at_[key] = gossip_rounds_;
    committed_.emplace_back(key, res.md5);
    block_target_[key] = {a.reliability, res.reliability_unmet, w.min_replicas};
    ++metrics_.replication[static_cast<int>(res.replicas.size())];
    if (res.reliability_unmet) ++metrics_.unmet;
    if (res.fog_reuse) ++metrics_.fog_reuse;
    const FogId parent = edge_info_[a.edge.value - 1].fog;
    for (const auto& r : res.replicas) ++metrics_.data_path_hops[r.fog == parent ? 2 : 3];
  } catch (const Error& e) {
    record("put_block", 0, &e);
    if (e.code() == Errc::lease_lost) a.client.forget_lease(a.stream);
  }
  if (w.leasing && a.client.holds_lease(a.stream)) {
    if (++a.batch >= w.lease_batch || a.puts_done >= w.blocks_per_client) {
      a.batch = 0;
      a.close_next = true;
    }
  }
  return true;
}

bool SimCluster::mixed_step(Actor& a) {
  const WorkloadSpec& w = *a.w;
  const bool sim = spec_.transport == TransportKind::simulated;
  if (a.pending_meta) {
    const auto [stream, version] = *a.pending_meta;
    a.pending_meta.reset();
    ++a.mixed_done;
    MetaAttempt m{stream, a.id, version, 0, false};
    if (auto rec = fogs_.at(stream_owner_.at(stream))->stream_record(stream)) m.owner_version = rec->version;
    try {
      const double d = timed(sim, [&] {
        a.client.update_stream_meta(stream, {{"counter", static_cast<double>(version)}, {"writer", a.id}}, version);
      });
      m.ok = true;
      record("update_stream_meta", d, nullptr);
    } catch (const Error& e) {
      if (e.code() != Errc::stale_version) throw;
      record("update_stream_meta", 0, &e);
    }
    metrics_.meta.push_back(m);
    return a.mixed_done < w.ops_per_client;
  }
  if (a.mixed_done >= w.ops_per_client) return false;

  std::discrete_distribution<int> pick({w.mix.put, w.mix.get, w.mix.find, w.mix.meta_update});
  const int op = pick(a.rng);
  if (op == 3) {
    std::uniform_int_distribution<std::size_t> which(0, meta_streams_.size() - 1);
    const StreamId s = meta_streams_[which(a.rng)];
    try {
      StreamMeta meta;
      const double d = timed(sim, [&] { meta = a.client.get_stream_meta(s, true); });
      record("get_stream_meta", d, nullptr);
      a.pending_meta = std::pair{s, meta.version};
    } catch (const Error& e) {
      record("get_stream_meta", 0, &e);
      ++a.mixed_done;
    }
    return true;
  }
  ++a.mixed_done;
  if (op == 0) {
    // Mixed-phase puts are optimistic writes without a lease.
    const BlockId block = (w.shared_stream ? "c" + std::to_string(a.index) + "-m" : "m") + std::to_string(a.extra_puts++);
    const Payload data = random_payload(draw(w.block_sizes, a.rng), a.rng);
    try {
      PutResult res;
      const double d = timed(sim, [&] {
        res = a.client.put_block(a.stream, block, {{"writer", a.id}}, data, w.min_replicas, w.max_replicas);
      });
      record("put_block", d, nullptr);
      const BlockKey key{a.stream, block};
      committed_at_[key] = gossip_rounds_;
      committed_.emplace_back(key, res.md5);
      block_target_[key] = {a.reliability, res.reliability_unmet, w.min_replicas};
      ++metrics_.replication[static_cast<int>(res.replicas.size())];
      if (res.reliability_unmet) ++metrics_.unmet;
      if (res.fog_reuse) ++metrics_.fog_reuse;
      const FogId parent = edge_info_[a.edge.value - 1].fog;
      for (const auto& r : res.replicas) ++metrics_.data_path_hops[r.fog == parent ? 2 : 3];
    } catch (const Error& e) {
      record("put_block", 0, &e);
    }
    return true;
  }
  if (committed_.empty()) return true;
  std::uniform_int_distribution<std::size_t> which(0, committed_.size() - 1);
  const auto [key, md5] = committed_[which(a.rng)];
  if (op == 1) {
    try {
      GetResult g;
      const double d = timed(sim, [&] { g = a.client.get_block(key.stream, key.block); });
      record("get_block", d, nullptr);
      ++metrics_.gets;
      if (g.local) ++metrics_.local_gets;
      if (g.fallback) ++metrics_.get_fallbacks;
      if (crypto::md5_hex(std::span(g.data.data(), g.data.size())) != md5) ++metrics_.get_mismatches;
    } catch (const Error& e) {
      record("get_block", 0, &e);
    }
    return true;
  }
  try {
    FindResult f;
    const double d = timed(sim, [&] {
      f = a.client.find_block({{std::string(kBlockIdProperty), key.block}, {std::string(kStreamIdProperty), key.stream}});
    });
    record("find_block", d, nullptr);
    ++metrics_.finds;
    ++metrics_.find_hops[f.hops];
    const bool hit = std::any_of(f.matches.begin(), f.matches.end(), [&](const auto& m) { return m.key == key; });
    if (!hit) {
      if (committed_at_.at(key) < gossip_rounds_) {
        ++metrics_.find_false_negatives;
      } else {
        ++metrics_.find_not_yet_visible;
      }
    }
  } catch (const Error& e) {
    record("find_block", 0, &e);
  }
  return true;
}

// ---------------------------------------------------------------------------
// Failures and audits

EdgeId SimCluster::fail_edge(FailurePolicy policy, std::optional<EdgeId> id) {
  EdgeInfo* victim = nullptr;
  for (auto& info : edge_info_) {
    if (!info.alive) continue;
    if (policy == FailurePolicy::specific) {
      if (id && info.id == *id) victim = &info;
    } else if (victim == nullptr || info.reliability < victim->reliability) {
      victim = &info;
    }
  }
  if (victim == nullptr) {
    throw Error(Errc::nothing_to_fail, policy == FailurePolicy::specific ? "edge is not alive" : "no live edges");
  }
  if (inproc_ != nullptr) {
    inproc_->set_down(victim->endpoint, true);
  } else {
    servers_.at(victim->endpoint)->stop();
  }
  victim->alive = false;
  FailureRecord rec;
  rec.edge = victim->id;
  rec.fog = victim->fog;
  rec.reliability = victim->reliability;
  rec.failed_at = clock_.base();
  rec.hosted = edges_.at(victim->id)->hosted().size();
  metrics_.failures.push_back(rec);
  return victim->id;
}

const FailureRecord& SimCluster::await_recovery() {
  auto it = std::find_if(metrics_.failures.begin(), metrics_.failures.end(),
                         [](const auto& f) { return !f.recovery; });
  if (it == metrics_.failures.end()) throw Error(Errc::nothing_to_fail, "no failure awaiting recovery");
  const std::size_t idx = static_cast<std::size_t>(it - metrics_.failures.begin());
  for (int round = 0; round < spec_.miss_threshold + 5; ++round) {
    advance(1);
    FailureRecord& rec = metrics_.failures[idx];
    for (const auto& ev : fogs_.at(rec.fog)->recoveries()) {
      if (ev.edge == rec.edge) rec.recovery = ev;
    }
    if (rec.recovery) break;
  }
  FailureRecord& rec = metrics_.failures[idx];
  if (!rec.recovery) throw Error(Errc::internal, "failure of edge " + std::to_string(rec.edge.value) + " was never detected");
  rec.audit = audit("after failure of edge " + std::to_string(rec.edge.value));
  metrics_.audits.push_back(*rec.audit);
  return rec;
}

AuditResult SimCluster::audit(const std::string& label) {
  AuditResult out;
  out.label = label;
  out.time = clock_.base();
  // Ground truth: what live edges actually hold.
  std::map<BlockKey, std::vector<std::pair<double, std::string>>> holders;
  std::map<FogId, std::set<IndexedBlock>> hosted;
  for (const auto& info : edge_info_) {
    if (!info.alive) continue;
    auto& store = edges_.at(info.id)->store();
    for (const auto& key : store.keys()) {
      auto r = store.get(key);
      if (!r) continue;
      holders[key].emplace_back(info.reliability, r->md5);
      hosted[info.fog].insert({info.id, key});
    }
  }
  auto violate = [&](const BlockKey& k, std::string why) {
    out.passed = false;
    if (out.violations.size() < 100) out.violations.push_back({k, std::move(why)});
  };
  std::map<StreamId, std::optional<StreamRecord>> owners;
  for (const auto& [key, md5] : committed_) {
    ++out.blocks;
    const auto& t = block_target_.at(key);
    double failure = 1.0;
    int live = 0;
    for (const auto& [r, m] : holders[key]) {
      if (m != md5) continue;
      failure *= 1.0 - r;
      ++live;
    }
    if (live == 0) {
      violate(key, "no live replica");
    } else if (t.unmet) {
      ++out.unmet_blocks;
      if (live < t.min_replicas) violate(key, "fewer live replicas than min_replicas");
    } else if (failure > (1.0 - t.reliability) * (1.0 + 1e-9)) {
      violate(key, "reliability inequality violated: prod(1-r)=" + std::to_string(failure));
    }
    auto cached = owners.find(key.stream);
    if (cached == owners.end()) {
      cached = owners.emplace(key.stream, fogs_.at(stream_owner_.at(key.stream))->stream_record(key.stream)).first;
    }
    const auto& owner = cached->second;
    bool listed = false;
    if (owner) {
      auto pos = owner->position.find(key.block);
      listed = pos != owner->position.end() && owner->registry[pos->second].second == md5;
    }
    if (!listed) violate(key, "owner registry does not list the block with its md5");
  }
  // Index coherence: every fog's index of its live edges matches what they hold.
  for (const auto& [fid, f] : fogs_) {
    std::set<IndexedBlock> indexed;
    for (const auto& ib : f->index_entries()) {
      if (edge_info_[ib.edge.value - 1].alive) indexed.insert(ib);
    }
    if (indexed != hosted[fid]) {
      std::vector<IndexedBlock> diff;
      std::set_symmetric_difference(indexed.begin(), indexed.end(), hosted[fid].begin(), hosted[fid].end(),
                                    std::back_inserter(diff));
      for (const auto& d : diff) {
        violate(d.block, "fog " + std::to_string(fid.value) + " index disagrees with edge " +
                             std::to_string(d.edge.value));
      }
    }
  }
  return out;
}

}  // namespace elfstore
