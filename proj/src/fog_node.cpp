// SPDX-License-Identifier: Apache-2.0

#include "elfstore/fog_node.hpp"

#include <algorithm>
#include <cstdio>

#include "elfstore/codec.hpp"
#include "elfstore/crypto.hpp"

namespace elfstore {

namespace {

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t fnv1a(std::string_view s, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

Query block_query(const BlockKey& key) {
  return {{std::string(kBlockIdProperty), key.block}, {std::string(kStreamIdProperty), key.stream}};
}

Query stream_query(const StreamId& s) { return {{std::string(kStreamIdProperty), s}}; }

std::string md5_of(const Payload& p) { return crypto::md5_hex(std::span(p.data(), p.size())); }

Message make(std::string op, json args, std::optional<Payload> payload = std::nullopt) {
  Message m;
  m.op = std::move(op);
  m.args = std::move(args);
  m.payload = std::move(payload);
  return m;
}

std::optional<FogId> opt_fog(const json& a, const char* name) {
  auto it = a.find(name);
  if (it == a.end() || it->is_null()) return std::nullopt;
  return it->get<FogId>();
}

json props_json(const std::map<std::string, PropertyValue>& props) {
  json out = json::object();
  for (const auto& [k, v] : props) out[k] = v;
  return out;
}

}  // namespace

std::size_t RecoveryEvent::recovered_count() const {
  return static_cast<std::size_t>(
      std::count_if(blocks.begin(), blocks.end(), [](const auto& b) { return b.recovered; }));
}

FogNode::FogNode(FogConfig config, Transport& transport, Clock& clock, Executor& executor)
    : config_(std::move(config)),
      transport_(transport),
      clock_(clock),
      executor_(executor),
      rng_(splitmix(config_.seed ^ static_cast<std::uint64_t>(config_.id.value))) {
  if (!config_.topology.contains(config_.id)) {
    throw Error(Errc::invalid_config, "fog " + std::to_string(config_.id.value) + " is not in the topology");
  }
  for (FogId f : config_.topology.fog_ids()) {
    if (!config_.endpoints.contains(f)) {
      throw Error(Errc::invalid_config, "no endpoint for fog " + std::to_string(f.value));
    }
  }
  if (config_.min_replicas < 1 || config_.min_replicas > config_.max_replicas) {
    throw Error(Errc::invalid_config, "replica bounds must satisfy 1 <= min <= max");
  }
}

bool FogNode::is_buddy() const { return config_.topology.fog(config_.id).role == FogRole::buddy; }

Reply FogNode::handle(const Message& m) {
  try {
    const std::string& op = m.op;
    if (op == "create_stream") return create_stream(m);
    if (op == "put_block") return put_block(m);
    if (op == "update_block") return update_block(m);
    if (op == "get_block") return get_block(m);
    if (op == "find_block") return find_block(m);
    if (op == "find_stream") return find_stream(m);
    if (op == "get_stream_meta") return get_stream_meta(m);
    if (op == "update_stream_meta") return update_stream_meta(m);
    if (op == "open_stream" || op == "renew_lease" || op == "close_stream" || op == "begin_put" ||
        op == "commit_put" || op == "begin_update" || op == "commit_update" || op == "block_md5" ||
        op == "list_blocks" || op == "stream_meta" || op == "set_stream_meta") {
      return owner_op(m);
    }
    if (op == "store_replica") return store_replica(m);
    if (op == "fetch_replica") return fetch_replica(m);
    if (op == "overwrite_replica") return overwrite_replica(m);
    if (op == "block_replicas") return block_replicas(m.args);
    if (op == "search_local") return search_local(m.args);
    if (op == "edge_heartbeat") return edge_heartbeat(m.args);
    if (op == "gossip") return gossip(m.args);
    if (op == "ping") return Reply::success({{"fog", config_.id}});
    return Reply::failure(Errc::protocol, "unknown op " + op);
  } catch (const Error& e) {
    return Reply::from_error(e);
  } catch (const json::exception& e) {
    return Reply::failure(Errc::invalid_argument, e.what());
  }
}

Reply FogNode::call_fog(FogId fog, const Message& m) {
  if (fog == config_.id) return handle(m);
  auto it = config_.endpoints.find(fog);
  if (it == config_.endpoints.end()) {
    return Reply::failure(Errc::not_found, "unknown fog " + std::to_string(fog.value));
  }
  return transport_.call(it->second, m);
}

// ---------------------------------------------------------------------------
// Metadata cache

void FogNode::cache_put(const StreamId& s, CachedMeta v) {
  auto it = cache_.find(s);
  if (it != cache_.end()) {
    lru_.erase(it->second.second);
    cache_.erase(it);
  }
  lru_.push_front(s);
  cache_.emplace(s, std::pair{std::move(v), lru_.begin()});
  while (cache_.size() > config_.cache_capacity) {
    cache_.erase(lru_.back());
    lru_.pop_back();
  }
}

std::optional<FogNode::CachedMeta> FogNode::cache_get(const StreamId& s) {
  auto it = cache_.find(s);
  if (it == cache_.end()) return std::nullopt;
  lru_.splice(lru_.begin(), lru_, it->second.second);
  return it->second.first;
}

std::size_t FogNode::cache_size() const {
  std::lock_guard lock(mu_);
  return cache_.size();
}

// ---------------------------------------------------------------------------
// Search

Reply FogNode::search_local(Args a) {
  const Query q = query_from_json(arg<json>(a, "query"));
  const bool streams = arg_or<bool>(a, "streams", false);
  const bool forward = arg_or<bool>(a, "forward", false);
  const auto origin = opt_fog(a, "origin");

  json hits = json::array();
  std::vector<FogId> next;
  {
    std::lock_guard lock(mu_);
    if (streams) {
      for (const auto& s : index_.lookup_streams(q)) {
        hits.push_back({{"stream", s}, {"block", ""}, {"fog", config_.id}, {"depth", 0}});
      }
    } else {
      std::set<BlockKey> seen;
      for (const auto& ib : index_.lookup(q)) {
        if (!seen.insert(ib.block).second) continue;
        hits.push_back(
            {{"stream", ib.block.stream}, {"block", ib.block.block}, {"fog", config_.id}, {"depth", 0}});
      }
    }
    if (forward && is_buddy()) {
      for (FogId n : plan_search(filters_, q).candidate_neighbors) {
        if (origin && n == *origin) continue;
        next.push_back(n);
      }
    }
  }
  std::vector<json> replies(next.size());
  std::vector<std::function<void()>> tasks;
  for (std::size_t i = 0; i < next.size(); ++i) {
    tasks.push_back([&, i] {
      const Reply r = call_fog(next[i], make("search_local", {{"query", query_to_json(q)},
                                                             {"streams", streams},
                                                             {"forward", false}}));
      if (r.ok) replies[i] = r.result.at("hits");
    });
  }
  executor_.run_all(std::move(tasks));
  for (const auto& list : replies) {
    if (list.is_null()) continue;
    for (json h : list) {
      h["depth"] = h.value("depth", 0) + 1;
      hits.push_back(std::move(h));
    }
  }
  return Reply::success({{"hits", hits}});
}

FogNode::SearchResult FogNode::search(const Query& q, bool streams, bool exhaustive) {
  SearchResult out;
  auto absorb = [&](const json& hits, int base_depth) {
    for (const auto& h : hits) {
      out.hits[{h.at("stream").get<std::string>(), h.at("block").get<std::string>()}].insert(
          h.at("fog").get<FogId>());
      out.hops = std::max(out.hops, base_depth + h.value("depth", 0));
    }
  };
  auto fan_out = [&](const std::set<FogId>& targets, bool forward) {
    std::vector<FogId> list(targets.begin(), targets.end());
    std::vector<json> replies(list.size());
    std::vector<std::function<void()>> tasks;
    for (std::size_t i = 0; i < list.size(); ++i) {
      tasks.push_back([&, i] {
        const Reply r = call_fog(list[i], make("search_local", {{"query", query_to_json(q)},
                                                               {"streams", streams},
                                                               {"forward", forward},
                                                               {"origin", config_.id}}));
        if (r.ok) replies[i] = r.result.at("hits");
      });
    }
    executor_.run_all(std::move(tasks));
    for (const auto& hits : replies) {
      if (!hits.is_null()) absorb(hits, 1);
    }
  };

  SearchPlan plan;
  {
    const Reply local = search_local({{"query", query_to_json(q)}, {"streams", streams}});
    absorb(local.result.at("hits"), 0);
    std::lock_guard lock(mu_);
    plan = plan_search(filters_, q);
  }
  if (!out.hits.empty() && !exhaustive) return out;
  if (is_buddy() && !plan.candidate_neighbors.empty()) {
    fan_out(plan.candidate_neighbors, false);
    if (!out.hits.empty() && !exhaustive) return out;
  }
  plan.candidate_buddies.erase(config_.id);
  fan_out(plan.candidate_buddies, true);
  return out;
}

std::set<FogId> FogNode::broadcast_locate(const Query& q, bool streams) {
  std::vector<FogId> all = config_.topology.fog_ids();
  std::vector<json> replies(all.size());
  std::vector<std::function<void()>> tasks;
  for (std::size_t i = 0; i < all.size(); ++i) {
    tasks.push_back([&, i] {
      const Reply r = call_fog(all[i], make("search_local", {{"query", query_to_json(q)},
                                                            {"streams", streams},
                                                            {"forward", false}}));
      if (r.ok) replies[i] = r.result.at("hits");
    });
  }
  executor_.run_all(std::move(tasks));
  std::set<FogId> out;
  for (const auto& hits : replies) {
    if (hits.is_null()) continue;
    for (const auto& h : hits) out.insert(h.at("fog").get<FogId>());
  }
  return out;
}

Reply FogNode::find_block(const Message& m) {
  const Query q = query_from_json(arg<json>(m.args, "query"));
  const bool exhaustive = arg_or<bool>(m.args, "exhaustive", false);
  if (q.empty()) return Reply::success({{"matches", json::array()}, {"hops", 0}});
  const auto res = search(q, false, exhaustive);
  json matches = json::array();
  for (const auto& [key, fogs] : res.hits) {
    matches.push_back({{"stream", key.stream}, {"block", key.block}, {"fogs", fogs}});
  }
  return Reply::success({{"matches", matches}, {"hops", res.hops}});
}

Reply FogNode::find_stream(const Message& m) {
  const Query q = query_from_json(arg<json>(m.args, "query"));
  const bool exhaustive = arg_or<bool>(m.args, "exhaustive", false);
  if (q.empty()) return Reply::success({{"streams", json::array()}, {"hops", 0}});
  const auto res = search(q, true, exhaustive);
  json streams = json::array();
  for (const auto& [key, fogs] : res.hits) streams.push_back(key.stream);
  return Reply::success({{"streams", streams}, {"hops", res.hops}});
}

// ---------------------------------------------------------------------------
// Streams and the owner side

FogId FogNode::owner_of(const StreamId& stream, std::optional<FogId> hint) {
  {
    std::lock_guard lock(mu_);
    if (streams_.contains(stream)) return config_.id;
    if (hint && config_.topology.contains(*hint)) return *hint;
    if (auto c = cache_get(stream)) return c->owner;
  }
  const Query q = stream_query(stream);
  std::set<FogId> fogs;
  for (const auto& [key, f] : search(q, true, false).hits) fogs.insert(f.begin(), f.end());
  if (fogs.empty()) fogs = broadcast_locate(q, true);
  if (fogs.empty()) throw Error(Errc::not_found, "no stream " + stream);
  const FogId owner = *fogs.begin();
  std::lock_guard lock(mu_);
  auto existing = cache_get(stream);
  cache_put(stream, {owner, existing ? existing->meta : json(), existing ? existing->fetched_at : 0.0});
  return owner;
}

Reply FogNode::forward_to_owner(const StreamId& stream, const Message& m, std::optional<FogId> hint) {
  const FogId owner = owner_of(stream, hint);
  Message fwd = m;
  fwd.args["forwarded"] = true;
  fwd.args.erase("owner");
  if (owner == config_.id) {
    std::lock_guard lock(mu_);
    if (!streams_.contains(stream)) return Reply::failure(Errc::not_found, "no stream " + stream);
  }
  Reply r = call_fog(owner, fwd);
  if (!r.ok && r.code == Errc::not_found && !hint) {
    // The cached owner may be wrong; forget it so the next call searches.
    std::lock_guard lock(mu_);
    if (auto it = cache_.find(stream); it != cache_.end()) {
      lru_.erase(it->second.second);
      cache_.erase(it);
    }
  }
  return r;
}

Reply FogNode::create_stream(const Message& m) {
  const auto stream = arg<std::string>(m.args, "stream");
  const auto r = arg<double>(m.args, "reliability");
  const auto props = arg_or<std::vector<StreamProperty>>(m.args, "props", {});
  if (stream.empty()) return Reply::failure(Errc::invalid_argument, "stream id must not be empty");
  if (!(r > 0.0 && r < 1.0)) return Reply::failure(Errc::invalid_argument, "reliability must be in (0,1)");
  {
    std::lock_guard lock(mu_);
    if (streams_.contains(stream)) return Reply::failure(Errc::already_exists, "stream " + stream);
  }
  if (!search(stream_query(stream), true, true).hits.empty()) {
    return Reply::failure(Errc::already_exists, "stream " + stream);
  }
  StreamRecord rec;
  rec.id = stream;
  rec.owner = config_.id;
  rec.reliability = r;
  std::vector<Property> indexed;
  for (const auto& p : props) {
    if (p.name == kBlockIdProperty || p.name == kStreamIdProperty) {
      return Reply::failure(Errc::invalid_argument, p.name + " is reserved");
    }
    if (p.is_static) {
      rec.static_props[p.name] = p.value;
      indexed.push_back({p.name, p.value});
    } else {
      rec.dynamic_props[p.name] = p.value;
    }
  }
  std::lock_guard lock(mu_);
  if (streams_.contains(stream)) return Reply::failure(Errc::already_exists, "stream " + stream);
  index_.index_stream(stream, indexed, &filters_.local);
  streams_.emplace(stream, std::move(rec));
  return Reply::success({{"owner", config_.id}, {"version", 1}});
}

Reply FogNode::owner_op(const Message& m) {
  const auto stream = arg<std::string>(m.args, "stream");
  bool local;
  {
    std::lock_guard lock(mu_);
    local = streams_.contains(stream);
  }
  if (!local) {
    if (arg_or<bool>(m.args, "forwarded", false)) {
      return Reply::failure(Errc::not_found, "fog " + std::to_string(config_.id.value) +
                                                 " does not own " + stream);
    }
    return forward_to_owner(stream, m, opt_fog(m.args, "owner"));
  }
  const std::string& op = m.op;
  if (op == "open_stream") return open_stream(m.args);
  if (op == "renew_lease") return renew_lease(m.args);
  if (op == "close_stream") return close_stream(m.args);
  if (op == "begin_put") return begin_put(m.args);
  if (op == "commit_put") return commit_put(m.args);
  if (op == "begin_update") return begin_update(m.args);
  if (op == "commit_update") return commit_update(m.args);
  if (op == "block_md5") return block_md5(m.args);
  if (op == "list_blocks") return list_blocks(m.args);
  if (op == "stream_meta") return stream_meta(m.args);
  return set_stream_meta(m.args);
}

void FogNode::check_lease(const StreamRecord& s, const json& a, double now) const {
  const auto key = arg_or<std::string>(a, "session_key", "");
  if (key.empty()) return;  // optimistic write without a lease
  const auto client = arg_or<std::string>(a, "client", "");
  if (!s.lease || s.lease->client != client || s.lease->session_key != key || s.lease->expiry < now) {
    throw Error(Errc::lease_lost, "client " + client + " does not hold the lease on " + s.id);
  }
}

Reply FogNode::open_stream(Args a) {
  const auto stream = arg<std::string>(a, "stream");
  const auto client = arg<std::string>(a, "client");
  const double duration = arg_or<double>(a, "duration", config_.lease_duration);
  if (!(duration > 0)) return Reply::failure(Errc::invalid_argument, "lease duration must be positive");
  const double now = clock_.now();
  std::lock_guard lock(mu_);
  auto& s = streams_.at(stream);
  if (s.lease && s.lease->client != client && s.lease->expiry >= now) {
    return Reply::failure(Errc::lease_unavailable,
                          stream + " is leased by another client until " + std::to_string(s.lease->expiry));
  }
  if (!s.lease || s.lease->client != client || s.lease->expiry < now) {
    char buf[33];
    std::snprintf(buf, sizeof buf, "%016llx%016llx", static_cast<unsigned long long>(rng_()),
                  static_cast<unsigned long long>(rng_()));
    s.lease = Lease{client, buf, 0.0, 0};
  }
  s.lease->expiry = now + duration;
  audit_.push_back({now, "open", stream, "", client, s.lease->session_key});
  return Reply::success(
      {{"duration", duration}, {"session_key", s.lease->session_key}, {"expiry", s.lease->expiry}});
}

Reply FogNode::renew_lease(Args a) {
  const auto stream = arg<std::string>(a, "stream");
  const auto client = arg<std::string>(a, "client");
  const auto key = arg<std::string>(a, "session_key");
  const double duration = arg_or<double>(a, "duration", config_.lease_duration);
  const double now = clock_.now();
  std::lock_guard lock(mu_);
  auto& s = streams_.at(stream);
  // An expired lease can still be renewed as long as nobody else took it.
  if (!s.lease || s.lease->client != client || s.lease->session_key != key) {
    return Reply::failure(Errc::lease_lost, "lease on " + stream + " was acquired by another client");
  }
  s.lease->expiry = now + duration;
  ++s.lease->renew_count;
  audit_.push_back({now, "renew", stream, "", client, key});
  return Reply::success({{"duration", duration}, {"expiry", s.lease->expiry}});
}

Reply FogNode::close_stream(Args a) {
  const auto stream = arg<std::string>(a, "stream");
  const auto client = arg<std::string>(a, "client");
  const auto key = arg<std::string>(a, "session_key");
  std::lock_guard lock(mu_);
  auto& s = streams_.at(stream);
  if (!s.lease || s.lease->client != client || s.lease->session_key != key) {
    return Reply::failure(Errc::lease_lost, "no lease on " + stream + " for " + client);
  }
  audit_.push_back({clock_.now(), "close", stream, "", client, key});
  s.lease.reset();
  return Reply::success();
}

Reply FogNode::begin_put(Args a) {
  const auto stream = arg<std::string>(a, "stream");
  const auto block = arg<std::string>(a, "block");
  std::lock_guard lock(mu_);
  const auto& s = streams_.at(stream);
  if (s.position.contains(block)) return Reply::failure(Errc::already_exists, stream + "/" + block);
  check_lease(s, a, clock_.now());
  return Reply::success({{"reliability", s.reliability}, {"owner", config_.id}});
}

Reply FogNode::commit_put(Args a) {
  const auto stream = arg<std::string>(a, "stream");
  const auto block = arg<std::string>(a, "block");
  const auto md5 = arg<std::string>(a, "md5");
  const double now = clock_.now();
  std::lock_guard lock(mu_);
  auto& s = streams_.at(stream);
  if (s.position.contains(block)) return Reply::failure(Errc::already_exists, stream + "/" + block);
  check_lease(s, a, now);
  s.position[block] = s.registry.size();
  s.registry.emplace_back(block, md5);
  audit_.push_back({now, "put", stream, block, arg_or<std::string>(a, "client", ""),
                    arg_or<std::string>(a, "session_key", "")});
  return Reply::success({{"block_count", s.registry.size()}});
}

Reply FogNode::begin_update(Args a) {
  const auto stream = arg<std::string>(a, "stream");
  const auto block = arg<std::string>(a, "block");
  const auto md5 = arg<std::string>(a, "md5");
  std::lock_guard lock(mu_);
  auto& s = streams_.at(stream);
  if (!s.position.contains(block)) return Reply::failure(Errc::not_found, stream + "/" + block);
  check_lease(s, a, clock_.now());
  s.pending_md5[block] = md5;
  return Reply::success({{"reliability", s.reliability}});
}

Reply FogNode::commit_update(Args a) {
  const auto stream = arg<std::string>(a, "stream");
  const auto block = arg<std::string>(a, "block");
  const auto md5 = arg<std::string>(a, "md5");
  std::lock_guard lock(mu_);
  auto& s = streams_.at(stream);
  auto it = s.position.find(block);
  if (it == s.position.end()) return Reply::failure(Errc::not_found, stream + "/" + block);
  s.registry[it->second].second = md5;
  s.pending_md5.erase(block);
  audit_.push_back({clock_.now(), "update", stream, block, arg_or<std::string>(a, "client", ""),
                    arg_or<std::string>(a, "session_key", "")});
  return Reply::success();
}

Reply FogNode::block_md5(Args a) {
  const auto stream = arg<std::string>(a, "stream");
  const auto block = arg<std::string>(a, "block");
  std::lock_guard lock(mu_);
  const auto& s = streams_.at(stream);
  auto it = s.position.find(block);
  if (it == s.position.end()) return Reply::failure(Errc::not_found, stream + "/" + block);
  json out = {{"md5", s.registry[it->second].second}};
  if (auto p = s.pending_md5.find(block); p != s.pending_md5.end()) out["pending"] = p->second;
  return Reply::success(out);
}

Reply FogNode::list_blocks(Args a) {
  const auto stream = arg<std::string>(a, "stream");
  std::lock_guard lock(mu_);
  const auto& s = streams_.at(stream);
  json blocks = json::array();
  for (const auto& [b, md5] : s.registry) blocks.push_back({b, md5});
  return Reply::success({{"blocks", blocks}, {"version", s.version}});
}

Reply FogNode::stream_meta(Args a) {
  const auto stream = arg<std::string>(a, "stream");
  std::lock_guard lock(mu_);
  const auto& s = streams_.at(stream);
  return Reply::success({{"stream", s.id},
                         {"owner", s.owner},
                         {"reliability", s.reliability},
                         {"static", props_json(s.static_props)},
                         {"dynamic", props_json(s.dynamic_props)},
                         {"version", s.version},
                         {"block_count", s.registry.size()}});
}

Reply FogNode::set_stream_meta(Args a) {
  const auto stream = arg<std::string>(a, "stream");
  const auto version = arg<std::uint64_t>(a, "version");
  const json props = arg_or<json>(a, "props", json::object());
  std::lock_guard lock(mu_);
  auto& s = streams_.at(stream);
  for (const auto& [name, v] : props.items()) {
    if (s.static_props.contains(name)) {
      return Reply::failure(Errc::invalid_argument, name + " is a static property");
    }
    if (name == kBlockIdProperty || name == kStreamIdProperty || name == "reliability" ||
        name == "version" || name == "block_count") {
      return Reply::failure(Errc::invalid_argument, name + " is maintained by the system");
    }
  }
  if (version != s.version) {
    return Reply::failure(Errc::stale_version, "current version of " + stream + " is " +
                                                   std::to_string(s.version));
  }
  for (const auto& [name, v] : props.items()) s.dynamic_props[name] = v.get<PropertyValue>();
  ++s.version;
  return Reply::success({{"version", s.version}});
}

Reply FogNode::get_stream_meta(const Message& m) {
  const auto stream = arg<std::string>(m.args, "stream");
  const bool latest = arg_or<bool>(m.args, "latest", false);
  bool local;
  {
    std::lock_guard lock(mu_);
    local = streams_.contains(stream);
    if (!local && !latest) {
      if (auto c = cache_get(stream); c && !c->meta.is_null()) {
        json out = c->meta;
        out["cached"] = true;
        return Reply::success(out);
      }
    }
  }
  if (local) return stream_meta(m.args);
  Reply r = forward_to_owner(stream, make("stream_meta", {{"stream", stream}}), opt_fog(m.args, "owner"));
  if (r.ok) {
    std::lock_guard lock(mu_);
    cache_put(stream, {r.result.at("owner").get<FogId>(), r.result, clock_.now()});
    r.result["cached"] = false;
  }
  return r;
}

Reply FogNode::update_stream_meta(const Message& m) {
  const auto stream = arg<std::string>(m.args, "stream");
  json args = {{"stream", stream},
               {"version", arg<std::uint64_t>(m.args, "version")},
               {"props", arg_or<json>(m.args, "props", json::object())}};
  Reply r;
  bool local;
  {
    std::lock_guard lock(mu_);
    local = streams_.contains(stream);
  }
  if (local) {
    r = set_stream_meta(args);
  } else {
    r = forward_to_owner(stream, make("set_stream_meta", args), opt_fog(m.args, "owner"));
    std::lock_guard lock(mu_);
    if (auto c = cache_get(stream)) {
      c->meta = json();
      cache_put(stream, *c);
    }
  }
  return r;
}

// ---------------------------------------------------------------------------
// Partition side: replicas on this fog's edges

std::vector<std::pair<EdgeId, double>> FogNode::replicas_here(const BlockKey& key) const {
  std::vector<std::pair<EdgeId, double>> out;
  for (const auto& ib : index_.lookup(block_query(key))) {
    if (ib.block != key) continue;
    auto it = edges_.find(ib.edge);
    if (it != edges_.end() && it->second.alive) out.emplace_back(ib.edge, it->second.stat.reliability);
  }
  return out;
}

void FogNode::index_replica(EdgeId edge, const BlockRecord& rec) {
  index_.index_block(edge, rec.key, rec.props, &filters_.local);
  auto [it, inserted] = blocks_.emplace(rec.key, rec);
  if (!inserted && it->second.md5 != rec.md5 && !rec.md5.empty()) it->second = rec;
}

void FogNode::refresh_summary_locked() {
  std::vector<EdgeStat> live;
  for (const auto& [id, e] : edges_) {
    if (e.alive) live.push_back(e.stat);
  }
  matrix_cache_.reset();
  if (live.empty()) {
    summaries_.erase(config_.id);
    return;
  }
  summaries_[config_.id] = {++summary_generation_, summarize_partition(config_.id, live)};
}

Reply FogNode::store_replica(const Message& m) {
  if (!m.payload) return Reply::failure(Errc::invalid_argument, "store needs a payload");
  BlockRecord rec;
  rec.key = arg<BlockKey>(m.args, "key");
  rec.props = arg_or<std::vector<Property>>(m.args, "props", {});
  rec.md5 = arg<std::string>(m.args, "md5");
  rec.size = m.payload->size();
  rec.stream_reliability = arg_or<double>(m.args, "reliability", 0.0);
  const Quadrant hint = arg_or<Quadrant>(m.args, "hint", Quadrant::LL);
  const double floor = arg_or<double>(m.args, "min_reliability", 0.0);
  std::optional<EdgeId> pinned;
  if (m.args.contains("pinned_edge") && !m.args["pinned_edge"].is_null()) {
    pinned = m.args["pinned_edge"].get<EdgeId>();
  }

  std::set<EdgeId> tried;
  for (int attempt = 0; attempt < 8; ++attempt) {
    EdgeId target;
    std::string endpoint;
    double reliability = 0;
    {
      std::lock_guard lock(mu_);
      std::set<EdgeId> exclude = tried;
      for (const auto& [e, r] : replicas_here(rec.key)) exclude.insert(e);
      if (pinned) {
        auto it = edges_.find(*pinned);
        if (it == edges_.end() || !it->second.alive || exclude.contains(*pinned) ||
            it->second.stat.free_storage < rec.size) {
          return Reply::failure(Errc::no_capacity, "client edge cannot take the local replica");
        }
        target = *pinned;
      } else {
        std::vector<EdgeStat> live;
        for (const auto& [id, e] : edges_) {
          if (e.alive) live.push_back(e.stat);
        }
        auto own = summaries_.find(config_.id);
        if (live.empty() || own == summaries_.end()) {
          return Reply::failure(Errc::no_capacity, "fog has no live edges");
        }
        target = choose_edge_in_fog(live, own->second.second, hint, rec.size, floor, exclude);
      }
      endpoint = edges_.at(target).endpoint;
      reliability = edges_.at(target).stat.reliability;
    }
    Message store = make("store_replica",
                         {{"key", rec.key}, {"props", rec.props}, {"md5", rec.md5},
                          {"reliability", rec.stream_reliability}},
                         m.payload);
    Reply r = transport_.call(endpoint, store);
    if (!r.ok && r.code == Errc::integrity) r = transport_.call(endpoint, store);
    if (r.ok) {
      std::lock_guard lock(mu_);
      auto& e = edges_.at(target);
      e.stat.free_storage = r.result.value("free", e.stat.free_storage);
      index_replica(target, rec);
      refresh_summary_locked();
      return Reply::success({{"edge", target}, {"reliability", reliability}, {"fog", config_.id}});
    }
    if (r.code == Errc::integrity) return r;
    std::lock_guard lock(mu_);
    if (r.code == Errc::no_capacity) {
      edges_.at(target).stat.free_storage = 0;
      refresh_summary_locked();
    } else if (r.code == Errc::unavailable) {
      // Let the heartbeat detector declare it; just skip it here.
    } else {
      return r;
    }
    if (pinned) return Reply::failure(Errc::no_capacity, "client edge cannot take the local replica");
    tried.insert(target);
  }
  return Reply::failure(Errc::no_capacity, "no edge accepted " + rec.key.block);
}

Reply FogNode::fetch_replica(const Message& m) {
  const auto key = arg<BlockKey>(m.args, "key");
  const auto accept = arg_or<std::vector<std::string>>(m.args, "accept", {});
  std::vector<std::pair<EdgeId, std::string>> holders;
  {
    std::lock_guard lock(mu_);
    for (const auto& [e, r] : replicas_here(key)) holders.emplace_back(e, edges_.at(e).endpoint);
  }
  if (holders.empty()) return Reply::failure(Errc::not_found, "no replica of " + key.block + " here");
  Reply last = Reply::failure(Errc::unavailable, "no edge served " + key.block);
  for (const auto& [edge, endpoint] : holders) {
    Reply r = transport_.call(endpoint, make("read_replica", {{"key", key}}));
    if (!r.ok) {
      last = r;
      continue;
    }
    const std::string md5 = r.result.value("md5", "");
    if (!accept.empty() && std::find(accept.begin(), accept.end(), md5) == accept.end()) {
      last = Reply::failure(Errc::integrity, "replica of " + key.block + " on edge " +
                                                 std::to_string(edge.value) + " is stale");
      continue;
    }
    r.result["edge"] = edge;
    r.result["fog"] = config_.id;
    return r;
  }
  return last;
}

Reply FogNode::overwrite_replica(const Message& m) {
  if (!m.payload) return Reply::failure(Errc::invalid_argument, "overwrite needs a payload");
  const auto key = arg<BlockKey>(m.args, "key");
  const auto md5 = arg<std::string>(m.args, "md5");
  std::vector<std::pair<EdgeId, std::string>> holders;
  {
    std::lock_guard lock(mu_);
    for (const auto& [e, r] : replicas_here(key)) holders.emplace_back(e, edges_.at(e).endpoint);
  }
  int written = 0;
  std::vector<EdgeId> failed;
  for (const auto& [edge, endpoint] : holders) {
    Reply r = transport_.call(endpoint, make("overwrite_replica", {{"key", key},
                                                                   {"md5", md5},
                                                                   {"props", m.args.value("props", json::array())},
                                                                   {"reliability", m.args.value("reliability", 0.0)}},
                                             m.payload));
    if (!r.ok) {
      failed.push_back(edge);
      continue;
    }
    ++written;
    std::lock_guard lock(mu_);
    auto& e = edges_.at(edge);
    e.stat.free_storage = r.result.value("free", e.stat.free_storage);
  }
  {
    std::lock_guard lock(mu_);
    if (auto it = blocks_.find(key); it != blocks_.end()) {
      it->second.md5 = md5;
      it->second.size = m.payload->size();
    }
    refresh_summary_locked();
  }
  if (!failed.empty()) {
    return Reply::failure(Errc::partial_update, std::to_string(failed.size()) + " edge(s) failed");
  }
  return Reply::success({{"written", written}});
}

Reply FogNode::block_replicas(Args a) {
  const auto key = arg<BlockKey>(a, "key");
  std::lock_guard lock(mu_);
  json out = json::array();
  for (const auto& [e, r] : replicas_here(key)) out.push_back({{"edge", e}, {"reliability", r}});
  return Reply::success({{"replicas", out}, {"fog", config_.id}});
}

// ---------------------------------------------------------------------------
// put / get / update

Reply FogNode::put_block(const Message& m) {
  if (!m.payload) return Reply::failure(Errc::invalid_argument, "put needs a payload");
  const auto stream = arg<std::string>(m.args, "stream");
  const auto block = arg<std::string>(m.args, "block");
  if (block.empty()) return Reply::failure(Errc::invalid_argument, "block id must not be empty");
  if (m.payload->size() > config_.max_block_bytes) {
    return Reply::failure(Errc::invalid_argument, "block exceeds the size cap");
  }
  const auto props = arg_or<std::vector<Property>>(m.args, "props", {});
  for (const auto& p : props) {
    if (p.name == kBlockIdProperty || p.name == kStreamIdProperty) {
      return Reply::failure(Errc::invalid_argument, p.name + " is reserved");
    }
  }
  const auto client = arg_or<std::string>(m.args, "client", "");
  const auto session_key = arg_or<std::string>(m.args, "session_key", "");
  const BlockKey key{stream, block};
  const std::string md5 = md5_of(*m.payload);

  json owner_args = {{"stream", stream}, {"block", block}, {"client", client}};
  if (!session_key.empty()) owner_args["session_key"] = session_key;
  const auto hint = opt_fog(m.args, "owner");
  const Reply begun = forward_to_owner(stream, make("begin_put", owner_args), hint);
  if (!begun.ok) return begun;
  const double target = begun.result.at("reliability").get<double>();
  const FogId owner = begun.result.at("owner").get<FogId>();

  ReplicaRequirement req;
  req.block_size = m.payload->size();
  req.target_reliability = target;
  req.min_replicas = arg_or<int>(m.args, "min_replicas", config_.min_replicas);
  req.max_replicas = arg_or<int>(m.args, "max_replicas", config_.max_replicas);
  std::optional<EdgeId> client_edge;
  if (m.args.contains("client_edge") && !m.args["client_edge"].is_null()) {
    client_edge = m.args["client_edge"].get<EdgeId>();
  }
  GlobalMatrix g;
  SummaryMap summaries;
  {
    std::lock_guard lock(mu_);
    if (summaries_.empty()) return Reply::failure(Errc::put_failed, "no partition summaries known");
    g = matrix_locked();
    for (const auto& [f, gs] : summaries_) summaries.emplace(f, gs.second);
    if (client_edge) {
      auto it = edges_.find(*client_edge);
      if (it != edges_.end() && it->second.alive && it->second.stat.free_storage >= req.block_size) {
        req.client_fog = config_.id;
        req.client_is_edge = true;
        req.client_edge_reliability = it->second.stat.reliability;
      }
    }
  }
  const std::uint64_t seed =
      splitmix(config_.seed ^ fnv1a(block, fnv1a(stream)) ^ (static_cast<std::uint64_t>(config_.id.value) << 32));

  struct Placed {
    ReplicaChoice choice;
    EdgeId edge;
    double reliability = 0;
  };
  std::vector<Placed> placed;
  PlacementContext ctx;
  ReplicaPlan plan;
  std::vector<std::string> warnings;
  for (int round = 0; round < 4; ++round) {
    try {
      plan = choose_replica_fogs(g, summaries, req, seed + static_cast<std::uint64_t>(round), ctx);
    } catch (const Error& e) {
      if (e.code() == Errc::insufficient_capacity) return Reply::failure(Errc::put_failed, e.detail());
      throw;
    }
    std::vector<ReplicaChoice> todo(plan.choices.begin() + static_cast<std::ptrdiff_t>(ctx.placed.size()),
                                    plan.choices.end());
    if (todo.empty()) break;
    // Replicas bound for the same fog go in one task so they land on distinct edges.
    std::map<FogId, std::vector<ReplicaChoice>> by_fog;
    for (const auto& c : todo) by_fog[c.fog].push_back(c);
    std::vector<std::pair<FogId, std::vector<ReplicaChoice>>> groups(by_fog.begin(), by_fog.end());
    std::vector<std::vector<std::optional<Placed>>> results(groups.size());
    std::vector<std::function<void()>> tasks;
    for (std::size_t i = 0; i < groups.size(); ++i) {
      tasks.push_back([&, i] {
        for (const auto& c : groups[i].second) {
          json args = {{"key", key},       {"props", props},        {"md5", md5},
                       {"reliability", target}, {"hint", c.hint}, {"min_reliability", c.contribution}};
          if (c.local_pinned) args["pinned_edge"] = *client_edge;
          const Reply r = call_fog(c.fog, make("store_replica", args, m.payload));
          if (r.ok) {
            results[i].push_back(Placed{c, r.result.at("edge").get<EdgeId>(),
                                        r.result.at("reliability").get<double>()});
          } else {
            results[i].push_back(std::nullopt);
          }
        }
      });
    }
    executor_.run_all(std::move(tasks));
    bool failed = false;
    for (std::size_t i = 0; i < groups.size(); ++i) {
      for (std::size_t j = 0; j < results[i].size(); ++j) {
        if (results[i][j]) {
          placed.push_back(*results[i][j]);
          ctx.placed.push_back(results[i][j]->choice);
        } else {
          failed = true;
          ctx.exclude.insert(groups[i].first);
          if (groups[i].second[j].local_pinned) req.client_is_edge = false;
        }
      }
    }
    if (!failed) break;
    warnings.push_back("re-planned after a target fog refused a replica");
  }
  std::vector<double> actual;
  for (const auto& p : placed) actual.push_back(p.reliability);
  if (static_cast<int>(placed.size()) < req.min_replicas) {
    return Reply::failure(Errc::put_failed, "placed " + std::to_string(placed.size()) + " of " +
                                                std::to_string(req.min_replicas) + " replicas");
  }
  std::vector<double> contributions;
  bool reuse = false;
  std::set<FogId> fogs_used;
  for (const auto& p : placed) {
    contributions.push_back(p.choice.contribution);
    if (!fogs_used.insert(p.choice.fog).second) reuse = true;
  }
  const bool unmet = !reliability_satisfied(target, contributions);
  if (unmet) warnings.push_back("reliability target not met within max_replicas");

  owner_args["md5"] = md5;
  const Reply committed = call_fog(owner, make("commit_put", owner_args));
  if (!committed.ok) {
    // The replicas are on disk but the registry never heard of them.
    return Reply::failure(Errc::partial_update,
                          std::to_string(placed.size()) + " replica(s) stored but commit failed: " +
                              committed.message);
  }

  json replicas = json::array();
  for (const auto& p : placed) {
    replicas.push_back({{"fog", p.choice.fog},
                        {"edge", p.edge},
                        {"reliability", p.reliability},
                        {"contribution", p.choice.contribution},
                        {"hint", p.choice.hint},
                        {"local", p.choice.local_pinned}});
  }
  return Reply::success({{"owner", owner},
                         {"replicas", replicas},
                         {"q", placed.size()},
                         {"bound", combined_reliability(contributions)},
                         {"reliability", target},
                         {"reliability_unmet", unmet},
                         {"fog_reuse", reuse},
                         {"md5", md5},
                         {"warnings", warnings}});
}

Reply FogNode::get_block(const Message& m) {
  const auto stream = arg<std::string>(m.args, "stream");
  const auto block = arg<std::string>(m.args, "block");
  const BlockKey key{stream, block};
  const Reply sums = forward_to_owner(stream, make("block_md5", {{"stream", stream}, {"block", block}}),
                                      opt_fog(m.args, "owner"));
  if (!sums.ok) return sums;
  std::vector<std::string> accept = {sums.result.at("md5").get<std::string>()};
  if (sums.result.contains("pending")) accept.push_back(sums.result["pending"].get<std::string>());
  const json fetch_args = {{"key", key}, {"accept", accept}};

  bool have_local;
  {
    std::lock_guard lock(mu_);
    have_local = !replicas_here(key).empty();
  }
  Reply last = Reply::failure(Errc::unavailable, "no replica of " + block + " could be read");
  if (have_local) {
    Reply r = fetch_replica(make("fetch_replica", fetch_args));
    if (r.ok) {
      r.result["local"] = true;
      r.result["hops"] = 0;
      r.result["fallback"] = false;
      return r;
    }
    last = r;
  }
  const SearchResult found = search(block_query(key), false, false);
  std::set<FogId> candidates;
  if (auto it = found.hits.find(key); it != found.hits.end()) candidates = it->second;
  candidates.erase(config_.id);
  bool fallback = false;
  if (candidates.empty()) {
    // Filters lag behind recent puts; ask every fog directly.
    candidates = broadcast_locate(block_query(key), false);
    candidates.erase(config_.id);
    fallback = true;
  }
  for (FogId f : candidates) {
    Reply r = call_fog(f, make("fetch_replica", fetch_args));
    if (r.ok) {
      r.result["local"] = false;
      r.result["hops"] = found.hops;
      r.result["fallback"] = fallback;
      return r;
    }
    last = r;
  }
  if (last.code == Errc::not_found) last.code = Errc::unavailable;
  return last;
}

Reply FogNode::update_block(const Message& m) {
  if (!m.payload) return Reply::failure(Errc::invalid_argument, "update needs a payload");
  const auto stream = arg<std::string>(m.args, "stream");
  const auto block = arg<std::string>(m.args, "block");
  const BlockKey key{stream, block};
  const std::string md5 = md5_of(*m.payload);
  json owner_args = {{"stream", stream}, {"block", block}, {"md5", md5},
                     {"client", arg_or<std::string>(m.args, "client", "")}};
  if (auto k = arg_or<std::string>(m.args, "session_key", ""); !k.empty()) owner_args["session_key"] = k;
  const auto hint = opt_fog(m.args, "owner");
  const Reply begun = forward_to_owner(stream, make("begin_update", owner_args), hint);
  if (!begun.ok) return begun;

  std::set<FogId> holders = broadcast_locate(block_query(key), false);
  std::vector<FogId> list(holders.begin(), holders.end());
  std::vector<Reply> replies(list.size());
  std::vector<std::function<void()>> tasks;
  for (std::size_t i = 0; i < list.size(); ++i) {
    tasks.push_back([&, i] {
      replies[i] = call_fog(list[i], make("overwrite_replica",
                                          {{"key", key}, {"md5", md5},
                                           {"reliability", begun.result.value("reliability", 0.0)}},
                                          m.payload));
    });
  }
  executor_.run_all(std::move(tasks));
  std::vector<FogId> failed;
  for (std::size_t i = 0; i < list.size(); ++i) {
    if (!replies[i].ok) failed.push_back(list[i]);
  }
  const Reply committed = forward_to_owner(stream, make("commit_update", owner_args), hint);
  if (!committed.ok) return committed;
  if (!failed.empty()) {
    std::string msg = "replicas not updated on fogs";
    for (FogId f : failed) msg += " " + std::to_string(f.value);
    return Reply::failure(Errc::partial_update, msg);
  }
  return Reply::success({{"md5", md5}, {"fogs", list}});
}

// ---------------------------------------------------------------------------
// Heartbeats, gossip, failure detection, recovery

Reply FogNode::edge_heartbeat(Args a) {
  const HeartbeatPayload hb = heartbeat_from_json(a);
  const auto endpoint = arg<std::string>(a, "endpoint");
  std::lock_guard lock(mu_);
  auto& e = edges_[hb.stat.edge];
  e.stat = hb.stat;
  e.endpoint = endpoint;
  e.capacity = hb.capacity;
  e.last_heartbeat = clock_.now();
  e.alive = true;
  if (hb.full) index_.remove_edge(hb.stat.edge);
  for (const auto& t : hb.tuples) {
    index_replica(hb.stat.edge, BlockRecord{t.key, t.props, t.size, t.md5, t.stream_reliability});
  }
  refresh_summary_locked();
  return Reply::success({{"acked_seq", hb.seq}});
}

namespace {

json summaries_json(const std::map<FogId, std::pair<std::uint64_t, PartitionSummary>>& all) {
  json out = json::array();
  for (const auto& [f, gs] : all) out.push_back({{"generation", gs.first}, {"summary", gs.second}});
  return out;
}

}  // namespace

Reply FogNode::gossip(Args a) {
  const auto from = arg<FogId>(a, "from");
  const auto kind = arg<std::string>(a, "kind");
  std::lock_guard lock(mu_);
  for (const auto& item : a.value("summaries", json::array())) {
    const auto gen = item.at("generation").get<std::uint64_t>();
    auto s = item.at("summary").get<PartitionSummary>();
    if (s.fog == config_.id) continue;
    auto it = summaries_.find(s.fog);
    if (it == summaries_.end() || it->second.first < gen) {
      summaries_[s.fog] = {gen, s};
      matrix_cache_.reset();
    }
  }
  if (kind == "neighbor") {
    filters_.neighbor[from] = filters_from_json(a.at("filters"));
  } else if (kind == "buddy") {
    filters_.buddy[from] = filters_from_json(a.at("filters"));
  } else if (kind == "down") {
    for (const auto& item : a.at("buddy_filters")) {
      const auto f = item.at("fog").get<FogId>();
      if (f != config_.id) filters_.buddy[f] = filters_from_json(item.at("filters"));
    }
  } else {
    return Reply::failure(Errc::protocol, "unknown gossip kind " + kind);
  }
  return Reply::success();
}

void FogNode::gossip_to_buddy() {
  if (is_buddy()) return;
  json args;
  {
    std::lock_guard lock(mu_);
    std::map<FogId, std::pair<std::uint64_t, PartitionSummary>> own;
    if (auto it = summaries_.find(config_.id); it != summaries_.end()) own.insert(*it);
    args = {{"from", config_.id}, {"kind", "neighbor"}, {"summaries", summaries_json(own)},
            {"filters", filters_to_json(filters_.local)}};
  }
  call_fog(config_.topology.fog(config_.id).pool_buddy, make("gossip", args));
}

void FogNode::gossip_to_buddies() {
  if (!is_buddy()) return;
  json args;
  {
    std::lock_guard lock(mu_);
    args = {{"from", config_.id}, {"kind", "buddy"}, {"summaries", summaries_json(summaries_)},
            {"filters", filters_to_json(filters_.recursive())}};
  }
  std::vector<std::function<void()>> tasks;
  for (FogId b : buddies_of(config_.topology, config_.id)) {
    tasks.push_back([this, b, &args] { call_fog(b, make("gossip", args)); });
  }
  executor_.run_all(std::move(tasks));
}

void FogNode::gossip_to_neighbors() {
  if (!is_buddy()) return;
  json args;
  {
    std::lock_guard lock(mu_);
    json bf = json::array();
    bf.push_back({{"fog", config_.id}, {"filters", filters_to_json(filters_.recursive())}});
    for (const auto& [f, fm] : filters_.buddy) bf.push_back({{"fog", f}, {"filters", filters_to_json(fm)}});
    args = {{"from", config_.id}, {"kind", "down"}, {"summaries", summaries_json(summaries_)},
            {"buddy_filters", bf}};
  }
  std::vector<std::function<void()>> tasks;
  for (FogId n : neighbors_of(config_.topology, config_.id)) {
    tasks.push_back([this, n, &args] { call_fog(n, make("gossip", args)); });
  }
  executor_.run_all(std::move(tasks));
}

std::vector<EdgeId> FogNode::detect_failures() {
  struct Lost {
    EdgeId edge;
    double reliability;
    std::vector<std::pair<BlockKey, BlockRecord>> blocks;
  };
  std::vector<Lost> lost;
  const double now = clock_.now();
  {
    std::lock_guard lock(mu_);
    const double limit = config_.miss_threshold * config_.heartbeat_interval;
    for (auto& [id, e] : edges_) {
      if (!e.alive || now - e.last_heartbeat <= limit + 1e-9) continue;
      e.alive = false;
      Lost l{id, e.stat.reliability, {}};
      for (const auto& key : index_.blocks_on(id)) {
        auto it = blocks_.find(key);
        if (it != blocks_.end()) l.blocks.emplace_back(key, it->second);
      }
      index_.remove_edge(id);
      lost.push_back(std::move(l));
    }
    if (!lost.empty()) refresh_summary_locked();
  }
  std::vector<EdgeId> out;
  for (auto& l : lost) {
    RecoveryEvent ev{l.edge, l.reliability, now, {}};
    ev.blocks.resize(l.blocks.size());
    std::vector<std::function<void()>> tasks;
    for (std::size_t i = 0; i < l.blocks.size(); ++i) {
      tasks.push_back([&, i] {
        ev.blocks[i] = recover_block(l.blocks[i].first, l.blocks[i].second, l.reliability);
      });
    }
    executor_.run_all(std::move(tasks));
    std::lock_guard lock(mu_);
    recoveries_.push_back(std::move(ev));
    out.push_back(l.edge);
  }
  return out;
}

RecoveredBlock FogNode::recover_block(const BlockKey& key, const BlockRecord& rec, double failed_r) {
  RecoveredBlock out{key, {}, false, {}};
  try {
    double target = rec.stream_reliability;
    if (!(target > 0.0 && target < 1.0)) {
      const Reply meta = forward_to_owner(key.stream, make("stream_meta", {{"stream", key.stream}}), std::nullopt);
      if (!meta.ok) throw Error(meta.code, meta.message);
      target = meta.result.at("reliability").get<double>();
    }
    std::set<FogId> holders = broadcast_locate(block_query(key), false);
    std::vector<double> survivors;
    std::optional<FogId> source;
    for (FogId f : holders) {
      const Reply r = call_fog(f, make("block_replicas", {{"key", key}}));
      if (!r.ok) continue;
      for (const auto& rep : r.result.at("replicas")) {
        survivors.push_back(rep.at("reliability").get<double>());
        if (!source) source = f;
      }
    }
    if (!source) throw Error(Errc::unavailable, "no surviving replica (data loss)");
    const Reply data = call_fog(*source, make("fetch_replica", {{"key", key}}));
    if (!data.ok || !data.payload) throw Error(data.code, "cannot read a surviving replica: " + data.message);

    GlobalMatrix g;
    SummaryMap summaries;
    {
      std::lock_guard lock(mu_);
      g = matrix_locked();
      for (const auto& [f, gs] : summaries_) summaries.emplace(f, gs.second);
    }
    std::set<FogId> exclude = holders;
    std::set<FogId> refused;
    const std::size_t cap = std::max<std::size_t>(static_cast<std::size_t>(config_.max_replicas),
                                                  survivors.size() + 1);
    for (int attempt = 0; attempt < 2 * static_cast<int>(config_.topology.size()) + 2; ++attempt) {
      const bool satisfied = reliability_satisfied(target, survivors);
      if (!out.targets.empty() && (satisfied || survivors.size() >= cap)) break;
      const double need = required_reliability(target, survivors);
      RecoveryChoice choice;
      try {
        choice = choose_recovery_fog(g, summaries, failed_r, rec.size, exclude, need);
      } catch (const Error& e) {
        if (e.code() != Errc::insufficient_capacity || exclude == refused) throw;
        // Every other fog is full or refused: reuse fogs that already hold a
        // replica, on a different edge.
        exclude = refused;
        continue;
      }
      const Reply stored = call_fog(
          choice.fog, make("store_replica",
                           {{"key", key}, {"props", rec.props}, {"md5", data.result.value("md5", rec.md5)},
                            {"reliability", target}, {"hint", choice.hint},
                            {"min_reliability", choice.contribution}},
                           data.payload));
      if (!stored.ok) {
        refused.insert(choice.fog);
        exclude.insert(choice.fog);
        continue;
      }
      survivors.push_back(stored.result.at("reliability").get<double>());
      out.targets.push_back(choice.fog);
      exclude.insert(choice.fog);
    }
    out.recovered = !out.targets.empty();
    if (!out.recovered) out.error = "no fog accepted a replacement replica (recovery stalled)";
  } catch (const Error& e) {
    out.error = e.what();
  }
  return out;
}

GlobalMatrix FogNode::matrix_locked() const {
  if (!matrix_cache_) {
    std::vector<PartitionSummary> all;
    for (const auto& [f, gs] : summaries_) all.push_back(gs.second);
    if (all.empty()) throw Error(Errc::insufficient_capacity, "no partition summaries known");
    matrix_cache_ = build_global_matrix(all, config_.buckets);
  }
  return *matrix_cache_;
}

// ---------------------------------------------------------------------------
// Snapshots

std::map<EdgeId, EdgeEntry> FogNode::edges() const {
  std::lock_guard lock(mu_);
  return edges_;
}

std::set<IndexedBlock> FogNode::index_entries() const {
  std::lock_guard lock(mu_);
  return index_.entries();
}

std::optional<BlockRecord> FogNode::block_record(const BlockKey& key) const {
  std::lock_guard lock(mu_);
  auto it = blocks_.find(key);
  if (it == blocks_.end()) return std::nullopt;
  return it->second;
}

std::vector<StreamRecord> FogNode::owned_streams() const {
  std::lock_guard lock(mu_);
  std::vector<StreamRecord> out;
  for (const auto& [id, s] : streams_) out.push_back(s);
  return out;
}

std::optional<StreamRecord> FogNode::stream_record(const StreamId& stream) const {
  std::lock_guard lock(mu_);
  auto it = streams_.find(stream);
  if (it == streams_.end()) return std::nullopt;
  return it->second;
}

std::vector<AuditEntry> FogNode::audit_log() const {
  std::lock_guard lock(mu_);
  return audit_;
}

std::vector<RecoveryEvent> FogNode::recoveries() const {
  std::lock_guard lock(mu_);
  return recoveries_;
}

std::optional<PartitionSummary> FogNode::own_summary() const {
  std::lock_guard lock(mu_);
  auto it = summaries_.find(config_.id);
  if (it == summaries_.end()) return std::nullopt;
  return it->second.second;
}

std::optional<GlobalMatrix> FogNode::global_matrix() const {
  std::lock_guard lock(mu_);
  if (summaries_.empty()) return std::nullopt;
  return matrix_locked();
}

std::size_t FogNode::known_summaries() const {
  std::lock_guard lock(mu_);
  return summaries_.size();
}

}  // namespace elfstore
