// SPDX-License-Identifier: Apache-2.0
//
// JSON forms of cluster and workload specs. Field names follow the CLI flags
// with dashes turned into underscores.

#include <sstream>

#include "elfstore/codec.hpp"
#include "elfstore/harness.hpp"

namespace elfstore {

namespace {

template <class T>
json weighted_to_json(const std::vector<Weighted<T>>& v) {
  json out = json::array();
  for (const auto& w : v) out.push_back({{"value", w.value}, {"p", w.p}});
  return out;
}

template <class T>
std::vector<Weighted<T>> weighted_from_json(const json& j) {
  std::vector<Weighted<T>> out;
  for (const auto& item : j) {
    if (item.is_number()) {
      out.push_back({item.get<T>(), 0.0});
    } else {
      out.push_back({item.at("value").get<T>(), item.value("p", 0.0)});
    }
  }
  // Bare values share the probability mass equally.
  const bool bare = std::all_of(out.begin(), out.end(), [](const auto& w) { return w.p == 0.0; });
  if (bare && !out.empty()) {
    for (auto& w : out) w.p = 1.0 / static_cast<double>(out.size());
  }
  return out;
}

template <class T>
void read(const json& j, const char* name, T& into) {
  if (auto it = j.find(name); it != j.end() && !it->is_null()) {
    try {
      into = it->get<T>();
    } catch (const json::exception& e) {
      throw Error(Errc::invalid_config, std::string("bad field ") + name + ": " + e.what());
    }
  }
}

}  // namespace

json to_json(const ClusterSpec& s) {
  json j = {{"fogs", s.fog_count},
            {"edges_per_fog", s.edges_per_fog},
            {"buddies", s.buddy_count()},
            {"rel_mean", s.rel_mean},
            {"rel_std", s.rel_std},
            {"capacity", s.edge_capacity},
            {"capacity_jitter", s.capacity_jitter},
            {"heartbeat_interval", s.heartbeat_interval},
            {"miss_threshold", s.miss_threshold},
            {"lease_duration", s.lease_duration},
            {"buckets", s.buckets},
            {"workers", s.workers},
            {"seed", s.seed},
            {"transport", s.transport == TransportKind::simulated ? "simulated" : "socket"},
            {"per_hop_seconds", s.cost.per_hop_seconds},
            {"bytes_per_second", s.cost.bytes_per_second}};
  return j;
}

ClusterSpec cluster_spec_from_json(const json& j) {
  if (!j.is_object()) throw Error(Errc::invalid_config, "cluster spec must be a JSON object");
  ClusterSpec s;
  read(j, "fogs", s.fog_count);
  read(j, "edges_per_fog", s.edges_per_fog);
  if (j.contains("buddies") && !j["buddies"].is_null()) s.buddies = j["buddies"].get<int>();
  read(j, "rel_mean", s.rel_mean);
  read(j, "rel_std", s.rel_std);
  read(j, "capacity", s.edge_capacity);
  read(j, "capacity_jitter", s.capacity_jitter);
  read(j, "heartbeat_interval", s.heartbeat_interval);
  read(j, "miss_threshold", s.miss_threshold);
  read(j, "lease_duration", s.lease_duration);
  read(j, "buckets", s.buckets);
  read(j, "workers", s.workers);
  read(j, "seed", s.seed);
  read(j, "per_hop_seconds", s.cost.per_hop_seconds);
  read(j, "bytes_per_second", s.cost.bytes_per_second);
  std::string transport = "simulated";
  read(j, "transport", transport);
  if (transport == "simulated") {
    s.transport = TransportKind::simulated;
  } else if (transport == "socket") {
    s.transport = TransportKind::socket;
  } else {
    throw Error(Errc::invalid_config, "transport must be simulated or socket");
  }
  s.validate();
  return s;
}

json to_json(const WorkloadSpec& w) {
  json j = {{"clients", w.clients},
            {"blocks", w.blocks_per_client},
            {"ops", w.ops_per_client},
            {"mix", {{"put", w.mix.put}, {"get", w.mix.get}, {"find", w.mix.find}, {"meta_update", w.mix.meta_update}}},
            {"sizes", weighted_to_json(w.block_sizes)},
            {"reliabilities", weighted_to_json(w.reliabilities)},
            {"lease", w.leasing},
            {"lease_batch", w.lease_batch},
            {"shared_stream", w.shared_stream},
            {"meta_streams", w.meta_streams},
            {"min_rep", w.min_replicas},
            {"max_rep", w.max_replicas}};
  if (w.seed) j["seed"] = *w.seed;
  return j;
}

WorkloadSpec workload_spec_from_json(const json& j) {
  if (!j.is_object()) throw Error(Errc::invalid_config, "workload spec must be a JSON object");
  WorkloadSpec w;
  read(j, "clients", w.clients);
  read(j, "blocks", w.blocks_per_client);
  read(j, "ops", w.ops_per_client);
  if (auto it = j.find("mix"); it != j.end()) {
    if (it->is_string()) {
      w.mix = parse_mix(it->get<std::string>());
    } else {
      OpMix m{0, 0, 0, 0};
      read(*it, "put", m.put);
      read(*it, "get", m.get);
      read(*it, "find", m.find);
      read(*it, "meta_update", m.meta_update);
      w.mix = m;
    }
  }
  if (j.contains("size")) w.block_sizes = {{j["size"].get<std::uint64_t>(), 1.0}};
  if (j.contains("sizes")) w.block_sizes = weighted_from_json<std::uint64_t>(j["sizes"]);
  if (j.contains("reliability")) w.reliabilities = {{j["reliability"].get<double>(), 1.0}};
  if (j.contains("reliabilities")) w.reliabilities = weighted_from_json<double>(j["reliabilities"]);
  read(j, "lease", w.leasing);
  read(j, "lease_batch", w.lease_batch);
  read(j, "shared_stream", w.shared_stream);
  read(j, "meta_streams", w.meta_streams);
  read(j, "min_rep", w.min_replicas);
  read(j, "max_rep", w.max_replicas);
  if (j.contains("seed")) w.seed = j["seed"].get<std::uint64_t>();
  w.validate();
  return w;
}

OpMix parse_mix(const std::string& s) {
  OpMix m{0, 0, 0, 0};
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) {
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw Error(Errc::invalid_config, "mix entries look like get=0.5, got '" + item + "'");
    const std::string name = item.substr(0, eq);
    double v = 0;
    try {
      v = std::stod(item.substr(eq + 1));
    } catch (const std::exception&) {
      throw Error(Errc::invalid_config, "bad weight in '" + item + "'");
    }
    if (name == "put") {
      m.put = v;
    } else if (name == "get") {
      m.get = v;
    } else if (name == "find") {
      m.find = v;
    } else if (name == "meta" || name == "meta_update") {
      m.meta_update = v;
    } else {
      throw Error(Errc::invalid_config, "unknown op '" + name + "' in mix");
    }
  }
  return m;
}

}  // namespace elfstore
