// SPDX-License-Identifier: Apache-2.0

#include "elfstore/client.hpp"

#include "elfstore/codec.hpp"

namespace elfstore {

FogClient::FogClient(Transport& transport, std::string fog_endpoint, std::string client_id,
                     std::optional<EdgeId> edge)
    : transport_(transport), fog_(std::move(fog_endpoint)), client_id_(std::move(client_id)), edge_(edge) {}

json FogClient::call(const std::string& op, json args, std::optional<Payload> payload,
                     Payload* payload_out) {
  Message m;
  m.op = op;
  m.args = std::move(args);
  m.payload = std::move(payload);
  Reply r = transport_.call(fog_, m);
  r.check();
  if (payload_out != nullptr && r.payload) *payload_out = *r.payload;
  return std::move(r.result);
}

FogId FogClient::create_stream(const StreamId& stream, const std::vector<StreamProperty>& props,
                               double reliability) {
  const json r = call("create_stream", {{"stream", stream}, {"props", props}, {"reliability", reliability}});
  const auto owner = r.at("owner").get<FogId>();
  owners_[stream] = owner;
  return owner;
}

namespace {

LeaseGrant grant_from(const json& r, std::string key) {
  return {std::move(key), r.at("duration").get<double>(), r.value("expiry", 0.0)};
}

}  // namespace

LeaseGrant FogClient::open_stream(const StreamId& stream, std::optional<double> duration) {
  json args = {{"stream", stream}, {"client", client_id_}};
  if (duration) args["duration"] = *duration;
  const json r = call("open_stream", args);
  const auto key = r.at("session_key").get<std::string>();
  leases_[stream] = key;
  return grant_from(r, key);
}

LeaseGrant FogClient::renew_lease(const StreamId& stream) {
  auto it = leases_.find(stream);
  if (it == leases_.end()) throw Error(Errc::lease_lost, "no lease held on " + stream);
  try {
    return grant_from(call("renew_lease", {{"stream", stream}, {"client", client_id_}, {"session_key", it->second}}),
                      it->second);
  } catch (const Error& e) {
    if (e.code() == Errc::lease_lost) leases_.erase(stream);
    throw;
  }
}

void FogClient::close_stream(const StreamId& stream) {
  auto it = leases_.find(stream);
  if (it == leases_.end()) return;
  const std::string key = it->second;
  leases_.erase(it);
  call("close_stream", {{"stream", stream}, {"client", client_id_}, {"session_key", key}});
}

PutResult FogClient::put_block(const StreamId& stream, const BlockId& block,
                               const std::vector<Property>& props, Payload data,
                               std::optional<int> min_replicas, std::optional<int> max_replicas) {
  json args = {{"stream", stream}, {"block", block}, {"props", props}, {"client", client_id_}};
  if (auto it = leases_.find(stream); it != leases_.end()) args["session_key"] = it->second;
  if (auto it = owners_.find(stream); it != owners_.end()) args["owner"] = it->second;
  if (edge_) args["client_edge"] = *edge_;
  if (min_replicas) args["min_replicas"] = *min_replicas;
  if (max_replicas) args["max_replicas"] = *max_replicas;
  const json r = call("put_block", args, std::move(data));
  PutResult out;
  out.owner = r.at("owner").get<FogId>();
  owners_[stream] = out.owner;
  for (const auto& x : r.at("replicas")) {
    out.replicas.push_back({x.at("fog").get<FogId>(), x.at("edge").get<EdgeId>(),
                            x.at("reliability").get<double>(), x.at("contribution").get<double>(),
                            x.at("hint").get<Quadrant>(), x.value("local", false)});
  }
  out.bound = r.at("bound").get<double>();
  out.reliability_unmet = r.at("reliability_unmet").get<bool>();
  out.fog_reuse = r.at("fog_reuse").get<bool>();
  out.md5 = r.at("md5").get<std::string>();
  out.warnings = r.value("warnings", std::vector<std::string>{});
  return out;
}

void FogClient::update_block(const StreamId& stream, const BlockId& block, Payload data) {
  json args = {{"stream", stream}, {"block", block}, {"client", client_id_}};
  if (auto it = leases_.find(stream); it != leases_.end()) args["session_key"] = it->second;
  if (auto it = owners_.find(stream); it != owners_.end()) args["owner"] = it->second;
  call("update_block", args, std::move(data));
}

GetResult FogClient::get_block(const StreamId& stream, const BlockId& block) {
  json args = {{"stream", stream}, {"block", block}};
  if (auto it = owners_.find(stream); it != owners_.end()) args["owner"] = it->second;
  GetResult out;
  const json r = call("get_block", args, std::nullopt, &out.data);
  out.md5 = r.value("md5", "");
  out.props = r.value("props", std::vector<Property>{});
  out.local = r.value("local", false);
  out.served_by = r.at("fog").get<FogId>();
  out.edge = r.at("edge").get<EdgeId>();
  out.hops = r.value("hops", 0);
  out.fallback = r.value("fallback", false);
  return out;
}

FindResult FogClient::find_block(const Query& query, bool exhaustive) {
  const json r = call("find_block", {{"query", query_to_json(query)}, {"exhaustive", exhaustive}});
  FindResult out;
  out.hops = r.value("hops", 0);
  for (const auto& m : r.at("matches")) {
    out.matches.push_back({{m.at("stream").get<std::string>(), m.at("block").get<std::string>()},
                           m.at("fogs").get<std::vector<FogId>>()});
  }
  return out;
}

std::vector<StreamId> FogClient::find_stream(const Query& query, bool exhaustive) {
  const json r = call("find_stream", {{"query", query_to_json(query)}, {"exhaustive", exhaustive}});
  return r.at("streams").get<std::vector<StreamId>>();
}

StreamMeta FogClient::get_stream_meta(const StreamId& stream, bool latest) {
  json args = {{"stream", stream}, {"latest", latest}};
  if (auto it = owners_.find(stream); it != owners_.end()) args["owner"] = it->second;
  const json r = call("get_stream_meta", args);
  StreamMeta out;
  out.stream = r.at("stream").get<std::string>();
  out.owner = r.at("owner").get<FogId>();
  owners_[stream] = out.owner;
  out.reliability = r.at("reliability").get<double>();
  for (const auto& [k, v] : r.at("static").items()) out.static_props[k] = v.get<PropertyValue>();
  for (const auto& [k, v] : r.at("dynamic").items()) out.dynamic_props[k] = v.get<PropertyValue>();
  out.version = r.at("version").get<std::uint64_t>();
  out.block_count = r.at("block_count").get<std::uint64_t>();
  out.cached = r.value("cached", false);
  return out;
}

std::uint64_t FogClient::update_stream_meta(const StreamId& stream,
                                            const std::map<std::string, PropertyValue>& props,
                                            std::uint64_t version) {
  json p = json::object();
  for (const auto& [k, v] : props) p[k] = v;
  json args = {{"stream", stream}, {"props", p}, {"version", version}};
  if (auto it = owners_.find(stream); it != owners_.end()) args["owner"] = it->second;
  return call("update_stream_meta", args).at("version").get<std::uint64_t>();
}

std::vector<std::pair<BlockId, std::string>> FogClient::list_blocks(const StreamId& stream) {
  json args = {{"stream", stream}};
  if (auto it = owners_.find(stream); it != owners_.end()) args["owner"] = it->second;
  const json r = call("list_blocks", args);
  std::vector<std::pair<BlockId, std::string>> out;
  for (const auto& b : r.at("blocks")) out.emplace_back(b.at(0).get<std::string>(), b.at(1).get<std::string>());
  return out;
}

}  // namespace elfstore
