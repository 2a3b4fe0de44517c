// SPDX-License-Identifier: Apache-2.0

#include "elfstore/codec.hpp"

#include "elfstore/crypto.hpp"

namespace elfstore {

void to_json(json& j, const FogId& id) { j = id.value; }
void from_json(const json& j, FogId& id) { id = FogId(j.get<std::int32_t>()); }
void to_json(json& j, const EdgeId& id) { j = id.value; }
void from_json(const json& j, EdgeId& id) { id = EdgeId(j.get<std::int32_t>()); }

void to_json(json& j, const Quadrant& q) { j = std::string(to_string(q)); }
void from_json(const json& j, Quadrant& q) { q = quadrant_from_string(j.get<std::string>()); }

void to_json(json& j, const PropertyValue& v) {
  if (auto d = v.as_number()) {
    j = *d;
  } else {
    j = *v.as_string();
  }
}

void from_json(const json& j, PropertyValue& v) {
  if (j.is_number()) {
    v = PropertyValue(j.get<double>());
  } else if (j.is_string()) {
    v = PropertyValue(j.get<std::string>());
  } else {
    throw Error(Errc::invalid_argument, "property values must be strings or numbers");
  }
}

void to_json(json& j, const Property& p) { j = {{"name", p.name}, {"value", p.value}}; }
void from_json(const json& j, Property& p) {
  p.name = j.at("name").get<std::string>();
  p.value = j.at("value").get<PropertyValue>();
}

void to_json(json& j, const StreamProperty& p) {
  j = {{"name", p.name}, {"value", p.value}, {"static", p.is_static}};
}
void from_json(const json& j, StreamProperty& p) {
  p.name = j.at("name").get<std::string>();
  p.value = j.at("value").get<PropertyValue>();
  p.is_static = j.value("static", true);
}

void to_json(json& j, const BlockKey& k) { j = {{"stream", k.stream}, {"block", k.block}}; }
void from_json(const json& j, BlockKey& k) {
  k.stream = j.at("stream").get<std::string>();
  k.block = j.at("block").get<std::string>();
}

void to_json(json& j, const EdgeStat& s) {
  j = {{"edge", s.edge}, {"reliability", s.reliability}, {"free", s.free_storage}};
}
void from_json(const json& j, EdgeStat& s) {
  s.edge = j.at("edge").get<EdgeId>();
  s.reliability = j.at("reliability").get<double>();
  s.free_storage = j.at("free").get<std::uint64_t>();
}

void to_json(json& j, const PartitionSummary& s) {
  j = {{"fog", s.fog},     {"r_min", s.r_min}, {"r_med", s.r_med}, {"r_max", s.r_max},
       {"s_min", s.s_min}, {"s_med", s.s_med}, {"s_max", s.s_max}, {"c", s.c},
       {"edges", s.edge_total}};
}
void from_json(const json& j, PartitionSummary& s) {
  s.fog = j.at("fog").get<FogId>();
  s.r_min = j.at("r_min").get<double>();
  s.r_med = j.at("r_med").get<double>();
  s.r_max = j.at("r_max").get<double>();
  s.s_min = j.at("s_min").get<std::uint64_t>();
  s.s_med = j.at("s_med").get<std::uint64_t>();
  s.s_max = j.at("s_max").get<std::uint64_t>();
  s.c = j.at("c").get<std::array<std::uint32_t, 4>>();
  s.edge_total = j.at("edges").get<std::uint32_t>();
}

void to_json(json& j, const PropertyBloomFilter& f) {
  j = {{"name", f.property_name()},
       {"bits", crypto::base64_encode(std::span(f.bits().data(), f.bits().size()))},
       {"n", f.insert_count()}};
}

void from_json(const json& j, PropertyBloomFilter& f) {
  const auto raw = crypto::base64_decode(j.at("bits").get<std::string>());
  if (raw.size() != kFilterBytes) throw Error(Errc::protocol, "filter must be 20 bytes");
  FilterBits bits{};
  std::copy(raw.begin(), raw.end(), bits.begin());
  f = PropertyBloomFilter(j.at("name").get<std::string>(), bits, j.value("n", std::uint64_t{0}));
}

json filters_to_json(const FilterMap& filters) {
  json out = json::array();
  for (const auto& [name, f] : filters) out.push_back(f);
  return out;
}

FilterMap filters_from_json(const json& j) {
  FilterMap out;
  for (const auto& item : j) {
    auto f = item.get<PropertyBloomFilter>();
    std::string name = f.property_name();
    out.insert_or_assign(std::move(name), std::move(f));
  }
  return out;
}

json query_to_json(const Query& q) {
  json out = json::array();
  for (const auto& [name, value] : q) out.push_back({name, value});
  return out;
}

Query query_from_json(const json& j) {
  Query q;
  auto add = [&](const std::string& name, const json& v) {
    q.emplace_back(name, v.get<PropertyValue>().canonical());
  };
  try {
    if (j.is_object()) {
      for (const auto& [name, v] : j.items()) add(name, v);
    } else {
      for (const auto& term : j) add(term.at(0).get<std::string>(), term.at(1));
    }
  } catch (const json::exception& e) {
    throw Error(Errc::invalid_argument, std::string("bad query: ") + e.what());
  }
  return q;
}

}  // namespace elfstore
