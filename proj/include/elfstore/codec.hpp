// SPDX-License-Identifier: Apache-2.0
//
// JSON forms of the domain types as they appear on the wire and in reports.
// Filters travel as base64 of their 20 raw bytes.

#pragma once

#include "elfstore/bloom.hpp"
#include "elfstore/stats.hpp"
#include "elfstore/types.hpp"
#include "elfstore/wire.hpp"

namespace elfstore {

void to_json(json& j, const FogId& id);
void from_json(const json& j, FogId& id);
void to_json(json& j, const EdgeId& id);
void from_json(const json& j, EdgeId& id);

void to_json(json& j, const Quadrant& q);
void from_json(const json& j, Quadrant& q);

void to_json(json& j, const PropertyValue& v);
void from_json(const json& j, PropertyValue& v);
void to_json(json& j, const Property& p);
void from_json(const json& j, Property& p);
void to_json(json& j, const StreamProperty& p);
void from_json(const json& j, StreamProperty& p);

void to_json(json& j, const BlockKey& k);
void from_json(const json& j, BlockKey& k);

void to_json(json& j, const EdgeStat& s);
void from_json(const json& j, EdgeStat& s);
void to_json(json& j, const PartitionSummary& s);
void from_json(const json& j, PartitionSummary& s);

void to_json(json& j, const PropertyBloomFilter& f);
void from_json(const json& j, PropertyBloomFilter& f);

json filters_to_json(const FilterMap& filters);
FilterMap filters_from_json(const json& j);

json query_to_json(const Query& q);
// Accepts [[name, value], ...] or {name: value, ...}; values may be strings
// or numbers and are canonicalized.
Query query_from_json(const json& j);

// Reads a required field, turning JSON type errors into Error(invalid_argument).
template <class T>
T arg(const json& args, const char* name) {
  auto it = args.find(name);
  if (it == args.end()) throw Error(Errc::invalid_argument, std::string("missing argument ") + name);
  try {
    return it->template get<T>();
  } catch (const json::exception& e) {
    throw Error(Errc::invalid_argument, std::string("bad argument ") + name + ": " + e.what());
  }
}

template <class T>
T arg_or(const json& args, const char* name, T fallback) {
  auto it = args.find(name);
  if (it == args.end() || it->is_null()) return fallback;
  return arg<T>(args, name);
}

}  // namespace elfstore
