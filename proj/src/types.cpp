// SPDX-License-Identifier: Apache-2.0

#include "elfstore/types.hpp"

#include <array>
#include <charconv>
#include <cmath>

#include "elfstore/error.hpp"

namespace elfstore {

namespace {

constexpr std::array<std::pair<Errc, std::string_view>, 20> kErrcNames = {{
    {Errc::invalid_config, "invalid_config"},
    {Errc::invalid_argument, "invalid_argument"},
    {Errc::not_found, "not_found"},
    {Errc::wrong_role, "wrong_role"},
    {Errc::invalid_merge, "invalid_merge"},
    {Errc::no_edges, "no_edges"},
    {Errc::no_edge, "no_edge"},
    {Errc::insufficient_capacity, "insufficient_capacity"},
    {Errc::no_capacity, "no_capacity"},
    {Errc::already_exists, "already_exists"},
    {Errc::lease_unavailable, "lease_unavailable"},
    {Errc::lease_lost, "lease_lost"},
    {Errc::stale_version, "stale_version"},
    {Errc::integrity, "integrity"},
    {Errc::unavailable, "unavailable"},
    {Errc::put_failed, "put_failed"},
    {Errc::partial_update, "partial_update"},
    {Errc::nothing_to_fail, "nothing_to_fail"},
    {Errc::protocol, "protocol"},
    {Errc::internal, "internal"},
}};

}  // namespace

std::string_view to_string(Errc code) {
  for (const auto& [c, name] : kErrcNames) {
    if (c == code) return name;
  }
  return "internal";
}

Errc errc_from_string(std::string_view name) {
  for (const auto& [c, n] : kErrcNames) {
    if (n == name) return c;
  }
  return Errc::internal;
}

std::string to_string(const BlockKey& key) { return key.stream + "/" + key.block; }

std::string_view to_string(Quadrant q) {
  switch (q) {
    case Quadrant::HH: return "HH";
    case Quadrant::HL: return "HL";
    case Quadrant::LH: return "LH";
    case Quadrant::LL: return "LL";
  }
  return "??";
}

Quadrant quadrant_from_string(std::string_view s) {
  for (Quadrant q : kAllQuadrants) {
    if (to_string(q) == s) return q;
  }
  throw Error(Errc::invalid_argument, "unknown quadrant '" + std::string(s) + "'");
}

std::string canonical_number(double d) {
  if (std::isnan(d)) return "nan";
  if (d == 0.0) return "0";  // folds -0 into 0
  std::array<char, 64> buf{};
  auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), d);
  if (ec != std::errc()) throw Error(Errc::internal, "number formatting failed");
  return std::string(buf.data(), end);
}

std::optional<double> PropertyValue::as_number() const {
  if (const double* d = std::get_if<double>(&value_)) return *d;
  return std::nullopt;
}

std::string PropertyValue::canonical() const {
  if (const double* d = std::get_if<double>(&value_)) return canonical_number(*d);
  return std::get<std::string>(value_);
}

Query make_query(const std::vector<Property>& props) {
  Query q;
  q.reserve(props.size());
  for (const auto& p : props) q.emplace_back(p.name, p.value.canonical());
  return q;
}

}  // namespace elfstore
