// SPDX-License-Identifier: Apache-2.0

#include "elfstore/overlay.hpp"

#include <algorithm>

#include "elfstore/error.hpp"

namespace elfstore {

std::string_view to_string(RouteClass c) {
  switch (c) {
    case RouteClass::self: return "self";
    case RouteClass::neighbor: return "neighbor";
    case RouteClass::buddy: return "buddy";
    case RouteClass::buddy_neighbor: return "buddy_neighbor";
  }
  return "?";
}

const FogDescriptor& OverlayTopology::fog(FogId f) const {
  auto it = fogs_.find(f);
  if (it == fogs_.end()) {
    throw Error(Errc::not_found, "unknown fog " + std::to_string(f.value));
  }
  return it->second;
}

std::vector<FogId> OverlayTopology::fog_ids() const {
  std::vector<FogId> ids;
  ids.reserve(fogs_.size());
  for (const auto& [id, _] : fogs_) ids.push_back(id);
  return ids;
}

OverlayTopology build_overlay(std::vector<FogId> fog_ids, int b,
                              const std::map<FogId, Endpoint>& addresses) {
  if (fog_ids.empty()) throw Error(Errc::invalid_config, "overlay needs at least one fog");
  std::sort(fog_ids.begin(), fog_ids.end());
  if (std::adjacent_find(fog_ids.begin(), fog_ids.end()) != fog_ids.end()) {
    throw Error(Errc::invalid_config, "duplicate fog id");
  }
  const auto p = static_cast<int>(fog_ids.size());
  if (b < 0 || b >= p) {
    throw Error(Errc::invalid_config,
                "buddy parameter b=" + std::to_string(b) + " must be in [0, " +
                    std::to_string(p) + ")");
  }

  OverlayTopology t;
  const int groups = b + 1;
  const int base = p / groups;
  const int extra = p % groups;
  std::size_t next = 0;
  for (int g = 0; g < groups; ++g) {
    const int size = base + (g < extra ? 1 : 0);
    const FogId buddy = fog_ids[next];
    t.buddy_set_.push_back(buddy);
    auto& neighbors = t.neighbor_map_[buddy];
    for (int i = 0; i < size; ++i, ++next) {
      const FogId id = fog_ids[next];
      FogDescriptor d;
      d.id = id;
      if (auto it = addresses.find(id); it != addresses.end()) d.address = it->second;
      d.role = i == 0 ? FogRole::buddy : FogRole::neighbor;
      d.pool_buddy = buddy;
      if (i > 0) neighbors.push_back(id);
      t.fogs_.emplace(id, d);
    }
  }
  return t;
}

namespace {

const FogDescriptor& require_buddy(const OverlayTopology& t, FogId f) {
  const FogDescriptor& d = t.fog(f);
  if (d.role != FogRole::buddy) {
    throw Error(Errc::wrong_role, "fog " + std::to_string(f.value) + " is not a buddy");
  }
  return d;
}

}  // namespace

std::vector<FogId> buddies_of(const OverlayTopology& t, FogId f) {
  require_buddy(t, f);
  std::vector<FogId> out;
  for (FogId b : t.buddy_set()) {
    if (b != f) out.push_back(b);
  }
  return out;
}

std::vector<FogId> neighbors_of(const OverlayTopology& t, FogId f) {
  require_buddy(t, f);
  return t.neighbor_map().at(f);
}

RouteClass route_class(const OverlayTopology& t, FogId from, FogId to) {
  const FogDescriptor& src = t.fog(from);
  const FogDescriptor& dst = t.fog(to);
  if (from == to) return RouteClass::self;
  const auto& pool = t.neighbor_map().at(src.pool_buddy);
  if (std::find(pool.begin(), pool.end(), to) != pool.end()) return RouteClass::neighbor;
  if (dst.role == FogRole::buddy) return RouteClass::buddy;
  return RouteClass::buddy_neighbor;
}

FilterSources filter_sources(const OverlayTopology& t, FogId f) {
  const FogDescriptor& d = t.fog(f);
  FilterSources s;
  if (d.role == FogRole::buddy) {
    s.neighbors = neighbors_of(t, f);
    s.buddies = buddies_of(t, f);
  } else {
    s.buddies = t.buddy_set();
  }
  return s;
}

}  // namespace elfstore
