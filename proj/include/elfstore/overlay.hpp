// SPDX-License-Identifier: Apache-2.0
//
// Two-level super-peer overlay of fogs. A single buddy pool of b+1 fogs sits
// at the first level; every other fog is a neighbor of exactly one buddy.
// The topology is a pure function of (fog ids, b) so every fog derives the
// same structure from configuration.

#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "elfstore/types.hpp"

namespace elfstore {

enum class FogRole { buddy, neighbor };

struct Endpoint {
  std::string host;
  std::uint16_t port = 0;

  bool operator==(const Endpoint&) const = default;
};

struct FogDescriptor {
  FogId id;
  Endpoint address;
  FogRole role = FogRole::buddy;
  FogId pool_buddy;  // self for a buddy
};

enum class RouteClass { self, neighbor, buddy, buddy_neighbor };

std::string_view to_string(RouteClass c);

class OverlayTopology {
 public:
  const std::map<FogId, FogDescriptor>& fogs() const { return fogs_; }
  const std::vector<FogId>& buddy_set() const { return buddy_set_; }
  const std::map<FogId, std::vector<FogId>>& neighbor_map() const { return neighbor_map_; }

  bool contains(FogId f) const { return fogs_.contains(f); }
  // Throws Error(not_found).
  const FogDescriptor& fog(FogId f) const;
  std::vector<FogId> fog_ids() const;
  std::size_t size() const { return fogs_.size(); }

 private:
  friend OverlayTopology build_overlay(std::vector<FogId>, int,
                                       const std::map<FogId, Endpoint>&);

  std::map<FogId, FogDescriptor> fogs_;
  std::vector<FogId> buddy_set_;
  std::map<FogId, std::vector<FogId>> neighbor_map_;
};

// Sorts the ids and cuts them into b+1 contiguous groups whose sizes differ by
// at most one (larger groups first). The lowest id of each group is the buddy
// and the rest are its neighbors, so 12 fogs with b=2 give buddies {1,5,9}
// and neighbors 9 -> {10,11,12}.
OverlayTopology build_overlay(std::vector<FogId> fog_ids, int b,
                              const std::map<FogId, Endpoint>& addresses = {});

std::vector<FogId> buddies_of(const OverlayTopology& t, FogId f);
std::vector<FogId> neighbors_of(const OverlayTopology& t, FogId f);
RouteClass route_class(const OverlayTopology& t, FogId from, FogId to);

// Which peers' Bloom filters a fog keeps. A buddy holds its neighbors' local
// filters and the other buddies' recursive filters. A neighbor fog holds the
// recursive filters of every buddy, its own pool buddy included, so any
// partition is at most two forwards away from it as well.
struct FilterSources {
  std::vector<FogId> neighbors;
  std::vector<FogId> buddies;
};
FilterSources filter_sources(const OverlayTopology& t, FogId f);

}  // namespace elfstore
