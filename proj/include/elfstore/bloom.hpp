// SPDX-License-Identifier: Apache-2.0
//
// Federated metadata index: fixed-width per-property Bloom filters at three
// tiers (local, neighbor, buddy), the exact partition index a fog keeps for
// blocks on its own edges, and the search planner that decides which peers a
// query has to be forwarded to.

#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "elfstore/types.hpp"

namespace elfstore {

inline constexpr std::size_t kFilterBits = 160;
inline constexpr std::size_t kFilterBytes = kFilterBits / 8;
inline constexpr int kHashPositions = 5;

// Bit i lives in byte i/8 under mask 0x80 >> (i%8).
using FilterBits = std::array<std::uint8_t, kFilterBytes>;

// SHA-1 of the value's bytes; the first five big-endian 16-bit words of the
// digest, each reduced mod 160, select the bits.
FilterBits hash_value(std::string_view value);

int popcount(const FilterBits& bits);

class PropertyBloomFilter {
 public:
  PropertyBloomFilter() = default;
  explicit PropertyBloomFilter(std::string property_name)
      : name_(std::move(property_name)) {}
  PropertyBloomFilter(std::string property_name, const FilterBits& bits,
                      std::uint64_t insert_count = 0)
      : name_(std::move(property_name)), bits_(bits), insert_count_(insert_count) {}

  void insert(std::string_view value);
  bool may_contain(std::string_view value) const;
  bool may_contain_mask(const FilterBits& mask) const;

  // OR another filter into this one. Throws Error(invalid_merge) when the
  // property names differ.
  void merge(const PropertyBloomFilter& other);

  const std::string& property_name() const { return name_; }
  const FilterBits& bits() const { return bits_; }
  std::uint64_t insert_count() const { return insert_count_; }
  bool empty() const;

  bool operator==(const PropertyBloomFilter& o) const {
    return name_ == o.name_ && bits_ == o.bits_;
  }

 private:
  std::string name_;
  FilterBits bits_{};
  std::uint64_t insert_count_ = 0;
};

PropertyBloomFilter merge_buddy_filter(const PropertyBloomFilter& local,
                                       std::span<const PropertyBloomFilter> neighbor_filters);

using FilterMap = std::map<std::string, PropertyBloomFilter, std::less<>>;

// True iff every term passes the filter for its property. A property with no
// filter means nothing was ever indexed under that name.
bool passes(const FilterMap& filters, const Query& query);

struct FilterSet {
  FilterMap local;
  std::map<FogId, FilterMap> neighbor;
  std::map<FogId, FilterMap> buddy;

  // The filter a buddy advertises to its pool: local OR every neighbor's.
  FilterMap recursive() const;
};

struct SearchPlan {
  bool local_hit = false;
  std::set<FogId> candidate_neighbors;
  std::set<FogId> candidate_buddies;
};

SearchPlan plan_search(const FilterSet& filters, const Query& query);

struct IndexedBlock {
  EdgeId edge;
  BlockKey block;

  auto operator<=>(const IndexedBlock&) const = default;
};

// Exact index over the static properties of blocks hosted in one partition
// and of streams owned by its fog. Every indexed (name, value) pair is also
// inserted into the matching local Bloom filter when one is supplied.
class PartitionIndex {
 public:
  // The reserved blockId and streamId properties are added when absent.
  // Re-indexing the same block is a no-op.
  void index_block(EdgeId edge, const BlockKey& key, std::span<const Property> props,
                   FilterMap* local_filters = nullptr);
  void index_stream(const StreamId& stream, std::span<const Property> props,
                    FilterMap* local_filters = nullptr);

  // Intersection of the per-term sets; an empty query matches nothing.
  std::set<IndexedBlock> lookup(const Query& query) const;
  std::set<StreamId> lookup_streams(const Query& query) const;

  // Drops every entry for the edge. Bloom filters are left alone since they
  // cannot delete.
  void remove_edge(EdgeId edge);
  void remove_block(EdgeId edge, const BlockKey& key);

  std::set<IndexedBlock> entries() const;
  std::set<BlockKey> blocks_on(EdgeId edge) const;
  std::size_t block_entry_count() const;

 private:
  using ValueMap = std::map<std::string, std::set<IndexedBlock>, std::less<>>;
  using StreamValueMap = std::map<std::string, std::set<StreamId>, std::less<>>;

  std::map<std::string, ValueMap, std::less<>> blocks_;
  std::map<std::string, StreamValueMap, std::less<>> streams_;
  // edge -> block -> indexed (name, value) pairs, for removal
  std::map<EdgeId, std::map<BlockKey, std::vector<QueryTerm>>> by_edge_;
};

}  // namespace elfstore
