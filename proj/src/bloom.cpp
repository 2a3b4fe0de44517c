// SPDX-License-Identifier: Apache-2.0

#include "elfstore/bloom.hpp"

#include <algorithm>
#include <bit>
#include <iterator>

#include "elfstore/crypto.hpp"
#include "elfstore/error.hpp"

namespace elfstore {

FilterBits hash_value(std::string_view value) {
  const crypto::Sha1Digest d = crypto::sha1(value);
  FilterBits mask{};
  for (int i = 0; i < kHashPositions; ++i) {
    const unsigned word = (static_cast<unsigned>(d[2 * i]) << 8) | d[2 * i + 1];
    const unsigned pos = word % kFilterBits;
    mask[pos / 8] |= static_cast<std::uint8_t>(0x80u >> (pos % 8));
  }
  return mask;
}

int popcount(const FilterBits& bits) {
  int n = 0;
  for (std::uint8_t b : bits) n += std::popcount(b);
  return n;
}

void PropertyBloomFilter::insert(std::string_view value) {
  const FilterBits mask = hash_value(value);
  for (std::size_t i = 0; i < kFilterBytes; ++i) bits_[i] |= mask[i];
  ++insert_count_;
}

bool PropertyBloomFilter::may_contain_mask(const FilterBits& mask) const {
  for (std::size_t i = 0; i < kFilterBytes; ++i) {
    if ((bits_[i] & mask[i]) != mask[i]) return false;
  }
  return true;
}

bool PropertyBloomFilter::may_contain(std::string_view value) const {
  return may_contain_mask(hash_value(value));
}

void PropertyBloomFilter::merge(const PropertyBloomFilter& other) {
  if (other.name_ != name_) {
    throw Error(Errc::invalid_merge,
                "cannot merge filter '" + other.name_ + "' into '" + name_ + "'");
  }
  for (std::size_t i = 0; i < kFilterBytes; ++i) bits_[i] |= other.bits_[i];
  insert_count_ += other.insert_count_;
}

bool PropertyBloomFilter::empty() const {
  return std::all_of(bits_.begin(), bits_.end(), [](std::uint8_t b) { return b == 0; });
}

PropertyBloomFilter merge_buddy_filter(const PropertyBloomFilter& local,
                                       std::span<const PropertyBloomFilter> neighbor_filters) {
  PropertyBloomFilter out = local;
  for (const auto& f : neighbor_filters) out.merge(f);
  return out;
}

bool passes(const FilterMap& filters, const Query& query) {
  if (query.empty()) return false;
  for (const auto& [name, value] : query) {
    auto it = filters.find(name);
    if (it == filters.end() || !it->second.may_contain(value)) return false;
  }
  return true;
}

namespace {

void merge_into(FilterMap& dst, const FilterMap& src) {
  for (const auto& [name, f] : src) {
    auto [it, inserted] = dst.try_emplace(name, f);
    if (!inserted) it->second.merge(f);
  }
}

}  // namespace

FilterMap FilterSet::recursive() const {
  FilterMap out = local;
  for (const auto& [_, filters] : neighbor) merge_into(out, filters);
  return out;
}

SearchPlan plan_search(const FilterSet& filters, const Query& query) {
  SearchPlan plan;
  plan.local_hit = passes(filters.local, query);
  for (const auto& [fog, fm] : filters.neighbor) {
    if (passes(fm, query)) plan.candidate_neighbors.insert(fog);
  }
  for (const auto& [fog, fm] : filters.buddy) {
    if (passes(fm, query)) plan.candidate_buddies.insert(fog);
  }
  return plan;
}

namespace {

std::vector<QueryTerm> canonical_terms(const BlockKey* key, const StreamId* stream,
                                       std::span<const Property> props) {
  std::vector<QueryTerm> terms;
  bool has_block = false;
  bool has_stream = false;
  for (const auto& p : props) {
    has_block |= p.name == kBlockIdProperty;
    has_stream |= p.name == kStreamIdProperty;
    terms.emplace_back(p.name, p.value.canonical());
  }
  if (key != nullptr && !has_block) terms.emplace_back(kBlockIdProperty, key->block);
  const StreamId* sid = key != nullptr ? &key->stream : stream;
  if (sid != nullptr && !has_stream) terms.emplace_back(kStreamIdProperty, *sid);
  return terms;
}

void add_to_filter(FilterMap* filters, const QueryTerm& term) {
  if (filters == nullptr) return;
  auto it = filters->try_emplace(term.first, PropertyBloomFilter(term.first)).first;
  if (!it->second.may_contain(term.second)) it->second.insert(term.second);
}

}  // namespace

void PartitionIndex::index_block(EdgeId edge, const BlockKey& key,
                                 std::span<const Property> props, FilterMap* local_filters) {
  auto terms = canonical_terms(&key, nullptr, props);
  const IndexedBlock entry{edge, key};
  for (const auto& term : terms) {
    auto& values = blocks_.try_emplace(term.first).first->second;
    values[term.second].insert(entry);
    add_to_filter(local_filters, term);
  }
  auto& recorded = by_edge_[edge][key];
  for (auto& t : terms) {
    if (std::find(recorded.begin(), recorded.end(), t) == recorded.end()) {
      recorded.push_back(std::move(t));
    }
  }
}

void PartitionIndex::index_stream(const StreamId& stream, std::span<const Property> props,
                                  FilterMap* local_filters) {
  for (const auto& term : canonical_terms(nullptr, &stream, props)) {
    auto& values = streams_.try_emplace(term.first).first->second;
    values[term.second].insert(stream);
    add_to_filter(local_filters, term);
  }
}

std::set<IndexedBlock> PartitionIndex::lookup(const Query& query) const {
  std::set<IndexedBlock> result;
  bool first = true;
  for (const auto& [name, value] : query) {
    auto pit = blocks_.find(name);
    if (pit == blocks_.end()) return {};
    auto vit = pit->second.find(value);
    if (vit == pit->second.end()) return {};
    if (first) {
      result = vit->second;
      first = false;
    } else {
      std::set<IndexedBlock> narrowed;
      std::set_intersection(result.begin(), result.end(), vit->second.begin(),
                            vit->second.end(), std::inserter(narrowed, narrowed.end()));
      result = std::move(narrowed);
    }
    if (result.empty()) break;
  }
  return result;
}

std::set<StreamId> PartitionIndex::lookup_streams(const Query& query) const {
  std::set<StreamId> result;
  bool first = true;
  for (const auto& [name, value] : query) {
    auto pit = streams_.find(name);
    if (pit == streams_.end()) return {};
    auto vit = pit->second.find(value);
    if (vit == pit->second.end()) return {};
    if (first) {
      result = vit->second;
      first = false;
    } else {
      std::set<StreamId> narrowed;
      std::set_intersection(result.begin(), result.end(), vit->second.begin(),
                            vit->second.end(), std::inserter(narrowed, narrowed.end()));
      result = std::move(narrowed);
    }
    if (result.empty()) break;
  }
  return result;
}

void PartitionIndex::remove_block(EdgeId edge, const BlockKey& key) {
  auto eit = by_edge_.find(edge);
  if (eit == by_edge_.end()) return;
  auto bit = eit->second.find(key);
  if (bit == eit->second.end()) return;
  const IndexedBlock entry{edge, key};
  for (const auto& [name, value] : bit->second) {
    auto pit = blocks_.find(name);
    if (pit == blocks_.end()) continue;
    auto vit = pit->second.find(value);
    if (vit == pit->second.end()) continue;
    vit->second.erase(entry);
    if (vit->second.empty()) pit->second.erase(vit);
    if (pit->second.empty()) blocks_.erase(pit);
  }
  eit->second.erase(bit);
  if (eit->second.empty()) by_edge_.erase(eit);
}

void PartitionIndex::remove_edge(EdgeId edge) {
  auto eit = by_edge_.find(edge);
  if (eit == by_edge_.end()) return;
  std::vector<BlockKey> keys;
  for (const auto& [key, _] : eit->second) keys.push_back(key);
  for (const auto& key : keys) remove_block(edge, key);
}

std::set<IndexedBlock> PartitionIndex::entries() const {
  std::set<IndexedBlock> out;
  for (const auto& [edge, blocks] : by_edge_) {
    for (const auto& [key, _] : blocks) out.insert({edge, key});
  }
  return out;
}

std::set<BlockKey> PartitionIndex::blocks_on(EdgeId edge) const {
  std::set<BlockKey> out;
  if (auto it = by_edge_.find(edge); it != by_edge_.end()) {
    for (const auto& [key, _] : it->second) out.insert(key);
  }
  return out;
}

std::size_t PartitionIndex::block_entry_count() const {
  std::size_t n = 0;
  for (const auto& [_, blocks] : by_edge_) n += blocks.size();
  return n;
}

}  // namespace elfstore
