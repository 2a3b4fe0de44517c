// SPDX-License-Identifier: Apache-2.0
//
// Approximate global statistics. Each fog condenses its edges into a
// PartitionSummary (min/median/max of reliability and free storage plus the
// edge count in each local quadrant). Every fog turns the full set of
// summaries into the same GlobalMatrix: equiwidth bucket histograms give the
// global medians, and an area-overlap split of each local quadrant rectangle
// gives per-fog counts in the four global quadrants.

#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <span>
#include <vector>

#include "elfstore/types.hpp"

namespace elfstore {

struct EdgeStat {
  EdgeId edge;
  double reliability = 0.0;
  std::uint64_t free_storage = 0;

  bool operator==(const EdgeStat&) const = default;
};

struct PartitionSummary {
  FogId fog;
  double r_min = 0, r_med = 0, r_max = 0;
  std::uint64_t s_min = 0, s_med = 0, s_max = 0;
  // Indexed by local quadrant number minus one: q1=HH, q2=LH, q3=LL, q4=HL.
  std::array<std::uint32_t, 4> c{};
  std::uint32_t edge_total = 0;

  std::uint32_t count(Quadrant q) const;

  bool operator==(const PartitionSummary&) const = default;
};

// Local quadrant numbering (1..4) for a quadrant.
int local_quadrant_number(Quadrant q);

// Quadrant of an edge relative to the partition medians. Ties go high.
Quadrant local_quadrant(const PartitionSummary& s, double reliability,
                        std::uint64_t free_storage);

// Upper median (index n/2) for even counts. Throws Error(no_edges) on an empty list.
PartitionSummary summarize_partition(FogId fog, std::span<const EdgeStat> stats);

inline constexpr int kDefaultBuckets = 16;

struct GlobalMatrix {
  double r_min = 0, r_med = 0, r_max = 0;
  double s_min = 0, s_med = 0, s_max = 0;
  int bucket_count = kDefaultBuckets;
  std::vector<double> reliability_histogram;
  std::vector<double> storage_histogram;
  // Indexed by index_of(Quadrant).
  std::array<double, 4> quadrant_counts{};
  std::map<FogId, Quadrant> fog_class;
  std::map<FogId, std::array<double, 4>> per_fog_overlap;

  double total_edges() const;
  std::vector<FogId> fogs_in(Quadrant q) const;
};

// Throws Error(invalid_config) when k < 2 or the input is empty. Summaries
// are processed in fog-id order so the result does not depend on input order.
GlobalMatrix build_global_matrix(std::span<const PartitionSummary> summaries,
                                 int k = kDefaultBuckets);

// Ties on either axis resolve to the high side.
Quadrant classify_fog(const PartitionSummary& summary, const GlobalMatrix& g);

}  // namespace elfstore
