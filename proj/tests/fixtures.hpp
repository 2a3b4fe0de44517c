// SPDX-License-Identifier: Apache-2.0
//
// Scenarios shared by the unit tests and the acceptance runner.

#pragma once

#include <array>
#include <vector>

#include "elfstore/stats.hpp"

namespace fixtures {

using elfstore::FogId;
using elfstore::PartitionSummary;

inline constexpr std::uint64_t GB = 1'000'000'000ULL;

inline PartitionSummary tuple(int fog, double r0, double r1, double r2, double s0, double s1, double s2,
                              std::array<std::uint32_t, 4> c) {
  PartitionSummary s;
  s.fog = FogId(fog);
  s.r_min = r0 / 100;
  s.r_med = r1 / 100;
  s.r_max = r2 / 100;
  s.s_min = static_cast<std::uint64_t>(s0 * GB);
  s.s_med = static_cast<std::uint64_t>(s1 * GB);
  s.s_max = static_cast<std::uint64_t>(s2 * GB);
  s.c = c;
  s.edge_total = c[0] + c[1] + c[2] + c[3];
  return s;
}

// Four fogs (A..D = 1..4) read off the worked figure. The tuples were chosen to
// be consistent with its stated global medians and fog C's 1:3 split.
inline std::vector<PartitionSummary> four_fogs() {
  return {
      tuple(1, 78, 80, 86, 2, 6, 11, {2, 2, 2, 2}),
      tuple(2, 80, 84, 90, 9, 12, 14, {3, 4, 5, 3}),
      tuple(3, 80, 84, 88, 13, 15, 18, {6, 6, 2, 2}),
      tuple(4, 83, 89, 94, 4, 10, 16, {3, 3, 3, 3}),
  };
}

}  // namespace fixtures
