// SPDX-License-Identifier: Apache-2.0
//
// Differential replica placement. A block of reliability target r needs q
// replicas on edges with reliabilities r_i such that
//
//     (1 - r) >= prod_i (1 - r_i)
//
// Fogs are chosen from the global matrix by walking a fixed sequence of
// (global quadrant, local quadrant) pairs. Each chosen fog contributes a
// conservative reliability: r_min for its low-reliability local quadrants,
// r_med for the high ones.

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <vector>

#include "elfstore/stats.hpp"
#include "elfstore/types.hpp"

namespace elfstore {

struct ReplicaRequirement {
  std::uint64_t block_size = 0;
  double target_reliability = 0.99;
  int min_replicas = 2;
  int max_replicas = 5;
  std::optional<FogId> client_fog;
  bool client_is_edge = false;
  // Known exactly by the client's parent fog; used for the local replica.
  std::optional<double> client_edge_reliability;
};

struct ReplicaChoice {
  FogId fog;
  Quadrant hint = Quadrant::LL;
  double contribution = 0;
  // The first replica of an edge client goes on the client's own edge.
  bool local_pinned = false;

  bool operator==(const ReplicaChoice&) const = default;
};

struct ReplicaPlan {
  std::vector<ReplicaChoice> choices;
  double achieved_reliability_bound = 0;
  int replica_count = 0;
  bool reliability_unmet = false;
  bool fog_reuse = false;

  std::vector<double> contributions() const;
};

// False for an empty list.
bool reliability_satisfied(double target, std::span<const double> reliabilities);

// 1 - prod(1 - r_i).
double combined_reliability(std::span<const double> reliabilities);

// Throws Error(no_edge) when the quadrant is empty.
double contribution_of(const PartitionSummary& summary, Quadrant local_hint);

using SummaryMap = std::map<FogId, PartitionSummary>;

// Replicas already placed (or fogs that refused one) when re-planning part of
// a put after a target fog ran out of space.
struct PlacementContext {
  std::vector<ReplicaChoice> placed;
  std::set<FogId> exclude;
};

// Throws Error(insufficient_capacity) when fewer than min_replicas can be
// placed. Hitting max_replicas without meeting the target returns a plan
// flagged reliability_unmet.
ReplicaPlan choose_replica_fogs(const GlobalMatrix& g, const SummaryMap& summaries,
                                const ReplicaRequirement& req, std::uint64_t rng_seed,
                                const PlacementContext& context = {});

// Least reliable edge with room in the hinted quadrant, then in the other
// quadrants (least reliable first, ties to the lower edge id). Edges below
// `min_reliability` or in `exclude` are never chosen. Throws
// Error(no_capacity) when nothing fits.
EdgeId choose_edge_in_fog(std::span<const EdgeStat> stats, const PartitionSummary& summary,
                          Quadrant hint, std::uint64_t block_size,
                          double min_reliability = 0.0, const std::set<EdgeId>& exclude = {});

struct RecoveryChoice {
  FogId fog;
  Quadrant hint = Quadrant::LL;
  double contribution = 0;
  // Nothing reached min_contribution; this is the strongest fog available.
  bool below_floor = false;
};

// Fog outside `exclude` whose conservative contribution is closest to the
// failed edge's reliability, among those at or above `min_contribution`.
// Ties go to the lower fog id. Throws Error(insufficient_capacity) when no
// fog has room.
RecoveryChoice choose_recovery_fog(const GlobalMatrix& g, const SummaryMap& summaries,
                                   double failed_edge_reliability, std::uint64_t block_size,
                                   const std::set<FogId>& exclude,
                                   double min_contribution = 0.0);

// Smallest reliability a single extra replica needs so that the survivors
// plus it meet the target. Zero when the survivors already suffice.
double required_reliability(double target, std::span<const double> survivors);

}  // namespace elfstore
