// SPDX-License-Identifier: Apache-2.0

#include "elfstore/placement.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <random>

#include "elfstore/error.hpp"

namespace elfstore {

std::vector<double> ReplicaPlan::contributions() const {
  std::vector<double> out;
  out.reserve(choices.size());
  for (const auto& c : choices) out.push_back(c.contribution);
  return out;
}

double combined_reliability(std::span<const double> reliabilities) {
  double failure = 1.0;
  for (double r : reliabilities) failure *= 1.0 - r;
  return 1.0 - failure;
}

bool reliability_satisfied(double target, std::span<const double> reliabilities) {
  if (reliabilities.empty()) return false;
  double failure = 1.0;
  for (double r : reliabilities) failure *= 1.0 - r;
  // Relative slack absorbs rounding in products like 0.05 * 0.01 vs 0.001.
  return failure <= (1.0 - target) * (1.0 + 1e-12);
}

double required_reliability(double target, std::span<const double> survivors) {
  double failure = 1.0;
  for (double r : survivors) failure *= 1.0 - r;
  const double budget = 1.0 - target;
  if (failure <= budget) return 0.0;
  return std::clamp(1.0 - budget / failure, 0.0, 1.0);
}

double contribution_of(const PartitionSummary& summary, Quadrant local_hint) {
  if (summary.count(local_hint) == 0) {
    throw Error(Errc::no_edge, "fog " + std::to_string(summary.fog.value) + " has no edges in " +
                                   std::string(to_string(local_hint)));
  }
  return high_reliability(local_hint) ? summary.r_med : summary.r_min;
}

namespace {

struct Step {
  Quadrant global;
  Quadrant local;
};

// HH and HL globals first (high free storage), alternating and preferring the
// complementary reliability half inside each fog. LH and LL follow once no
// unused HH/HL fog can take a replica.
constexpr std::array<Step, 4> kHighStorageSteps = {{
    {Quadrant::HH, Quadrant::HL},
    {Quadrant::HL, Quadrant::HH},
    {Quadrant::HH, Quadrant::LL},
    {Quadrant::HL, Quadrant::LH},
}};
constexpr std::array<Step, 4> kLowStorageSteps = {{
    {Quadrant::LH, Quadrant::HL},
    {Quadrant::LL, Quadrant::HH},
    {Quadrant::LH, Quadrant::LL},
    {Quadrant::LL, Quadrant::LH},
}};

std::array<Quadrant, 2> preferred_locals(Quadrant global) {
  if (high_reliability(global)) return {Quadrant::HL, Quadrant::LL};
  return {Quadrant::HH, Quadrant::LH};
}

class Planner {
 public:
  Planner(const GlobalMatrix& g, const SummaryMap& summaries, const ReplicaRequirement& req,
          std::uint64_t seed, const PlacementContext& ctx)
      : g_(g), summaries_(summaries), req_(req), rng_(seed) {
    for (const auto& [fog, s] : summaries_) {
      if (ctx.exclude.contains(fog) || !g_.fog_class.contains(fog)) continue;
      if (s.s_max < req_.block_size) continue;
      auto& rem = remaining_[fog];
      for (Quadrant q : kAllQuadrants) rem[index_of(q)] = s.count(q);
    }
    for (const auto& c : ctx.placed) {
      plan_.choices.push_back(c);
      used_.insert(c.fog);
      take(c.fog, c.hint);
    }
  }

  ReplicaPlan run() {
    if (plan_.choices.empty()) place_local();
    while (!done()) {
      std::optional<ReplicaChoice> next = next_choice();
      if (!next) break;
      if (used_.contains(next->fog)) plan_.fog_reuse = true;
      used_.insert(next->fog);
      take(next->fog, next->hint);
      plan_.choices.push_back(*next);
    }
    plan_.replica_count = static_cast<int>(plan_.choices.size());
    if (plan_.replica_count < req_.min_replicas) {
      throw Error(Errc::insufficient_capacity,
                  "only " + std::to_string(plan_.replica_count) + " of " +
                      std::to_string(req_.min_replicas) + " replicas can be placed");
    }
    const auto contributions = plan_.contributions();
    plan_.achieved_reliability_bound = combined_reliability(contributions);
    plan_.reliability_unmet = !reliability_satisfied(req_.target_reliability, contributions);
    return plan_;
  }

 private:
  bool done() const {
    const auto q = static_cast<int>(plan_.choices.size());
    if (q >= req_.max_replicas) return true;
    return q >= req_.min_replicas &&
           reliability_satisfied(req_.target_reliability, plan_.contributions());
  }

  std::uint32_t left(FogId fog, Quadrant q) const {
    auto it = remaining_.find(fog);
    return it == remaining_.end() ? 0 : it->second[index_of(q)];
  }

  void take(FogId fog, Quadrant q) {
    auto it = remaining_.find(fog);
    if (it == remaining_.end()) return;
    auto& rem = it->second;
    // The pinned local edge's storage quadrant is not known here; charge the
    // hinted quadrant, else one on the same reliability side, else any.
    for (Quadrant c : {q, make_quadrant(!high_storage(q), high_reliability(q)), flip_reliability(q),
                       make_quadrant(!high_storage(q), !high_reliability(q))}) {
      if (rem[index_of(c)] > 0) {
        --rem[index_of(c)];
        return;
      }
    }
  }

  void place_local() {
    if (!req_.client_is_edge || !req_.client_fog) return;
    const FogId fog = *req_.client_fog;
    if (!remaining_.contains(fog) || req_.max_replicas < 1) return;
    const PartitionSummary& s = summaries_.at(fog);
    const double r = req_.client_edge_reliability.value_or(s.r_min);
    ReplicaChoice c{fog, make_quadrant(false, r >= s.r_med), r, true};
    used_.insert(fog);
    take(fog, c.hint);
    plan_.choices.push_back(c);
  }

  // Local quadrant a fog would take for this step, if any. When both
  // preferred quadrants are empty the fog falls back to the other two.
  std::optional<Quadrant> admissible(FogId fog, const Step& step) const {
    if (left(fog, step.local) > 0) return step.local;
    const auto pref = preferred_locals(step.global);
    if (left(fog, pref[0]) + left(fog, pref[1]) > 0) return std::nullopt;
    const Quadrant other = step.local == pref[0] ? pref[1] : pref[0];
    for (Quadrant q : {flip_reliability(step.local), flip_reliability(other)}) {
      if (left(fog, q) > 0) return q;
    }
    return std::nullopt;
  }

  std::optional<ReplicaChoice> try_step(const Step& step, bool allow_reuse) {
    std::vector<std::pair<FogId, Quadrant>> candidates;
    for (const auto& [fog, cls] : g_.fog_class) {
      if (cls != step.global || !remaining_.contains(fog)) continue;
      if (!allow_reuse && used_.contains(fog)) continue;
      if (auto q = admissible(fog, step)) candidates.emplace_back(fog, *q);
    }
    if (candidates.empty()) return std::nullopt;
    std::uniform_int_distribution<std::size_t> pick(0, candidates.size() - 1);
    const auto [fog, hint] = candidates[pick(rng_)];
    return ReplicaChoice{fog, hint, contribution_of(summaries_.at(fog), hint), false};
  }

  template <std::size_t N>
  std::optional<ReplicaChoice> walk(const std::array<Step, N>& steps, std::size_t& cursor,
                                    bool allow_reuse) {
    for (std::size_t i = 0; i < N; ++i) {
      const std::size_t at = (cursor + i) % N;
      if (auto c = try_step(steps[at], allow_reuse)) {
        cursor = (at + 1) % N;
        return c;
      }
    }
    return std::nullopt;
  }

  std::optional<ReplicaChoice> next_choice() {
    if (auto c = walk(kHighStorageSteps, high_cursor_, false)) return c;
    if (auto c = walk(kLowStorageSteps, low_cursor_, false)) return c;
    // Every fog with room already holds a replica: reuse fogs, on other edges.
    static constexpr std::array<Step, 8> kAll = {
        kHighStorageSteps[0], kHighStorageSteps[1], kHighStorageSteps[2], kHighStorageSteps[3],
        kLowStorageSteps[0],  kLowStorageSteps[1],  kLowStorageSteps[2],  kLowStorageSteps[3]};
    return walk(kAll, reuse_cursor_, true);
  }

  const GlobalMatrix& g_;
  const SummaryMap& summaries_;
  const ReplicaRequirement& req_;
  std::mt19937_64 rng_;
  std::map<FogId, std::array<std::uint32_t, 4>> remaining_;
  std::set<FogId> used_;
  ReplicaPlan plan_;
  std::size_t high_cursor_ = 0;
  std::size_t low_cursor_ = 0;
  std::size_t reuse_cursor_ = 0;
};

}  // namespace

ReplicaPlan choose_replica_fogs(const GlobalMatrix& g, const SummaryMap& summaries,
                                const ReplicaRequirement& req, std::uint64_t rng_seed,
                                const PlacementContext& context) {
  if (!(req.target_reliability > 0.0 && req.target_reliability < 1.0)) {
    throw Error(Errc::invalid_argument, "target reliability must be in (0,1)");
  }
  if (req.min_replicas < 1 || req.min_replicas > req.max_replicas) {
    throw Error(Errc::invalid_argument, "replica bounds must satisfy 1 <= min <= max");
  }
  return Planner(g, summaries, req, rng_seed, context).run();
}

EdgeId choose_edge_in_fog(std::span<const EdgeStat> stats, const PartitionSummary& summary,
                          Quadrant hint, std::uint64_t block_size, double min_reliability,
                          const std::set<EdgeId>& exclude) {
  const EdgeStat* in_hint = nullptr;
  const EdgeStat* elsewhere = nullptr;
  auto better = [](const EdgeStat* best, const EdgeStat& e) {
    return best == nullptr || e.reliability < best->reliability ||
           (e.reliability == best->reliability && e.edge < best->edge);
  };
  for (const auto& e : stats) {
    if (e.free_storage < block_size || e.reliability < min_reliability) continue;
    if (exclude.contains(e.edge)) continue;
    const bool match = local_quadrant(summary, e.reliability, e.free_storage) == hint;
    const EdgeStat*& slot = match ? in_hint : elsewhere;
    if (better(slot, e)) slot = &e;
  }
  if (in_hint != nullptr) return in_hint->edge;
  if (elsewhere != nullptr) return elsewhere->edge;
  throw Error(Errc::no_capacity, "fog " + std::to_string(summary.fog.value) +
                                     " has no edge with " + std::to_string(block_size) +
                                     " bytes free");
}

RecoveryChoice choose_recovery_fog(const GlobalMatrix& g, const SummaryMap& summaries,
                                   double failed_edge_reliability, std::uint64_t block_size,
                                   const std::set<FogId>& exclude, double min_contribution) {
  std::optional<RecoveryChoice> closest;
  std::optional<RecoveryChoice> strongest;
  double best_distance = 0;
  for (const auto& [fog, s] : summaries) {
    if (exclude.contains(fog) || s.s_max < block_size || !g.fog_class.contains(fog)) continue;
    // Prefer the high-storage quadrant when both halves give the same value.
    for (Quadrant q : kAllQuadrants) {
      if (s.count(q) == 0) continue;
      const double c = contribution_of(s, q);
      if (!strongest || c > strongest->contribution) strongest = RecoveryChoice{fog, q, c, true};
      if (c < min_contribution) continue;
      const double d = std::abs(c - failed_edge_reliability);
      if (!closest || d < best_distance) {
        closest = RecoveryChoice{fog, q, c, false};
        best_distance = d;
      }
    }
  }
  if (closest) return *closest;
  if (strongest) return *strongest;
  throw Error(Errc::insufficient_capacity, "no fog can take a recovered replica");
}

}  // namespace elfstore
