// SPDX-License-Identifier: Apache-2.0

#include "elfstore/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "elfstore/error.hpp"

namespace elfstore {

namespace {

// Local quadrant number (1..4) -> quadrant.
constexpr std::array<Quadrant, 4> kLocalOrder = {Quadrant::HH, Quadrant::LH, Quadrant::LL,
                                                 Quadrant::HL};

}  // namespace

int local_quadrant_number(Quadrant q) {
  for (int i = 0; i < 4; ++i) {
    if (kLocalOrder[i] == q) return i + 1;
  }
  return 0;
}

std::uint32_t PartitionSummary::count(Quadrant q) const {
  return c[static_cast<std::size_t>(local_quadrant_number(q) - 1)];
}

Quadrant local_quadrant(const PartitionSummary& s, double reliability,
                        std::uint64_t free_storage) {
  return make_quadrant(free_storage >= s.s_med, reliability >= s.r_med);
}

PartitionSummary summarize_partition(FogId fog, std::span<const EdgeStat> stats) {
  if (stats.empty()) {
    throw Error(Errc::no_edges, "fog " + std::to_string(fog.value) + " has no edges");
  }
  std::vector<double> r;
  std::vector<std::uint64_t> s;
  r.reserve(stats.size());
  s.reserve(stats.size());
  for (const auto& e : stats) {
    r.push_back(e.reliability);
    s.push_back(e.free_storage);
  }
  std::sort(r.begin(), r.end());
  std::sort(s.begin(), s.end());
  // Upper median (index n/2): with "at or above the median" counted high this
  // keeps the high and low halves within one edge of each other.
  const std::size_t mid = stats.size() / 2;

  PartitionSummary out;
  out.fog = fog;
  out.r_min = r.front();
  out.r_med = r[mid];
  out.r_max = r.back();
  out.s_min = s.front();
  out.s_med = s[mid];
  out.s_max = s.back();
  out.edge_total = static_cast<std::uint32_t>(stats.size());
  for (const auto& e : stats) {
    const Quadrant q = local_quadrant(out, e.reliability, e.free_storage);
    ++out.c[static_cast<std::size_t>(local_quadrant_number(q) - 1)];
  }
  return out;
}

double GlobalMatrix::total_edges() const {
  return std::accumulate(quadrant_counts.begin(), quadrant_counts.end(), 0.0);
}

std::vector<FogId> GlobalMatrix::fogs_in(Quadrant q) const {
  std::vector<FogId> out;
  for (const auto& [fog, cls] : fog_class) {
    if (cls == q) out.push_back(fog);
  }
  return out;
}

namespace {

struct Axis {
  double lo = 0;
  double hi = 0;
  int k = 0;

  double width() const { return (hi - lo) / k; }

  std::size_t bucket_of(double x) const {
    if (hi <= lo) return 0;
    auto i = static_cast<long>(std::floor((x - lo) / width()));
    return static_cast<std::size_t>(std::clamp(i, 0L, static_cast<long>(k) - 1));
  }

  // Spread `count` uniformly over [from, to], crediting each bucket with its
  // share of the overlap. A zero-width range is a point mass.
  void spread(std::vector<double>& hist, double from, double to, double count) const {
    if (count == 0) return;
    if (to <= from || hi <= lo) {
      hist[bucket_of(from)] += count;
      return;
    }
    const double w = width();
    const std::size_t first = bucket_of(from);
    const std::size_t last = bucket_of(to);
    for (std::size_t i = first; i <= last; ++i) {
      const double b_lo = lo + w * static_cast<double>(i);
      const double b_hi = i + 1 == static_cast<std::size_t>(k) ? hi : b_lo + w;
      const double overlap = std::min(b_hi, to) - std::max(b_lo, from);
      if (overlap > 0) hist[i] += count * overlap / (to - from);
    }
  }

  double median(const std::vector<double>& hist) const {
    const double total = std::accumulate(hist.begin(), hist.end(), 0.0);
    if (hi <= lo || total <= 0) return lo;
    const double half = total / 2;
    const double w = width();
    double cum = 0;
    for (std::size_t i = 0; i < hist.size(); ++i) {
      const double m = hist[i];
      if (m > 0 && cum + m >= half) {
        return lo + w * static_cast<double>(i) + w * (half - cum) / m;
      }
      cum += m;
    }
    return hi;
  }
};

// Share of [from, to] lying at or above `split`.
double high_fraction(double from, double to, double split) {
  if (to <= from) return from >= split ? 1.0 : 0.0;
  return std::clamp((to - std::max(from, split)) / (to - from), 0.0, 1.0);
}

}  // namespace

GlobalMatrix build_global_matrix(std::span<const PartitionSummary> summaries, int k) {
  if (k < 2) throw Error(Errc::invalid_config, "bucket count must be at least 2");
  if (summaries.empty()) throw Error(Errc::invalid_config, "no partition summaries");

  std::vector<PartitionSummary> sorted(summaries.begin(), summaries.end());
  std::sort(sorted.begin(), sorted.end(),
            [](const auto& a, const auto& b) { return a.fog < b.fog; });
  for (std::size_t i = 1; i < sorted.size(); ++i) {
    if (sorted[i].fog == sorted[i - 1].fog) {
      throw Error(Errc::invalid_config, "duplicate summary for fog " +
                                            std::to_string(sorted[i].fog.value));
    }
  }

  GlobalMatrix g;
  g.bucket_count = k;
  g.r_min = sorted.front().r_min;
  g.r_max = sorted.front().r_max;
  g.s_min = static_cast<double>(sorted.front().s_min);
  g.s_max = static_cast<double>(sorted.front().s_max);
  for (const auto& s : sorted) {
    g.r_min = std::min(g.r_min, s.r_min);
    g.r_max = std::max(g.r_max, s.r_max);
    g.s_min = std::min(g.s_min, static_cast<double>(s.s_min));
    g.s_max = std::max(g.s_max, static_cast<double>(s.s_max));
  }

  const Axis r_axis{g.r_min, g.r_max, k};
  const Axis s_axis{g.s_min, g.s_max, k};
  g.reliability_histogram.assign(static_cast<std::size_t>(k), 0.0);
  g.storage_histogram.assign(static_cast<std::size_t>(k), 0.0);

  for (const auto& s : sorted) {
    const double c1 = s.c[0], c2 = s.c[1], c3 = s.c[2], c4 = s.c[3];
    const auto smin = static_cast<double>(s.s_min);
    const auto smed = static_cast<double>(s.s_med);
    const auto smax = static_cast<double>(s.s_max);
    s_axis.spread(g.storage_histogram, smin, smed, c2 + c3);
    s_axis.spread(g.storage_histogram, smed, smax, c1 + c4);
    r_axis.spread(g.reliability_histogram, s.r_min, s.r_med, c3 + c4);
    r_axis.spread(g.reliability_histogram, s.r_med, s.r_max, c1 + c2);
  }
  g.r_med = r_axis.median(g.reliability_histogram);
  g.s_med = s_axis.median(g.storage_histogram);

  for (const auto& s : sorted) {
    const auto smin = static_cast<double>(s.s_min);
    const auto smed = static_cast<double>(s.s_med);
    const auto smax = static_cast<double>(s.s_max);
    std::array<double, 4> overlap{};
    for (Quadrant local : kAllQuadrants) {
      const double count = s.count(local);
      if (count == 0) continue;
      const double r_lo = high_reliability(local) ? s.r_med : s.r_min;
      const double r_hi = high_reliability(local) ? s.r_max : s.r_med;
      const double s_lo = high_storage(local) ? smed : smin;
      const double s_hi = high_storage(local) ? smax : smed;
      const double fr = high_fraction(r_lo, r_hi, g.r_med);
      const double fs = high_fraction(s_lo, s_hi, g.s_med);
      for (Quadrant global : kAllQuadrants) {
        const double wr = high_reliability(global) ? fr : 1.0 - fr;
        const double ws = high_storage(global) ? fs : 1.0 - fs;
        overlap[index_of(global)] += count * wr * ws;
      }
    }
    for (std::size_t i = 0; i < 4; ++i) g.quadrant_counts[i] += overlap[i];
    g.per_fog_overlap.emplace(s.fog, overlap);
  }
  for (const auto& s : sorted) g.fog_class.emplace(s.fog, classify_fog(s, g));
  return g;
}

Quadrant classify_fog(const PartitionSummary& summary, const GlobalMatrix& g) {
  return make_quadrant(static_cast<double>(summary.s_med) >= g.s_med, summary.r_med >= g.r_med);
}

}  // namespace elfstore
