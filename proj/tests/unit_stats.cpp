// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "doctest.h"
#include "elfstore/error.hpp"
#include "elfstore/stats.hpp"
#include "fixtures.hpp"

using namespace elfstore;
using fixtures::four_fogs;
using fixtures::GB;

namespace {

// Independent numeric oracle: integrates the uniform densities on a fine grid
// instead of splitting buckets analytically.
struct GridOracle {
  double r_med = 0, s_med = 0;
  std::map<FogId, std::array<double, 4>> overlap;

  explicit GridOracle(const std::vector<PartitionSummary>& fogs) {
    const int N = 4000;
    // 1-D densities give the medians.
    std::vector<std::pair<double, double>> r_mass, s_mass;
    auto add = [&](std::vector<std::pair<double, double>>& out, double lo, double hi, double c) {
      if (c == 0) return;
      if (hi <= lo) {
        out.emplace_back(lo, c);
        return;
      }
      for (int i = 0; i < N; ++i) out.emplace_back(lo + (hi - lo) * (i + 0.5) / N, c / N);
    };
    for (const auto& s : fogs) {
      add(r_mass, s.r_min, s.r_med, s.c[2] + s.c[3]);
      add(r_mass, s.r_med, s.r_max, s.c[0] + s.c[1]);
      add(s_mass, double(s.s_min), double(s.s_med), s.c[1] + s.c[2]);
      add(s_mass, double(s.s_med), double(s.s_max), s.c[0] + s.c[3]);
    }
    r_med = weighted_median(r_mass);
    s_med = weighted_median(s_mass);

    const int M = 200;
    for (const auto& s : fogs) {
      std::array<double, 4> o{};
      for (Quadrant local : kAllQuadrants) {
        const double count = s.count(local);
        if (count == 0) continue;
        const double r_lo = high_reliability(local) ? s.r_med : s.r_min;
        const double r_hi = high_reliability(local) ? s.r_max : s.r_med;
        const double s_lo = double(high_storage(local) ? s.s_med : s.s_min);
        const double s_hi = double(high_storage(local) ? s.s_max : s.s_med);
        for (int i = 0; i < M; ++i) {
          for (int j = 0; j < M; ++j) {
            const double r = r_hi > r_lo ? r_lo + (r_hi - r_lo) * (i + 0.5) / M : r_lo;
            const double st = s_hi > s_lo ? s_lo + (s_hi - s_lo) * (j + 0.5) / M : s_lo;
            o[index_of(make_quadrant(st >= s_med, r >= r_med))] += count / (double(M) * M);
          }
        }
      }
      overlap[s.fog] = o;
    }
  }

  static double weighted_median(std::vector<std::pair<double, double>> v) {
    std::sort(v.begin(), v.end());
    double total = 0;
    for (auto& [x, w] : v) total += w;
    double cum = 0;
    for (auto& [x, w] : v) {
      cum += w;
      if (cum >= total / 2) return x;
    }
    return v.back().first;
  }
};

}  // namespace

TEST_CASE("summary of a small partition") {
  const std::vector<EdgeStat> edges = {
      {EdgeId(1), 0.80, 10}, {EdgeId(2), 0.90, 40}, {EdgeId(3), 0.85, 20}, {EdgeId(4), 0.95, 30}};
  const auto s = summarize_partition(FogId(7), edges);
  CHECK(s.r_min == 0.80);
  CHECK(s.r_med == 0.90);  // upper median of {.80,.85,.90,.95}
  CHECK(s.r_max == 0.95);
  CHECK(s.s_min == 10);
  CHECK(s.s_med == 30);
  CHECK(s.s_max == 40);
  // edge 2: r=.90>=med, s=40>=med -> HH; edge 4: .95, 30 -> HH;
  // edge 1: .80, 10 -> LL; edge 3: .85, 20 -> LL
  CHECK(s.count(Quadrant::HH) == 2);
  CHECK(s.count(Quadrant::LL) == 2);
  CHECK(s.edge_total == 4);
  CHECK(local_quadrant_number(Quadrant::HH) == 1);
  CHECK(local_quadrant_number(Quadrant::LH) == 2);
  CHECK(local_quadrant_number(Quadrant::LL) == 3);
  CHECK(local_quadrant_number(Quadrant::HL) == 4);

  const std::vector<EdgeStat> one = {{EdgeId(3), 0.7, 5}};
  const auto single = summarize_partition(FogId(1), one);
  CHECK(single.r_min == single.r_med);
  CHECK(single.count(Quadrant::HH) == 1);

  try {
    summarize_partition(FogId(1), {});
    FAIL("expected no_edges");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::no_edges);
  }
}

TEST_CASE("property: summary invariants over random partitions") {
  std::mt19937 rng(3);
  for (int trial = 0; trial < 500; ++trial) {
    const int n = std::uniform_int_distribution<int>(1, 40)(rng);
    std::vector<EdgeStat> edges;
    std::set<double> rs;
    std::set<std::uint64_t> ss;
    for (int i = 0; i < n; ++i) {
      double r;
      std::uint64_t s;
      do r = std::uniform_real_distribution<double>(0.6, 0.99)(rng);
      while (!rs.insert(r).second);
      do s = std::uniform_int_distribution<std::uint64_t>(1, 1 << 24)(rng);
      while (!ss.insert(s).second);
      edges.push_back({EdgeId(i), r, s});
    }
    const auto s = summarize_partition(FogId(1), edges);
    CHECK(s.r_min <= s.r_med);
    CHECK(s.r_med <= s.r_max);
    CHECK(s.s_min <= s.s_med);
    CHECK(s.s_med <= s.s_max);
    CHECK(s.c[0] + s.c[1] + s.c[2] + s.c[3] == static_cast<std::uint32_t>(n));
    const int high = static_cast<int>(s.c[0] + s.c[1]);
    const int low = static_cast<int>(s.c[2] + s.c[3]);
    CHECK(std::abs(high - low) <= 1);
  }
}

TEST_CASE("four-fog worked example") {
  const auto fogs = four_fogs();
  const auto g = build_global_matrix(fogs, 16);
  const double r_width = (g.r_max - g.r_min) / 16;
  const double s_width = (g.s_max - g.s_min) / 16;
  CHECK(r_width == doctest::Approx(0.01));
  CHECK(s_width == doctest::Approx(1.0 * GB));
  CHECK(std::abs(g.r_med - 0.85) <= r_width);
  CHECK(std::abs(g.s_med - 12.0 * GB) <= s_width);

  CHECK(g.fog_class.at(FogId(1)) == Quadrant::LL);
  CHECK(g.fog_class.at(FogId(3)) == Quadrant::HL);

  // Fog C: local q3 and q4 lie wholly in global HL; local q1+q2 split 1:3
  // between global HL and HH.
  const auto& c = g.per_fog_overlap.at(FogId(3));
  const double to_hl = c[index_of(Quadrant::HL)] - 4.0;
  const double to_hh = c[index_of(Quadrant::HH)];
  CHECK(to_hl + to_hh == doctest::Approx(12.0));
  CHECK(to_hl / to_hh == doctest::Approx(1.0 / 3.0).epsilon(0.05));
  CHECK(c[index_of(Quadrant::LH)] == doctest::Approx(0.0).epsilon(1e-9));
  CHECK(c[index_of(Quadrant::LL)] == doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("global matrix agrees with a grid-integration oracle") {
  std::mt19937 rng(17);
  for (int trial = 0; trial < 6; ++trial) {
    std::vector<PartitionSummary> fogs;
    if (trial == 0) {
      fogs = four_fogs();
    } else {
      for (int f = 1; f <= 5; ++f) {
        std::vector<EdgeStat> edges;
        for (int e = 0; e < 9; ++e) {
          edges.push_back({EdgeId(f * 100 + e), std::uniform_real_distribution<double>(0.6, 0.99)(rng),
                           std::uniform_int_distribution<std::uint64_t>(1000, 900000)(rng)});
        }
        fogs.push_back(summarize_partition(FogId(f), edges));
      }
    }
    const auto g = build_global_matrix(fogs, 16);
    const GridOracle o(fogs);
    // Interpolation treats each bucket as uniform, so the histogram median is
    // only good to within a bucket.
    CHECK(std::abs(g.r_med - o.r_med) <= (g.r_max - g.r_min) / 16);
    CHECK(std::abs(g.s_med - o.s_med) <= (g.s_max - g.s_min) / 16);
    for (const auto& s : fogs) {
      for (Quadrant q : kAllQuadrants) {
        CHECK(std::abs(g.per_fog_overlap.at(s.fog)[index_of(q)] - o.overlap.at(s.fog)[index_of(q)]) <
              0.05 * s.edge_total);
      }
    }
  }
}

TEST_CASE("property: count conservation and order independence") {
  std::mt19937 rng(23);
  for (int trial = 0; trial < 1000; ++trial) {
    const int p = std::uniform_int_distribution<int>(1, 8)(rng);
    std::vector<PartitionSummary> fogs;
    double total = 0;
    for (int f = 0; f < p; ++f) {
      const int n = std::uniform_int_distribution<int>(1, 12)(rng);
      std::vector<EdgeStat> edges;
      for (int e = 0; e < n; ++e) {
        edges.push_back({EdgeId(e), std::uniform_real_distribution<double>(0.5, 0.999)(rng),
                         std::uniform_int_distribution<std::uint64_t>(0, 1 << 20)(rng)});
      }
      fogs.push_back(summarize_partition(FogId(f + 1), edges));
      total += n;
    }
    const auto g = build_global_matrix(fogs);
    CHECK(g.total_edges() == doctest::Approx(total).epsilon(1e-6));
    double hist_r = 0, hist_s = 0;
    for (double x : g.reliability_histogram) hist_r += x;
    for (double x : g.storage_histogram) hist_s += x;
    CHECK(hist_r == doctest::Approx(total).epsilon(1e-6));
    CHECK(hist_s == doctest::Approx(total).epsilon(1e-6));
    CHECK(g.r_min <= g.r_med);
    CHECK(g.r_med <= g.r_max);
    CHECK(g.s_min <= g.s_med);
    CHECK(g.s_med <= g.s_max);
    for (const auto& s : fogs) {
      double sum = 0;
      for (double x : g.per_fog_overlap.at(s.fog)) sum += x;
      CHECK(sum == doctest::Approx(s.edge_total).epsilon(1e-6));
    }

    std::shuffle(fogs.begin(), fogs.end(), rng);
    const auto h = build_global_matrix(fogs);
    CHECK(h.r_med == g.r_med);
    CHECK(h.s_med == g.s_med);
    CHECK(h.fog_class == g.fog_class);
  }
}

TEST_CASE("degenerate inputs") {
  CHECK_THROWS_AS(build_global_matrix({}, 16), Error);
  const auto fogs = four_fogs();
  CHECK_THROWS_AS(build_global_matrix(fogs, 1), Error);
  std::vector<PartitionSummary> dup = {fogs[0], fogs[0]};
  CHECK_THROWS_AS(build_global_matrix(dup), Error);

  // One fog with identical edges: everything is a point mass and the fog is
  // classified high on both axes.
  const std::vector<EdgeStat> same = {{EdgeId(1), 0.9, 100}, {EdgeId(2), 0.9, 100}};
  const std::vector<PartitionSummary> one = {summarize_partition(FogId(1), same)};
  const auto g = build_global_matrix(one);
  CHECK(g.r_med == 0.9);
  CHECK(g.s_med == 100);
  CHECK(g.fog_class.at(FogId(1)) == Quadrant::HH);
  CHECK(g.total_edges() == doctest::Approx(2.0));
}
