// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "elfstore/codec.hpp"
#include "elfstore/harness.hpp"

namespace elfstore {

namespace {

constexpr int kSchemaVersion = 1;

json latency(std::vector<double> d) {
  if (d.empty()) return {{"count", 0}};
  std::sort(d.begin(), d.end());
  const auto n = d.size();
  const auto at = [&](double q) {
    const auto i = static_cast<std::size_t>(std::ceil(q * static_cast<double>(n)));
    return d[std::min(n - 1, i == 0 ? 0 : i - 1)];
  };
  return {{"count", n},
          {"mean", std::accumulate(d.begin(), d.end(), 0.0) / static_cast<double>(n)},
          {"p50", at(0.5)},
          {"p95", at(0.95)},
          {"max", d.back()}};
}

json histogram(const std::map<int, std::uint64_t>& h) {
  json out = json::object();
  for (const auto& [k, v] : h) out[std::to_string(k)] = v;
  return out;
}

json audit_json(const AuditResult& a) {
  json v = json::array();
  for (const auto& x : a.violations) v.push_back({{"stream", x.key.stream}, {"block", x.key.block}, {"reason", x.reason}});
  return {{"label", a.label},
          {"time", a.time},
          {"blocks", a.blocks},
          {"unmet_blocks", a.unmet_blocks},
          {"passed", a.passed},
          {"violations", v}};
}

}  // namespace

json SimCluster::report() const {
  const Metrics& m = metrics_;
  json r;
  r["schema_version"] = kSchemaVersion;
  r["cluster"] = to_json(spec_);
  json edges = json::array();
  for (const auto& e : edge_info_) {
    edges.push_back({{"edge", e.id}, {"fog", e.fog}, {"reliability", e.reliability},
                     {"capacity", e.capacity}, {"alive", e.alive}});
  }
  r["edges"] = edges;
  r["workloads"] = workload_specs_;

  json ops = json::object();
  for (const auto& [name, s] : m.ops) {
    json f = json::object();
    for (const auto& [code, n] : s.failures) f[code] = n;
    ops[name] = {{"ok", s.durations.size()}, {"failures", f}, {"latency", latency(s.durations)}};
  }
  r["ops"] = ops;

  std::uint64_t puts = 0;
  std::uint64_t replicas = 0;
  for (const auto& [q, n] : m.replication) {
    puts += n;
    replicas += static_cast<std::uint64_t>(q) * n;
  }
  const double mean_q = puts == 0 ? 0.0 : static_cast<double>(replicas) / static_cast<double>(puts);
  r["replication"] = {{"puts", puts},
                      {"histogram", histogram(m.replication)},
                      {"mean_q", mean_q},
                      {"unmet", m.unmet},
                      {"fog_reuse", m.fog_reuse}};
  r["put_data_path"] = {{"hops", histogram(m.data_path_hops)}};

  const double fogs = spec_.fog_count;
  // Approximate form: non-local replicas land on any fog. Placement never
  // puts a second replica in the writer's fog while others have room, so
  // the exact expectation divides by fogs - 1 instead.
  const double expected = puts == 0 ? 0.0 : 1.0 / fogs + (1.0 - 1.0 / fogs) * (mean_q - 1.0) / fogs;
  const double expected_exact =
      puts == 0 || fogs < 2 ? expected
                            : 1.0 / fogs + (1.0 - 1.0 / fogs) * std::min(1.0, (mean_q - 1.0) / (fogs - 1.0));
  r["local_reads"] = {{"gets", m.gets},
                      {"local", m.local_gets},
                      {"fraction", m.gets == 0 ? 0.0 : static_cast<double>(m.local_gets) / static_cast<double>(m.gets)},
                      {"expected", expected},
                      {"expected_no_reuse", expected_exact},
                      {"fallback_broadcasts", m.get_fallbacks},
                      {"checksum_mismatches", m.get_mismatches}};
  r["find"] = {{"count", m.finds}, {"hops", histogram(m.find_hops)}, {"false_negatives", m.find_false_negatives},
               {"not_yet_visible", m.find_not_yet_visible}};

  std::uint64_t meta_ok = 0;
  std::uint64_t genuinely_stale = 0;
  for (const auto& a : m.meta) {
    if (a.ok) {
      ++meta_ok;
    } else if (a.owner_version > a.version_used) {
      ++genuinely_stale;
    }
  }
  r["meta"] = {{"attempts", m.meta.size()},
               {"successes", meta_ok},
               {"stale", m.meta.size() - meta_ok},
               {"stale_genuine", genuinely_stale}};
  r["leases"] = {{"opens", m.lease_opens}, {"waits", m.lease_waits}, {"closes", m.lease_closes}};

  json failures = json::array();
  for (const auto& f : m.failures) {
    json j = {{"edge", f.edge}, {"fog", f.fog}, {"reliability", f.reliability},
              {"failed_at", f.failed_at}, {"hosted", f.hosted}};
    if (f.recovery) {
      json blocks = json::array();
      for (const auto& b : f.recovery->blocks) {
        blocks.push_back({{"stream", b.key.stream}, {"block", b.key.block}, {"targets", b.targets},
                          {"recovered", b.recovered}, {"error", b.error}});
      }
      j["detected_at"] = f.recovery->detected_at;
      j["lost"] = f.recovery->blocks.size();
      j["recovered"] = f.recovery->recovered_count();
      j["blocks"] = blocks;
    }
    if (f.audit) j["audit_passed"] = f.audit->passed;
    failures.push_back(j);
  }
  r["recovery"] = failures;

  json audits = json::array();
  for (const auto& a : m.audits) audits.push_back(audit_json(a));
  r["audits"] = audits;

  json series = json::array();
  for (const auto& s : m.matrix_series) {
    series.push_back({{"t", s.time},
                      {"r_med", s.r_med},
                      {"s_med", s.s_med},
                      {"counts", {{"HH", s.counts[index_of(Quadrant::HH)]},
                                  {"HL", s.counts[index_of(Quadrant::HL)]},
                                  {"LH", s.counts[index_of(Quadrant::LH)]},
                                  {"LL", s.counts[index_of(Quadrant::LL)]}}}});
  }
  r["matrix_series"] = series;

  const auto ts = transport_->stats();
  r["transport"] = {{"messages", ts.messages}, {"bytes", ts.bytes}, {"payload_bytes", ts.payload_bytes}};
  r["virtual_time"] = clock_.base();
  return r;
}

namespace {

void flatten(const json& j, const std::string& prefix, std::vector<std::pair<std::string, std::string>>& out) {
  if (j.is_object()) {
    for (const auto& [k, v] : j.items()) flatten(v, prefix.empty() ? k : prefix + "." + k, out);
  } else if (j.is_array()) {
    out.emplace_back(prefix, "[" + std::to_string(j.size()) + " entries]");
  } else if (j.is_string()) {
    out.emplace_back(prefix, j.get<std::string>());
  } else {
    out.emplace_back(prefix, j.dump());
  }
}

}  // namespace

std::string report_table(const json& report) {
  // Scalar sections only; long per-block and per-sample lists stay in JSON.
  std::vector<std::pair<std::string, std::string>> rows;
  for (const char* section : {"schema_version", "cluster", "ops", "replication", "put_data_path", "local_reads",
                              "find", "meta", "leases", "transport", "virtual_time"}) {
    if (report.contains(section)) flatten(report[section], section, rows);
  }
  if (report.contains("recovery")) {
    int i = 0;
    for (const auto& f : report["recovery"]) {
      const std::string p = "recovery." + std::to_string(i++);
      for (const char* k : {"edge", "reliability", "hosted", "lost", "recovered", "audit_passed"}) {
        if (f.contains(k)) flatten(f[k], p + "." + k, rows);
      }
    }
  }
  if (report.contains("audits")) {
    for (const auto& a : report["audits"]) {
      rows.emplace_back("audit." + a["label"].get<std::string>(),
                        a["passed"].get<bool>() ? "pass" : "FAIL (" + std::to_string(a["violations"].size()) + ")");
    }
  }
  if (report.contains("matrix_series") && !report["matrix_series"].empty()) {
    const auto& last = report["matrix_series"].back();
    flatten(last, "matrix.last", rows);
  }
  std::size_t width = 0;
  for (const auto& [k, v] : rows) width = std::max(width, k.size());
  std::ostringstream out;
  for (const auto& [k, v] : rows) out << k << std::string(width - k.size() + 2, ' ') << v << "\n";
  return out.str();
}

}  // namespace elfstore
