// SPDX-License-Identifier: Apache-2.0
//
// Python bindings. Structured values cross the boundary as JSON text; the
// elfstore package turns them into dicts.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "elfstore/bloom.hpp"
#include "elfstore/client.hpp"
#include "elfstore/codec.hpp"
#include "elfstore/error.hpp"
#include "elfstore/harness.hpp"
#include "elfstore/overlay.hpp"
#include "elfstore/placement.hpp"
#include "elfstore/stats.hpp"

namespace py = pybind11;
using namespace elfstore;

namespace {

std::vector<FogId> fog_ids(const std::vector<int>& ids) {
  std::vector<FogId> out;
  for (int i : ids) out.emplace_back(i);
  return out;
}

std::vector<int> ints(const std::vector<FogId>& ids) {
  std::vector<int> out;
  for (auto f : ids) out.push_back(f.value);
  return out;
}

std::vector<Property> props_from(const std::map<std::string, std::string>& m) {
  std::vector<Property> out;
  for (const auto& [k, v] : m) out.push_back({k, v});
  return out;
}

Query query_from(const std::map<std::string, std::string>& m) {
  Query q;
  for (const auto& [k, v] : m) q.emplace_back(k, v);
  return q;
}

py::bytes to_bytes(const Payload& p) {
  return {reinterpret_cast<const char*>(p.data()), p.size()};
}

Payload from_bytes(const py::bytes& b) {
  const std::string s = b;
  return Payload::from_string(s);
}

json failure_json(const FailureRecord& r) {
  json j = {{"edge", r.edge.value}, {"fog", r.fog.value}, {"reliability", r.reliability},
            {"hosted", r.hosted}};
  if (r.recovery) j["recovered"] = r.recovery->recovered_count();
  if (r.audit) j["audit_passed"] = r.audit->passed;
  return j;
}

json audit_json(const AuditResult& a) {
  json v = json::array();
  for (const auto& x : a.violations) v.push_back({{"key", to_string(x.key)}, {"reason", x.reason}});
  return {{"label", a.label}, {"blocks", a.blocks}, {"unmet_blocks", a.unmet_blocks},
          {"passed", a.passed}, {"violations", v}};
}

// Keeps the cluster alive for as long as a client made from it exists.
struct PyClient {
  std::shared_ptr<SimCluster> cluster;
  FogClient client;
};

}  // namespace

PYBIND11_MODULE(_elfstore, m) {
  m.doc() = "Native core of the elfstore package";

  static py::exception<Error> error(m, "Error", PyExc_RuntimeError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::object type = py::reinterpret_borrow<py::object>(error.ptr());
      py::object exc = type(std::string(to_string(e.code())) + ": " + e.detail());
      exc.attr("code") = std::string(to_string(e.code()));
      PyErr_SetObject(error.ptr(), exc.ptr());
    }
  });

  m.def("reliability_satisfied",
        [](double target, const std::vector<double>& r) { return reliability_satisfied(target, r); },
        py::arg("target"), py::arg("reliabilities"));
  m.def("combined_reliability", [](const std::vector<double>& r) { return combined_reliability(r); });
  m.def("required_reliability",
        [](double target, const std::vector<double>& r) { return required_reliability(target, r); });

  m.def("summarize_partition",
        [](int fog, const std::vector<std::tuple<int, double, std::uint64_t>>& edges) {
          std::vector<EdgeStat> stats;
          for (const auto& [id, r, free] : edges) stats.push_back({EdgeId(id), r, free});
          return json(summarize_partition(FogId(fog), stats)).dump();
        });
  m.def("global_matrix", [](const std::string& summaries_json, int buckets) {
    const auto summaries = json::parse(summaries_json).get<std::vector<PartitionSummary>>();
    const auto g = build_global_matrix(summaries, buckets);
    json classes = json::object();
    json overlap = json::object();
    for (const auto& [f, q] : g.fog_class) classes[std::to_string(f.value)] = std::string(to_string(q));
    for (const auto& [f, o] : g.per_fog_overlap) {
      overlap[std::to_string(f.value)] = {{"HH", o[index_of(Quadrant::HH)]}, {"HL", o[index_of(Quadrant::HL)]},
                                          {"LH", o[index_of(Quadrant::LH)]}, {"LL", o[index_of(Quadrant::LL)]}};
    }
    return json{{"r_med", g.r_med},
                {"s_med", g.s_med},
                {"counts",
                 {{"HH", g.quadrant_counts[index_of(Quadrant::HH)]}, {"HL", g.quadrant_counts[index_of(Quadrant::HL)]},
                  {"LH", g.quadrant_counts[index_of(Quadrant::LH)]}, {"LL", g.quadrant_counts[index_of(Quadrant::LL)]}}},
                {"fog_class", classes},
                {"overlap", overlap}}
        .dump();
  }, py::arg("summaries_json"), py::arg("buckets") = kDefaultBuckets);

  py::class_<OverlayTopology>(m, "Overlay")
      .def(py::init([](const std::vector<int>& ids, int b) { return build_overlay(fog_ids(ids), b); }),
           py::arg("fog_ids"), py::arg("buddies"))
      .def_property_readonly("buddy_set", [](const OverlayTopology& t) { return ints(t.buddy_set()); })
      .def("buddies_of", [](const OverlayTopology& t, int f) { return ints(buddies_of(t, FogId(f))); })
      .def("neighbors_of", [](const OverlayTopology& t, int f) { return ints(neighbors_of(t, FogId(f))); })
      .def("route_class", [](const OverlayTopology& t, int a, int b) {
        return std::string(to_string(route_class(t, FogId(a), FogId(b))));
      });

  py::class_<PropertyBloomFilter>(m, "BloomFilter")
      .def(py::init<std::string>(), py::arg("property_name"))
      .def("insert", &PropertyBloomFilter::insert)
      .def("may_contain", &PropertyBloomFilter::may_contain)
      .def("merge", &PropertyBloomFilter::merge)
      .def("popcount", [](const PropertyBloomFilter& f) { return popcount(f.bits()); })
      .def("bits", [](const PropertyBloomFilter& f) {
        return py::bytes(reinterpret_cast<const char*>(f.bits().data()), f.bits().size());
      })
      .def_property_readonly("property_name", &PropertyBloomFilter::property_name);

  py::class_<PyClient>(m, "Client")
      .def_property_readonly("id", [](const PyClient& c) { return c.client.id(); })
      .def("create_stream",
           [](PyClient& c, const std::string& s, const std::map<std::string, std::string>& static_props,
              const std::map<std::string, std::string>& dynamic_props, double reliability) {
             std::vector<StreamProperty> props;
             for (const auto& [k, v] : static_props) props.push_back({k, v, true});
             for (const auto& [k, v] : dynamic_props) props.push_back({k, v, false});
             return c.client.create_stream(s, props, reliability).value;
           })
      .def("open_stream", [](PyClient& c, const std::string& s) { return c.client.open_stream(s).session_key; })
      .def("close_stream", [](PyClient& c, const std::string& s) { c.client.close_stream(s); })
      .def("put_block",
           [](PyClient& c, const std::string& s, const std::string& b, const py::bytes& data,
              const std::map<std::string, std::string>& props) {
             const auto r = c.client.put_block(s, b, props_from(props), from_bytes(data));
             json reps = json::array();
             for (const auto& x : r.replicas) {
               reps.push_back({{"fog", x.fog.value}, {"edge", x.edge.value}, {"reliability", x.reliability},
                               {"contribution", x.contribution}, {"local", x.local}});
             }
             return json{{"owner", r.owner.value}, {"replicas", reps}, {"bound", r.bound},
                         {"reliability_unmet", r.reliability_unmet}, {"md5", r.md5}}
                 .dump();
           })
      .def("update_block", [](PyClient& c, const std::string& s, const std::string& b,
                              const py::bytes& data) { c.client.update_block(s, b, from_bytes(data)); })
      .def("get_block", [](PyClient& c, const std::string& s, const std::string& b) {
        return to_bytes(c.client.get_block(s, b).data);
      })
      .def("find_block",
           [](PyClient& c, const std::map<std::string, std::string>& q, bool exhaustive) {
             std::vector<std::pair<std::string, std::string>> out;
             for (const auto& match : c.client.find_block(query_from(q), exhaustive).matches) {
               out.emplace_back(match.key.stream, match.key.block);
             }
             return out;
           },
           py::arg("query"), py::arg("exhaustive") = false)
      .def("stream_version",
           [](PyClient& c, const std::string& s) { return c.client.get_stream_meta(s, true).version; })
      .def("update_stream_meta",
           [](PyClient& c, const std::string& s, const std::map<std::string, std::string>& props,
              std::uint64_t version) {
             std::map<std::string, PropertyValue> p;
             for (const auto& [k, v] : props) p[k] = v;
             return c.client.update_stream_meta(s, p, version);
           });

  py::class_<SimCluster, std::shared_ptr<SimCluster>>(m, "Cluster")
      .def(py::init([](const std::string& spec_json) {
        return std::make_shared<SimCluster>(cluster_spec_from_json(json::parse(spec_json)));
      }))
      .def("run_workload",
           [](SimCluster& c, const std::string& w) { c.run_workload(workload_spec_from_json(json::parse(w))); })
      .def("fail_edge",
           [](SimCluster& c, std::optional<int> edge) {
             if (edge) return c.fail_edge(FailurePolicy::specific, EdgeId(*edge)).value;
             return c.fail_edge(FailurePolicy::least_reliable).value;
           },
           py::arg("edge") = py::none())
      .def("await_recovery", [](SimCluster& c) { return failure_json(c.await_recovery()).dump(); })
      .def("advance", &SimCluster::advance, py::arg("rounds") = 1)
      .def("audit", [](SimCluster& c, const std::string& label) { return audit_json(c.audit(label)).dump(); })
      .def("report", [](const SimCluster& c) { return c.report().dump(); })
      .def("report_table", [](const SimCluster& c) { return report_table(c.report()); })
      .def("edges", [](const SimCluster& c) {
        std::vector<std::tuple<int, int, double, bool>> out;
        for (const auto& e : c.edge_infos()) out.emplace_back(e.id.value, e.fog.value, e.reliability, e.alive);
        return out;
      })
      .def("client", [](std::shared_ptr<SimCluster> c, int edge, const std::string& id) {
        return PyClient{c, c->client_on(EdgeId(edge), id)};
      });
}
