// SPDX-License-Identifier: Apache-2.0
//
// elfstore command line: simulated cluster runs, socket-mode node servers and
// a raw request tool.

#include <atomic>
#include <csignal>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "elfstore/codec.hpp"
#include "elfstore/harness.hpp"
#include "elfstore/socket_transport.hpp"

using namespace elfstore;

namespace {

std::atomic<bool> g_stop{false};

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::invalid_config, "cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error(Errc::invalid_config, path + ": " + e.what());
  }
}

// "1024:0.5,2048:0.5" or "1024,2048" (equal weights).
template <class T>
std::vector<Weighted<T>> parse_weighted(const std::string& s) {
  std::vector<Weighted<T>> out;
  std::stringstream in(s);
  std::string item;
  bool weighted = false;
  while (std::getline(in, item, ',')) {
    const auto colon = item.find(':');
    try {
      const double v = std::stod(item.substr(0, colon));
      const double p = colon == std::string::npos ? 0.0 : std::stod(item.substr(colon + 1));
      weighted = weighted || colon != std::string::npos;
      out.push_back({static_cast<T>(v), p});
    } catch (const std::exception&) {
      throw Error(Errc::invalid_config, "bad list entry '" + item + "'");
    }
  }
  if (!weighted) {
    for (auto& w : out) w.p = 1.0 / static_cast<double>(out.size());
  }
  return out;
}

void sleep_interruptible(double seconds) {
  const auto until = std::chrono::steady_clock::now() + std::chrono::duration<double>(seconds);
  while (!g_stop && std::chrono::steady_clock::now() < until) {
    std::this_thread::sleep_for(std::chrono::milliseconds(50));
  }
}

int serve_fog(const json& c, double duration) {
  FogConfig cfg;
  cfg.id = FogId(c.at("id").get<int>());
  std::vector<FogId> ids;
  for (const auto& f : c.at("fogs")) {
    const FogId id(f.at("id").get<int>());
    ids.push_back(id);
    cfg.endpoints[id] = f.at("endpoint").get<std::string>();
  }
  const int b = c.value("buddies", std::max(0, static_cast<int>(std::lround(std::sqrt(ids.size()))) - 1));
  cfg.topology = build_overlay(ids, b);
  cfg.heartbeat_interval = c.value("heartbeat_interval", cfg.heartbeat_interval);
  cfg.miss_threshold = c.value("miss_threshold", cfg.miss_threshold);
  cfg.lease_duration = c.value("lease_duration", cfg.lease_duration);
  cfg.min_replicas = c.value("min_replicas", cfg.min_replicas);
  cfg.max_replicas = c.value("max_replicas", cfg.max_replicas);
  cfg.seed = c.value("seed", cfg.seed);
  const std::string listen = c.value("listen", cfg.endpoints.at(cfg.id));
  const auto [host, port] = split_endpoint(listen);
  const double interval = cfg.heartbeat_interval;
  const double gossip_interval = c.value("gossip_interval", interval);

  SteadyClock clock;
  SocketTransport transport;
  ThreadExecutor executor(c.value("workers", 10));
  FogNode fog(std::move(cfg), transport, clock, executor);
  SocketServer server(fog, host, port);
  std::cerr << "fog " << fog.id().value << " listening on " << server.endpoint() << "\n";
  const auto start = std::chrono::steady_clock::now();
  while (!g_stop) {
    sleep_interruptible(gossip_interval);
    if (g_stop) break;
    fog.detect_failures();
    fog.gossip_to_buddy();
    fog.gossip_to_buddies();
    fog.gossip_to_neighbors();
    if (duration > 0 && std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count() >= duration) break;
  }
  server.stop();
  return 0;
}

int serve_edge(const json& c, double duration) {
  EdgeConfig cfg;
  cfg.id = EdgeId(c.at("id").get<int>());
  cfg.parent = c.at("parent").get<std::string>();
  cfg.reliability = c.at("reliability").get<double>();
  cfg.capacity = c.at("capacity").get<std::uint64_t>();
  cfg.heartbeat_interval = c.value("heartbeat_interval", cfg.heartbeat_interval);
  const std::string listen = c.at("listen").get<std::string>();
  cfg.endpoint = c.value("endpoint", listen);
  const auto [host, port] = split_endpoint(listen);
  std::unique_ptr<ReplicaStore> store;
  if (c.contains("data_dir")) {
    store = std::make_unique<DiskReplicaStore>(c["data_dir"].get<std::string>());
  } else {
    store = std::make_unique<MemoryReplicaStore>();
  }
  SteadyClock clock;
  SocketTransport transport;
  EdgeNode edge(cfg, std::move(store), clock);
  SocketServer server(edge, host, port);
  std::cerr << "edge " << cfg.id.value << " listening on " << server.endpoint() << "\n";
  const auto start = std::chrono::steady_clock::now();
  while (!g_stop) {
    if (!edge.send_heartbeat(transport)) std::cerr << "heartbeat to " << cfg.parent << " failed\n";
    sleep_interruptible(cfg.heartbeat_interval);
    if (duration > 0 && std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count() >= duration) break;
  }
  server.stop();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"elfstore: federated block storage over fogs and edges"};
  app.require_subcommand(1);

  // sim
  auto* sim = app.add_subcommand("sim", "Run a simulated cluster; chain workload, fail and report steps");
  ClusterSpec cluster;
  std::string cluster_file;
  std::string transport = "simulated";
  int buddies = -1;
  sim->add_option("--config", cluster_file, "Cluster spec JSON (flags override it)");
  sim->add_option("--fogs", cluster.fog_count, "Number of fogs");
  sim->add_option("--edges-per-fog", cluster.edges_per_fog, "Edges per fog");
  sim->add_option("--buddies", buddies, "Buddy parameter b (default round(sqrt(fogs))-1)");
  sim->add_option("--rel-mean", cluster.rel_mean, "Mean edge reliability");
  sim->add_option("--rel-std", cluster.rel_std, "Std-dev of edge reliability");
  sim->add_option("--capacity", cluster.edge_capacity, "Edge capacity in bytes");
  sim->add_option("--capacity-jitter", cluster.capacity_jitter, "Relative capacity spread");
  sim->add_option("--heartbeat", cluster.heartbeat_interval, "Heartbeat interval (virtual seconds)");
  sim->add_option("--seed", cluster.seed, "Seed");
  sim->add_option("--transport", transport, "simulated or socket")->check(CLI::IsMember({"simulated", "socket"}));

  struct Step {
    std::string kind;
    WorkloadSpec workload;
    std::string policy = "least-reliable";
    int edge = 0;
    bool wait = true;
    std::string format = "json";
    std::string out;
  };
  // Subcommands can only be given once each; their options fill these.
  Step wl{"workload"};
  Step fl{"fail"};
  Step rp{"report"};
  std::string spec_file, sizes_list, rel_list, mix;
  std::uint64_t size = 0;
  double reliability = 0;
  std::uint64_t wl_seed = 0;

  auto* workload = sim->add_subcommand("workload", "Run clients against the cluster");
  workload->add_option("--spec", spec_file, "Workload spec JSON (flags override it)");
  workload->add_option("--clients", wl.workload.clients, "Client count");
  workload->add_option("--blocks", wl.workload.blocks_per_client, "Puts per client");
  workload->add_option("--ops", wl.workload.ops_per_client, "Mixed ops per client after the puts");
  workload->add_option("--size", size, "Block size in bytes");
  workload->add_option("--sizes-list", sizes_list, "Sizes with weights, e.g. 1024:0.5,4096:0.5");
  workload->add_option("--reliability", reliability, "Stream reliability");
  workload->add_option("--reliabilities-list", rel_list, "Reliabilities with weights");
  workload->add_flag("--lease", wl.workload.leasing, "Writers take leases");
  workload->add_option("--lease-batch", wl.workload.lease_batch, "Puts per lease");
  workload->add_flag("--shared-stream", wl.workload.shared_stream, "All clients write one stream");
  workload->add_option("--min-rep", wl.workload.min_replicas, "Minimum replicas");
  workload->add_option("--max-rep", wl.workload.max_replicas, "Maximum replicas");
  workload->add_option("--mix", mix, "Mixed-phase weights, e.g. get=0.7,find=0.2,meta=0.1");
  workload->add_option("--meta-streams", wl.workload.meta_streams, "Streams for metadata updates");
  workload->add_option("--seed", wl_seed, "Workload seed");

  auto* fail = sim->add_subcommand("fail", "Kill an edge and wait for recovery");
  fail->add_option("--policy", fl.policy, "least-reliable or id")->check(CLI::IsMember({"least-reliable", "id"}));
  fail->add_option("--edge", fl.edge, "Edge id for --policy id");
  fail->add_flag("!--no-wait", fl.wait, "Do not wait for recovery");

  auto* report = sim->add_subcommand("report", "Print the metrics report");
  report->add_option("--format", rp.format, "json or table")->check(CLI::IsMember({"json", "table"}));
  report->add_option("--out", rp.out, "Write to a file instead of stdout");
  sim->require_subcommand(0, 3);

  // serve
  auto* serve = app.add_subcommand("serve", "Run one fog or edge over TCP");
  std::string role, serve_config;
  double serve_duration = 0;
  serve->add_option("--role", role, "fog or edge")->required()->check(CLI::IsMember({"fog", "edge"}));
  serve->add_option("--config", serve_config, "Node config JSON")->required()->check(CLI::ExistingFile);
  serve->add_option("--duration", serve_duration, "Exit after this many seconds (0 = until signalled)");

  // call
  auto* call = app.add_subcommand("call", "Send one request to a node and print the reply");
  std::string to, op, args = "{}", data_file, out_file;
  call->add_option("--to", to, "host:port")->required();
  call->add_option("--op", op, "Operation")->required();
  call->add_option("--args", args, "Arguments as JSON");
  call->add_option("--data", data_file, "Payload file")->check(CLI::ExistingFile);
  call->add_option("--out", out_file, "Write a returned payload here");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*sim) {
      if (!cluster_file.empty()) {
        // File first, then explicit flags on top.
        ClusterSpec from_file = cluster_spec_from_json(read_json_file(cluster_file));
        auto given = [&](const char* name) { return sim->count(name) > 0; };
        if (given("--fogs")) from_file.fog_count = cluster.fog_count;
        if (given("--edges-per-fog")) from_file.edges_per_fog = cluster.edges_per_fog;
        if (given("--rel-mean")) from_file.rel_mean = cluster.rel_mean;
        if (given("--rel-std")) from_file.rel_std = cluster.rel_std;
        if (given("--capacity")) from_file.edge_capacity = cluster.edge_capacity;
        if (given("--capacity-jitter")) from_file.capacity_jitter = cluster.capacity_jitter;
        if (given("--heartbeat")) from_file.heartbeat_interval = cluster.heartbeat_interval;
        if (given("--seed")) from_file.seed = cluster.seed;
        cluster = from_file;
      }
      if (buddies >= 0) cluster.buddies = buddies;
      if (sim->count("--transport") > 0 || cluster_file.empty()) {
        cluster.transport = transport == "socket" ? TransportKind::socket : TransportKind::simulated;
      }
      SimCluster c(cluster);
      bool reported = false;
      for (auto* sub : sim->get_subcommands()) {
        const std::string name = sub->get_name();
        if (name == "workload") {
          WorkloadSpec w = spec_file.empty() ? WorkloadSpec{} : workload_spec_from_json(read_json_file(spec_file));
          if (spec_file.empty() || workload->count("--clients")) w.clients = wl.workload.clients;
          if (spec_file.empty() || workload->count("--blocks")) w.blocks_per_client = wl.workload.blocks_per_client;
          if (spec_file.empty() || workload->count("--ops")) w.ops_per_client = wl.workload.ops_per_client;
          if (spec_file.empty() || workload->count("--lease")) w.leasing = wl.workload.leasing;
          if (spec_file.empty() || workload->count("--lease-batch")) w.lease_batch = wl.workload.lease_batch;
          if (spec_file.empty() || workload->count("--shared-stream")) w.shared_stream = wl.workload.shared_stream;
          if (spec_file.empty() || workload->count("--min-rep")) w.min_replicas = wl.workload.min_replicas;
          if (spec_file.empty() || workload->count("--max-rep")) w.max_replicas = wl.workload.max_replicas;
          if (spec_file.empty() || workload->count("--meta-streams")) w.meta_streams = wl.workload.meta_streams;
          if (size > 0) w.block_sizes = {{size, 1.0}};
          if (!sizes_list.empty()) w.block_sizes = parse_weighted<std::uint64_t>(sizes_list);
          if (reliability > 0) w.reliabilities = {{reliability, 1.0}};
          if (!rel_list.empty()) w.reliabilities = parse_weighted<double>(rel_list);
          if (!mix.empty()) w.mix = parse_mix(mix);
          if (workload->count("--seed")) w.seed = wl_seed;
          c.run_workload(w);
        } else if (name == "fail") {
          const auto id = c.fail_edge(fl.policy == "id" ? FailurePolicy::specific : FailurePolicy::least_reliable,
                                      fl.policy == "id" ? std::optional<EdgeId>(EdgeId(fl.edge)) : std::nullopt);
          std::cerr << "failed edge " << id.value << "\n";
          if (fl.wait) {
            const auto& rec = c.await_recovery();
            std::cerr << "recovered " << rec.recovery->recovered_count() << "/" << rec.recovery->blocks.size()
                      << " blocks; audit " << (rec.audit->passed ? "passed" : "FAILED") << "\n";
          }
        } else if (name == "report") {
          const json r = c.report();
          const std::string text = rp.format == "json" ? r.dump(2) + "\n" : report_table(r);
          if (rp.out.empty()) {
            std::cout << text;
          } else {
            std::ofstream(rp.out) << text;
          }
          reported = true;
        }
      }
      if (!reported) std::cout << c.report().dump(2) << "\n";
      return 0;
    }
    if (*serve) {
      std::signal(SIGINT, [](int) { g_stop = true; });
      std::signal(SIGTERM, [](int) { g_stop = true; });
      const json c = read_json_file(serve_config);
      return role == "fog" ? serve_fog(c, serve_duration) : serve_edge(c, serve_duration);
    }
    if (*call) {
      Message m;
      m.op = op;
      m.args = json::parse(args);
      if (!data_file.empty()) {
        std::ifstream in(data_file, std::ios::binary);
        m.payload = Payload(std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {}));
      }
      SocketTransport t;
      const Reply r = t.call(to, m);
      json out = envelope(r);
      std::cout << out.dump(2) << "\n";
      if (r.payload && !out_file.empty()) {
        std::ofstream(out_file, std::ios::binary)
            .write(reinterpret_cast<const char*>(r.payload->data()), static_cast<std::streamsize>(r.payload->size()));
      }
      return r.ok ? 0 : 1;
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const json::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
