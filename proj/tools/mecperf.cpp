// mecperf: one binary for every role. Run `mecperf <command> --help`.

#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <pthread.h>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <spdlog/sinks/stdout_sinks.h>
#include <spdlog/spdlog.h>

#include "mecperf/aggregator/service.hpp"
#include "mecperf/fixtures/synthetic_traces.hpp"
#include "mecperf/passive/analyzer.hpp"
#include "mecperf/probe/responder.hpp"
#include "mecperf/sim/simulator.hpp"
#include "mecperf/trace/repository.hpp"

using namespace mecperf;

namespace {

// Thrown for bad flag combinations detected after parsing; exit status 2.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Repeated "field=value" terms in the REST filter vocabulary.
aggregator::QueryFilter parse_terms(const std::vector<std::string>& terms) {
  std::multimap<std::string, std::string> params;
  for (const auto& t : terms) {
    const auto eq = t.find('=');
    if (eq == std::string::npos || eq == 0) throw UsageError("expected field=value, got '" + t + "'");
    params.emplace(t.substr(0, eq), t.substr(eq + 1));
  }
  try {
    return aggregator::from_params(params);
  } catch (const aggregator::ValidationError& e) {
    throw UsageError(e.what());
  }
}

core::DescriptorQuery parse_query(const std::vector<std::string>& terms) {
  const auto f = parse_terms(terms);
  if (f.from_us || f.to_us || f.run_id) throw UsageError("time range and run_id do not apply here");
  return f.descriptor;
}

std::string read_input(const std::string& path) {
  if (path == "-") return {std::istreambuf_iterator<char>(std::cin), {}};
  return trace::read_file(path);
}

void write_output(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text << std::flush;
    return;
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  f << text;
  if (!f) throw std::runtime_error("cannot write " + path);
}

// Blocks SIGINT/SIGTERM in every thread started afterwards, so that the
// main thread can sigwait() for them.
sigset_t block_stop_signals() {
  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &set, nullptr);
  return set;
}

int wait_for_signal(const sigset_t& set) {
  int sig = 0;
  sigwait(&set, &sig);
  return sig;
}

struct Sinks {
  std::string aggregator_url;
  std::string token;
  std::string db;
  std::unique_ptr<aggregator::Client> client;
  std::unique_ptr<aggregator::Store> store;
  std::unique_ptr<aggregator::StoreSink> store_sink;

  core::MeasurementSink* open(const std::string& submitter) {
    if (!aggregator_url.empty() && !db.empty()) throw UsageError("--aggregator and --db are exclusive");
    if (!aggregator_url.empty()) {
      client = std::make_unique<aggregator::Client>(aggregator_url, aggregator::ClientOptions{.token = token,
                                                                                            .submitter = submitter});
      return client.get();
    }
    if (!db.empty()) {
      store = std::make_unique<aggregator::Store>(db);
      store_sink = std::make_unique<aggregator::StoreSink>(*store, submitter);
      return store_sink.get();
    }
    return nullptr;
  }

  void add_flags(CLI::App* cmd) {
    cmd->add_option("--aggregator", aggregator_url, "Aggregator base URL, e.g. http://127.0.0.1:8080")
        ->envname("MECPERF_AGGREGATOR");
    cmd->add_option("--token", token, "Bearer token for the aggregator")->envname("MECPERF_TOKEN");
    cmd->add_option("--db", db, "Write straight into a local store instead of a service");
  }
};

struct DescriptorFlags {
  std::string segment = "access_mec";
  std::string technology = "wifi";
  double cross_traffic = 0.0;

  void add(CLI::App* cmd) {
    cmd->add_option("--segment", segment, "access_mec | mec_cloud | access_cloud")->capture_default_str();
    cmd->add_option("--technology", technology, "wifi | lte")->capture_default_str();
    cmd->add_option("--cross-traffic", cross_traffic, "Cross-traffic level in Mbps")->capture_default_str();
  }
};

// ---------------------------------------------------------------- probe

struct ProbeArgs {
  std::string peer;
  std::string role = "client";
  std::string transport;
  std::string metric = "tcp_bandwidth";
  std::string direction = "upstream";
  std::uint32_t count = 0;
  std::uint32_t size = 0;
  std::uint32_t repetitions = 10;
  std::uint32_t timeout_ms = 2000;
  std::string output;
  DescriptorFlags desc;
  Sinks sinks;
};

int run_probe(ProbeArgs& a) {
  probe::ProbeSession s;
  s.local_role = probe::parse_role(a.role);
  s.peer = net::Address::parse(a.peer);
  s.segment = core::parse_segment(a.desc.segment);
  s.access_technology = core::parse_access_technology(a.desc.technology);
  s.cross_traffic_mbps = a.desc.cross_traffic;
  s.timeout = std::chrono::milliseconds(a.timeout_ms);
  const auto metric = core::parse_metric_type(a.metric);
  const auto direction = core::parse_direction(a.direction);
  auto* sink = a.sinks.open("mecperf-probe");

  std::vector<core::MeasurementRecord> records;
  switch (metric) {
    case core::MetricType::tcp_bandwidth: {
      probe::BandwidthProbeConfig cfg;
      if (a.count) cfg.num_packets = a.count;
      if (a.size) cfg.packet_size = a.size;
      cfg.repetitions = a.repetitions;
      s.transport = probe::Transport::tcp;
      records = probe::measure_stream_bandwidth(s, cfg, direction);
      break;
    }
    case core::MetricType::udp_capacity: {
      probe::CapacityProbeConfig cfg;
      if (a.count) cfg.num_pairs = a.count;
      if (a.size) cfg.packet_size = a.size;
      s.transport = probe::Transport::udp;
      auto r = probe::measure_packet_pair_capacity(s, cfg, direction);
      if (r.discarded) spdlog::warn("{} packet pairs discarded", r.discarded);
      records = std::move(r.records);
      break;
    }
    case core::MetricType::tcp_latency:
    case core::MetricType::udp_latency: {
      probe::LatencyProbeConfig cfg;
      if (a.count) cfg.num_probes = a.count;
      if (a.size) cfg.payload_size = a.size;
      s.transport = metric == core::MetricType::tcp_latency ? probe::Transport::tcp : probe::Transport::udp;
      if (!a.transport.empty() && probe::parse_transport(a.transport) != s.transport) {
        throw UsageError("--transport contradicts --metric");
      }
      auto r = probe::measure_echo_latency(s, cfg, direction);
      if (r.timeouts) spdlog::warn("{} echo probes timed out", r.timeouts);
      records = std::move(r.records);
      break;
    }
    default:
      throw UsageError("probe measures tcp_bandwidth, udp_capacity, tcp_latency or udp_latency");
  }
  write_output(a.output, core::encode_ndjson(records));
  if (sink) {
    for (const auto& id : sink->submit(records, core::Method::active)) spdlog::info("submitted batch {}", id);
  }
  return 0;
}

// ---------------------------------------------------------------- responders

int run_responder(const std::string& bind, probe::Role role) {
  const auto set = block_stop_signals();
  probe::Responder::Options opts;
  opts.bind = net::Address::parse(bind);
  opts.role = role;
  probe::Responder responder(opts);
  const auto port = responder.start();
  std::cout << "listening on " << opts.bind.host << ":" << port << std::endl;
  const int sig = wait_for_signal(set);
  spdlog::info("signal {}, stopping", sig);
  responder.stop();
  return 0;
}

// ---------------------------------------------------------------- analyze

struct AnalyzeArgs {
  std::vector<std::string> captures;
  std::string filter;
  double bin_width = 0.5;
  std::uint32_t num_clients = 0;
  std::string dump_csv;
  std::string output;
  DescriptorFlags desc;
  Sinks sinks;
};

int run_analyze(AnalyzeArgs& a) {
  core::TraceDescriptor d;
  d.method = core::Method::passive;
  d.metric = core::MetricType::passive_throughput;
  d.segment = core::parse_segment(a.desc.segment);
  d.access_technology = core::parse_access_technology(a.desc.technology);
  d.cross_traffic_mbps = a.desc.cross_traffic;
  if (a.num_clients) d.num_clients = a.num_clients;
  passive::AnalysisOptions opts;
  opts.filter = passive::parse_filter(a.filter);
  opts.bin_width_s = a.bin_width;
  auto* sink = a.sinks.open("mecperf-analyze");

  std::vector<std::vector<std::uint8_t>> bytes;
  for (const auto& path : a.captures) {
    const auto text = read_input(path);
    bytes.emplace_back(text.begin(), text.end());
  }
  const auto results = passive::analyze_captures(bytes, d, opts);
  int status = 0;
  std::string ndjson;
  std::string csv;
  for (std::size_t i = 0; i < results.size(); ++i) {
    const auto& r = results[i];
    for (const auto& w : r.warnings) spdlog::warn("{}: {}", a.captures[i], w);
    for (const auto& e : r.errors) {
      spdlog::error("{}: {}", a.captures[i], e);
      status = 1;
    }
    spdlog::info("{}: {} flows, {} records, {} packets skipped", a.captures[i], r.flows, r.records.size(),
                 r.skipped_packets);
    ndjson += core::encode_ndjson(r.records);
    if (!a.dump_csv.empty()) {
      auto part = passive::dump_csv(r);
      // One header for the concatenation.
      if (!csv.empty()) part.erase(0, part.find('\n') + 1);
      csv += part;
    }
    if (sink && !r.records.empty()) {
      for (const auto& id : sink->submit(r.records, core::Method::passive)) spdlog::info("submitted batch {}", id);
    }
  }
  if (!a.dump_csv.empty()) write_output(a.dump_csv, csv);
  if (!a.output.empty() || a.dump_csv != "-") write_output(a.output, ndjson);
  return status;
}

// ---------------------------------------------------------------- aggregate / export / import

int run_aggregate(const std::string& bind, const std::string& db, const std::string& token) {
  const auto set = block_stop_signals();
  const auto address = net::Address::parse(bind);
  aggregator::Store store(db);
  aggregator::Server server(store, aggregator::ServerOptions{.token = token});
  const int port = server.start(address.host, address.port);
  std::cout << "listening on " << address.host << ":" << port << std::endl;
  const int sig = wait_for_signal(set);
  spdlog::info("signal {}, stopping", sig);
  server.stop();
  return 0;
}

int run_export(Sinks& src, const std::vector<std::string>& terms, const std::string& out) {
  const auto filter = parse_terms(terms);
  if (!src.aggregator_url.empty() == !src.db.empty()) throw UsageError("give exactly one of --aggregator and --db");
  trace::TraceBundle bundle;
  if (!src.db.empty()) {
    aggregator::Store store(src.db);
    bundle = aggregator::export_bundle(store, filter);
  } else {
    aggregator::Client client(src.aggregator_url, aggregator::ClientOptions{.token = src.token});
    bundle = client.export_bundle(filter);
  }
  const auto written = trace::write_bundle(bundle, out);
  spdlog::info("exported {} runs to {}", bundle.manifest.size(), out);
  std::cout << written.size() << " files written to " << out << "\n";
  return 0;
}

struct ImportArgs {
  std::string csv;
  std::vector<std::string> descriptor;
  std::string run_id;
  std::string unit;
  std::string output;
  Sinks sinks;
};

int run_import(ImportArgs& a) {
  const auto q = parse_query(a.descriptor);
  if (!q.metric) throw UsageError("--set needs metric=...");
  core::TraceDescriptor d;
  d.method = q.method.value_or(core::Method::active);
  d.metric = *q.metric == core::MetricType::self_metric ? core::MetricKind::self_metric(q.label.value_or(""))
                                                        : core::MetricKind(*q.metric);
  if (q.segment) d.segment = *q.segment;
  if (q.direction) d.direction = *q.direction;
  if (q.access_technology) d.access_technology = *q.access_technology;
  if (q.cross_traffic_mbps) d.cross_traffic_mbps = *q.cross_traffic_mbps;
  d.num_clients = q.num_clients;
  d.validate();
  const std::string unit = a.unit.empty() ? std::string(core::canonical_unit(d.metric.type())) : a.unit;
  const auto records = trace::import_csv(read_input(a.csv), d, a.run_id, unit);
  auto* sink = a.sinks.open("mecperf-import");
  if (sink) {
    for (const auto& id : sink->submit(records, d.method)) spdlog::info("submitted batch {}", id);
  }
  if (!a.output.empty()) trace::write_bundle(trace::build_bundle(records), a.output);
  if (!sink && a.output.empty()) write_output("-", core::encode_ndjson(records));
  return 0;
}

// ---------------------------------------------------------------- replay

struct ReplayArgs {
  std::string repo;
  std::vector<std::string> match;
  std::uint64_t seed = 0;
  bool circular = false;
  double from = 0.0;
  double to = -1.0;
  double step = 1.0;
  std::string output;
};

int run_replay(const ReplayArgs& a) {
  if (!(a.step > 0)) throw UsageError("--step must be positive");
  const auto repo = trace::TraceRepository::open(a.repo);
  const auto t = trace::open_trace(repo, parse_query(a.match), a.seed, a.circular);
  const double to = a.to < 0 ? t.duration_seconds() : a.to;
  std::string csv = "t_s,bandwidth_mbps,rtt_ms\n";
  const bool bw = !t.bandwidth_series().empty();
  const bool rtt = !t.rtt_series().empty();
  const auto n = static_cast<std::int64_t>(std::floor((to - a.from) / a.step + 1e-9));
  for (std::int64_t i = 0; i <= n; ++i) {
    const double x = a.from + static_cast<double>(i) * a.step;
    csv += fmt::format("{},{},{}\n", x, bw ? fmt::format("{}", t.get_bandwidth(x)) : "",
                       rtt ? fmt::format("{}", t.get_rtt(x)) : "");
  }
  write_output(a.output, csv);
  return 0;
}

// ---------------------------------------------------------------- simulate

struct SimulateArgs {
  std::string repo;
  sim::SimulationConfig config;
  std::vector<double> gamma{0.0, 0.1, 0.2, 0.3, 0.4, 0.5};
  std::vector<std::string> op1{"metric=tcp_latency", "access_technology=wifi"};
  std::vector<std::string> op2{"metric=tcp_latency", "access_technology=lte"};
  bool serial = false;
  std::string output;
};

int run_simulate(SimulateArgs& a) {
  a.config.trace_query_op1 = parse_query(a.op1);
  a.config.trace_query_op2 = parse_query(a.op2);
  const auto repo = trace::TraceRepository::open(a.repo);
  const auto study = a.serial ? sim::run_study_serial(a.config, a.gamma, repo) : sim::run_study(a.config, a.gamma, repo);
  write_output(a.output, sim::to_csv(study));
  return 0;
}

// ---------------------------------------------------------------- fixtures

int run_fixtures(const std::string& kind, std::uint64_t seed, const std::string& out) {
  if (kind == "synthetic-traces") {
    fixtures::write_trace_repository(fixtures::synthetic_traces({.seed = seed}), out);
  } else if (kind == "bimodal-rtt-pool") {
    fixtures::write_trace_repository(fixtures::bimodal_rtt_pool({.seed = seed}), out);
  } else if (kind == "synthetic-pcap") {
    fixtures::write_pcap_fixtures(out, seed);
  } else {
    throw UsageError("unknown fixture kind " + kind);
  }
  std::cout << kind << " written to " << out << "\n";
  return 0;
}

// ---------------------------------------------------------------- profile

// Profile file:
//   {"items": [{"target": "observer" | "remote", "metric": "tcp_bandwidth",
//               "direction": "upstream", "count": 1024, "size": 1420,
//               "repetitions": 10, "segment": "access_mec"}, ...]}
// target observer defaults to segment access_mec, remote to access_cloud.
struct ProfileArgs {
  std::string profile = "default";
  std::string observer = "127.0.0.1:9100";
  std::string remote = "127.0.0.1:9200";
  bool dry_run = false;
  std::string output;
  DescriptorFlags desc;
  Sinks sinks;
};

std::vector<probe::PlanItem> load_profile(const ProfileArgs& a) {
  const auto observer = net::Address::parse(a.observer);
  const auto remote = net::Address::parse(a.remote);
  const auto technology = core::parse_access_technology(a.desc.technology);
  if (a.profile == "default") return probe::default_plan(observer, remote, technology, a.desc.cross_traffic);
  if (!std::filesystem::is_regular_file(a.profile)) throw UsageError("profile file not found: " + a.profile);
  const auto j = nlohmann::json::parse(trace::read_file(a.profile));
  std::vector<probe::PlanItem> plan;
  for (const auto& item : j.at("items")) {
    const std::string target = item.value("target", "observer");
    if (target != "observer" && target != "remote") throw UsageError("profile target must be observer or remote");
    probe::PlanItem p;
    p.session.peer = target == "observer" ? observer : remote;
    p.session.segment = core::parse_segment(
        item.value("segment", target == "observer" ? std::string("access_mec") : std::string("access_cloud")));
    p.session.access_technology = technology;
    p.session.cross_traffic_mbps = a.desc.cross_traffic;
    p.direction = core::parse_direction(item.value("direction", "upstream"));
    const auto metric = core::parse_metric_type(item.at("metric").get<std::string>());
    if (metric == core::MetricType::tcp_bandwidth) {
      probe::BandwidthProbeConfig c;
      c.num_packets = item.value("count", c.num_packets);
      c.packet_size = item.value("size", c.packet_size);
      c.repetitions = item.value("repetitions", c.repetitions);
      p.config = c;
    } else if (metric == core::MetricType::udp_capacity) {
      probe::CapacityProbeConfig c;
      c.num_pairs = item.value("count", c.num_pairs);
      c.packet_size = item.value("size", c.packet_size);
      p.session.transport = probe::Transport::udp;
      p.config = c;
    } else if (metric == core::MetricType::tcp_latency || metric == core::MetricType::udp_latency) {
      probe::LatencyProbeConfig c;
      c.num_probes = item.value("count", c.num_probes);
      c.payload_size = item.value("size", c.payload_size);
      if (metric == core::MetricType::udp_latency) p.session.transport = probe::Transport::udp;
      p.config = c;
    } else {
      throw UsageError("profile metric must be an active metric");
    }
    plan.push_back(p);
  }
  return plan;
}

std::string describe(const probe::PlanItem& p) {
  std::string what = std::visit(
      [&](const auto& c) -> std::string {
        using T = std::decay_t<decltype(c)>;
        if constexpr (std::is_same_v<T, probe::BandwidthProbeConfig>) {
          return fmt::format("tcp_bandwidth packets={} size={} repetitions={}", c.num_packets, c.packet_size,
                             c.repetitions);
        } else if constexpr (std::is_same_v<T, probe::CapacityProbeConfig>) {
          return fmt::format("udp_capacity pairs={} size={}", c.num_pairs, c.packet_size);
        } else {
          return fmt::format("{}_latency probes={}", probe::to_string(p.session.transport), c.num_probes);
        }
      },
      p.config);
  return fmt::format("{} {} {} {}", p.session.peer.str(), core::to_string(p.session.segment),
                     core::to_string(p.direction), what);
}

int run_profile(ProfileArgs& a) {
  const auto plan = load_profile(a);
  if (a.dry_run) {
    for (std::size_t i = 0; i < plan.size(); ++i) std::cout << i << " " << describe(plan[i]) << "\n";
    return 0;
  }
  auto* sink = a.sinks.open("mecperf-profile");
  const auto result = probe::run_active_suite(plan, sink);
  for (const auto& e : result.errors) {
    spdlog::error("item {}: {}", e.item < plan.size() ? describe(plan[e.item]) : "submission", e.message);
  }
  spdlog::info("{} records, {} batches, {} errors", result.records.size(), result.batch_ids.size(),
               result.errors.size());
  if (!a.output.empty()) write_output(a.output, core::encode_ndjson(result.records));
  return result.errors.empty() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"MEC network measurement, aggregation, trace replay and federation simulation"};
  app.require_subcommand(1);
  app.set_config("--config", "", "TOML or INI file with option defaults ([command] sections)");
  std::string log_level = "info";
  app.add_option("--log-level", log_level, "trace | debug | info | warn | error | off")
      ->envname("MECPERF_LOG_LEVEL")
      ->capture_default_str();
  auto* verbose = app.add_flag("-v,--verbose", "Same as --log-level debug");

  ProbeArgs probe_args;
  auto* probe_cmd = app.add_subcommand("probe", "Run one active measurement against a responder");
  probe_cmd->add_option("--peer", probe_args.peer, "Responder host:port")->required();
  probe_cmd->add_option("--role", probe_args.role, "client | observer (initiator role)")->capture_default_str();
  probe_cmd->add_option("--metric", probe_args.metric, "tcp_bandwidth | udp_capacity | tcp_latency | udp_latency")
      ->capture_default_str();
  probe_cmd->add_option("--transport", probe_args.transport, "tcp | udp; implied by the metric");
  probe_cmd->add_option("--direction", probe_args.direction, "upstream | downstream")->capture_default_str();
  probe_cmd->add_option("--count", probe_args.count, "Packets, pairs or probes (metric default when 0)");
  probe_cmd->add_option("--size", probe_args.size, "Packet or payload size in bytes (metric default when 0)");
  probe_cmd->add_option("--repetitions", probe_args.repetitions, "Bandwidth repetitions")->capture_default_str();
  probe_cmd->add_option("--timeout-ms", probe_args.timeout_ms, "I/O and probe timeout")->capture_default_str();
  probe_cmd->add_option("-o,--output", probe_args.output, "NDJSON output file (stdout by default)");
  probe_args.desc.add(probe_cmd);
  probe_args.sinks.add_flags(probe_cmd);

  std::string observe_bind = "0.0.0.0:9100";
  auto* observe_cmd = app.add_subcommand("observe", "Serve as the Observer (MEC-side) responder");
  observe_cmd->add_option("--bind", observe_bind, "host:port; port 0 picks a free port")->capture_default_str();
  std::string remote_bind = "0.0.0.0:9200";
  auto* remote_cmd = app.add_subcommand("remote", "Serve as the Remote Server (cloud-side) responder");
  remote_cmd->add_option("--bind", remote_bind, "host:port; port 0 picks a free port")->capture_default_str();

  AnalyzeArgs analyze_args;
  auto* analyze_cmd = app.add_subcommand("analyze", "Extract throughput and ACK latency from pcap files");
  analyze_cmd->add_option("captures", analyze_args.captures, "Classic pcap files ('-' for stdin)")->required();
  analyze_cmd->add_option("--filter", analyze_args.filter, "e.g. \"host 10.0.0.2 and port 8080\"");
  analyze_cmd->add_option("--bin-width", analyze_args.bin_width, "Throughput bin width in seconds")
      ->capture_default_str();
  analyze_cmd->add_option("--num-clients", analyze_args.num_clients, "Client count stored in the descriptor");
  analyze_cmd->add_option("--dump-csv", analyze_args.dump_csv, "Write bins and latency samples as CSV ('-' for stdout)");
  analyze_cmd->add_option("-o,--output", analyze_args.output, "NDJSON records file (stdout by default)");
  analyze_args.desc.add(analyze_cmd);
  analyze_args.sinks.add_flags(analyze_cmd);

  std::string agg_bind = "127.0.0.1:8080";
  std::string agg_db = "mecperf.db";
  std::string agg_token;
  auto* aggregate_cmd = app.add_subcommand("aggregate", "Run the aggregator REST service");
  aggregate_cmd->add_option("--bind", agg_bind, "host:port; port 0 picks a free port")->capture_default_str();
  aggregate_cmd->add_option("--db", agg_db, "SQLite database path")->envname("MECPERF_DB")->capture_default_str();
  aggregate_cmd->add_option("--token", agg_token, "Require this bearer token")->envname("MECPERF_TOKEN");

  Sinks export_src;
  std::vector<std::string> export_match;
  std::string export_out;
  auto* export_cmd = app.add_subcommand("export", "Export stored records as a trace repository");
  export_cmd->add_option("--aggregator", export_src.aggregator_url, "Aggregator base URL")->envname("MECPERF_AGGREGATOR");
  export_cmd->add_option("--token", export_src.token, "Bearer token")->envname("MECPERF_TOKEN");
  export_cmd->add_option("--db", export_src.db, "Read a local store directly");
  export_cmd->add_option("--match", export_match, "field=value filter term, repeatable (REST parameter names)");
  export_cmd->add_option("--out", export_out, "Destination directory")->required();

  ImportArgs import_args;
  auto* import_cmd = app.add_subcommand("import", "Convert a timestamp,value CSV into records of one run");
  import_cmd->add_option("csv", import_args.csv, "CSV file ('-' for stdin)")->required();
  import_cmd->add_option("--set", import_args.descriptor, "Descriptor field=value, repeatable; metric is required")
      ->required();
  import_cmd->add_option("--run-id", import_args.run_id, "Run id of the imported records")->required();
  import_cmd->add_option("--unit", import_args.unit, "Unit of the values (canonical unit by default)");
  import_cmd->add_option("--out", import_args.output, "Write a trace repository here");
  import_args.sinks.add_flags(import_cmd);

  ReplayArgs replay_args;
  auto* replay_cmd = app.add_subcommand("replay", "Print a trace sweep as CSV");
  replay_cmd->add_option("--repo", replay_args.repo, "Trace repository directory")->envname("MECPERF_REPO")->required();
  replay_cmd->add_option("--match", replay_args.match, "field=value descriptor term, repeatable");
  replay_cmd->add_option("--seed", replay_args.seed, "File selection seed")->capture_default_str();
  replay_cmd->add_flag("--circular", replay_args.circular, "Wrap time modulo the trace duration");
  replay_cmd->add_option("--from", replay_args.from, "First query time, seconds")->capture_default_str();
  replay_cmd->add_option("--to", replay_args.to, "Last query time, seconds (trace duration by default)");
  replay_cmd->add_option("--step", replay_args.step, "Sweep step, seconds")->capture_default_str();
  replay_cmd->add_option("-o,--output", replay_args.output, "CSV file (stdout by default)");

  SimulateArgs sim_args;
  auto* sim_cmd = app.add_subcommand("simulate", "Run the federation migration study");
  sim_cmd->add_option("--repo", sim_args.repo, "Trace repository directory")->envname("MECPERF_REPO")->required();
  sim_cmd->add_option("--gamma", sim_args.gamma, "Migration fractions")->delimiter(',')->capture_default_str();
  sim_cmd->add_option("--clients", sim_args.config.num_clients, "Number of clients")->capture_default_str();
  sim_cmd->add_option("--mean-period", sim_args.config.mean_period, "Mean active/inactive period, slots")
      ->capture_default_str();
  sim_cmd->add_option("--slots", sim_args.config.num_slots, "Slots per replication")->capture_default_str();
  sim_cmd->add_option("--replications", sim_args.config.num_replications, "Replications per gamma")
      ->capture_default_str();
  sim_cmd->add_option("--seed", sim_args.config.seed, "Study seed")->capture_default_str();
  sim_cmd->add_option("--quantiles", sim_args.config.quantiles, "RTT quantiles")->delimiter(',')->capture_default_str();
  sim_cmd->add_option("--seconds-per-slot", sim_args.config.seconds_per_slot, "Trace seconds per slot")
      ->capture_default_str();
  sim_cmd->add_option("--op1", sim_args.op1, "First operator's trace query, field=value terms")
      ->delimiter(',')
      ->capture_default_str();
  sim_cmd->add_option("--op2", sim_args.op2, "Second operator's trace query, field=value terms")
      ->delimiter(',')
      ->capture_default_str();
  sim_cmd->add_flag("--serial", sim_args.serial, "Run replications one at a time");
  sim_cmd->add_option("-o,--output", sim_args.output, "CSV file (stdout by default)");

  std::string fixture_kind;
  std::uint64_t fixture_seed = 42;
  std::string fixture_out;
  auto* fixtures_cmd = app.add_subcommand("fixtures", "Generate deterministic synthetic fixtures");
  fixtures_cmd->add_option("kind", fixture_kind, "synthetic-pcap | synthetic-traces | bimodal-rtt-pool")
      ->required()
      ->check(CLI::IsMember({"synthetic-pcap", "synthetic-traces", "bimodal-rtt-pool"}));
  fixtures_cmd->add_option("--seed", fixture_seed, "Generator seed")->capture_default_str();
  fixtures_cmd->add_option("--out", fixture_out, "Destination directory")->required();

  ProfileArgs profile_args;
  auto* profile_cmd = app.add_subcommand("profile", "Run an experiment profile (a plan of active probes)");
  profile_cmd->add_option("--profile", profile_args.profile, "'default' or a JSON profile file")->capture_default_str();
  profile_cmd->add_option("--observer", profile_args.observer, "Observer responder host:port")->capture_default_str();
  profile_cmd->add_option("--remote", profile_args.remote, "Remote Server responder host:port")->capture_default_str();
  profile_cmd->add_flag("--dry-run", profile_args.dry_run, "Print the expanded plan and exit");
  profile_cmd->add_option("-o,--output", profile_args.output, "Also write the records as NDJSON");
  profile_args.desc.add(profile_cmd);
  profile_args.sinks.add_flags(profile_cmd);

  CLI11_PARSE(app, argc, argv);

  auto logger = spdlog::stderr_logger_st("mecperf");
  logger->set_pattern("%H:%M:%S.%e %^%l%$ %v");
  spdlog::set_default_logger(logger);
  spdlog::set_level(verbose->count() ? spdlog::level::debug : spdlog::level::from_str(log_level));

  try {
    if (*probe_cmd) return run_probe(probe_args);
    if (*observe_cmd) return run_responder(observe_bind, probe::Role::observer);
    if (*remote_cmd) return run_responder(remote_bind, probe::Role::remote_server);
    if (*analyze_cmd) return run_analyze(analyze_args);
    if (*aggregate_cmd) return run_aggregate(agg_bind, agg_db, agg_token);
    if (*export_cmd) return run_export(export_src, export_match, export_out);
    if (*import_cmd) return run_import(import_args);
    if (*replay_cmd) return run_replay(replay_args);
    if (*sim_cmd) return run_simulate(sim_args);
    if (*fixtures_cmd) return run_fixtures(fixture_kind, fixture_seed, fixture_out);
    if (*profile_cmd) return run_profile(profile_args);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const core::DomainError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const trace::DescriptorNotFound& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
