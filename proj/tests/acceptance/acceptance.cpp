// Acceptance suite: one PASS/FAIL line per criterion, exit status 0 iff all
// pass. Every check compares against an oracle written here, independently
// of the library code under test.

#include <poll.h>
#include <signal.h>
#include <sys/socket.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <thread>

#include "../unit/random_records.hpp"
#include "../unit/sim_reference.hpp"
#include "mecperf/aggregator/service.hpp"
#include "mecperf/fixtures/synthetic_capture.hpp"
#include "mecperf/fixtures/synthetic_traces.hpp"
#include "mecperf/harness/shaper.hpp"
#include "mecperf/passive/analyzer.hpp"
#include "mecperf/probe/responder.hpp"
#include "mecperf/sim/simulator.hpp"
#include "mecperf/sim/stats.hpp"

using namespace mecperf;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("mecperf-accept-" + core::make_id());
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::string fmt2(double v) {
  char b[32];
  std::snprintf(b, sizeof b, "%.2f", v);
  return b;
}

double plain_median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::vector<double> values_of(const std::vector<core::MeasurementRecord>& records) {
  std::vector<double> v;
  for (const auto& r : records) v.push_back(r.value);
  return v;
}

probe::ProbeSession session_to(const net::Address& peer, probe::Transport t) {
  probe::ProbeSession s;
  s.peer = peer;
  s.transport = t;
  return s;
}

// ------------------------------------------------------------------ 1

// iperf-style bulk transfer: one TCP connection, `bytes` of payload, rate
// measured at the receiver from the end of its first read to its last.
class BulkEndpoint {
 public:
  BulkEndpoint(bool upstream, std::size_t bytes) : upstream_(upstream), bytes_(bytes) {
    listener_ = net::listen_tcp({"127.0.0.1", 0});
    address_ = net::local_address(listener_);
    thread_ = std::thread([this] { serve(); });
  }
  ~BulkEndpoint() {
    if (thread_.joinable()) thread_.join();
  }
  net::Address address() const { return address_; }
  double server_rate() {
    thread_.join();
    return rate_;
  }

  static double receive(const net::Fd& fd) {
    std::vector<std::uint8_t> buf(64 * 1024);
    std::size_t after_first = 0;
    std::optional<net::Clock::time_point> first;
    net::Clock::time_point last{};
    while (true) {
      const auto n = net::recv_some(fd, buf, std::chrono::seconds(20));
      if (n == 0) break;
      const auto now = net::Clock::now();
      if (!first) {
        first = now;
      } else {
        after_first += n;
        last = now;
      }
    }
    const double secs = std::chrono::duration<double>(last - *first).count();
    return static_cast<double>(after_first) * 8.0 / secs / 1e6;
  }

  static void send(const net::Fd& fd, std::size_t bytes) {
    std::vector<std::uint8_t> buf(64 * 1024, 0x5a);
    while (bytes > 0) {
      const auto n = std::min(bytes, buf.size());
      net::send_all(fd, std::span(buf.data(), n));
      bytes -= n;
    }
    ::shutdown(fd.get(), SHUT_WR);
  }

 private:
  void serve() {
    auto conn = net::accept_tcp(listener_, std::chrono::seconds(20));
    if (!conn) return;
    if (upstream_) {
      rate_ = receive(*conn);
    } else {
      send(*conn, bytes_);
      std::vector<std::uint8_t> sink(1024);
      while (net::recv_some(*conn, sink, std::chrono::seconds(20)) > 0) {
      }
    }
  }

  bool upstream_;
  std::size_t bytes_;
  net::Fd listener_;
  net::Address address_;
  std::thread thread_;
  double rate_ = 0.0;
};

double bulk_oracle(double rate_mbps, bool upstream) {
  const auto bytes = static_cast<std::size_t>(rate_mbps * 1e6 / 8.0 * 1.5);  // about 1.5 s of traffic
  BulkEndpoint endpoint(upstream, bytes);
  harness::ShaperConfig cfg;
  cfg.rate_mbps = rate_mbps;
  harness::Shaper shaper(endpoint.address(), cfg);
  const auto via = shaper.start();
  auto fd = net::connect_tcp(via, std::chrono::seconds(5));
  if (upstream) {
    BulkEndpoint::send(fd, bytes);
    std::vector<std::uint8_t> sink(16);
    while (net::recv_some(fd, sink, std::chrono::seconds(20)) > 0) {
    }
    fd.reset();
    return endpoint.server_rate();
  }
  const double rate = BulkEndpoint::receive(fd);
  fd.reset();
  endpoint.server_rate();
  return rate;
}

Outcome criterion_bandwidth() {
  probe::Responder responder({});
  responder.start();
  Outcome out{true, ""};
  double worst = 0.0;
  for (double rate : {10.0, 20.0, 30.0, 40.0, 50.0}) {
    for (auto dir : {core::Direction::upstream, core::Direction::downstream}) {
      const bool up = dir == core::Direction::upstream;
      const double oracle = bulk_oracle(rate, up);
      harness::ShaperConfig cfg;
      cfg.rate_mbps = rate;
      harness::Shaper shaper(responder.address(), cfg);
      const auto via = shaper.start();
      const auto records = probe::measure_stream_bandwidth(session_to(via, probe::Transport::tcp), {}, dir);
      const double median = plain_median(values_of(records));
      const double err = std::abs(median - oracle) / oracle;
      worst = std::max(worst, err);
      if (records.size() != 10 || err > 0.05) {
        out.pass = false;
        out.detail += " " + fmt2(rate) + (up ? "up" : "down") + ": probe " + fmt2(median) + " vs bulk " + fmt2(oracle);
      }
    }
  }
  out.detail = "10 rates/directions, worst deviation from bulk oracle " + fmt2(100 * worst) + "%" + out.detail;
  return out;
}

// ------------------------------------------------------------------ 2

Outcome criterion_latency() {
  probe::Responder responder({});
  responder.start();
  harness::Shaper base(responder.address(), {});
  const double baseline =
      plain_median(values_of(probe::measure_echo_latency(session_to(base.start(), probe::Transport::tcp), {}).records));
  Outcome out{true, "baseline " + fmt2(baseline) + " ms;"};
  for (int delay : {10, 50, 100}) {
    harness::ShaperConfig cfg;
    cfg.added_rtt = std::chrono::milliseconds(delay);
    harness::Shaper shaper(responder.address(), cfg);
    const auto result = probe::measure_echo_latency(session_to(shaper.start(), probe::Transport::tcp), {});
    const double median = plain_median(values_of(result.records));
    const double err = median - (delay + baseline);
    out.detail += " " + std::to_string(delay) + " ms -> " + fmt2(median) + " (" + fmt2(err) + ")";
    if (result.records.size() != 25 || std::abs(err) > 1.0) out.pass = false;
  }
  return out;
}

// ------------------------------------------------------------------ 3

Outcome criterion_packet_pair() {
  std::mt19937_64 gen(3);
  std::size_t schedules = 0;
  for (int trial = 0; trial < 2000; ++trial) {
    const std::size_t n = 1 + gen() % 60;
    const std::uint32_t size = 64 + static_cast<std::uint32_t>(gen() % 1400);
    std::vector<probe::PairArrival> schedule;
    std::vector<double> per_pair;
    std::int64_t t = static_cast<std::int64_t>(gen() % 1'000'000'000);
    for (std::size_t i = 0; i < n; ++i) {
      const std::int64_t dt = 1000 + static_cast<std::int64_t>(gen() % 5'000'000);
      schedule.push_back({t, t + dt});
      per_pair.push_back(size * 8.0 / (dt * 1e-9) / 1e6);
      t += dt + 10'000'000;
    }
    // Brute-force median: the middle element(s) found by counting.
    double expected = 0;
    std::vector<double> mids;
    for (double a : per_pair) {
      std::size_t below = 0, equal = 0;
      for (double b : per_pair) {
        below += b < a;
        equal += b == a;
      }
      for (std::size_t rank : {(n - 1) / 2, n / 2}) {
        if (below <= rank && rank < below + equal) mids.push_back(a);
      }
    }
    std::sort(mids.begin(), mids.end());
    mids.erase(std::unique(mids.begin(), mids.end()), mids.end());
    expected = mids.size() == 1 ? mids[0] : 0.5 * (mids[0] + mids[1]);
    const auto est = probe::estimate_capacity(size, schedule);
    if (est.median_mbps != expected) return {false, "schedule " + std::to_string(trial) + " differs"};
    const std::int64_t delay = 1 + static_cast<std::int64_t>(gen() % 900'000'000);
    auto shifted = schedule;
    for (auto& p : shifted) {
      *p.first_ns += delay;
      *p.second_ns += delay;
    }
    const auto moved = probe::estimate_capacity(size, shifted);
    if (moved.median_mbps != est.median_mbps || moved.per_pair_mbps != est.per_pair_mbps) {
      return {false, "constant delay changed schedule " + std::to_string(trial)};
    }
    ++schedules;
  }
  return {true, std::to_string(schedules) + " random schedules match exactly, also under constant delay"};
}

// ------------------------------------------------------------------ 4

std::vector<passive::PacketRecord> decode(const std::vector<std::uint8_t>& bytes) {
  return passive::parse_capture(bytes).packets;
}

Outcome criterion_passive() {
  Outcome out{true, ""};
  core::TraceDescriptor d;
  d.method = core::Method::passive;
  d.metric = core::MetricType::passive_throughput;

  // Constant 10 Mbps: every bin within 1 %, bytes conserved.
  // No handshake: bins anchor at the SYN when one is captured, which would
  // leave a partial last bin.
  fixtures::TcpFlowSpec spec;
  spec.handshake = false;
  const auto packets = fixtures::synthetic_tcp_flow(spec);
  const auto result = passive::analyze_capture(fixtures::to_pcap(packets), d);
  std::uint64_t payload_up = 0;
  for (const auto& p : packets) {
    if (p.src == spec.client) payload_up += p.payload_length;
  }
  std::size_t bins = 0;
  double worst = 0;
  double bin_bytes = 0;
  for (const auto& r : result.records) {
    if (r.descriptor.metric.type() != core::MetricType::passive_throughput) continue;
    if (r.descriptor.direction != core::Direction::upstream) continue;
    ++bins;
    bin_bytes += r.value * 1e6 / 8.0 * 0.5;
    worst = std::max(worst, std::abs(r.value - 10.0) / 10.0);
  }
  if (bins == 0 || worst > 0.01) out.pass = false;
  // Byte conservation, counted on the decoded capture and on the bins.
  const auto flows = passive::extract_flows(decode(fixtures::to_pcap(packets)));
  std::uint64_t binned = 0;
  for (const auto& [key, flow] : flows) {
    for (const auto& b : passive::binned_throughput(flow.from_initiator())) binned += b.bytes;
  }
  const bool conserved = binned == payload_up && std::llround(bin_bytes) == static_cast<long long>(payload_up);
  if (!conserved) out.pass = false;
  out.detail = std::to_string(bins) + " bins, worst " + fmt2(100 * worst) + "%, bytes " +
               (conserved ? "conserved" : "NOT conserved") + ";";

  // ACK latency: injected delay plus the baseline fixture's delay.
  auto latency_median = [&](double ack_ms) {
    fixtures::TcpFlowSpec s;
    s.rate_mbps = 2.0;
    s.duration_s = 2.0;
    s.ack_delay_ms = ack_ms;
    const auto r = passive::analyze_capture(fixtures::to_pcap(fixtures::synthetic_tcp_flow(s)), d);
    std::vector<double> v;
    for (const auto& x : r.records) {
      if (x.descriptor.metric.type() == core::MetricType::passive_latency) v.push_back(x.value);
    }
    return v.empty() ? -1.0 : plain_median(v);
  };
  const double baseline_delay = 0.8;
  const double baseline = latency_median(baseline_delay);
  for (double delay : {10.0, 50.0, 100.0}) {
    const double m = latency_median(baseline_delay + delay);
    const double err = m - (delay + baseline);
    out.detail += " " + fmt2(delay) + "->" + fmt2(m);
    if (std::abs(err) > 1.0) out.pass = false;
  }

  // Retransmissions: every segment whose range was resent yields nothing.
  fixtures::TcpFlowSpec retx;
  retx.duration_s = 1.0;
  retx.retransmit = {3, 4, 40, 41, 42, 90};
  const auto retx_packets = decode(fixtures::to_pcap(fixtures::synthetic_tcp_flow(retx)));
  std::map<std::uint32_t, std::vector<std::int64_t>> sends;  // seq -> send times
  for (const auto& p : retx_packets) {
    if (p.src == retx.client && p.payload_length > 0) sends[p.tcp->seq].push_back(p.capture_timestamp.micros);
  }
  // Only first transmissions can yield samples, so taint those. (A resend
  // shares its stamp with the next original, 1 ms later.)
  std::set<std::int64_t> tainted;
  std::size_t clean = 0;
  for (const auto& [seq, times] : sends) {
    if (times.size() > 1) {
      tainted.insert(times.front());
    } else {
      ++clean;
    }
  }
  std::size_t samples = 0;
  bool leaked = false;
  for (const auto& [key, flow] : passive::extract_flows(retx_packets)) {
    for (const auto& s : passive::ack_latency(flow)) {
      if (!s.from_initiator) continue;
      ++samples;
      leaked = leaked || tainted.count(s.data_time.micros);
    }
  }
  if (leaked || samples != clean) out.pass = false;
  out.detail += "; retransmitted ranges give " + std::string(leaked ? "samples" : "no samples") + " (" +
                std::to_string(samples) + "/" + std::to_string(clean) + " clean segments sampled)";
  return out;
}

// ------------------------------------------------------------------ 5

bool oracle_match(const core::MeasurementRecord& r, const aggregator::QueryFilter& f) {
  const auto& q = f.descriptor;
  const auto& d = r.descriptor;
  if (q.method && *q.method != d.method) return false;
  if (q.metric && *q.metric != d.metric.type()) return false;
  if (q.label && *q.label != d.metric.label()) return false;
  if (q.segment && *q.segment != d.segment) return false;
  if (q.direction && *q.direction != d.direction) return false;
  if (q.access_technology && *q.access_technology != d.access_technology) return false;
  if (q.cross_traffic_mbps && *q.cross_traffic_mbps != d.cross_traffic_mbps) return false;
  if (q.num_clients && (!d.num_clients || *q.num_clients != *d.num_clients)) return false;
  if (f.from_us && r.timestamp.micros < *f.from_us) return false;
  if (f.to_us && r.timestamp.micros > *f.to_us) return false;
  if (f.run_id && *f.run_id != r.run_id) return false;
  return true;
}

std::vector<core::MeasurementRecord> oracle_scan(const std::vector<core::MeasurementRecord>& inserted,
                                                 const aggregator::QueryFilter& f) {
  // Insertion sort by timestamp keeps insertion order among equal stamps.
  std::vector<core::MeasurementRecord> out;
  for (const auto& r : inserted) {
    if (!oracle_match(r, f)) continue;
    auto pos = out.end();
    while (pos != out.begin() && std::prev(pos)->timestamp.micros > r.timestamp.micros) --pos;
    out.insert(pos, r);
  }
  return out;
}

aggregator::QueryFilter random_filter(std::mt19937_64& gen, const std::vector<core::MeasurementRecord>& all) {
  aggregator::QueryFilter f;
  const auto d = gen() % 5 == 0 ? testing::random_descriptor(gen) : all[gen() % all.size()].descriptor;
  auto& q = f.descriptor;
  if (gen() % 3 == 0) q.method = d.method;
  if (gen() % 2 == 0) q.metric = d.metric.type();
  if (gen() % 4 == 0) q.label = d.metric.label();
  if (gen() % 3 == 0) q.segment = d.segment;
  if (gen() % 3 == 0) q.direction = d.direction;
  if (gen() % 3 == 0) q.access_technology = d.access_technology;
  if (gen() % 4 == 0) q.cross_traffic_mbps = d.cross_traffic_mbps;
  if (gen() % 5 == 0 && d.num_clients) q.num_clients = d.num_clients;
  if (gen() % 3 == 0) {
    const auto a = all[gen() % all.size()].timestamp.micros;
    const auto b = all[gen() % all.size()].timestamp.micros;
    f.from_us = std::min(a, b);
    f.to_us = std::max(a, b);
  }
  if (gen() % 6 == 0) f.run_id = all[gen() % all.size()].run_id;
  return f;
}

// The CLI aggregator as a child process; its first stdout line names the port.
struct Child {
  pid_t pid = -1;
  std::string address;
};

Child spawn_aggregator(const fs::path& db) {
  int fds[2];
  if (pipe(fds) != 0) throw std::runtime_error("pipe failed");
  const pid_t pid = fork();
  if (pid == 0) {
    dup2(fds[1], STDOUT_FILENO);
    close(fds[0]);
    close(fds[1]);
    const std::string db_arg = db.string();
    execl(MECPERF_CLI_PATH, MECPERF_CLI_PATH, "--log-level", "warn", "aggregate", "--bind", "127.0.0.1:0", "--db",
          db_arg.c_str(), static_cast<char*>(nullptr));
    _exit(127);
  }
  close(fds[1]);
  std::string line;
  pollfd p{fds[0], POLLIN, 0};
  while (line.find('\n') == std::string::npos && poll(&p, 1, 10000) > 0) {
    char buf[256];
    const auto n = read(fds[0], buf, sizeof buf);
    if (n <= 0) break;
    line.append(buf, static_cast<std::size_t>(n));
  }
  close(fds[0]);
  const auto prefix = std::string("listening on ");
  if (line.rfind(prefix, 0) != 0) {
    kill(pid, SIGKILL);
    waitpid(pid, nullptr, 0);
    throw std::runtime_error("aggregator did not start: " + line);
  }
  return {pid, line.substr(prefix.size(), line.find('\n') - prefix.size())};
}

void hard_kill(const Child& c) {
  kill(c.pid, SIGKILL);
  waitpid(c.pid, nullptr, 0);
}

Outcome criterion_store() {
  std::mt19937_64 gen(2024);
  std::vector<core::MeasurementRecord> generated;
  for (int i = 0; i < 1000; ++i) generated.push_back(testing::random_record(gen));
  TempDir dir;
  std::vector<core::MeasurementRecord> inserted;
  {
    aggregator::Store store(dir.path / "equivalence.db");
    for (std::size_t i = 0; i < generated.size(); i += 20) {
      const std::span<const core::MeasurementRecord> chunk(generated.data() + i, 20);
      for (auto& group : aggregator::group_by_descriptor(chunk)) {
        aggregator::Batch b;
        b.source = group.front().descriptor.method;
        b.submitter = "acceptance";
        b.records = group;
        store.submit(b);
        inserted.insert(inserted.end(), group.begin(), group.end());
      }
    }
    for (int i = 0; i < 100; ++i) {
      const auto f = random_filter(gen, inserted);
      if (store.query(f) != oracle_scan(inserted, f)) return {false, "filter " + std::to_string(i) + " differs"};
    }
    if (store.query({}) != oracle_scan(inserted, {})) return {false, "unfiltered query differs"};
  }

  // Durability: kill -9 the CLI service after acknowledged writes, restart
  // it on the same file, and read everything back over REST.
  const auto db = dir.path / "service.db";
  auto child = spawn_aggregator(db);
  std::vector<core::MeasurementRecord> acked;
  std::int64_t last_batch = 0;
  try {
    aggregator::Client client("http://" + child.address);
    for (std::size_t i = 0; i < 200; i += 10) {
      aggregator::Batch b;
      b.source = generated[i].descriptor.method;
      for (std::size_t k = i; k < i + 10; ++k) {
        auto r = generated[k];
        r.descriptor = generated[i].descriptor;
        r.unit = generated[i].unit;
        b.records.push_back(r);
      }
      last_batch = client.submit_batch(b).batch_id;
      acked.insert(acked.end(), b.records.begin(), b.records.end());
    }
  } catch (...) {
    hard_kill(child);
    throw;
  }
  hard_kill(child);
  child = spawn_aggregator(db);
  bool durable = false;
  bool fresh_ids = false;
  try {
    aggregator::Client client("http://" + child.address);
    durable = client.query({}) == oracle_scan(acked, {});
    aggregator::Batch b;
    b.source = generated[500].descriptor.method;
    b.records = {generated[500]};
    fresh_ids = client.submit_batch(b).batch_id > last_batch;
  } catch (...) {
    hard_kill(child);
    throw;
  }
  hard_kill(child);
  if (!durable || !fresh_ids) return {false, durable ? "batch ids reused after restart" : "records lost after SIGKILL"};
  return {true, "1000 records x 100 filters equal the linear scan; 200 acknowledged records survive SIGKILL"};
}

// ------------------------------------------------------------------ 6

Outcome criterion_trace() {
  TempDir syn, pool;
  fixtures::write_trace_repository(fixtures::synthetic_traces(), syn.path);
  fixtures::write_trace_repository(fixtures::bimodal_rtt_pool(), pool.path);
  std::size_t points = 0;
  std::size_t files = 0;
  for (const auto& root : {syn.path, pool.path}) {
    const auto repo = trace::TraceRepository::open(root);
    for (std::size_t i = 0; i < repo.manifest().size(); ++i) {
      const auto& entry = repo.manifest()[i];
      // Oracle input: the raw NDJSON lines, offsets from the first stamp.
      const auto records = core::decode_ndjson(trace::read_file(root / entry.file));
      std::vector<std::pair<std::int64_t, double>> raw;
      for (const auto& r : records) raw.emplace_back(r.timestamp.micros - records.front().timestamp.micros, r.value);
      trace::Selection sel;
      const bool rate = entry.descriptor.metric.is_bandwidth();
      (rate ? sel.bandwidth : sel.rtt) = i;
      const auto flat = trace::open_selection(repo, sel, false);
      const auto ring = trace::open_selection(repo, sel, true);
      auto get = [&](const trace::NetworkTrace& t, double s) { return rate ? t.get_bandwidth(s) : t.get_rtt(s); };
      const std::int64_t end_ms = raw.back().first / 1000 + 2000;
      for (std::int64_t ms = 0; ms <= end_ms; ++ms) {
        const std::int64_t t_us = ms * 1000;
        double expected = raw.front().second;
        for (const auto& [off, v] : raw) {
          if (off <= t_us) expected = v;
        }
        if (get(flat, static_cast<double>(ms) / 1000.0) != expected) {
          return {false, entry.file + " differs at " + std::to_string(ms) + " ms"};
        }
        ++points;
      }
      const std::int64_t duration_ms = ring.duration_us() / 1000;
      for (std::int64_t ms = 0; ms < duration_ms; ms += 7) {
        const double t = static_cast<double>(ms) / 1000.0;
        const double v = get(ring, t);
        for (int k = 1; k <= 3; ++k) {
          if (get(ring, t + k * ring.duration_seconds()) != v) {
            return {false, entry.file + " not periodic at " + std::to_string(ms) + " ms, k=" + std::to_string(k)};
          }
        }
      }
      ++files;
    }
    core::DescriptorQuery q;
    q.access_technology = core::AccessTechnology::lte;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const auto first = repo.select(q, seed);
      for (int rep = 0; rep < 100; ++rep) {
        if (!(trace::TraceRepository::open(root).select(q, seed) == first)) {
          return {false, "selection not reproducible for seed " + std::to_string(seed)};
        }
      }
    }
  }
  return {true, std::to_string(files) + " files, " + std::to_string(points) +
                    " ms points equal the hold oracle; periodic for k=1..3; selections stable over 100 repeats"};
}

// ------------------------------------------------------------------ 7-9

sim::SimulationConfig bimodal_config() {
  sim::SimulationConfig c;
  c.trace_query_op1.metric = core::MetricType::tcp_latency;
  c.trace_query_op1.access_technology = core::AccessTechnology::wifi;
  c.trace_query_op2.metric = core::MetricType::tcp_latency;
  c.trace_query_op2.access_technology = core::AccessTechnology::lte;
  return c;
}

Outcome criterion_null_case(const trace::TraceRepository& repo) {
  auto c = bimodal_config();
  std::size_t samples = 0;
  for (std::uint32_t r = 0; r < 3; ++r) {
    const auto seed = sim::replication_seed(c, r);
    std::vector<double> oracle;
    std::size_t oracle_migrations = 0;
    for (const auto& slot : reference::simulate(c, repo, seed)) {
      for (const auto& [id, rtt] : slot.rtt) oracle.push_back(rtt);
      oracle_migrations += slot.migrated[0].size() + slot.migrated[1].size();
    }
    const auto result = sim::run_replication(c, repo, seed);
    if (result.migrations != 0 || oracle_migrations != 0) return {false, "migrations at gamma 0"};
    if (result.pool != oracle) return {false, "pool differs from the oracle in replication " + std::to_string(r)};
    samples += oracle.size();
  }
  return {true, "0 migrations; " + std::to_string(samples) + " pooled samples identical to direct trace reads"};
}

Outcome criterion_migration_law(const trace::TraceRepository& repo) {
  std::size_t slots = 0;
  std::size_t migrations = 0;
  for (int percent : {5, 10, 25, 50, 100}) {
    auto c = bimodal_config();
    c.gamma = percent / 100.0;
    for (std::uint32_t r = 0; r < 20; ++r) {
      sim::World world(c, repo, sim::replication_seed(c, r));
      for (std::uint32_t s = 0; s < c.num_slots; ++s) {
        const auto report = world.step();
        std::set<std::uint32_t> moved(report.migrated[0].begin(), report.migrated[0].end());
        moved.insert(report.migrated[1].begin(), report.migrated[1].end());
        std::array<std::vector<double>, 2> kept, gone;
        for (const auto& [id, rtt] : report.rtt_ms) {
          const int now = static_cast<int>(world.clients()[id].op);
          const int then = moved.count(id) ? 1 - now : now;
          (moved.count(id) ? gone : kept)[then].push_back(rtt);
        }
        for (int op = 0; op < 2; ++op) {
          const std::uint32_t n = report.subscribed[op];
          const std::size_t want = (static_cast<std::size_t>(percent) * n + 99) / 100;  // ceil in integers
          if (report.migrated[op].size() != want || gone[op].size() != want) {
            return {false, "gamma " + std::to_string(percent) + "%: " + std::to_string(report.migrated[op].size()) +
                               " migrated of " + std::to_string(n) + ", expected " + std::to_string(want)};
          }
          if (!gone[op].empty() && !kept[op].empty() &&
              *std::min_element(gone[op].begin(), gone[op].end()) <
                  *std::max_element(kept[op].begin(), kept[op].end())) {
            return {false, "a retained client had a higher RTT than a migrated one"};
          }
          migrations += want;
        }
        ++slots;
      }
    }
  }
  return {true, std::to_string(slots) + " slots over 5 gammas x 20 replications, " + std::to_string(migrations) +
                    " migrations, all exact and worst-first"};
}

Outcome criterion_trend(const trace::TraceRepository& repo) {
  auto c = bimodal_config();
  const std::vector<double> grid{0.0, 0.1, 0.5};
  const auto study = sim::run_study(c, grid, repo);
  const auto& g0 = study[0].quantiles[0];
  const auto& g1 = study[1].quantiles[0];
  const auto& g5 = study[2].quantiles[0];
  auto show = [](const char* name, const sim::QuantileResult& q) {
    return std::string(name) + " " + fmt2(q.mean) + " [" + fmt2(q.ci_low) + ", " + fmt2(q.ci_high) + "]";
  };
  const bool pass = g1.mean < g0.mean && g1.mean < g5.mean && g1.ci_high < g0.ci_low && g1.ci_high < g5.ci_low;
  return {pass, "median RTT ms: " + show("g=0", g0) + ", " + show("g=0.1", g1) + ", " + show("g=0.5", g5)};
}

// ------------------------------------------------------------------ 10

Outcome criterion_closure() {
  TempDir dir;
  const auto records = fixtures::bimodal_rtt_pool();
  aggregator::Store store(dir.path / "closure.db");
  aggregator::Server server(store);
  const int port = server.start("127.0.0.1", 0);
  aggregator::Client client("http://127.0.0.1:" + std::to_string(port));
  client.submit(records, core::Method::active);
  trace::write_bundle(client.export_bundle({}), dir.path / "exported");
  server.stop();

  fixtures::write_trace_repository(records, dir.path / "direct");
  const auto exported = trace::TraceRepository::open(dir.path / "exported");
  const auto direct = trace::TraceRepository::open(dir.path / "direct");
  auto c = bimodal_config();
  c.num_slots = 300;
  c.num_replications = 5;
  const std::vector<double> grid{0.0, 0.1};
  const auto csv = sim::to_csv(sim::run_study(c, grid, exported));
  const bool same = csv == sim::to_csv(sim::run_study(c, grid, direct));
  return {same && exported.manifest().size() == 32,
          std::to_string(exported.manifest().size()) + " runs exported and replayed; study output " +
              (same ? "identical to" : "DIFFERENT from") + " the fixture repository"};
}

}  // namespace

// Arguments, if any, select criteria by number.
int main(int argc, char** argv) {
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
  int failures = 0;
  int ran = 0;
  auto run = [&](int id, const char* name, const std::function<Outcome()>& fn) {
    if (!only.empty() && !only.count(id)) return;
    ++ran;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    failures += !o.pass;
    std::printf("%s %2d %s: %s (%.1f s)\n", o.pass ? "PASS" : "FAIL", id, name, o.detail.c_str(), secs);
    std::fflush(stdout);
  };

  run(1, "stream bandwidth vs bulk transfer", criterion_bandwidth);
  run(2, "echo latency under injected delay", criterion_latency);
  run(3, "packet-pair capacity", criterion_packet_pair);
  run(4, "passive analyzer golden captures", criterion_passive);
  run(5, "store query equivalence and durability", criterion_store);
  run(6, "trace replay semantics", criterion_trace);

  TempDir pool;
  fixtures::write_trace_repository(fixtures::bimodal_rtt_pool(), pool.path);
  const auto repo = trace::TraceRepository::open(pool.path);
  run(7, "simulator null case", [&] { return criterion_null_case(repo); });
  run(8, "simulator migration law", [&] { return criterion_migration_law(repo); });
  run(9, "median RTT optimum near gamma 0.1", [&] { return criterion_trend(repo); });
  run(10, "export, open, simulate closure", criterion_closure);

  std::printf("%d of %d criteria passed\n", ran - failures, ran);
  return failures == 0 ? 0 : 1;
}
