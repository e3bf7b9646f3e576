#include "mecperf/probe/probes.hpp"

#include <algorithm>
#include <array>
#include <thread>

#include <time.h>

#include "mecperf/probe/protocol.hpp"

namespace mecperf::probe {

using core::MeasurementRecord;

namespace {

core::TraceDescriptor descriptor(const ProbeSession& s, core::MetricType metric, core::Direction direction) {
  core::TraceDescriptor d;
  d.method = core::Method::active;
  d.metric = metric;
  d.segment = s.segment;
  d.direction = direction;
  d.access_technology = s.access_technology;
  d.cross_traffic_mbps = s.cross_traffic_mbps;
  return d;
}

std::string new_run_id(core::MetricType metric) {
  return "active-" + std::string(core::to_string(metric)) + "-" + core::make_id().substr(0, 16);
}

MeasurementRecord make_record(const core::TraceDescriptor& d, const std::string& run_id, std::size_t index,
                              std::int64_t timestamp_us, double value) {
  MeasurementRecord r;
  r.id = run_id + "-" + std::to_string(index);
  r.run_id = run_id;
  r.descriptor = d;
  r.timestamp.micros = timestamp_us;
  r.value = value;
  r.unit = std::string(core::canonical_unit(d.metric.type()));
  return r;
}

net::Fd connect(const ProbeSession& s) {
  try {
    return net::connect_tcp(s.peer, s.timeout);
  } catch (const net::SocketError& e) {
    throw SessionError(std::string("cannot reach ") + s.peer.str() + ": " + e.what());
  }
}

/// Reads one message; error replies and protocol violations become
/// HandshakeError, I/O failures SessionError.
Header read_message(const net::Fd& fd, std::vector<std::uint8_t>& payload, net::Duration timeout) {
  std::array<std::uint8_t, kHeaderSize> head{};
  try {
    net::recv_exact(fd, head, timeout);
    const Header h = decode_header(head);
    if (h.length > (1u << 20)) throw ProtocolError("oversized reply");
    payload.resize(h.length);
    net::recv_exact(fd, payload, timeout);
    if (h.op == Op::error) throw HandshakeError("peer refused: " + std::string(payload.begin(), payload.end()));
    return h;
  } catch (const ProtocolError& e) {
    throw HandshakeError(e.what());
  } catch (const net::SocketError& e) {
    throw SessionError(e.what());
  }
}

Header expect(const net::Fd& fd, Op op, std::vector<std::uint8_t>& payload, net::Duration timeout) {
  const Header h = read_message(fd, payload, timeout);
  if (h.op != op) throw HandshakeError("unexpected reply opcode " + std::to_string(static_cast<int>(h.op)));
  return h;
}

std::optional<Header> parse_udp(std::span<const std::uint8_t> msg) {
  if (msg.size() < kHeaderSize) return std::nullopt;
  try {
    return decode_header(msg);
  } catch (const ProtocolError&) {
    return std::nullopt;
  }
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

std::string_view to_string(Role r) {
  switch (r) {
    case Role::client: return "client";
    case Role::observer: return "observer";
    case Role::remote_server: return "remote_server";
  }
  return "?";
}

std::string_view to_string(Transport t) { return t == Transport::tcp ? "tcp" : "udp"; }

Role parse_role(std::string_view s) {
  if (s == "client") return Role::client;
  if (s == "observer") return Role::observer;
  if (s == "remote_server" || s == "remote") return Role::remote_server;
  throw core::DomainError("unknown role '" + std::string(s) + "'");
}

Transport parse_transport(std::string_view s) {
  if (s == "tcp") return Transport::tcp;
  if (s == "udp") return Transport::udp;
  throw core::DomainError("unknown transport '" + std::string(s) + "'");
}

void BandwidthProbeConfig::validate() const {
  if (num_packets < 2) throw core::DomainError("num_packets must be at least 2");
  if (packet_size < 1) throw core::DomainError("packet_size must be at least 1");
  if (repetitions < 1) throw core::DomainError("repetitions must be at least 1");
}

void CapacityProbeConfig::validate() const {
  if (num_pairs < 1) throw core::DomainError("num_pairs must be at least 1");
  if (packet_size < kHeaderSize || packet_size > 65507) {
    throw core::DomainError("packet_size must be between 16 and 65507 bytes");
  }
}

void LatencyProbeConfig::validate() const {
  if (num_probes < 1) throw core::DomainError("num_probes must be at least 1");
  if (payload_size < 1 || payload_size > 60000) throw core::DomainError("payload_size must be between 1 and 60000");
}

double bandwidth_mbps(std::uint64_t bytes, std::int64_t elapsed_ns) {
  if (elapsed_ns <= 0) throw MeasurementError("zero elapsed time at the receiver");
  return static_cast<double>(bytes) * 8.0 / (static_cast<double>(elapsed_ns) * 1e-9) / 1e6;
}

CapacityEstimate estimate_capacity(std::uint32_t packet_size, std::span<const PairArrival> arrivals,
                                   std::int64_t resolution_ns) {
  CapacityEstimate est;
  std::vector<double> usable;
  for (const auto& p : arrivals) {
    if (!p.first_ns || !p.second_ns) {
      ++est.lost;
      est.per_pair_mbps.emplace_back();
      continue;
    }
    const std::int64_t dt = *p.second_ns - *p.first_ns;
    if (dt <= resolution_ns) {
      ++est.unresolved;
      est.per_pair_mbps.emplace_back();
      continue;
    }
    const double mbps = static_cast<double>(packet_size) * 8.0 / (static_cast<double>(dt) * 1e-9) / 1e6;
    est.per_pair_mbps.emplace_back(mbps);
    usable.push_back(mbps);
  }
  if (arrivals.empty()) throw MeasurementError("no packet pairs");
  if (2 * est.lost > arrivals.size()) {
    throw MeasurementError(std::to_string(est.lost) + " of " + std::to_string(arrivals.size()) + " pairs lost");
  }
  if (usable.empty()) throw MeasurementError("no pair had a measurable dispersion");
  est.median_mbps = median(std::move(usable));
  return est;
}

std::vector<MeasurementRecord> measure_stream_bandwidth(const ProbeSession& session, const BandwidthProbeConfig& cfg,
                                                        core::Direction direction) {
  cfg.validate();
  if (session.transport != Transport::tcp) throw core::DomainError("stream bandwidth needs a TCP session");
  const auto d = descriptor(session, core::MetricType::tcp_bandwidth, direction);
  const std::string run_id = new_run_id(core::MetricType::tcp_bandwidth);
  const std::uint64_t total = static_cast<std::uint64_t>(cfg.num_packets) * cfg.packet_size;
  // A stalled transfer fails instead of hanging; allow for slow paths.
  const net::Duration io_timeout = std::max<net::Duration>(session.timeout, std::chrono::seconds(30));
  std::vector<MeasurementRecord> out;
  std::vector<std::uint8_t> payload;
  for (std::uint32_t rep = 0; rep < cfg.repetitions; ++rep) {
    const net::Fd fd = connect(session);
    std::vector<std::uint8_t> req;
    put_u32(req, cfg.packet_size);
    try {
      net::send_all(fd, message(Op::bw_request, direction_flags(direction), cfg.num_packets, req));
    } catch (const net::SocketError& e) {
      throw SessionError(e.what());
    }
    expect(fd, Op::bw_ready, payload, session.timeout);
    double mbps = 0;
    if (direction == core::Direction::upstream) {
      const std::vector<std::uint8_t> packet(cfg.packet_size, 0xa5);
      try {
        for (std::uint32_t i = 0; i < cfg.num_packets; ++i) net::send_all(fd, packet);
      } catch (const net::SocketError& e) {
        throw SessionError(e.what());
      }
      expect(fd, Op::bw_result, payload, io_timeout);
      const std::uint64_t bytes = get_u64(payload, 0);
      const auto elapsed = static_cast<std::int64_t>(get_u64(payload, 8));
      if (bytes != total) throw MeasurementError("receiver counted " + std::to_string(bytes) + " bytes");
      mbps = bandwidth_mbps(total, elapsed);
    } else {
      std::vector<std::uint8_t> buf(64 * 1024);
      std::uint64_t got = 0;
      std::int64_t first = 0;
      std::int64_t last = 0;
      try {
        while (got < total) {
          const auto want = static_cast<std::size_t>(std::min<std::uint64_t>(buf.size(), total - got));
          const std::size_t n = net::recv_some(fd, std::span(buf.data(), want), io_timeout);
          if (n == 0) throw SessionError("sender closed after " + std::to_string(got) + " bytes");
          last = net::monotonic_ns();
          if (got == 0) first = last;
          got += n;
        }
      } catch (const net::SocketError& e) {
        throw SessionError(e.what());
      }
      mbps = bandwidth_mbps(total, last - first);
    }
    out.push_back(make_record(d, run_id, rep, core::Timestamp::now().micros, mbps));
  }
  return out;
}

ProbeResult measure_packet_pair_capacity(const ProbeSession& session, const CapacityProbeConfig& cfg,
                                         core::Direction direction) {
  cfg.validate();
  if (session.transport != Transport::udp) throw core::DomainError("packet-pair capacity needs a UDP session");
  const std::uint16_t flags = direction_flags(direction);
  net::Fd fd;
  try {
    fd = net::bind_udp({"0.0.0.0", 0});
  } catch (const net::SocketError& e) {
    throw SessionError(e.what());
  }
  std::vector<std::uint8_t> buf(65536);
  std::vector<PairArrival> arrivals(cfg.num_pairs);
  const std::int64_t wall_start_us = core::Timestamp::now().micros;

  std::vector<std::uint8_t> begin_payload;
  put_u32(begin_payload, cfg.packet_size);
  put_u32(begin_payload, static_cast<std::uint32_t>(cfg.gap.count()));
  const auto begin = message(Op::cap_begin, flags, cfg.num_pairs, begin_payload);

  auto record_data = [&](const Header& h, std::int64_t at) {
    const std::uint32_t pair = h.seq / 2;
    if (pair >= cfg.num_pairs) return;
    auto& slot = (h.seq % 2 == 0) ? arrivals[pair].first_ns : arrivals[pair].second_ns;
    if (!slot) slot = at;
  };

  // Handshake, retried because UDP may drop it.
  bool ready = false;
  for (int attempt = 0; attempt < 3 && !ready; ++attempt) {
    net::send_to(fd, begin, session.peer);
    const auto deadline = net::Clock::now() + session.timeout;
    while (!ready && net::Clock::now() < deadline) {
      const auto d = net::recv_from(fd, buf, deadline - net::Clock::now());
      if (!d) break;
      const auto h = parse_udp({buf.data(), d->size});
      if (!h) continue;
      if (h->op == Op::error) throw HandshakeError("peer refused capacity probe");
      if (h->op == Op::cap_ready) ready = true;
      if (h->op == Op::cap_data && direction == core::Direction::downstream) {
        record_data(*h, d->received_ns);
        ready = true;
      }
    }
  }
  if (!ready) throw SessionError("no capacity handshake reply from " + session.peer.str());

  if (direction == core::Direction::upstream) {
    std::vector<std::uint8_t> a(cfg.packet_size, 0);
    std::vector<std::uint8_t> b(cfg.packet_size, 0);
    const auto len = cfg.packet_size - static_cast<std::uint32_t>(kHeaderSize);
    for (std::uint32_t i = 0; i < cfg.num_pairs; ++i) {
      const auto ha = encode({Op::cap_data, flags, 2 * i, len});
      const auto hb = encode({Op::cap_data, flags, 2 * i + 1, len});
      std::copy(ha.begin(), ha.end(), a.begin());
      std::copy(hb.begin(), hb.end(), b.begin());
      net::send_to(fd, a, session.peer);
      net::send_to(fd, b, session.peer);
      std::this_thread::sleep_for(cfg.gap);
    }
    const auto end = message(Op::cap_end, flags, cfg.num_pairs);
    bool reported = false;
    for (int attempt = 0; attempt < 3 && !reported; ++attempt) {
      net::send_to(fd, end, session.peer);
      const auto deadline = net::Clock::now() + session.timeout;
      while (!reported && net::Clock::now() < deadline) {
        const auto d = net::recv_from(fd, buf, deadline - net::Clock::now());
        if (!d) break;
        const std::span<const std::uint8_t> msg(buf.data(), d->size);
        const auto h = parse_udp(msg);
        if (!h || h->op != Op::cap_report) continue;
        if (h->length != 16ull * cfg.num_pairs || msg.size() != kHeaderSize + h->length) {
          throw HandshakeError("malformed capacity report");
        }
        for (std::uint32_t i = 0; i < cfg.num_pairs; ++i) {
          const auto t1 = static_cast<std::int64_t>(get_u64(msg, kHeaderSize + 16 * i));
          const auto t2 = static_cast<std::int64_t>(get_u64(msg, kHeaderSize + 16 * i + 8));
          if (t1 >= 0) arrivals[i].first_ns = t1;
          if (t2 >= 0) arrivals[i].second_ns = t2;
        }
        reported = true;
      }
    }
    if (!reported) throw SessionError("no capacity report from " + session.peer.str());
  } else {
    for (;;) {
      const auto d = net::recv_from(fd, buf, session.timeout);
      if (!d) break;
      const auto h = parse_udp({buf.data(), d->size});
      if (!h) continue;
      if (h->op == Op::cap_done) break;
      if (h->op == Op::cap_data) record_data(*h, d->received_ns);
    }
  }

  timespec res{};
  ::clock_getres(CLOCK_MONOTONIC, &res);
  const std::int64_t resolution = std::max<std::int64_t>(1, res.tv_sec * 1'000'000'000LL + res.tv_nsec);
  const auto est = estimate_capacity(cfg.packet_size, arrivals, resolution);

  const auto desc = descriptor(session, core::MetricType::udp_capacity, direction);
  const std::string run_id = new_run_id(core::MetricType::udp_capacity);
  ProbeResult result;
  result.discarded = est.lost + est.unresolved;
  // Pair records are spaced on the wall clock by their receiver-side offsets.
  std::optional<std::int64_t> origin;
  std::int64_t last_us = wall_start_us;
  for (std::uint32_t i = 0; i < cfg.num_pairs; ++i) {
    if (!est.per_pair_mbps[i]) continue;
    if (!origin) origin = *arrivals[i].second_ns;
    const std::int64_t ts = wall_start_us + (*arrivals[i].second_ns - *origin) / 1000;
    last_us = std::max(last_us + (result.records.empty() ? 0 : 1), ts);
    auto r = make_record(desc, run_id, result.records.size(), last_us, *est.per_pair_mbps[i]);
    r.tag = "pair";
    result.records.push_back(std::move(r));
  }
  auto m = make_record(desc, run_id, result.records.size(), last_us + 1, est.median_mbps);
  m.tag = "median";
  result.records.push_back(std::move(m));
  return result;
}

ProbeResult measure_echo_latency(const ProbeSession& session, const LatencyProbeConfig& cfg,
                                 core::Direction direction) {
  cfg.validate();
  const auto metric = session.transport == Transport::tcp ? core::MetricType::tcp_latency : core::MetricType::udp_latency;
  const auto desc = descriptor(session, metric, direction);
  const std::string run_id = new_run_id(metric);
  const std::vector<std::uint8_t> payload(cfg.payload_size, 0x42);
  const std::uint16_t flags = direction_flags(direction);

  ProbeResult result;
  std::vector<std::pair<std::int64_t, double>> samples;  // wall time, ms
  std::vector<std::uint8_t> reply;

  if (session.transport == Transport::tcp) {
    const net::Fd fd = connect(session);
    for (std::uint32_t i = 0; i < cfg.num_probes; ++i) {
      if (i > 0 && cfg.spacing.count() > 0) std::this_thread::sleep_for(cfg.spacing);
      const std::int64_t wall = core::Timestamp::now().micros;
      const std::int64_t sent = net::monotonic_ns();
      try {
        net::send_all(fd, message(Op::echo, flags, i, payload));
      } catch (const net::SocketError& e) {
        throw SessionError(e.what());
      }
      // Late replies to earlier probes are skipped by sequence number.
      const auto deadline = net::Clock::now() + session.timeout;
      bool answered = false;
      try {
        while (!answered) {
          const Header h = read_message(fd, reply, std::max(net::Duration::zero(), net::Duration(deadline - net::Clock::now())));
          if (h.op == Op::echo_reply && h.seq == i) answered = true;
        }
      } catch (const SessionError&) {
        if (net::Clock::now() < deadline) throw;  // broken connection, not a timeout
      }
      if (answered) {
        samples.emplace_back(wall, static_cast<double>(net::monotonic_ns() - sent) * 1e-6);
      } else {
        ++result.timeouts;
      }
    }
  } else {
    net::Fd fd;
    try {
      fd = net::bind_udp({"0.0.0.0", 0});
    } catch (const net::SocketError& e) {
      throw SessionError(e.what());
    }
    std::vector<std::uint8_t> buf(65536);
    for (std::uint32_t i = 0; i < cfg.num_probes; ++i) {
      if (i > 0 && cfg.spacing.count() > 0) std::this_thread::sleep_for(cfg.spacing);
      const std::int64_t wall = core::Timestamp::now().micros;
      const std::int64_t sent = net::monotonic_ns();
      net::send_to(fd, message(Op::echo, flags, i, payload), session.peer);
      const auto deadline = net::Clock::now() + session.timeout;
      bool answered = false;
      while (!answered && net::Clock::now() < deadline) {
        const auto d = net::recv_from(fd, buf, deadline - net::Clock::now());
        if (!d) break;
        const auto h = parse_udp({buf.data(), d->size});
        if (h && h->op == Op::echo_reply && h->seq == i) {
          answered = true;
          samples.emplace_back(wall, static_cast<double>(d->received_ns - sent) * 1e-6);
        }
      }
      if (!answered) ++result.timeouts;
    }
  }
  if (samples.empty()) throw MeasurementError("all " + std::to_string(cfg.num_probes) + " echo probes timed out");
  for (const auto& [wall, ms] : samples) {
    auto r = make_record(desc, run_id, result.records.size(), wall, ms);
    if (result.timeouts > 0) r.tag = "timeouts=" + std::to_string(result.timeouts);
    result.records.push_back(std::move(r));
  }
  return result;
}

SuiteResult run_active_suite(std::span<const PlanItem> plan, core::MeasurementSink* sink) {
  SuiteResult out;
  for (std::size_t i = 0; i < plan.size(); ++i) {
    const auto& item = plan[i];
    const std::int64_t start = net::monotonic_ns();
    try {
      std::vector<MeasurementRecord> records;
      if (const auto* bw = std::get_if<BandwidthProbeConfig>(&item.config)) {
        records = measure_stream_bandwidth(item.session, *bw, item.direction);
      } else if (const auto* cap = std::get_if<CapacityProbeConfig>(&item.config)) {
        records = measure_packet_pair_capacity(item.session, *cap, item.direction).records;
      } else {
        records = measure_echo_latency(item.session, std::get<LatencyProbeConfig>(item.config), item.direction).records;
      }
      out.records.insert(out.records.end(), records.begin(), records.end());
    } catch (const std::exception& e) {
      out.errors.push_back({i, e.what()});
    }
    out.intervals.emplace_back(start, net::monotonic_ns());
  }
  if (sink != nullptr && !out.records.empty()) {
    try {
      out.batch_ids = sink->submit(out.records, core::Method::active);
    } catch (const std::exception& e) {
      out.errors.push_back({plan.size(), std::string("submission failed: ") + e.what()});
    }
  }
  return out;
}

std::vector<PlanItem> default_plan(const net::Address& observer, const net::Address& remote,
                                   core::AccessTechnology technology, double cross_traffic_mbps) {
  std::vector<PlanItem> plan;
  const std::pair<core::SegmentId, net::Address> targets[] = {{core::SegmentId::access_mec, observer},
                                                              {core::SegmentId::access_cloud, remote}};
  for (const auto& [segment, peer] : targets) {
    for (const auto direction : {core::Direction::upstream, core::Direction::downstream}) {
      ProbeSession s;
      s.local_role = Role::client;
      s.peer = peer;
      s.segment = segment;
      s.access_technology = technology;
      s.cross_traffic_mbps = cross_traffic_mbps;
      s.transport = Transport::tcp;
      plan.push_back({s, BandwidthProbeConfig{}, direction});
      s.transport = Transport::udp;
      plan.push_back({s, CapacityProbeConfig{}, direction});
      s.transport = Transport::tcp;
      plan.push_back({s, LatencyProbeConfig{}, direction});
    }
  }
  return plan;
}

}  // namespace mecperf::probe
