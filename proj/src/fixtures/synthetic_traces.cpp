#include "mecperf/fixtures/synthetic_traces.hpp"

#include <algorithm>
#include <fstream>

#include <nlohmann/json.hpp>

#include "mecperf/core/rng.hpp"
#include "mecperf/fixtures/synthetic_capture.hpp"
#include "mecperf/trace/format.hpp"

namespace mecperf::fixtures {

namespace {

std::string two_digits(std::uint32_t i) { return (i < 10 ? "0" : "") + std::to_string(i); }

void append_run(std::vector<core::MeasurementRecord>& out, const core::TraceDescriptor& d, const std::string& run_id,
                std::int64_t start_us, std::int64_t step_us, const std::vector<double>& values) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    core::MeasurementRecord r;
    r.id = run_id + "-" + std::to_string(i);
    r.run_id = run_id;
    r.descriptor = d;
    r.timestamp.micros = start_us + static_cast<std::int64_t>(i) * step_us;
    r.value = values[i];
    r.unit = std::string(core::canonical_unit(d.metric.type()));
    out.push_back(std::move(r));
  }
}

// Mean-reverting walk clipped to [low, high]; values rounded to 0.001.
std::vector<double> walk(core::SplitMix64& prng, std::uint32_t n, double low, double high) {
  std::vector<double> v;
  const double mid = (low + high) / 2;
  const double span = high - low;
  double x = low + span * prng.uniform();
  for (std::uint32_t i = 0; i < n; ++i) {
    x += 0.3 * (mid - x) + 0.25 * span * (prng.uniform() - 0.5);
    x = std::clamp(x, low, high);
    v.push_back(std::round(x * 1000.0) / 1000.0);
  }
  return v;
}

}  // namespace

std::vector<core::MeasurementRecord> synthetic_traces(const TraceSetSpec& spec) {
  std::vector<core::MeasurementRecord> out;
  std::uint64_t index = 0;
  for (auto tech : {core::AccessTechnology::wifi, core::AccessTechnology::lte}) {
    for (auto seg : {core::SegmentId::access_mec, core::SegmentId::mec_cloud}) {
      for (auto dir : {core::Direction::upstream, core::Direction::downstream}) {
        for (double cross : {0.0, 50.0}) {
          core::SplitMix64 prng(core::derive_seed(spec.seed, index));
          const std::int64_t start = spec.start_us + static_cast<std::int64_t>(index) * 3'600'000'000LL;
          ++index;
          core::TraceDescriptor d;
          d.method = core::Method::active;
          d.segment = seg;
          d.direction = dir;
          d.access_technology = tech;
          d.cross_traffic_mbps = cross;
          const double cap = tech == core::AccessTechnology::wifi ? 60.0 : 25.0;
          const double bw_high = cap - cross * 0.4;
          const double rtt_base = (seg == core::SegmentId::access_mec ? 4.0 : 18.0) +
                                  (tech == core::AccessTechnology::lte ? 12.0 : 0.0);
          const std::string stem = "syn-" + std::string(core::to_string(tech)) + "-" +
                                   std::string(core::to_string(seg)) + "-" + std::string(core::to_string(dir)) +
                                   "-x" + std::to_string(static_cast<int>(cross));
          d.metric = core::MetricType::tcp_bandwidth;
          append_run(out, d, stem + "-bw", start, spec.step_us, walk(prng, spec.samples, bw_high * 0.5, bw_high));
          d.metric = core::MetricType::tcp_latency;
          append_run(out, d, stem + "-rtt", start, spec.step_us,
                     walk(prng, spec.samples, rtt_base, rtt_base * (1.5 + cross / 25.0)));
        }
      }
    }
  }
  return out;
}

std::vector<core::MeasurementRecord> bimodal_rtt_pool(const BimodalPoolSpec& spec) {
  if (spec.pairs % 2 != 0) throw std::invalid_argument("bimodal pool needs an even number of pairs");
  std::vector<core::MeasurementRecord> out;
  std::uint64_t index = 0;
  const std::int64_t start = 1'700'000'000'000'000LL;
  for (std::uint32_t k = 0; k < spec.pairs; ++k) {
    for (auto tech : {core::AccessTechnology::wifi, core::AccessTechnology::lte}) {
      const bool good = (k % 2 == 0) == (tech == core::AccessTechnology::wifi);
      core::SplitMix64 prng(core::derive_seed(spec.seed, index));
      core::TraceDescriptor d;
      d.metric = core::MetricType::tcp_latency;
      d.access_technology = tech;
      d.cross_traffic_mbps = good ? 0.0 : 50.0;
      const std::string run_id = "bimodal-p" + two_digits(k) + "-" + std::string(core::to_string(tech)) +
                                 (good ? "-good" : "-bad");
      const auto values = good ? walk(prng, spec.samples, spec.good_low_ms, spec.good_high_ms)
                               : walk(prng, spec.samples, spec.bad_low_ms, spec.bad_high_ms);
      append_run(out, d, run_id, start + static_cast<std::int64_t>(index) * 3'600'000'000LL, spec.step_us, values);
      ++index;
    }
  }
  return out;
}

void write_trace_repository(std::vector<core::MeasurementRecord> records, const std::filesystem::path& dir) {
  trace::write_bundle(trace::build_bundle(std::move(records)), dir);
}

std::vector<std::filesystem::path> write_pcap_fixtures(const std::filesystem::path& dir, std::uint64_t seed) {
  std::filesystem::create_directories(dir);
  core::SplitMix64 prng(seed);
  std::vector<std::filesystem::path> written;
  nlohmann::json manifest = nlohmann::json::array();
  auto emit = [&](const std::string& name, const std::vector<passive::PacketRecord>& packets, nlohmann::json meta) {
    const auto bytes = to_pcap(packets);
    const auto path = dir / name;
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw std::runtime_error("cannot write " + path.string());
    meta["file"] = name;
    manifest.push_back(std::move(meta));
    written.push_back(path);
  };
  // The seed moves the client port and the start time only; rates and
  // delays are the documented constants.
  const auto port = static_cast<std::uint16_t>(40000 + prng.below(20000));
  const std::int64_t start = 1'700'000'000'000'000LL + static_cast<std::int64_t>(prng.below(1'000'000));

  TcpFlowSpec constant;
  constant.handshake = false;  // bins then start at the first data byte
  constant.client_port = port;
  constant.start_us = start;
  emit("tcp-constant-10mbps.pcap", synthetic_tcp_flow(constant),
       {{"kind", "tcp"}, {"rate_mbps", 10.0}, {"duration_s", 5.0}, {"ack_delay_ms", constant.ack_delay_ms}});
  for (double delay : {10.0, 50.0, 100.0}) {
    TcpFlowSpec s = constant;
    s.handshake = true;
    s.ack_delay_ms = delay;
    s.rate_mbps = 2.0;
    s.duration_s = 2.0;
    emit("tcp-ack-delay-" + std::to_string(static_cast<int>(delay)) + "ms.pcap", synthetic_tcp_flow(s),
         {{"kind", "tcp"}, {"rate_mbps", 2.0}, {"duration_s", 2.0}, {"ack_delay_ms", delay}});
  }
  TcpFlowSpec retx = constant;
  retx.handshake = true;
  retx.duration_s = 1.0;
  retx.retransmit = {10, 11, 50};
  emit("tcp-retransmissions.pcap", synthetic_tcp_flow(retx),
       {{"kind", "tcp"}, {"rate_mbps", 10.0}, {"duration_s", 1.0}, {"retransmitted_segments", {10, 11, 50}}});
  UdpFlowSpec udp;
  udp.start_us = start;
  emit("udp-constant-10mbps.pcap", synthetic_udp_flow(udp), {{"kind", "udp"}, {"rate_mbps", 10.0}, {"duration_s", 5.0}});

  const auto manifest_path = dir / "manifest.json";
  std::ofstream m(manifest_path, std::ios::trunc);
  m << nlohmann::json{{"format", "mecperf-pcap-fixtures/1"}, {"seed", seed}, {"captures", manifest}}.dump(2) << "\n";
  if (!m) throw std::runtime_error("cannot write " + manifest_path.string());
  written.push_back(manifest_path);
  return written;
}

}  // namespace mecperf::fixtures
