#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "mecperf/harness/shaper.hpp"
#include "mecperf/probe/protocol.hpp"
#include "mecperf/probe/responder.hpp"

using namespace mecperf;
using namespace mecperf::probe;

namespace {

struct CountingSink : core::MeasurementSink {
  int calls = 0;
  std::vector<core::MeasurementRecord> seen;
  std::vector<std::string> submit(std::span<const core::MeasurementRecord> records, core::Method) override {
    ++calls;
    seen.assign(records.begin(), records.end());
    return {"1"};
  }
};

ProbeSession session_to(const net::Address& peer, Transport t) {
  ProbeSession s;
  s.peer = peer;
  s.transport = t;
  return s;
}

double median_of(const std::vector<core::MeasurementRecord>& records) {
  std::vector<double> v;
  for (const auto& r : records) v.push_back(r.value);
  std::sort(v.begin(), v.end());
  return v.size() % 2 ? v[v.size() / 2] : 0.5 * (v[v.size() / 2 - 1] + v[v.size() / 2]);
}

}  // namespace

TEST_CASE("header encoding is big endian and rejects foreign magic") {
  const auto bytes = encode({Op::bw_request, kFlagDownstream, 1024, 4});
  const std::array<std::uint8_t, 16> expected{0x4D, 0x45, 0x43, 0x50, 0x00, 0x01, 0x00, 0x01,
                                              0x00, 0x00, 0x04, 0x00, 0x00, 0x00, 0x00, 0x04};
  CHECK(bytes == expected);
  const auto h = decode_header(bytes);
  CHECK(h.op == Op::bw_request);
  CHECK(h.direction() == core::Direction::downstream);
  auto bad = bytes;
  bad[0] = 'G';
  CHECK_THROWS_AS(decode_header(bad), ProtocolError);
  bad = bytes;
  bad[5] = 99;
  CHECK_THROWS_AS(decode_header(bad), ProtocolError);
}

TEST_CASE("bandwidth arithmetic") {
  CHECK(bandwidth_mbps(1024ull * 1420, 1'000'000'000) == doctest::Approx(11.63264).epsilon(1e-12));
  CHECK_THROWS_AS(bandwidth_mbps(100, 0), MeasurementError);
}

TEST_CASE("packet-pair estimates") {
  const std::vector<PairArrival> one{{0, 1'000'000}};
  CHECK(estimate_capacity(1420, one).median_mbps == doctest::Approx(11.36));

  std::vector<PairArrival> outlier;
  for (int i = 0; i < 24; ++i) outlier.push_back({i * 10'000'000LL, i * 10'000'000LL + 1'000'000});
  outlier.push_back({500'000'000, 500'100'000});
  const auto est = estimate_capacity(1420, outlier);
  CHECK(est.median_mbps == doctest::Approx(11.36));
  CHECK(*est.per_pair_mbps.back() == doctest::Approx(113.6));

  std::vector<PairArrival> lost(25);
  CHECK_THROWS_AS(estimate_capacity(1420, lost), MeasurementError);
  for (int i = 0; i < 12; ++i) lost[i] = {0, 1'000'000};
  CHECK_THROWS_AS(estimate_capacity(1420, lost), MeasurementError);  // 13 of 25 lost
  lost[12] = {0, 2'000'000};
  const auto half = estimate_capacity(1420, lost);
  CHECK(half.lost == 12);
  CHECK(half.median_mbps == doctest::Approx(11.36));

  const std::vector<PairArrival> unresolved{{5, 5}, {0, 1'000'000}};
  const auto u = estimate_capacity(1420, unresolved, 1);
  CHECK(u.unresolved == 1);
  CHECK_FALSE(u.per_pair_mbps[0].has_value());
}

TEST_CASE("packet-pair median matches brute force and ignores constant delay") {
  std::mt19937_64 gen(11);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + gen() % 40;
    const std::uint32_t size = 100 + static_cast<std::uint32_t>(gen() % 1400);
    std::vector<PairArrival> schedule;
    std::vector<double> oracle;
    std::int64_t t = static_cast<std::int64_t>(gen() % 1'000'000);
    for (std::size_t i = 0; i < n; ++i) {
      const std::int64_t dt = 2 + static_cast<std::int64_t>(gen() % 3'000'000);
      schedule.push_back({t, t + dt});
      oracle.push_back(size * 8.0 / (dt * 1e-9) / 1e6);
      t += dt + static_cast<std::int64_t>(gen() % 20'000'000);
    }
    std::sort(oracle.begin(), oracle.end());
    const double expected = n % 2 ? oracle[n / 2] : 0.5 * (oracle[n / 2 - 1] + oracle[n / 2]);
    const auto est = estimate_capacity(size, schedule);
    CHECK(est.median_mbps == expected);
    const std::int64_t delay = static_cast<std::int64_t>(gen() % 500'000'000);
    auto shifted = schedule;
    for (auto& p : shifted) {
      *p.first_ns += delay;
      *p.second_ns += delay;
    }
    CHECK(estimate_capacity(size, shifted).per_pair_mbps == est.per_pair_mbps);
  }
}

TEST_CASE("config validation") {
  CHECK_THROWS_AS((BandwidthProbeConfig{1, 1420, 10}.validate()), core::DomainError);
  CHECK_THROWS_AS((BandwidthProbeConfig{1024, 0, 10}.validate()), core::DomainError);
  CHECK_THROWS_AS((CapacityProbeConfig{0}.validate()), core::DomainError);
  CHECK_THROWS_AS((LatencyProbeConfig{0}.validate()), core::DomainError);
}

TEST_CASE("probes against a loopback responder") {
  Responder responder({});
  responder.start();
  const auto peer = responder.address();

  SUBCASE("stream bandwidth both directions") {
    for (auto dir : {core::Direction::upstream, core::Direction::downstream}) {
      const auto records = measure_stream_bandwidth(session_to(peer, Transport::tcp), {256, 1420, 3}, dir);
      REQUIRE(records.size() == 3);
      for (const auto& r : records) {
        CHECK(r.value > 0);
        CHECK(r.descriptor.metric.type() == core::MetricType::tcp_bandwidth);
        CHECK(r.descriptor.direction == dir);
        CHECK(r.run_id == records[0].run_id);
        CHECK_NOTHROW(r.validate());
      }
    }
  }

  SUBCASE("zero-delay echo stays under 5 ms") {
    for (auto t : {Transport::tcp, Transport::udp}) {
      const auto result = measure_echo_latency(session_to(peer, t), {});
      CHECK(result.records.size() == 25);
      CHECK(result.timeouts == 0);
      for (const auto& r : result.records) {
        CHECK(r.value < 5.0);
        CHECK(r.tag.empty());
      }
    }
  }

  SUBCASE("packet pairs both directions") {
    for (auto dir : {core::Direction::upstream, core::Direction::downstream}) {
      CapacityProbeConfig cfg;
      cfg.gap = std::chrono::microseconds(2000);
      const auto result = measure_packet_pair_capacity(session_to(peer, Transport::udp), cfg, dir);
      const auto pairs = std::count_if(result.records.begin(), result.records.end(),
                                       [](const auto& r) { return r.tag == "pair"; });
      CHECK(pairs + result.discarded == 25);
      CHECK(result.records.back().tag == "median");
      CHECK(result.records.back().value > 0);
      for (std::size_t i = 1; i < result.records.size(); ++i) {
        CHECK(result.records[i - 1].timestamp < result.records[i].timestamp);
      }
    }
  }

  SUBCASE("unknown peers and foreign protocols") {
    net::Fd placeholder = net::listen_tcp({"127.0.0.1", 0});
    const auto closed = net::local_address(placeholder);
    placeholder.reset();
    CHECK_THROWS_AS(measure_stream_bandwidth(session_to(closed, Transport::tcp), {}, core::Direction::upstream),
                    SessionError);

    net::Fd rogue = net::listen_tcp({"127.0.0.1", 0});
    std::thread t([&] {
      if (auto c = net::accept_tcp(rogue, std::chrono::seconds(5))) {
        const std::string junk = "HTTP/1.1 400 Bad Request\r\n\r\n";
        net::send_all(*c, {reinterpret_cast<const std::uint8_t*>(junk.data()), junk.size()});
        std::this_thread::sleep_for(std::chrono::milliseconds(100));
      }
    });
    CHECK_THROWS_AS(measure_echo_latency(session_to(net::local_address(rogue), Transport::tcp), {}), HandshakeError);
    t.join();
  }

  SUBCASE("suite isolates failures and never overlaps probes") {
    CountingSink sink;
    CHECK(run_active_suite({}, &sink).records.empty());
    CHECK(sink.calls == 0);

    std::vector<PlanItem> plan;
    plan.push_back({session_to({"127.0.0.1", 1}, Transport::tcp), LatencyProbeConfig{}, core::Direction::upstream});
    plan.push_back({session_to(peer, Transport::tcp), LatencyProbeConfig{5}, core::Direction::upstream});
    const auto result = run_active_suite(plan, &sink);
    REQUIRE(result.errors.size() == 1);
    CHECK(result.errors[0].item == 0);
    CHECK(result.records.size() == 5);
    CHECK(sink.calls == 1);
    CHECK(result.intervals[0].second <= result.intervals[1].first);
  }

  SUBCASE("default plan expands to the expected record counts") {
    auto plan = default_plan(peer, peer, core::AccessTechnology::lte, 20);
    REQUIRE(plan.size() == 12);
    for (auto& item : plan) {
      if (auto* cap = std::get_if<CapacityProbeConfig>(&item.config)) cap->gap = std::chrono::microseconds(1000);
      if (auto* bw = std::get_if<BandwidthProbeConfig>(&item.config)) bw->num_packets = 128;
    }
    CountingSink sink;
    const auto result = run_active_suite(plan, &sink);
    CHECK(result.errors.empty());
    for (auto seg : {core::SegmentId::access_mec, core::SegmentId::access_cloud}) {
      for (auto dir : {core::Direction::upstream, core::Direction::downstream}) {
        std::map<std::string, int> count;
        for (const auto& r : sink.seen) {
          if (r.descriptor.segment != seg || r.descriptor.direction != dir) continue;
          CHECK(r.descriptor.access_technology == core::AccessTechnology::lte);
          CHECK(r.descriptor.cross_traffic_mbps == 20);
          const auto key = std::string(core::to_string(r.descriptor.metric.type())) + r.tag;
          ++count[key];
        }
        CHECK(count["tcp_bandwidth"] == 10);
        CHECK(count["udp_capacitymedian"] == 1);
        CHECK(count["udp_capacitypair"] > 12);
        CHECK(count["tcp_latency"] == 25);
      }
    }
    for (std::size_t i = 1; i < result.intervals.size(); ++i) {
      CHECK(result.intervals[i - 1].second <= result.intervals[i].first);
    }
  }
  responder.stop();
}

TEST_CASE("shaped path: rate, delay and forced drops") {
  Responder responder({});
  responder.start();

  SUBCASE("stream bandwidth tracks the shaped rate") {
    harness::ShaperConfig cfg;
    cfg.rate_mbps = 20;
    harness::Shaper shaper(responder.address(), cfg);
    const auto via = shaper.start();
    const auto records = measure_stream_bandwidth(session_to(via, Transport::tcp), {512, 1420, 3},
                                                  core::Direction::downstream);
    CHECK(median_of(records) == doctest::Approx(20.0).epsilon(0.05));
  }

  SUBCASE("packet pairs recover the shaped rate") {
    harness::ShaperConfig cfg;
    cfg.rate_mbps = 20;
    harness::Shaper shaper(responder.address(), cfg);
    const auto via = shaper.start();
    const auto result = measure_packet_pair_capacity(session_to(via, Transport::udp), {},
                                                     core::Direction::upstream);
    CHECK(result.records.back().value == doctest::Approx(20.0).epsilon(0.1));
  }

  SUBCASE("echo latency adds the injected delay") {
    harness::Shaper base(responder.address(), {});
    const double baseline = median_of(measure_echo_latency(session_to(base.start(), Transport::tcp), {}).records);
    harness::ShaperConfig cfg;
    cfg.added_rtt = std::chrono::milliseconds(10);
    harness::Shaper shaper(responder.address(), cfg);
    const double rtt = median_of(measure_echo_latency(session_to(shaper.start(), Transport::tcp), {}).records);
    CHECK(std::abs(rtt - (10.0 + baseline)) < 1.0);
  }

  SUBCASE("three dropped UDP probes yield 22 samples flagged with the count") {
    harness::ShaperConfig cfg;
    cfg.drop_upstream = [](std::size_t i) { return i == 3 || i == 7 || i == 11; };
    harness::Shaper shaper(responder.address(), cfg);
    auto s = session_to(shaper.start(), Transport::udp);
    s.timeout = std::chrono::milliseconds(200);
    const auto result = measure_echo_latency(s, {});
    CHECK(result.records.size() == 22);
    CHECK(result.timeouts == 3);
    for (const auto& r : result.records) CHECK(r.tag == "timeouts=3");

    harness::ShaperConfig all;
    all.drop_upstream = [](std::size_t) { return true; };
    harness::Shaper black_hole(responder.address(), all);
    auto b = session_to(black_hole.start(), Transport::udp);
    b.timeout = std::chrono::milliseconds(50);
    CHECK_THROWS_AS(measure_echo_latency(b, {4}), MeasurementError);
  }
  responder.stop();
}
