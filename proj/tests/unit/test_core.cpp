#include <doctest.h>

#include <random>

#include "mecperf/core/record.hpp"
#include "mecperf/core/rng.hpp"
#include "random_records.hpp"

using namespace mecperf::core;

namespace {

TraceDescriptor bandwidth_descriptor() {
  TraceDescriptor d;
  d.method = Method::active;
  d.metric = MetricType::tcp_bandwidth;
  d.segment = SegmentId::access_mec;
  d.direction = Direction::downstream;
  d.access_technology = AccessTechnology::wifi;
  d.cross_traffic_mbps = 0;
  return d;
}

}  // namespace

TEST_CASE("descriptor_matches on single-field, empty and mismatching queries") {
  const TraceDescriptor d = bandwidth_descriptor();

  DescriptorQuery by_segment;
  by_segment.segment = SegmentId::access_mec;
  CHECK(descriptor_matches(d, by_segment));

  CHECK(descriptor_matches(d, DescriptorQuery{}));

  DescriptorQuery lte;
  lte.access_technology = AccessTechnology::lte;
  CHECK_FALSE(descriptor_matches(d, lte));
}

TEST_CASE("descriptor_matches is reflexive and monotone under field removal") {
  std::mt19937_64 gen(7);
  for (int i = 0; i < 500; ++i) {
    const TraceDescriptor d = testing::random_descriptor(gen);
    DescriptorQuery q = DescriptorQuery::from(d);
    REQUIRE(descriptor_matches(d, q));
    // Drop fields one at a time in random order; the match must survive.
    std::vector<int> order{0, 1, 2, 3, 4, 5, 6, 7};
    std::shuffle(order.begin(), order.end(), gen);
    for (int field : order) {
      switch (field) {
        case 0: q.method.reset(); break;
        case 1: q.metric.reset(); break;
        case 2: q.label.reset(); break;
        case 3: q.segment.reset(); break;
        case 4: q.direction.reset(); break;
        case 5: q.access_technology.reset(); break;
        case 6: q.cross_traffic_mbps.reset(); break;
        case 7: q.num_clients.reset(); break;
      }
      CHECK(descriptor_matches(d, q));
    }
    CHECK(q.empty());
  }
}

TEST_CASE("record JSON round trip is bit exact") {
  std::mt19937_64 gen(11);
  for (int i = 0; i < 500; ++i) {
    const MeasurementRecord r = testing::random_record(gen);
    const auto text = encode(r).dump();
    const MeasurementRecord back = decode_record(nlohmann::json::parse(text));
    CHECK(back == r);
    CHECK(std::bit_cast<std::uint64_t>(back.value) == std::bit_cast<std::uint64_t>(r.value));
  }
}

TEST_CASE("ndjson encoding is deterministic and decodes back") {
  std::mt19937_64 gen(3);
  std::vector<MeasurementRecord> records;
  for (int i = 0; i < 20; ++i) records.push_back(testing::random_record(gen));
  const std::string a = encode_ndjson(records);
  CHECK(a == encode_ndjson(records));
  CHECK(decode_ndjson(a) == records);
}

TEST_CASE("metric kind invariants") {
  CHECK_THROWS_AS(MetricKind::self_metric(""), DomainError);
  CHECK_THROWS_AS(MetricKind(MetricType::self_metric), DomainError);
  CHECK(MetricKind::self_metric("dash_bitrate").label() == "dash_bitrate");

  TraceDescriptor d = bandwidth_descriptor();
  d.num_clients = 3;
  CHECK_THROWS_AS(d.validate(), DomainError);  // active runs carry no client count

  d = bandwidth_descriptor();
  d.method = Method::self;
  CHECK_THROWS_AS(d.validate(), DomainError);
}

TEST_CASE("decode reports the offending field") {
  auto j = encode(MeasurementRecord{"id1", bandwidth_descriptor(), Timestamp{5}, 1.0, "Mbps", "run", ""});
  j["descriptor"]["segment"] = "moon";
  try {
    decode_record(j);
    FAIL("expected DecodeError");
  } catch (const DecodeError& e) {
    CHECK(e.field() == "descriptor.segment");
  }
  j = encode(MeasurementRecord{"id1", bandwidth_descriptor(), Timestamp{5}, 1.0, "Mbps", "run", ""});
  j.erase("value");
  CHECK_THROWS_AS(decode_record(j), DecodeError);
}

TEST_CASE("units are converted into the canonical unit") {
  MeasurementRecord r{"id", bandwidth_descriptor(), Timestamp{1}, 1500.0, "Kbps", "run", ""};
  r = normalize_units(r);
  CHECK(r.unit == "Mbps");
  CHECK(r.value == doctest::Approx(1.5));

  TraceDescriptor lat = bandwidth_descriptor();
  lat.metric = MetricType::tcp_latency;
  MeasurementRecord l{"id", lat, Timestamp{1}, 0.25, "s", "run", ""};
  l = normalize_units(l);
  CHECK(l.unit == "ms");
  CHECK(l.value == doctest::Approx(250.0));

  l.unit = "fortnights";
  CHECK_THROWS_AS(normalize_units(l), DomainError);
}

TEST_CASE("record validation") {
  MeasurementRecord r{"id", bandwidth_descriptor(), Timestamp{1}, -1.0, "Mbps", "run", ""};
  CHECK_THROWS_AS(r.validate(), DomainError);
  r.value = 1.0;
  r.unit = "ms";
  CHECK_THROWS_AS(r.validate(), DomainError);
  r.unit = "Mbps";
  CHECK_NOTHROW(r.validate());
}

TEST_CASE("SplitMix64 reproduces the reference vectors") {
  SplitMix64 g(1234567);
  CHECK(g.next() == 6457827717110365317ULL);
  CHECK(g.next() == 3203168211198807973ULL);
  CHECK(g.next() == 9817491932198370423ULL);
  CHECK(g.next() == 4593380528125082431ULL);
  CHECK(g.next() == 16408922859458223821ULL);
}
