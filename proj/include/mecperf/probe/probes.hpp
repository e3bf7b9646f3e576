#pragma once

#include <chrono>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "mecperf/core/record.hpp"
#include "mecperf/core/sink.hpp"
#include "mecperf/net/socket.hpp"

namespace mecperf::probe {

enum class Role { client, observer, remote_server };
enum class Transport { tcp, udp };

std::string_view to_string(Role r);
std::string_view to_string(Transport t);
Role parse_role(std::string_view s);
Transport parse_transport(std::string_view s);

/// One initiator talking to one responder over one segment. The descriptor
/// fields that the probe cannot observe (technology, cross traffic) are
/// carried here and stamped onto every record.
struct ProbeSession {
  Role local_role = Role::client;
  net::Address peer;
  Transport transport = Transport::tcp;
  core::SegmentId segment = core::SegmentId::access_mec;
  core::AccessTechnology access_technology = core::AccessTechnology::wifi;
  double cross_traffic_mbps = 0.0;
  std::chrono::milliseconds timeout{2000};  // UDP probe timeout and TCP I/O deadline
};

struct BandwidthProbeConfig {
  std::uint32_t num_packets = 1024;
  std::uint32_t packet_size = 1420;
  std::uint32_t repetitions = 10;
  void validate() const;
};

struct CapacityProbeConfig {
  std::uint32_t num_pairs = 25;
  // Whole datagram, header included, so the wire size is exactly this.
  std::uint32_t packet_size = 1420;
  std::chrono::microseconds gap{10000};  // idle time between pairs
  void validate() const;
};

struct LatencyProbeConfig {
  std::uint32_t num_probes = 25;
  std::uint32_t payload_size = 1;
  std::chrono::microseconds spacing{0};
  void validate() const;
};

/// Could not reach the peer or the connection broke.
class SessionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The peer answered but not with the probe protocol, or refused.
class HandshakeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The exchange completed but yielded no usable estimate.
class MeasurementError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ProbeResult {
  std::vector<core::MeasurementRecord> records;
  std::size_t timeouts = 0;   // latency probes left unanswered
  std::size_t discarded = 0;  // capacity pairs lost or below clock resolution
};

/// bytes * 8 / elapsed in Mbps. Throws MeasurementError when elapsed <= 0.
double bandwidth_mbps(std::uint64_t bytes, std::int64_t elapsed_ns);

/// Arrival times of the two packets of a pair on the receiver's clock;
/// nullopt when that packet never arrived.
struct PairArrival {
  std::optional<std::int64_t> first_ns;
  std::optional<std::int64_t> second_ns;
};

struct CapacityEstimate {
  std::vector<std::optional<double>> per_pair_mbps;  // nullopt for discarded pairs
  double median_mbps = 0.0;
  std::size_t lost = 0;
  std::size_t unresolved = 0;  // dispersion at or below the clock resolution
};

/// Per-pair estimate packet_size * 8 / (second - first) and their median.
/// Throws MeasurementError when more than half the pairs are lost or no
/// pair is usable.
CapacityEstimate estimate_capacity(std::uint32_t packet_size, std::span<const PairArrival> arrivals,
                                   std::int64_t resolution_ns = 1);

/// One tcp_bandwidth record per repetition, timed at the receiver from the
/// first to the last payload byte.
std::vector<core::MeasurementRecord> measure_stream_bandwidth(const ProbeSession& session,
                                                              const BandwidthProbeConfig& cfg,
                                                              core::Direction direction);

/// udp_capacity records: one per usable pair (tag "pair") and the median
/// (tag "median"), all under one run id.
ProbeResult measure_packet_pair_capacity(const ProbeSession& session, const CapacityProbeConfig& cfg,
                                         core::Direction direction);

/// tcp_latency or udp_latency samples, one per answered probe. The RTT is
/// always timed by the initiator; `direction` only labels the records.
/// Partial timeouts tag every record "timeouts=N".
ProbeResult measure_echo_latency(const ProbeSession& session, const LatencyProbeConfig& cfg,
                                 core::Direction direction = core::Direction::upstream);

using ProbeConfig = std::variant<BandwidthProbeConfig, CapacityProbeConfig, LatencyProbeConfig>;

struct PlanItem {
  ProbeSession session;
  ProbeConfig config;
  core::Direction direction = core::Direction::upstream;
};

struct SuiteError {
  std::size_t item = 0;  // plan index; plan.size() for the submission step
  std::string message;
};

struct SuiteResult {
  std::vector<core::MeasurementRecord> records;
  std::vector<SuiteError> errors;
  // Monotonic start/end of each executed item, for auditing serialization.
  std::vector<std::pair<std::int64_t, std::int64_t>> intervals;
  std::vector<std::string> batch_ids;
};

/// Runs the plan one item at a time. A failing item is recorded in `errors`
/// and the suite moves on. Records are submitted to `sink` (when given and
/// non-empty) after the last item.
SuiteResult run_active_suite(std::span<const PlanItem> plan, core::MeasurementSink* sink);

/// The default experiment: for access_mec via the Observer and access_cloud
/// via the Remote Server, in both directions, 10 stream bandwidth
/// repetitions, 25 packet pairs and 25 TCP echo probes.
std::vector<PlanItem> default_plan(const net::Address& observer, const net::Address& remote,
                                   core::AccessTechnology technology, double cross_traffic_mbps);

}  // namespace mecperf::probe
