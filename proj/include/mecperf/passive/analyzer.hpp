#pragma once

#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "mecperf/core/record.hpp"
#include "mecperf/core/sink.hpp"
#include "mecperf/passive/pcap.hpp"

namespace mecperf::passive {

struct Endpoint {
  Ipv4 address;
  std::uint16_t port = 0;
  friend auto operator<=>(const Endpoint&, const Endpoint&) = default;
};

/// Canonical 5-tuple: `low` is the lexicographically smaller endpoint, so
/// both directions of a connection map to the same key.
struct FlowKey {
  Transport transport = Transport::tcp;
  Endpoint low;
  Endpoint high;

  static FlowKey of(const PacketRecord& p);
  friend auto operator<=>(const FlowKey&, const FlowKey&) = default;
};

enum class HalfDirection { low_to_high, high_to_low };

HalfDirection half_of(const FlowKey& key, const PacketRecord& p);

/// Packets of one flow split by direction, each list in capture order.
struct Flow {
  FlowKey key;
  std::vector<PacketRecord> low_to_high;
  std::vector<PacketRecord> high_to_low;
  // Endpoint that opened the flow: the sender of the first bare SYN, or of
  // the first packet when the handshake was not captured.
  Endpoint initiator;

  const std::vector<PacketRecord>& from_initiator() const;
  const std::vector<PacketRecord>& to_initiator() const;
};

using PacketPredicate = std::function<bool(const PacketRecord&)>;

/// Filter expressions: terms joined by "and", each one of
/// `[src|dst] host A.B.C.D` or `[src|dst] port N`. Undirected terms match
/// either endpoint. The empty expression matches everything.
PacketPredicate parse_filter(std::string_view expression);

std::map<FlowKey, Flow> extract_flows(std::span<const PacketRecord> records,
                                      const PacketPredicate& filter = {});

struct ThroughputBin {
  core::Timestamp bin_start;
  double bin_width_s = 0.5;
  std::uint64_t bytes = 0;
  double throughput_mbps = 0.0;
};

/// Left-closed, right-open bins of `bin_width_s` anchored at the first
/// packet; interior empty bins are emitted with zero bytes.
std::vector<ThroughputBin> binned_throughput(std::span<const PacketRecord> packets,
                                             double bin_width_s = 0.5);

class UnsupportedMetric : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct AckSample {
  core::Timestamp data_time;
  double latency_ms = 0.0;
  bool from_initiator = true;  // direction of the acknowledged data
};

/// Matches every first-transmission data segment with the first later
/// reverse-direction ACK covering it. Segments whose byte range was ever
/// retransmitted produce no sample. Throws UnsupportedMetric for UDP.
std::vector<AckSample> ack_latency(const Flow& flow);

struct AnalysisOptions {
  PacketPredicate filter;
  double bin_width_s = 0.5;
};

struct AnalysisResult {
  std::vector<core::MeasurementRecord> records;
  std::vector<std::string> errors;
  std::vector<std::string> warnings;
  std::size_t flows = 0;
  std::size_t skipped_packets = 0;
};

/// Full passive pipeline over one capture. `descriptor.method` must be
/// passive; its metric and direction are replaced per emitted record, with
/// traffic from the flow initiator stamped upstream. Records are
/// deterministic in the capture bytes, ids included. When `sink` is given
/// the records are submitted to it, partial results included.
AnalysisResult analyze_capture(std::span<const std::uint8_t> capture,
                               const core::TraceDescriptor& descriptor,
                               const AnalysisOptions& options = {},
                               core::MeasurementSink* sink = nullptr);

/// Analyses several captures concurrently; results are in input order.
std::vector<AnalysisResult> analyze_captures(std::span<const std::vector<std::uint8_t>> captures,
                                             const core::TraceDescriptor& descriptor,
                                             const AnalysisOptions& options = {});

/// Bins and latency samples as CSV, for plotting.
std::string dump_csv(const AnalysisResult& result);

}  // namespace mecperf::passive
