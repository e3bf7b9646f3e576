#include "mecperf/fixtures/synthetic_capture.hpp"

#include <algorithm>
#include <cmath>

namespace mecperf::fixtures {

using passive::PacketRecord;
using passive::TcpInfo;
using passive::Transport;
namespace flags = passive::tcp_flags;

namespace {

std::int64_t interval_us(std::uint32_t payload, double rate_mbps) {
  return std::llround(static_cast<double>(payload) * 8.0 / rate_mbps);
}

}  // namespace

std::vector<PacketRecord> synthetic_tcp_flow(const TcpFlowSpec& spec) {
  std::vector<PacketRecord> out;
  const std::int64_t step = interval_us(spec.payload, spec.rate_mbps);
  const auto ack_delay = std::llround(spec.ack_delay_ms * 1000.0);
  const std::uint32_t server_isn = 500000;

  auto packet = [&](std::int64_t t, bool from_client, std::uint32_t seq, std::uint32_t ack, std::uint8_t f,
                    std::uint32_t len) {
    PacketRecord p;
    p.capture_timestamp.micros = t;
    p.src = from_client ? spec.client : spec.server;
    p.dst = from_client ? spec.server : spec.client;
    p.src_port = from_client ? spec.client_port : spec.server_port;
    p.dst_port = from_client ? spec.server_port : spec.client_port;
    p.transport = Transport::tcp;
    p.payload_length = len;
    p.tcp = TcpInfo{seq, ack, f};
    out.push_back(p);
  };

  std::int64_t t = spec.start_us;
  std::uint32_t seq = spec.initial_seq;
  if (spec.handshake) {
    packet(t - 3 * ack_delay - 2, true, seq - 1, 0, flags::syn, 0);
    packet(t - 2 * ack_delay - 1, false, server_isn, seq, flags::syn | flags::ack, 0);
    packet(t - ack_delay, true, seq, server_isn + 1, flags::ack, 0);
  }
  const auto count = static_cast<std::size_t>(std::llround(spec.duration_s * 1e6 / static_cast<double>(step)));
  for (std::size_t i = 0; i < count; ++i) {
    const std::int64_t sent = t + static_cast<std::int64_t>(i) * step;
    packet(sent, true, seq, server_isn + 1, flags::ack | flags::psh, spec.payload);
    std::int64_t acked_after = sent;
    if (spec.retransmit.count(i) != 0) {
      acked_after = sent + 1000;
      packet(acked_after, true, seq, server_isn + 1, flags::ack | flags::psh, spec.payload);
    }
    seq += spec.payload;
    packet(acked_after + ack_delay, false, server_isn + 1, seq, flags::ack, 0);
  }
  std::stable_sort(out.begin(), out.end(), [](const PacketRecord& a, const PacketRecord& b) {
    return a.capture_timestamp < b.capture_timestamp;
  });
  return out;
}

std::vector<PacketRecord> synthetic_udp_flow(const UdpFlowSpec& spec) {
  std::vector<PacketRecord> out;
  const std::int64_t step = interval_us(spec.payload, spec.rate_mbps);
  const auto count = static_cast<std::size_t>(std::llround(spec.duration_s * 1e6 / static_cast<double>(step)));
  for (std::size_t i = 0; i < count; ++i) {
    PacketRecord p;
    p.capture_timestamp.micros = spec.start_us + static_cast<std::int64_t>(i) * step;
    p.src = spec.client;
    p.dst = spec.server;
    p.src_port = spec.client_port;
    p.dst_port = spec.server_port;
    p.transport = Transport::udp;
    p.payload_length = spec.payload;
    out.push_back(p);
  }
  return out;
}

std::vector<std::uint8_t> to_pcap(std::vector<PacketRecord> packets, passive::PcapWriter::Options options) {
  std::stable_sort(packets.begin(), packets.end(), [](const PacketRecord& a, const PacketRecord& b) {
    return a.capture_timestamp < b.capture_timestamp;
  });
  passive::PcapWriter writer(options);
  for (const auto& p : packets) writer.add(p);
  return writer.bytes();
}

}  // namespace mecperf::fixtures
