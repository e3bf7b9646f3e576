#pragma once

#include <cstdint>
#include <set>
#include <vector>

#include "mecperf/passive/pcap.hpp"

namespace mecperf::fixtures {

/// A constant-rate bulk TCP transfer from client to server, with the
/// server acknowledging every data segment after `ack_delay_ms`.
struct TcpFlowSpec {
  passive::Ipv4 client = passive::Ipv4::parse("10.0.0.1");
  passive::Ipv4 server = passive::Ipv4::parse("10.0.0.2");
  std::uint16_t client_port = 40000;
  std::uint16_t server_port = 8080;
  std::int64_t start_us = 1'700'000'000'000'000LL;
  double rate_mbps = 10.0;
  double duration_s = 5.0;
  std::uint32_t payload = 1250;
  double ack_delay_ms = 0.8;
  std::uint32_t initial_seq = 1000;
  bool handshake = true;
  // Data segment indices that are sent a second time, 1 ms after the
  // original; the ACK then follows the retransmission.
  std::set<std::size_t> retransmit;
};

std::vector<passive::PacketRecord> synthetic_tcp_flow(const TcpFlowSpec& spec);

struct UdpFlowSpec {
  passive::Ipv4 client = passive::Ipv4::parse("10.0.0.1");
  passive::Ipv4 server = passive::Ipv4::parse("10.0.0.2");
  std::uint16_t client_port = 40001;
  std::uint16_t server_port = 9000;
  std::int64_t start_us = 1'700'000'000'000'000LL;
  double rate_mbps = 10.0;
  double duration_s = 5.0;
  std::uint32_t payload = 1250;
};

std::vector<passive::PacketRecord> synthetic_udp_flow(const UdpFlowSpec& spec);

/// Serialises packets (sorted by time) into a classic pcap byte stream.
std::vector<std::uint8_t> to_pcap(std::vector<passive::PacketRecord> packets,
                                  passive::PcapWriter::Options options = {});

}  // namespace mecperf::fixtures
