#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "mecperf/core/types.hpp"

namespace mecperf::passive {

enum class Transport : std::uint8_t { tcp = 6, udp = 17 };

namespace tcp_flags {
inline constexpr std::uint8_t fin = 0x01;
inline constexpr std::uint8_t syn = 0x02;
inline constexpr std::uint8_t rst = 0x04;
inline constexpr std::uint8_t psh = 0x08;
inline constexpr std::uint8_t ack = 0x10;
}  // namespace tcp_flags

/// IPv4 address in host byte order.
struct Ipv4 {
  std::uint32_t value = 0;

  static Ipv4 parse(std::string_view dotted);
  std::string str() const;
  friend auto operator<=>(const Ipv4&, const Ipv4&) = default;
};

struct TcpInfo {
  std::uint32_t seq = 0;
  std::uint32_t ack = 0;
  std::uint8_t flags = 0;
  friend bool operator==(const TcpInfo&, const TcpInfo&) = default;
};

/// One decoded packet. payload_length counts transport payload only.
struct PacketRecord {
  core::Timestamp capture_timestamp;
  Ipv4 src;
  Ipv4 dst;
  std::uint16_t src_port = 0;
  std::uint16_t dst_port = 0;
  Transport transport = Transport::tcp;
  std::uint32_t payload_length = 0;
  std::optional<TcpInfo> tcp;  // present iff transport == tcp

  friend bool operator==(const PacketRecord&, const PacketRecord&) = default;
};

class CaptureFormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ParsedCapture {
  std::vector<PacketRecord> packets;
  std::size_t skipped = 0;  // truncated, non-IPv4, non-TCP/UDP, or fragments
};

/// Parses a classic libpcap capture (either byte order, usec or nsec
/// timestamps, Ethernet link type). pcapng input is rejected.
ParsedCapture parse_capture(std::span<const std::uint8_t> bytes);

/// Minimal classic-pcap writer for synthetic captures. Frames are Ethernet +
/// IPv4 + TCP/UDP with zero-filled payloads.
class PcapWriter {
 public:
  struct Options {
    bool nanosecond = false;
    bool swapped = false;  // write in the opposite of little-endian order
    std::uint32_t snaplen = 65535;
  };

  PcapWriter();
  explicit PcapWriter(Options options);

  void add(const PacketRecord& packet);
  const std::vector<std::uint8_t>& bytes() const { return buffer_; }

 private:
  void put16(std::uint16_t v);
  void put32(std::uint32_t v);

  Options options_;
  std::vector<std::uint8_t> buffer_;
};

}  // namespace mecperf::passive
