#pragma once

// Probe wire protocol. Every message starts with a 16-byte header, all
// fields big-endian:
//
//   offset 0  u32 magic        0x4D454350 ("MECP")
//   offset 4  u16 opcode       see Op
//   offset 6  u16 flags        bit 0: downstream (responder sends)
//   offset 8  u32 seq
//   offset 12 u32 length       bytes of payload following the header
//
// TCP messages are the header plus `length` payload bytes. A UDP datagram
// holds exactly one message. docs/wire-protocol.md lists the payload of
// each opcode.

#include <array>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "mecperf/core/types.hpp"

namespace mecperf::probe {

inline constexpr std::uint32_t kMagic = 0x4D454350;
inline constexpr std::size_t kHeaderSize = 16;

enum class Op : std::uint16_t {
  error = 0,            // payload: UTF-8 message
  bw_request = 1,       // seq: num_packets; payload: u32 packet_size
  bw_ready = 2,         // responder accepted; upstream sender may start
  bw_result = 3,        // payload: u64 bytes, u64 elapsed_ns (receiver clock)
  echo = 4,             // payload: opaque, echoed back
  echo_reply = 5,
  cap_begin = 6,        // seq: num_pairs; payload: u32 packet_size, u32 gap_us
  cap_ready = 7,
  cap_data = 8,         // seq: 2 * pair + k; padded to packet_size bytes
  cap_end = 9,          // upstream: sender finished
  cap_report = 10,      // payload: 2 * num_pairs i64 arrival_ns, -1 when lost
  cap_done = 11,        // downstream: responder finished sending
};

inline constexpr std::uint16_t kFlagDownstream = 0x1;

class ProtocolError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Header {
  Op op = Op::error;
  std::uint16_t flags = 0;
  std::uint32_t seq = 0;
  std::uint32_t length = 0;

  core::Direction direction() const {
    return (flags & kFlagDownstream) ? core::Direction::downstream : core::Direction::upstream;
  }
  friend bool operator==(const Header&, const Header&) = default;
};

std::array<std::uint8_t, kHeaderSize> encode(const Header& h);
/// Throws ProtocolError on a wrong magic or unknown opcode.
Header decode_header(std::span<const std::uint8_t> bytes);

/// Header followed by payload in one buffer.
std::vector<std::uint8_t> message(Op op, std::uint16_t flags, std::uint32_t seq,
                                  std::span<const std::uint8_t> payload = {});

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v);
void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v);
std::uint32_t get_u32(std::span<const std::uint8_t> in, std::size_t offset);
std::uint64_t get_u64(std::span<const std::uint8_t> in, std::size_t offset);

std::uint16_t direction_flags(core::Direction d);

}  // namespace mecperf::probe
