#include "mecperf/probe/protocol.hpp"

#include <algorithm>
#include <string>

namespace mecperf::probe {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int s = 24; s >= 0; s -= 8) out.push_back(static_cast<std::uint8_t>(v >> s));
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int s = 56; s >= 0; s -= 8) out.push_back(static_cast<std::uint8_t>(v >> s));
}

std::uint32_t get_u32(std::span<const std::uint8_t> in, std::size_t offset) {
  if (offset + 4 > in.size()) throw ProtocolError("truncated message");
  std::uint32_t v = 0;
  for (std::size_t i = 0; i < 4; ++i) v = (v << 8) | in[offset + i];
  return v;
}

std::uint64_t get_u64(std::span<const std::uint8_t> in, std::size_t offset) {
  if (offset + 8 > in.size()) throw ProtocolError("truncated message");
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < 8; ++i) v = (v << 8) | in[offset + i];
  return v;
}

std::array<std::uint8_t, kHeaderSize> encode(const Header& h) {
  std::vector<std::uint8_t> out;
  out.reserve(kHeaderSize);
  put_u32(out, kMagic);
  const auto op = static_cast<std::uint16_t>(h.op);
  out.push_back(static_cast<std::uint8_t>(op >> 8));
  out.push_back(static_cast<std::uint8_t>(op));
  out.push_back(static_cast<std::uint8_t>(h.flags >> 8));
  out.push_back(static_cast<std::uint8_t>(h.flags));
  put_u32(out, h.seq);
  put_u32(out, h.length);
  std::array<std::uint8_t, kHeaderSize> a{};
  std::copy(out.begin(), out.end(), a.begin());
  return a;
}

Header decode_header(std::span<const std::uint8_t> b) {
  if (b.size() < kHeaderSize) throw ProtocolError("short header");
  if (get_u32(b, 0) != kMagic) throw ProtocolError("bad magic; peer does not speak the probe protocol");
  const auto op = static_cast<std::uint16_t>((b[4] << 8) | b[5]);
  if (op > static_cast<std::uint16_t>(Op::cap_done)) throw ProtocolError("unknown opcode " + std::to_string(op));
  Header h;
  h.op = static_cast<Op>(op);
  h.flags = static_cast<std::uint16_t>((b[6] << 8) | b[7]);
  h.seq = get_u32(b, 8);
  h.length = get_u32(b, 12);
  return h;
}

std::vector<std::uint8_t> message(Op op, std::uint16_t flags, std::uint32_t seq,
                                  std::span<const std::uint8_t> payload) {
  const auto h = encode({op, flags, seq, static_cast<std::uint32_t>(payload.size())});
  std::vector<std::uint8_t> out(kHeaderSize + payload.size());
  std::copy(h.begin(), h.end(), out.begin());
  std::copy(payload.begin(), payload.end(), out.begin() + kHeaderSize);
  return out;
}

std::uint16_t direction_flags(core::Direction d) { return d == core::Direction::downstream ? kFlagDownstream : 0; }

}  // namespace mecperf::probe
