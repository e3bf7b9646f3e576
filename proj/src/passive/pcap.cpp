#include "mecperf/passive/pcap.hpp"

#include <cstdio>

namespace mecperf::passive {

namespace {

constexpr std::uint32_t kMagicMicro = 0xA1B2C3D4;
constexpr std::uint32_t kMagicNano = 0xA1B23C4D;
constexpr std::uint32_t kMagicPcapng = 0x0A0D0D0A;
constexpr std::uint32_t kLinkEthernet = 1;
constexpr std::size_t kFileHeader = 24;
constexpr std::size_t kRecordHeader = 16;
constexpr std::size_t kEthernetHeader = 14;

std::uint32_t bswap32(std::uint32_t v) {
  return (v >> 24) | ((v >> 8) & 0xFF00) | ((v << 8) & 0xFF0000) | (v << 24);
}

std::uint32_t load_le32(const std::uint8_t* p) {
  return std::uint32_t{p[0]} | std::uint32_t{p[1]} << 8 | std::uint32_t{p[2]} << 16 |
         std::uint32_t{p[3]} << 24;
}

std::uint16_t load_be16(const std::uint8_t* p) {
  return static_cast<std::uint16_t>(p[0] << 8 | p[1]);
}

std::uint32_t load_be32(const std::uint8_t* p) {
  return std::uint32_t{p[0]} << 24 | std::uint32_t{p[1]} << 16 | std::uint32_t{p[2]} << 8 |
         std::uint32_t{p[3]};
}

// Decodes one Ethernet frame; returns nullopt for anything we do not model.
std::optional<PacketRecord> decode_frame(std::span<const std::uint8_t> frame) {
  if (frame.size() < kEthernetHeader) return std::nullopt;
  std::size_t off = 12;
  std::uint16_t ethertype = load_be16(&frame[off]);
  off += 2;
  if (ethertype == 0x8100) {
    if (frame.size() < off + 4) return std::nullopt;
    ethertype = load_be16(&frame[off + 2]);
    off += 4;
  }
  if (ethertype != 0x0800) return std::nullopt;

  if (frame.size() < off + 20) return std::nullopt;
  const std::uint8_t* ip = &frame[off];
  if ((ip[0] >> 4) != 4) return std::nullopt;
  const std::size_t ihl = static_cast<std::size_t>(ip[0] & 0x0F) * 4;
  if (ihl < 20 || frame.size() < off + ihl) return std::nullopt;
  const std::size_t total_length = load_be16(ip + 2);
  const std::uint16_t frag = load_be16(ip + 6);
  if ((frag & 0x1FFF) != 0 || (frag & 0x2000) != 0) return std::nullopt;
  if (total_length < ihl) return std::nullopt;

  PacketRecord rec;
  rec.src.value = load_be32(ip + 12);
  rec.dst.value = load_be32(ip + 16);
  const std::uint8_t proto = ip[9];
  off += ihl;
  const std::size_t l4_len = total_length - ihl;

  if (proto == static_cast<std::uint8_t>(Transport::tcp)) {
    if (frame.size() < off + 20 || l4_len < 20) return std::nullopt;
    const std::uint8_t* th = &frame[off];
    const std::size_t thl = static_cast<std::size_t>(th[12] >> 4) * 4;
    if (thl < 20 || thl > l4_len || frame.size() < off + thl) return std::nullopt;
    rec.transport = Transport::tcp;
    rec.src_port = load_be16(th);
    rec.dst_port = load_be16(th + 2);
    rec.tcp = TcpInfo{load_be32(th + 4), load_be32(th + 8), th[13]};
    rec.payload_length = static_cast<std::uint32_t>(l4_len - thl);
    return rec;
  }
  if (proto == static_cast<std::uint8_t>(Transport::udp)) {
    if (frame.size() < off + 8 || l4_len < 8) return std::nullopt;
    const std::uint8_t* uh = &frame[off];
    rec.transport = Transport::udp;
    rec.src_port = load_be16(uh);
    rec.dst_port = load_be16(uh + 2);
    rec.payload_length = static_cast<std::uint32_t>(l4_len - 8);
    return rec;
  }
  return std::nullopt;
}

}  // namespace

Ipv4 Ipv4::parse(std::string_view dotted) {
  const auto fail = [&] { return std::invalid_argument("bad IPv4 address '" + std::string(dotted) + "'"); };
  std::uint32_t value = 0;
  int parts = 0;
  std::size_t pos = 0;
  for (;;) {
    const std::size_t dot = dotted.find('.', pos);
    const std::string_view octet = dotted.substr(pos, dot == std::string_view::npos ? dotted.npos : dot - pos);
    if (octet.empty() || octet.size() > 3 || ++parts > 4) throw fail();
    unsigned v = 0;
    for (char c : octet) {
      if (c < '0' || c > '9') throw fail();
      v = v * 10 + static_cast<unsigned>(c - '0');
    }
    if (v > 255) throw fail();
    value = value << 8 | v;
    if (dot == std::string_view::npos) break;
    pos = dot + 1;
  }
  if (parts != 4) throw fail();
  return Ipv4{value};
}

std::string Ipv4::str() const {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%u.%u.%u.%u", value >> 24, (value >> 16) & 0xFF,
                (value >> 8) & 0xFF, value & 0xFF);
  return buf;
}

ParsedCapture parse_capture(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kFileHeader) throw CaptureFormatError("capture shorter than the pcap file header");
  const std::uint32_t raw = load_le32(bytes.data());
  if (raw == kMagicPcapng) throw CaptureFormatError("pcapng captures are not supported; convert with 'editcap -F pcap'");

  bool swapped = false;
  bool nano = false;
  if (raw == kMagicMicro || raw == kMagicNano) {
    nano = raw == kMagicNano;
  } else if (bswap32(raw) == kMagicMicro || bswap32(raw) == kMagicNano) {
    swapped = true;
    nano = bswap32(raw) == kMagicNano;
  } else {
    throw CaptureFormatError("bad pcap magic number");
  }
  auto u32 = [swapped](const std::uint8_t* p) {
    const std::uint32_t v = load_le32(p);
    return swapped ? bswap32(v) : v;
  };
  const std::uint32_t link_type = u32(bytes.data() + 20) & 0x0FFFFFFF;
  if (link_type != kLinkEthernet) {
    throw CaptureFormatError("unsupported link type " + std::to_string(link_type) + " (Ethernet required)");
  }

  ParsedCapture out;
  std::size_t off = kFileHeader;
  while (off < bytes.size()) {
    if (bytes.size() - off < kRecordHeader) {
      ++out.skipped;
      break;
    }
    const std::uint8_t* h = bytes.data() + off;
    const std::int64_t sec = u32(h);
    const std::int64_t frac = u32(h + 4);
    const std::size_t incl = u32(h + 8);
    off += kRecordHeader;
    if (bytes.size() - off < incl) {
      ++out.skipped;
      break;
    }
    auto rec = decode_frame(bytes.subspan(off, incl));
    off += incl;
    if (!rec) {
      ++out.skipped;
      continue;
    }
    rec->capture_timestamp.micros = sec * 1'000'000 + (nano ? frac / 1000 : frac);
    out.packets.push_back(*rec);
  }
  return out;
}

PcapWriter::PcapWriter() : PcapWriter(Options{}) {}

PcapWriter::PcapWriter(Options options) : options_(options) {
  put32(options_.nanosecond ? kMagicNano : kMagicMicro);
  put16(2);
  put16(4);
  put32(0);
  put32(0);
  put32(options_.snaplen);
  put32(kLinkEthernet);
}

void PcapWriter::put16(std::uint16_t v) {
  if (options_.swapped) {
    buffer_.push_back(static_cast<std::uint8_t>(v >> 8));
    buffer_.push_back(static_cast<std::uint8_t>(v));
  } else {
    buffer_.push_back(static_cast<std::uint8_t>(v));
    buffer_.push_back(static_cast<std::uint8_t>(v >> 8));
  }
}

void PcapWriter::put32(std::uint32_t v) {
  if (options_.swapped) v = bswap32(v);
  for (int i = 0; i < 4; ++i) buffer_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void PcapWriter::add(const PacketRecord& p) {
  std::vector<std::uint8_t> frame;
  auto be16 = [&frame](std::uint16_t v) {
    frame.push_back(static_cast<std::uint8_t>(v >> 8));
    frame.push_back(static_cast<std::uint8_t>(v));
  };
  auto be32 = [&be16](std::uint32_t v) {
    be16(static_cast<std::uint16_t>(v >> 16));
    be16(static_cast<std::uint16_t>(v));
  };

  const std::uint8_t dst_mac[6] = {0x02, 0, 0, 0, 0, 0x02};
  const std::uint8_t src_mac[6] = {0x02, 0, 0, 0, 0, 0x01};
  frame.insert(frame.end(), dst_mac, dst_mac + 6);
  frame.insert(frame.end(), src_mac, src_mac + 6);
  be16(0x0800);

  const bool is_tcp = p.transport == Transport::tcp;
  const std::uint32_t l4_header = is_tcp ? 20 : 8;
  const std::uint32_t total = 20 + l4_header + p.payload_length;

  const std::size_t ip_start = frame.size();
  frame.push_back(0x45);
  frame.push_back(0);
  be16(static_cast<std::uint16_t>(total));
  be16(0);
  be16(0x4000);  // DF
  frame.push_back(64);
  frame.push_back(static_cast<std::uint8_t>(p.transport));
  be16(0);
  be32(p.src.value);
  be32(p.dst.value);
  std::uint32_t sum = 0;
  for (std::size_t i = ip_start; i < ip_start + 20; i += 2) sum += load_be16(&frame[i]);
  while (sum >> 16) sum = (sum & 0xFFFF) + (sum >> 16);
  const auto checksum = static_cast<std::uint16_t>(~sum);
  frame[ip_start + 10] = static_cast<std::uint8_t>(checksum >> 8);
  frame[ip_start + 11] = static_cast<std::uint8_t>(checksum);

  be16(p.src_port);
  be16(p.dst_port);
  if (is_tcp) {
    const TcpInfo t = p.tcp.value_or(TcpInfo{});
    be32(t.seq);
    be32(t.ack);
    frame.push_back(0x50);
    frame.push_back(t.flags);
    be16(65535);
    be16(0);
    be16(0);
  } else {
    be16(static_cast<std::uint16_t>(8 + p.payload_length));
    be16(0);
  }
  frame.resize(frame.size() + p.payload_length, 0);

  const auto orig = static_cast<std::uint32_t>(frame.size());
  const std::uint32_t incl = std::min(orig, options_.snaplen);
  const std::int64_t us = p.capture_timestamp.micros;
  put32(static_cast<std::uint32_t>(us / 1'000'000));
  const auto frac = static_cast<std::uint32_t>(us % 1'000'000);
  put32(options_.nanosecond ? frac * 1000 : frac);
  put32(incl);
  put32(orig);
  buffer_.insert(buffer_.end(), frame.begin(), frame.begin() + incl);
}

}  // namespace mecperf::passive
