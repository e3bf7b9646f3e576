#include "mecperf/probe/responder.hpp"

#include <algorithm>
#include <cstring>

#include "mecperf/probe/protocol.hpp"

namespace mecperf::probe {

namespace {

constexpr std::size_t kMaxPayload = 1 << 20;

void send_error(const net::Fd& fd, const std::string& text) {
  const std::vector<std::uint8_t> payload(text.begin(), text.end());
  try {
    net::send_all(fd, message(Op::error, 0, 0, payload));
  } catch (const std::exception&) {
  }
}

}  // namespace

Responder::Responder(Options options) : options_(std::move(options)) {}

Responder::~Responder() { stop(); }

std::uint16_t Responder::start() {
  // TCP and UDP share the port number; retry if an ephemeral TCP port is
  // taken on the UDP side.
  for (int attempt = 0;; ++attempt) {
    listener_ = net::listen_tcp(options_.bind);
    port_ = net::local_address(listener_).port;
    try {
      udp_ = net::bind_udp({options_.bind.host, port_});
      break;
    } catch (const net::SocketError&) {
      listener_.reset();
      if (options_.bind.port != 0 || attempt > 20) throw;
    }
  }
  stopping_ = false;
  accept_thread_ = std::thread([this] { accept_loop(); });
  udp_thread_ = std::thread([this] { udp_loop(); });
  return port_;
}

void Responder::wait() {
  if (accept_thread_.joinable()) accept_thread_.join();
  if (udp_thread_.joinable()) udp_thread_.join();
}

void Responder::stop() {
  if (stopping_.exchange(true)) {
    wait();
    return;
  }
  wait();
  {
    std::lock_guard lock(mutex_);
    for (auto& c : connections_) c->fd.shutdown();
  }
  reap(true);
  listener_.reset();
  udp_.reset();
}

void Responder::reap(bool all) {
  std::list<std::unique_ptr<Connection>> finished;
  {
    std::lock_guard lock(mutex_);
    for (auto it = connections_.begin(); it != connections_.end();) {
      if (all || (*it)->done) {
        finished.push_back(std::move(*it));
        it = connections_.erase(it);
      } else {
        ++it;
      }
    }
  }
  for (auto& c : finished) c->thread.join();
}

void Responder::accept_loop() {
  while (!stopping_) {
    auto fd = net::accept_tcp(listener_, std::chrono::milliseconds(100));
    reap(false);
    if (!fd) continue;
    auto c = std::make_unique<Connection>();
    c->fd = std::move(*fd);
    Connection* raw = c.get();
    std::lock_guard lock(mutex_);
    connections_.push_back(std::move(c));
    raw->thread = std::thread([this, raw] {
      serve_tcp(*raw);
      raw->done = true;
    });
  }
}

void Responder::serve_tcp(Connection& c) {
  std::array<std::uint8_t, kHeaderSize> head{};
  std::vector<std::uint8_t> payload;
  try {
    while (!stopping_) {
      try {
        net::recv_exact(c.fd, head, options_.idle_timeout);
      } catch (const net::SocketError&) {
        return;  // peer closed or idle
      }
      Header h;
      try {
        h = decode_header(head);
      } catch (const ProtocolError& e) {
        send_error(c.fd, e.what());
        return;
      }
      if (h.length > kMaxPayload) {
        send_error(c.fd, "payload too large");
        return;
      }
      payload.resize(h.length);
      net::recv_exact(c.fd, payload, options_.idle_timeout);

      if (h.op == Op::echo) {
        net::send_all(c.fd, message(Op::echo_reply, h.flags, h.seq, payload));
      } else if (h.op == Op::bw_request) {
        const std::uint32_t num_packets = h.seq;
        const std::uint32_t packet_size = payload.size() >= 4 ? get_u32(payload, 0) : 0;
        if (num_packets < 2 || packet_size < 1 ||
            static_cast<std::uint64_t>(num_packets) * packet_size > (std::uint64_t{4} << 30)) {
          send_error(c.fd, "bad bandwidth request");
          return;
        }
        const std::uint64_t total = static_cast<std::uint64_t>(num_packets) * packet_size;
        net::send_all(c.fd, message(Op::bw_ready, h.flags, h.seq));
        if (h.direction() == core::Direction::upstream) {
          std::vector<std::uint8_t> buf(64 * 1024);
          std::uint64_t got = 0;
          std::int64_t first = 0;
          std::int64_t last = 0;
          while (got < total) {
            const auto want = static_cast<std::size_t>(std::min<std::uint64_t>(buf.size(), total - got));
            const std::size_t n = net::recv_some(c.fd, std::span(buf.data(), want), options_.idle_timeout);
            if (n == 0) return;
            last = net::monotonic_ns();
            if (got == 0) first = last;
            got += n;
          }
          std::vector<std::uint8_t> result;
          put_u64(result, got);
          put_u64(result, static_cast<std::uint64_t>(last - first));
          net::send_all(c.fd, message(Op::bw_result, h.flags, h.seq, result));
        } else {
          const std::vector<std::uint8_t> packet(packet_size, 0x5a);
          for (std::uint32_t i = 0; i < num_packets; ++i) net::send_all(c.fd, packet);
        }
      } else {
        send_error(c.fd, "unexpected opcode on TCP");
        return;
      }
    }
  } catch (const std::exception&) {
    // Connection-level failure; the initiator sees the broken stream.
  }
}

void Responder::send_pairs(net::Address to, std::uint32_t num_pairs, std::uint32_t packet_size, std::uint32_t gap_us,
                           std::uint16_t flags) {
  std::vector<std::uint8_t> a = message(Op::cap_data, flags, 0);
  a.resize(packet_size, 0);
  std::vector<std::uint8_t> b = a;
  const auto set_len = [&](std::vector<std::uint8_t>& m, std::uint32_t seq) {
    const auto h = encode({Op::cap_data, flags, seq, packet_size - static_cast<std::uint32_t>(kHeaderSize)});
    std::copy(h.begin(), h.end(), m.begin());
  };
  try {
    for (std::uint32_t i = 0; i < num_pairs && !stopping_; ++i) {
      set_len(a, 2 * i);
      set_len(b, 2 * i + 1);
      net::send_to(udp_, a, to);
      net::send_to(udp_, b, to);
      std::this_thread::sleep_for(std::chrono::microseconds(gap_us));
    }
    const auto done = message(Op::cap_done, flags, num_pairs);
    for (int k = 0; k < 3; ++k) {
      net::send_to(udp_, done, to);
      std::this_thread::sleep_for(std::chrono::milliseconds(5));
    }
  } catch (const std::exception&) {
  }
  std::lock_guard lock(mutex_);
  sending_.erase(to.str());
}

void Responder::udp_loop() {
  std::vector<std::uint8_t> buf(65536);
  while (!stopping_) {
    std::optional<net::Datagram> d;
    try {
      d = net::recv_from(udp_, buf, std::chrono::milliseconds(100));
    } catch (const std::exception&) {
      continue;
    }
    if (!d || d->size < kHeaderSize) continue;
    const std::span<const std::uint8_t> msg(buf.data(), d->size);
    Header h;
    try {
      h = decode_header(msg);
    } catch (const ProtocolError&) {
      continue;
    }
    const std::string peer = d->from.str();
    try {
      switch (h.op) {
        case Op::echo:
          net::send_to(udp_, message(Op::echo_reply, h.flags, h.seq, msg.subspan(kHeaderSize)), d->from);
          break;
        case Op::cap_begin: {
          const std::uint32_t num_pairs = h.seq;
          const std::uint32_t packet_size = msg.size() >= kHeaderSize + 4 ? get_u32(msg, kHeaderSize) : 0;
          const std::uint32_t gap_us = msg.size() >= kHeaderSize + 8 ? get_u32(msg, kHeaderSize + 4) : 10000;
          if (num_pairs < 1 || num_pairs > 100000 || packet_size < kHeaderSize || packet_size > 65507) {
            const std::string text = "bad capacity request";
            net::send_to(udp_, message(Op::error, 0, 0, {reinterpret_cast<const std::uint8_t*>(text.data()), text.size()}),
                         d->from);
            break;
          }
          net::send_to(udp_, message(Op::cap_ready, h.flags, h.seq), d->from);
          std::lock_guard lock(mutex_);
          if (h.direction() == core::Direction::upstream) {
            auto& st = pairs_[peer];
            if (st.num_pairs != num_pairs) st = {num_pairs, std::vector<std::int64_t>(2 * num_pairs, -1)};
            reports_.erase(peer);
          } else if (!sending_.count(peer)) {
            sending_[peer] = d->received_ns;
            auto c = std::make_unique<Connection>();
            Connection* raw = c.get();
            raw->thread = std::thread([this, raw, to = d->from, num_pairs, packet_size, gap_us, f = h.flags] {
              send_pairs(to, num_pairs, packet_size, gap_us, f);
              raw->done = true;
            });
            connections_.push_back(std::move(c));
          }
          break;
        }
        case Op::cap_data: {
          std::lock_guard lock(mutex_);
          auto it = pairs_.find(peer);
          if (it != pairs_.end() && h.seq < it->second.arrivals.size() && it->second.arrivals[h.seq] < 0) {
            it->second.arrivals[h.seq] = d->received_ns;
          }
          break;
        }
        case Op::cap_end: {
          std::vector<std::uint8_t> report;
          {
            std::lock_guard lock(mutex_);
            if (auto it = pairs_.find(peer); it != pairs_.end()) {
              std::vector<std::uint8_t> payload;
              for (auto t : it->second.arrivals) put_u64(payload, static_cast<std::uint64_t>(t));
              reports_[peer] = message(Op::cap_report, h.flags, it->second.num_pairs, payload);
              pairs_.erase(it);
              if (reports_.size() > 256) reports_.erase(reports_.begin());
            }
            if (auto it = reports_.find(peer); it != reports_.end()) report = it->second;
          }
          if (!report.empty()) net::send_to(udp_, report, d->from);
          break;
        }
        default:
          break;
      }
    } catch (const std::exception&) {
      // A malformed datagram never takes the responder down.
    }
  }
}

}  // namespace mecperf::probe
