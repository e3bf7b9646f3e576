#pragma once

// Thin RAII wrappers over POSIX sockets (IPv4 only).

#include <netinet/in.h>

#include <chrono>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>

namespace mecperf::net {

class SocketError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when a deadline passes before the operation completes.
class Timeout : public SocketError {
 public:
  using SocketError::SocketError;
};

class Fd {
 public:
  Fd() = default;
  explicit Fd(int fd) : fd_(fd) {}
  ~Fd() { reset(); }
  Fd(Fd&& o) noexcept : fd_(o.release()) {}
  Fd& operator=(Fd&& o) noexcept {
    if (this != &o) {
      reset();
      fd_ = o.release();
    }
    return *this;
  }
  Fd(const Fd&) = delete;
  Fd& operator=(const Fd&) = delete;

  int get() const { return fd_; }
  explicit operator bool() const { return fd_ >= 0; }
  int release() {
    const int f = fd_;
    fd_ = -1;
    return f;
  }
  void reset();
  /// shutdown(SHUT_RDWR) without closing; wakes threads blocked on the fd.
  void shutdown() const;

 private:
  int fd_ = -1;
};

struct Address {
  std::string host = "127.0.0.1";
  std::uint16_t port = 0;

  /// "host:port"; throws SocketError if malformed.
  static Address parse(const std::string& text);
  std::string str() const { return host + ":" + std::to_string(port); }
  sockaddr_in sockaddr() const;
  static Address from(const sockaddr_in& sa);
  friend bool operator==(const Address&, const Address&) = default;
};

using Clock = std::chrono::steady_clock;
using Duration = std::chrono::nanoseconds;

std::int64_t monotonic_ns();

/// TCP_NODELAY is set on every TCP socket created here.
Fd connect_tcp(const Address& peer, Duration timeout);
Fd listen_tcp(const Address& local, int backlog = 64);
/// Returns nullopt when `timeout` elapses without a connection.
std::optional<Fd> accept_tcp(const Fd& listener, Duration timeout);
/// UDP socket bound to `local`; port 0 picks an ephemeral port. Kernel
/// receive timestamps are enabled.
Fd bind_udp(const Address& local);
Address local_address(const Fd& fd);

void set_nodelay(const Fd& fd);

void send_all(const Fd& fd, std::span<const std::uint8_t> data);
/// Reads exactly data.size() bytes or throws (SocketError on EOF, Timeout).
void recv_exact(const Fd& fd, std::span<std::uint8_t> data, Duration timeout);
/// One read of at most data.size() bytes; 0 means EOF.
std::size_t recv_some(const Fd& fd, std::span<std::uint8_t> data, Duration timeout);

struct Datagram {
  std::size_t size = 0;
  Address from;
  std::int64_t received_ns = 0;  // monotonic clock
};

void send_to(const Fd& fd, std::span<const std::uint8_t> data, const Address& to);
/// Waits up to `timeout` for one datagram; nullopt on timeout.
std::optional<Datagram> recv_from(const Fd& fd, std::span<std::uint8_t> buffer, Duration timeout);

}  // namespace mecperf::net
