#include "mecperf/net/socket.hpp"

#include <arpa/inet.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <ctime>

namespace mecperf::net {

namespace {

[[noreturn]] void fail(const std::string& what) { throw SocketError(what + ": " + std::strerror(errno)); }

int remaining_ms(Clock::time_point deadline) {
  const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - Clock::now()).count();
  return left <= 0 ? 0 : static_cast<int>(std::min<long long>(left + 1, 1 << 30));
}

/// Waits for `events` on fd until the deadline; false on timeout.
bool wait_for(int fd, short events, Clock::time_point deadline) {
  for (;;) {
    pollfd p{fd, events, 0};
    const int rc = ::poll(&p, 1, remaining_ms(deadline));
    if (rc > 0) return true;
    if (rc == 0) {
      if (Clock::now() >= deadline) return false;
      continue;
    }
    if (errno != EINTR) fail("poll");
  }
}

}  // namespace

void Fd::reset() {
  if (fd_ >= 0) ::close(fd_);
  fd_ = -1;
}

void Fd::shutdown() const {
  if (fd_ >= 0) ::shutdown(fd_, SHUT_RDWR);
}

Address Address::parse(const std::string& text) {
  const auto colon = text.rfind(':');
  if (colon == std::string::npos || colon == 0) throw SocketError("expected host:port, got '" + text + "'");
  Address a;
  a.host = text.substr(0, colon);
  if (a.host == "localhost") a.host = "127.0.0.1";
  try {
    const auto port = std::stoul(text.substr(colon + 1));
    if (port > 65535) throw std::out_of_range("port");
    a.port = static_cast<std::uint16_t>(port);
  } catch (const std::exception&) {
    throw SocketError("bad port in '" + text + "'");
  }
  return a;
}

sockaddr_in Address::sockaddr() const {
  sockaddr_in sa{};
  sa.sin_family = AF_INET;
  sa.sin_port = htons(port);
  const std::string h = host == "localhost" ? "127.0.0.1" : host;
  if (::inet_pton(AF_INET, h.c_str(), &sa.sin_addr) != 1) throw SocketError("not an IPv4 address: " + host);
  return sa;
}

Address Address::from(const sockaddr_in& sa) {
  char buf[INET_ADDRSTRLEN] = {};
  ::inet_ntop(AF_INET, &sa.sin_addr, buf, sizeof buf);
  return {buf, ntohs(sa.sin_port)};
}

std::int64_t monotonic_ns() {
  return std::chrono::duration_cast<std::chrono::nanoseconds>(Clock::now().time_since_epoch()).count();
}

void set_nodelay(const Fd& fd) {
  int one = 1;
  ::setsockopt(fd.get(), IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
}

Fd connect_tcp(const Address& peer, Duration timeout) {
  Fd fd(::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC | SOCK_NONBLOCK, 0));
  if (!fd) fail("socket");
  const auto sa = peer.sockaddr();
  if (::connect(fd.get(), reinterpret_cast<const sockaddr*>(&sa), sizeof sa) != 0 && errno != EINPROGRESS) {
    fail("connect to " + peer.str());
  }
  if (!wait_for(fd.get(), POLLOUT, Clock::now() + timeout)) throw Timeout("connect to " + peer.str() + " timed out");
  int err = 0;
  socklen_t len = sizeof err;
  ::getsockopt(fd.get(), SOL_SOCKET, SO_ERROR, &err, &len);
  if (err != 0) {
    errno = err;
    fail("connect to " + peer.str());
  }
  set_nodelay(fd);
  return fd;
}

Fd listen_tcp(const Address& local, int backlog) {
  Fd fd(::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC | SOCK_NONBLOCK, 0));
  if (!fd) fail("socket");
  int one = 1;
  ::setsockopt(fd.get(), SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  const auto sa = local.sockaddr();
  if (::bind(fd.get(), reinterpret_cast<const sockaddr*>(&sa), sizeof sa) != 0) fail("bind " + local.str());
  if (::listen(fd.get(), backlog) != 0) fail("listen " + local.str());
  return fd;
}

std::optional<Fd> accept_tcp(const Fd& listener, Duration timeout) {
  if (!wait_for(listener.get(), POLLIN, Clock::now() + timeout)) return std::nullopt;
  Fd fd(::accept4(listener.get(), nullptr, nullptr, SOCK_CLOEXEC | SOCK_NONBLOCK));
  if (!fd) {
    if (errno == EAGAIN || errno == EWOULDBLOCK || errno == ECONNABORTED || errno == EINTR) return std::nullopt;
    fail("accept");
  }
  set_nodelay(fd);
  return fd;
}

Fd bind_udp(const Address& local) {
  Fd fd(::socket(AF_INET, SOCK_DGRAM | SOCK_CLOEXEC | SOCK_NONBLOCK, 0));
  if (!fd) fail("socket");
  const auto sa = local.sockaddr();
  if (::bind(fd.get(), reinterpret_cast<const sockaddr*>(&sa), sizeof sa) != 0) fail("bind " + local.str());
  int one = 1;
  ::setsockopt(fd.get(), SOL_SOCKET, SO_TIMESTAMPNS, &one, sizeof one);
  int buf = 4 << 20;
  ::setsockopt(fd.get(), SOL_SOCKET, SO_RCVBUF, &buf, sizeof buf);
  return fd;
}

Address local_address(const Fd& fd) {
  sockaddr_in sa{};
  socklen_t len = sizeof sa;
  if (::getsockname(fd.get(), reinterpret_cast<sockaddr*>(&sa), &len) != 0) fail("getsockname");
  return Address::from(sa);
}

void send_all(const Fd& fd, std::span<const std::uint8_t> data) {
  std::size_t sent = 0;
  while (sent < data.size()) {
    const ssize_t n = ::send(fd.get(), data.data() + sent, data.size() - sent, MSG_NOSIGNAL);
    if (n > 0) {
      sent += static_cast<std::size_t>(n);
    } else if (n < 0 && (errno == EAGAIN || errno == EWOULDBLOCK)) {
      if (!wait_for(fd.get(), POLLOUT, Clock::now() + std::chrono::seconds(60))) throw Timeout("send stalled");
    } else if (n < 0 && errno == EINTR) {
      continue;
    } else {
      fail("send");
    }
  }
}

std::size_t recv_some(const Fd& fd, std::span<std::uint8_t> data, Duration timeout) {
  const auto deadline = Clock::now() + timeout;
  for (;;) {
    const ssize_t n = ::recv(fd.get(), data.data(), data.size(), 0);
    if (n >= 0) return static_cast<std::size_t>(n);
    if (errno == EINTR) continue;
    if (errno != EAGAIN && errno != EWOULDBLOCK) fail("recv");
    if (!wait_for(fd.get(), POLLIN, deadline)) throw Timeout("receive timed out");
  }
}

void recv_exact(const Fd& fd, std::span<std::uint8_t> data, Duration timeout) {
  const auto deadline = Clock::now() + timeout;
  std::size_t got = 0;
  while (got < data.size()) {
    const auto left = std::max(Duration::zero(), Duration(deadline - Clock::now()));
    const std::size_t n = recv_some(fd, data.subspan(got), left);
    if (n == 0) throw SocketError("connection closed by peer");
    got += n;
  }
}

void send_to(const Fd& fd, std::span<const std::uint8_t> data, const Address& to) {
  const auto sa = to.sockaddr();
  for (;;) {
    const ssize_t n =
        ::sendto(fd.get(), data.data(), data.size(), 0, reinterpret_cast<const sockaddr*>(&sa), sizeof sa);
    if (n >= 0) return;
    if (errno == EINTR) continue;
    if (errno == EAGAIN || errno == EWOULDBLOCK) {
      wait_for(fd.get(), POLLOUT, Clock::now() + std::chrono::seconds(1));
      continue;
    }
    // ICMP errors from an earlier datagram surface here; the datagram is lost.
    if (errno == ECONNREFUSED) return;
    fail("sendto " + to.str());
  }
}

std::optional<Datagram> recv_from(const Fd& fd, std::span<std::uint8_t> buffer, Duration timeout) {
  const auto deadline = Clock::now() + timeout;
  for (;;) {
    sockaddr_in sa{};
    iovec iov{buffer.data(), buffer.size()};
    alignas(cmsghdr) char control[128];
    msghdr msg{};
    msg.msg_name = &sa;
    msg.msg_namelen = sizeof sa;
    msg.msg_iov = &iov;
    msg.msg_iovlen = 1;
    msg.msg_control = control;
    msg.msg_controllen = sizeof control;
    const ssize_t n = ::recvmsg(fd.get(), &msg, 0);
    if (n >= 0) {
      Datagram d;
      d.size = static_cast<std::size_t>(n);
      d.from = Address::from(sa);
      d.received_ns = monotonic_ns();
      // Prefer the kernel's arrival stamp, moved onto the monotonic clock.
      for (cmsghdr* c = CMSG_FIRSTHDR(&msg); c != nullptr; c = CMSG_NXTHDR(&msg, c)) {
        if (c->cmsg_level == SOL_SOCKET && c->cmsg_type == SCM_TIMESTAMPNS) {
          timespec kernel{};
          std::memcpy(&kernel, CMSG_DATA(c), sizeof kernel);
          timespec now{};
          ::clock_gettime(CLOCK_REALTIME, &now);
          const std::int64_t age = (now.tv_sec - kernel.tv_sec) * 1'000'000'000LL + (now.tv_nsec - kernel.tv_nsec);
          if (age >= 0 && age < 1'000'000'000LL) d.received_ns -= age;
        }
      }
      return d;
    }
    if (errno == EINTR) continue;
    if (errno == ECONNREFUSED) continue;
    if (errno != EAGAIN && errno != EWOULDBLOCK) fail("recvmsg");
    if (!wait_for(fd.get(), POLLIN, deadline)) return std::nullopt;
  }
}

}  // namespace mecperf::net
