#pragma once

// In-process link emulator for tests: a TCP and UDP relay that forwards to
// a target through a token-bucket rate limit and a fixed delay, in the
// spirit of tc-netem on a loopback path.

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <deque>
#include <functional>
#include <list>
#include <memory>
#include <mutex>
#include <thread>

#include "mecperf/net/socket.hpp"

namespace mecperf::harness {

struct ShaperConfig {
  double rate_mbps = 0.0;               // per direction; 0 leaves the rate unlimited
  std::chrono::microseconds added_rtt{0};  // split evenly between the two directions
  // Drops client-to-target UDP datagrams by their 0-based index.
  std::function<bool(std::size_t)> drop_upstream;
  std::size_t queue_limit_bytes = 256 * 1024;
};

/// One direction of the link: departures are paced at the configured rate
/// (each chunk leaves max(arrival, previous departure) + size / rate), then
/// delayed by the one-way delay.
class Lane {
 public:
  Lane(double rate_mbps, std::chrono::nanoseconds delay, std::size_t limit_bytes, bool block_when_full);

  /// Queues a chunk that arrived now. Blocks when full if the lane
  /// applies backpressure (TCP); otherwise drops it (UDP tail drop) and
  /// returns false. An empty chunk marks end of stream.
  bool push(std::vector<std::uint8_t> data);
  /// Next chunk at its delivery time; nullopt once closed and drained.
  std::optional<std::vector<std::uint8_t>> pop();
  void close();

 private:
  struct Item {
    std::vector<std::uint8_t> data;
    net::Clock::time_point deliver;
  };
  double rate_bps_;
  std::chrono::nanoseconds delay_;
  std::size_t limit_;
  bool block_;
  std::mutex mutex_;
  std::condition_variable cv_;
  std::deque<Item> queue_;
  std::size_t queued_ = 0;
  bool closed_ = false;
  net::Clock::time_point last_departure_{};
};

class Shaper {
 public:
  Shaper(net::Address target, ShaperConfig config);
  ~Shaper();
  Shaper(const Shaper&) = delete;
  Shaper& operator=(const Shaper&) = delete;

  /// Listens on 127.0.0.1 (TCP and UDP, same port); returns the address.
  net::Address start();
  void stop();
  net::Address address() const { return {"127.0.0.1", port_}; }
  std::size_t udp_dropped() const { return udp_dropped_; }

 private:
  struct Relay;
  void accept_loop();
  void udp_loop();

  net::Address target_;
  ShaperConfig config_;
  std::uint16_t port_ = 0;
  net::Fd listener_;
  net::Fd udp_front_;
  net::Fd udp_back_;
  std::atomic<bool> stopping_{false};
  std::atomic<std::size_t> udp_dropped_{0};
  std::thread accept_thread_;
  std::vector<std::thread> udp_threads_;
  std::mutex mutex_;
  std::list<std::unique_ptr<Relay>> relays_;
};

}  // namespace mecperf::harness
