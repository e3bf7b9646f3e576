#pragma once

#include <atomic>
#include <list>
#include <map>
#include <memory>
#include <mutex>
#include <thread>

#include "mecperf/net/socket.hpp"
#include "mecperf/probe/probes.hpp"

namespace mecperf::probe {

/// The Observer / Remote Server endpoint: answers bandwidth, echo and
/// packet-pair requests on one port number, TCP and UDP. Each TCP
/// connection gets its own thread, so independent initiators are served
/// concurrently.
class Responder {
 public:
  struct Options {
    net::Address bind{"127.0.0.1", 0};
    Role role = Role::observer;
    std::chrono::milliseconds idle_timeout{30000};
  };

  explicit Responder(Options options);
  ~Responder();
  Responder(const Responder&) = delete;
  Responder& operator=(const Responder&) = delete;

  /// Binds TCP and UDP and starts serving; returns the port.
  std::uint16_t start();
  void stop();
  /// Blocks until stop() is called from another thread.
  void wait();

  net::Address address() const { return {options_.bind.host, port_}; }
  Role role() const { return options_.role; }

 private:
  // A served TCP connection or a downstream packet-pair sender.
  struct Connection {
    net::Fd fd;
    std::thread thread;
    std::atomic<bool> done{false};
  };
  struct PairState {
    std::uint32_t num_pairs = 0;
    std::vector<std::int64_t> arrivals;
  };

  void accept_loop();
  void serve_tcp(Connection& c);
  void udp_loop();
  void send_pairs(net::Address to, std::uint32_t num_pairs, std::uint32_t packet_size, std::uint32_t gap_us,
                  std::uint16_t flags);
  void reap(bool all);

  Options options_;
  std::uint16_t port_ = 0;
  net::Fd listener_;
  net::Fd udp_;
  std::atomic<bool> stopping_{false};
  std::thread accept_thread_;
  std::thread udp_thread_;
  std::mutex mutex_;
  std::list<std::unique_ptr<Connection>> connections_;
  std::map<std::string, PairState> pairs_;                        // upstream capacity, by peer
  std::map<std::string, std::vector<std::uint8_t>> reports_;      // last report per peer
  std::map<std::string, std::int64_t> sending_;                   // downstream capacity in progress
};

}  // namespace mecperf::probe
