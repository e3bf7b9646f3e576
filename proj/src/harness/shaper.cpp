#include "mecperf/harness/shaper.hpp"

#include <sys/socket.h>

#include <algorithm>

namespace mecperf::harness {

namespace {

constexpr std::size_t kChunk = 2048;

std::chrono::nanoseconds half(std::chrono::microseconds rtt) { return std::chrono::nanoseconds(rtt) / 2; }

}  // namespace

Lane::Lane(double rate_mbps, std::chrono::nanoseconds delay, std::size_t limit_bytes, bool block_when_full)
    : rate_bps_(rate_mbps * 1e6), delay_(delay), limit_(limit_bytes), block_(block_when_full) {}

bool Lane::push(std::vector<std::uint8_t> data) {
  std::unique_lock lock(mutex_);
  const std::size_t size = data.size();
  if (size > 0) {
    if (block_) {
      cv_.wait(lock, [&] { return closed_ || queued_ + size <= limit_ || queue_.empty(); });
    } else if (queued_ + size > limit_) {
      return false;
    }
  }
  if (closed_) return false;
  const auto now = net::Clock::now();
  auto departure = std::max(now, last_departure_);
  if (rate_bps_ > 0 && size > 0) {
    departure += std::chrono::nanoseconds(static_cast<std::int64_t>(static_cast<double>(size) * 8.0 / rate_bps_ * 1e9));
  }
  last_departure_ = departure;
  queued_ += size;
  queue_.push_back({std::move(data), departure + delay_});
  cv_.notify_all();
  return true;
}

std::optional<std::vector<std::uint8_t>> Lane::pop() {
  std::unique_lock lock(mutex_);
  cv_.wait(lock, [&] { return closed_ || !queue_.empty(); });
  if (queue_.empty()) return std::nullopt;
  const auto deliver = queue_.front().deliver;
  // Wait for the delivery time; close() cuts the wait short.
  if (cv_.wait_until(lock, deliver, [&] { return closed_; })) return std::nullopt;
  Item item = std::move(queue_.front());
  queue_.pop_front();
  queued_ -= item.data.size();
  cv_.notify_all();
  return std::move(item.data);
}

void Lane::close() {
  std::lock_guard lock(mutex_);
  closed_ = true;
  cv_.notify_all();
}

// One relayed TCP connection: a reader and a writer thread per direction.
struct Shaper::Relay {
  net::Fd client;
  net::Fd server;
  std::unique_ptr<Lane> up;
  std::unique_ptr<Lane> down;
  std::vector<std::thread> threads;
  std::atomic<int> finished{0};

  void read_into(const net::Fd& from, Lane& lane) {
    std::vector<std::uint8_t> buf(kChunk);
    try {
      for (;;) {
        const std::size_t n = net::recv_some(from, buf, std::chrono::hours(24));
        if (n == 0) break;
        if (!lane.push({buf.begin(), buf.begin() + static_cast<std::ptrdiff_t>(n)})) break;
      }
    } catch (const std::exception&) {
    }
    lane.push({});
  }

  void write_from(Lane& lane, const net::Fd& to, const net::Fd& other) {
    try {
      while (auto chunk = lane.pop()) {
        if (chunk->empty()) {
          ::shutdown(to.get(), SHUT_WR);
          break;
        }
        net::send_all(to, *chunk);
      }
    } catch (const std::exception&) {
      lane.close();
      to.shutdown();
      other.shutdown();
    }
    ++finished;
  }

  void close() {
    up->close();
    down->close();
    client.shutdown();
    server.shutdown();
  }
};

Shaper::Shaper(net::Address target, ShaperConfig config) : target_(std::move(target)), config_(std::move(config)) {}

Shaper::~Shaper() { stop(); }

net::Address Shaper::start() {
  for (int attempt = 0;; ++attempt) {
    listener_ = net::listen_tcp({"127.0.0.1", 0});
    port_ = net::local_address(listener_).port;
    try {
      udp_front_ = net::bind_udp({"127.0.0.1", port_});
      break;
    } catch (const net::SocketError&) {
      listener_.reset();
      if (attempt > 20) throw;
    }
  }
  udp_back_ = net::bind_udp({"127.0.0.1", 0});
  stopping_ = false;
  accept_thread_ = std::thread([this] { accept_loop(); });
  udp_loop();
  return address();
}

void Shaper::stop() {
  if (stopping_.exchange(true)) return;
  if (accept_thread_.joinable()) accept_thread_.join();
  for (auto& t : udp_threads_) t.join();
  udp_threads_.clear();
  std::lock_guard lock(mutex_);
  for (auto& r : relays_) r->close();
  for (auto& r : relays_) {
    for (auto& t : r->threads) t.join();
  }
  relays_.clear();
  listener_.reset();
  udp_front_.reset();
  udp_back_.reset();
}

void Shaper::accept_loop() {
  while (!stopping_) {
    auto fd = net::accept_tcp(listener_, std::chrono::milliseconds(100));
    if (!fd) continue;
    auto relay = std::make_unique<Relay>();
    relay->client = std::move(*fd);
    try {
      relay->server = net::connect_tcp(target_, std::chrono::seconds(5));
    } catch (const std::exception&) {
      continue;  // dropping the client connection signals the failure
    }
    const auto delay = half(config_.added_rtt);
    relay->up = std::make_unique<Lane>(config_.rate_mbps, delay, config_.queue_limit_bytes, true);
    relay->down = std::make_unique<Lane>(config_.rate_mbps, delay, config_.queue_limit_bytes, true);
    Relay* r = relay.get();
    r->threads.emplace_back([r] { r->read_into(r->client, *r->up); });
    r->threads.emplace_back([r] { r->write_from(*r->up, r->server, r->client); });
    r->threads.emplace_back([r] { r->read_into(r->server, *r->down); });
    r->threads.emplace_back([r] { r->write_from(*r->down, r->client, r->server); });
    std::lock_guard lock(mutex_);
    // Reap relays whose both writers have finished.
    for (auto it = relays_.begin(); it != relays_.end();) {
      if ((*it)->finished == 2) {
        (*it)->close();
        for (auto& t : (*it)->threads) t.join();
        it = relays_.erase(it);
      } else {
        ++it;
      }
    }
    relays_.push_back(std::move(relay));
  }
}

void Shaper::udp_loop() {
  // Datagrams from the last client seen are forwarded to the target from a
  // second socket; replies to that socket go back to the client.
  auto up = std::make_shared<Lane>(config_.rate_mbps, half(config_.added_rtt), config_.queue_limit_bytes, false);
  auto down = std::make_shared<Lane>(config_.rate_mbps, half(config_.added_rtt), config_.queue_limit_bytes, false);
  auto client = std::make_shared<std::pair<std::mutex, std::optional<net::Address>>>();

  udp_threads_.emplace_back([this, up, client] {
    std::vector<std::uint8_t> buf(65536);
    std::size_t index = 0;
    while (!stopping_) {
      const auto d = net::recv_from(udp_front_, buf, std::chrono::milliseconds(100));
      if (!d) continue;
      {
        std::lock_guard lock(client->first);
        client->second = d->from;
      }
      const bool drop = config_.drop_upstream && config_.drop_upstream(index);
      ++index;
      if (drop || !up->push({buf.begin(), buf.begin() + static_cast<std::ptrdiff_t>(d->size)})) ++udp_dropped_;
    }
    up->close();
  });
  udp_threads_.emplace_back([this, up] {
    while (auto m = up->pop()) {
      if (!m->empty()) net::send_to(udp_back_, *m, target_);
    }
  });
  udp_threads_.emplace_back([this, down] {
    std::vector<std::uint8_t> buf(65536);
    while (!stopping_) {
      const auto d = net::recv_from(udp_back_, buf, std::chrono::milliseconds(100));
      if (!d) continue;
      if (!down->push({buf.begin(), buf.begin() + static_cast<std::ptrdiff_t>(d->size)})) ++udp_dropped_;
    }
    down->close();
  });
  udp_threads_.emplace_back([this, down, client] {
    while (auto m = down->pop()) {
      std::optional<net::Address> to;
      {
        std::lock_guard lock(client->first);
        to = client->second;
      }
      if (to && !m->empty()) net::send_to(udp_front_, *m, *to);
    }
  });
}

}  // namespace mecperf::harness
