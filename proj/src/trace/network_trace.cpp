#include "mecperf/trace/network_trace.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace mecperf::trace {

Series::Series(std::vector<Sample> samples) : samples_(std::move(samples)) {
  for (std::size_t i = 0; i < samples_.size(); ++i) {
    if (samples_[i].offset_us < 0) throw std::invalid_argument("sample offsets must be non-negative");
    if (i > 0 && samples_[i].offset_us <= samples_[i - 1].offset_us) {
      throw std::invalid_argument("sample offsets must be strictly increasing");
    }
  }
}

std::int64_t Series::mean_spacing_us() const {
  if (samples_.size() < 2) return 1'000'000;
  return (last_offset() - first_offset()) / static_cast<std::int64_t>(samples_.size() - 1);
}

double Series::hold(std::int64_t t_us) const {
  auto it = std::upper_bound(samples_.begin(), samples_.end(), t_us,
                             [](std::int64_t t, const Sample& s) { return t < s.offset_us; });
  if (it == samples_.begin()) return samples_.front().value;
  return std::prev(it)->value;
}

NetworkTrace::NetworkTrace(std::optional<core::TraceDescriptor> bandwidth_descriptor, Series bandwidth,
                           std::optional<core::TraceDescriptor> rtt_descriptor, Series rtt, bool circular,
                           std::optional<std::int64_t> duration_us)
    : bandwidth_descriptor_(std::move(bandwidth_descriptor)),
      rtt_descriptor_(std::move(rtt_descriptor)),
      bandwidth_(std::make_shared<const Series>(std::move(bandwidth))),
      rtt_(std::make_shared<const Series>(std::move(rtt))),
      circular_(circular) {
  if (bandwidth_->empty() && rtt_->empty()) throw EmptySeries("a trace needs at least one non-empty series");
  std::int64_t last = 0;
  std::int64_t natural = 0;
  for (const Series* s : {bandwidth_.get(), rtt_.get()}) {
    if (s->empty()) continue;
    last = std::max(last, s->last_offset());
    natural = std::max(natural, s->last_offset() + s->mean_spacing_us());
  }
  duration_us_ = duration_us.value_or(natural);
  if (duration_us_ < last || duration_us_ <= 0) {
    throw std::invalid_argument("duration must be positive and cover the last sample");
  }
  if (circular_ && duration_us_ == last) {
    throw std::invalid_argument("a circular trace needs a duration past its last sample");
  }
}

std::int64_t NetworkTrace::effective_time(const Series& series, double t_seconds) const {
  if (!(t_seconds >= 0.0) || !std::isfinite(t_seconds)) {
    throw std::invalid_argument("replay time must be finite and non-negative");
  }
  const std::int64_t t_us = std::llround(t_seconds * 1e6);
  if (circular_) return t_us % duration_us_;
  return std::min(t_us, series.last_offset());
}

double NetworkTrace::lookup(const Series& series, double t_seconds, const char* what) const {
  if (series.empty()) throw EmptySeries(std::string("trace has no ") + what + " samples");
  return series.hold(effective_time(series, t_seconds));
}

double NetworkTrace::get_bandwidth(double t_seconds) const { return lookup(*bandwidth_, t_seconds, "bandwidth"); }

double NetworkTrace::get_rtt(double t_seconds) const { return lookup(*rtt_, t_seconds, "RTT"); }

Series to_series(std::span<const TimedValue> values, std::int64_t origin_us) {
  std::vector<Sample> samples;
  samples.reserve(values.size());
  for (const auto& v : values) {
    if (v.time_us < origin_us) continue;
    const std::int64_t offset = v.time_us - origin_us;
    // Duplicate timestamps keep the first observation.
    if (!samples.empty() && samples.back().offset_us >= offset) continue;
    samples.push_back({offset, v.value});
  }
  return Series(std::move(samples));
}

NetworkTrace align(std::span<const TimedValue> bandwidth, std::span<const TimedValue> rtt, bool circular,
                   std::optional<core::TraceDescriptor> bandwidth_descriptor,
                   std::optional<core::TraceDescriptor> rtt_descriptor) {
  if (bandwidth.empty() || rtt.empty()) throw EmptySeries("cannot align an empty series");
  auto sorted = [](std::span<const TimedValue> s) {
    return std::is_sorted(s.begin(), s.end(), [](const auto& a, const auto& b) { return a.time_us < b.time_us; });
  };
  if (!sorted(bandwidth) || !sorted(rtt)) throw std::invalid_argument("series must be sorted by time");
  const std::int64_t origin = std::max(bandwidth.front().time_us, rtt.front().time_us);
  if (bandwidth.back().time_us < origin || rtt.back().time_us < origin) {
    throw std::invalid_argument("bandwidth and RTT series do not overlap in time");
  }
  return NetworkTrace(std::move(bandwidth_descriptor), to_series(bandwidth, origin), std::move(rtt_descriptor),
                      to_series(rtt, origin), circular);
}

}  // namespace mecperf::trace
