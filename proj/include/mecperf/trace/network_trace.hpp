#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "mecperf/core/types.hpp"

namespace mecperf::trace {

/// One observation: offset from the trace origin in microseconds, value in
/// the metric's canonical unit (Mbps or ms).
struct Sample {
  std::int64_t offset_us = 0;
  double value = 0.0;
  friend bool operator==(const Sample&, const Sample&) = default;
};

/// Strictly increasing, non-negative offsets; immutable once built.
class Series {
 public:
  Series() = default;
  /// Throws std::invalid_argument unless offsets are >= 0 and strictly increasing.
  explicit Series(std::vector<Sample> samples);

  bool empty() const { return samples_.empty(); }
  std::size_t size() const { return samples_.size(); }
  std::span<const Sample> samples() const { return samples_; }
  std::int64_t first_offset() const { return samples_.front().offset_us; }
  std::int64_t last_offset() const { return samples_.back().offset_us; }
  /// Mean spacing between samples; one second for a single sample.
  std::int64_t mean_spacing_us() const;

  /// Value of the latest sample at or before `t_us`; before the first sample
  /// the first value is returned.
  double hold(std::int64_t t_us) const;

 private:
  std::vector<Sample> samples_;
};

class EmptySeries : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Aligned bandwidth and RTT series replayed with sample-and-hold. Either
/// series may be absent (a trace assembled from latency files only), but
/// not both. Copies share the underlying samples.
class NetworkTrace {
 public:
  NetworkTrace(std::optional<core::TraceDescriptor> bandwidth_descriptor, Series bandwidth,
               std::optional<core::TraceDescriptor> rtt_descriptor, Series rtt, bool circular,
               std::optional<std::int64_t> duration_us = std::nullopt);

  /// Mbps at `t_seconds` from the origin. Throws EmptySeries when the trace
  /// has no bandwidth samples, std::invalid_argument for negative times.
  double get_bandwidth(double t_seconds) const;
  /// Milliseconds at `t_seconds` from the origin; same rules as above.
  double get_rtt(double t_seconds) const;

  const Series& bandwidth_series() const { return *bandwidth_; }
  const Series& rtt_series() const { return *rtt_; }
  const std::optional<core::TraceDescriptor>& bandwidth_descriptor() const { return bandwidth_descriptor_; }
  const std::optional<core::TraceDescriptor>& rtt_descriptor() const { return rtt_descriptor_; }
  std::int64_t duration_us() const { return duration_us_; }
  double duration_seconds() const { return static_cast<double>(duration_us_) * 1e-6; }
  bool circular() const { return circular_; }

  /// The query time actually looked up for `series`: wrapped modulo the
  /// duration when circular, clamped to the series' last sample otherwise.
  std::int64_t effective_time(const Series& series, double t_seconds) const;

 private:
  double lookup(const Series& series, double t_seconds, const char* what) const;

  std::optional<core::TraceDescriptor> bandwidth_descriptor_;
  std::optional<core::TraceDescriptor> rtt_descriptor_;
  std::shared_ptr<const Series> bandwidth_;
  std::shared_ptr<const Series> rtt_;
  std::int64_t duration_us_ = 0;
  bool circular_ = false;
};

/// Samples on an absolute clock (microseconds since the epoch).
struct TimedValue {
  std::int64_t time_us = 0;
  double value = 0.0;
};

/// Shifts both series to a common origin at the later first sample and
/// drops the earlier series' samples before it. Throws EmptySeries for an
/// empty input and std::invalid_argument when the two do not overlap.
NetworkTrace align(std::span<const TimedValue> bandwidth, std::span<const TimedValue> rtt, bool circular = false,
                   std::optional<core::TraceDescriptor> bandwidth_descriptor = std::nullopt,
                   std::optional<core::TraceDescriptor> rtt_descriptor = std::nullopt);

/// Builds a single-series trace from absolute samples, origin at the first.
Series to_series(std::span<const TimedValue> values, std::int64_t origin_us);

}  // namespace mecperf::trace
