#pragma once

#include <compare>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace mecperf::core {

enum class Method { active, passive, self };

enum class MetricType {
  tcp_bandwidth,
  udp_capacity,
  tcp_latency,
  udp_latency,
  passive_throughput,
  passive_latency,  // TCP only; there is no UDP passive latency
  self_metric,
};

enum class SegmentId { access_mec, mec_cloud, access_cloud };

enum class Direction { upstream, downstream };

enum class AccessTechnology { wifi, lte };

/// Thrown when a value cannot be represented in the domain model.
class DomainError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A metric kind. Only self_metric carries a label, and it must be non-empty.
class MetricKind {
 public:
  MetricKind() = default;
  MetricKind(MetricType type) : type_(type) {  // NOLINT(google-explicit-constructor)
    if (type == MetricType::self_metric) {
      throw DomainError("self_metric requires a non-empty label");
    }
  }

  static MetricKind self_metric(std::string label) {
    if (label.empty()) throw DomainError("self_metric requires a non-empty label");
    MetricKind k;
    k.type_ = MetricType::self_metric;
    k.label_ = std::move(label);
    return k;
  }

  MetricType type() const { return type_; }
  const std::string& label() const { return label_; }

  bool is_bandwidth() const;
  bool is_latency() const;

  friend bool operator==(const MetricKind&, const MetricKind&) = default;

 private:
  MetricType type_ = MetricType::tcp_bandwidth;
  std::string label_;
};

bool is_rate_metric(MetricType type);
bool is_latency_metric(MetricType type);

/// Canonical unit for a metric kind: "Mbps" for rates, "ms" for latencies,
/// empty for self metrics (their unit is application-defined).
std::string_view canonical_unit(MetricType type);

struct TraceDescriptor {
  Method method = Method::active;
  MetricKind metric;
  SegmentId segment = SegmentId::access_mec;
  Direction direction = Direction::upstream;
  AccessTechnology access_technology = AccessTechnology::wifi;
  double cross_traffic_mbps = 0.0;
  std::optional<std::uint32_t> num_clients;

  friend bool operator==(const TraceDescriptor&, const TraceDescriptor&) = default;

  /// Throws DomainError if the field combination is not representable.
  void validate() const;
};

/// A descriptor with every field optional; unset fields are wildcards.
struct DescriptorQuery {
  std::optional<Method> method;
  std::optional<MetricType> metric;
  std::optional<std::string> label;
  std::optional<SegmentId> segment;
  std::optional<Direction> direction;
  std::optional<AccessTechnology> access_technology;
  std::optional<double> cross_traffic_mbps;
  std::optional<std::uint32_t> num_clients;

  bool empty() const;
  static DescriptorQuery from(const TraceDescriptor& d);
  friend bool operator==(const DescriptorQuery&, const DescriptorQuery&) = default;
};

bool descriptor_matches(const TraceDescriptor& descriptor, const DescriptorQuery& query);

/// Microseconds since the Unix epoch.
struct Timestamp {
  std::int64_t micros = 0;

  static Timestamp now();
  double seconds() const { return static_cast<double>(micros) * 1e-6; }

  friend auto operator<=>(const Timestamp&, const Timestamp&) = default;
};

std::string_view to_string(Method m);
std::string_view to_string(MetricType m);
std::string_view to_string(SegmentId s);
std::string_view to_string(Direction d);
std::string_view to_string(AccessTechnology t);

// Parsers throw DomainError on unknown names.
Method parse_method(std::string_view s);
MetricType parse_metric_type(std::string_view s);
SegmentId parse_segment(std::string_view s);
Direction parse_direction(std::string_view s);
AccessTechnology parse_access_technology(std::string_view s);

}  // namespace mecperf::core
