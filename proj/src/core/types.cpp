#include "mecperf/core/types.hpp"

#include <array>
#include <chrono>
#include <limits>
#include <utility>

namespace mecperf::core {

namespace {

template <typename E, std::size_t N>
using NameTable = std::array<std::pair<E, std::string_view>, N>;

constexpr NameTable<Method, 3> kMethods{{
    {Method::active, "active"},
    {Method::passive, "passive"},
    {Method::self, "self"},
}};

constexpr NameTable<MetricType, 7> kMetrics{{
    {MetricType::tcp_bandwidth, "tcp_bandwidth"},
    {MetricType::udp_capacity, "udp_capacity"},
    {MetricType::tcp_latency, "tcp_latency"},
    {MetricType::udp_latency, "udp_latency"},
    {MetricType::passive_throughput, "passive_throughput"},
    {MetricType::passive_latency, "passive_latency"},
    {MetricType::self_metric, "self_metric"},
}};

constexpr NameTable<SegmentId, 3> kSegments{{
    {SegmentId::access_mec, "access_mec"},
    {SegmentId::mec_cloud, "mec_cloud"},
    {SegmentId::access_cloud, "access_cloud"},
}};

constexpr NameTable<Direction, 2> kDirections{{
    {Direction::upstream, "upstream"},
    {Direction::downstream, "downstream"},
}};

constexpr NameTable<AccessTechnology, 2> kTechnologies{{
    {AccessTechnology::wifi, "wifi"},
    {AccessTechnology::lte, "lte"},
}};

template <typename E, std::size_t N>
std::string_view name_of(const NameTable<E, N>& table, E value) {
  for (const auto& [e, name] : table) {
    if (e == value) return name;
  }
  return "?";
}

template <typename E, std::size_t N>
E parse_name(const NameTable<E, N>& table, std::string_view s, std::string_view what) {
  for (const auto& [e, name] : table) {
    if (name == s) return e;
  }
  throw DomainError("unknown " + std::string(what) + " '" + std::string(s) + "'");
}

}  // namespace

bool is_rate_metric(MetricType t) {
  return t == MetricType::tcp_bandwidth || t == MetricType::udp_capacity || t == MetricType::passive_throughput;
}

bool is_latency_metric(MetricType t) {
  return t == MetricType::tcp_latency || t == MetricType::udp_latency || t == MetricType::passive_latency;
}

bool MetricKind::is_bandwidth() const { return is_rate_metric(type_); }

bool MetricKind::is_latency() const { return is_latency_metric(type_); }

std::string_view canonical_unit(MetricType type) {
  switch (type) {
    case MetricType::tcp_bandwidth:
    case MetricType::udp_capacity:
    case MetricType::passive_throughput:
      return "Mbps";
    case MetricType::tcp_latency:
    case MetricType::udp_latency:
    case MetricType::passive_latency:
      return "ms";
    case MetricType::self_metric:
      return "";
  }
  return "";
}

void TraceDescriptor::validate() const {
  const MetricType t = metric.type();
  if (t == MetricType::self_metric && metric.label().empty()) {
    throw DomainError("self_metric requires a non-empty label");
  }
  if (t == MetricType::self_metric && method != Method::self) {
    throw DomainError("self_metric is only valid with method 'self'");
  }
  if (method == Method::self && t != MetricType::self_metric) {
    throw DomainError("method 'self' requires metric 'self_metric'");
  }
  const bool passive_kind = t == MetricType::passive_throughput || t == MetricType::passive_latency;
  if (passive_kind != (method == Method::passive)) {
    throw DomainError("passive metrics require method 'passive' and vice versa");
  }
  if (!(cross_traffic_mbps >= 0.0) || cross_traffic_mbps == std::numeric_limits<double>::infinity()) {
    throw DomainError("cross_traffic_mbps must be finite and non-negative");
  }
  if (method == Method::active && num_clients.has_value()) {
    throw DomainError("num_clients must be absent for active measurements");
  }
  if (num_clients.has_value() && *num_clients == 0) {
    throw DomainError("num_clients must be positive");
  }
}

bool DescriptorQuery::empty() const {
  return !method && !metric && !label && !segment && !direction && !access_technology &&
         !cross_traffic_mbps && !num_clients;
}

DescriptorQuery DescriptorQuery::from(const TraceDescriptor& d) {
  DescriptorQuery q;
  q.method = d.method;
  q.metric = d.metric.type();
  if (d.metric.type() == MetricType::self_metric) q.label = d.metric.label();
  q.segment = d.segment;
  q.direction = d.direction;
  q.access_technology = d.access_technology;
  q.cross_traffic_mbps = d.cross_traffic_mbps;
  q.num_clients = d.num_clients;
  return q;
}

bool descriptor_matches(const TraceDescriptor& d, const DescriptorQuery& q) {
  if (q.method && *q.method != d.method) return false;
  if (q.metric && *q.metric != d.metric.type()) return false;
  if (q.label && *q.label != d.metric.label()) return false;
  if (q.segment && *q.segment != d.segment) return false;
  if (q.direction && *q.direction != d.direction) return false;
  if (q.access_technology && *q.access_technology != d.access_technology) return false;
  if (q.cross_traffic_mbps && *q.cross_traffic_mbps != d.cross_traffic_mbps) return false;
  if (q.num_clients && q.num_clients != d.num_clients) return false;
  return true;
}

Timestamp Timestamp::now() {
  using namespace std::chrono;
  return Timestamp{duration_cast<microseconds>(system_clock::now().time_since_epoch()).count()};
}

std::string_view to_string(Method m) { return name_of(kMethods, m); }
std::string_view to_string(MetricType m) { return name_of(kMetrics, m); }
std::string_view to_string(SegmentId s) { return name_of(kSegments, s); }
std::string_view to_string(Direction d) { return name_of(kDirections, d); }
std::string_view to_string(AccessTechnology t) { return name_of(kTechnologies, t); }

Method parse_method(std::string_view s) { return parse_name(kMethods, s, "method"); }
MetricType parse_metric_type(std::string_view s) { return parse_name(kMetrics, s, "metric"); }
SegmentId parse_segment(std::string_view s) { return parse_name(kSegments, s, "segment"); }
Direction parse_direction(std::string_view s) { return parse_name(kDirections, s, "direction"); }
AccessTechnology parse_access_technology(std::string_view s) {
  return parse_name(kTechnologies, s, "access technology");
}

}  // namespace mecperf::core
