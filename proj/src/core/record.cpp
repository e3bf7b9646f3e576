#include "mecperf/core/record.hpp"

#include <cmath>
#include <cstdio>
#include <random>
#include <sstream>

namespace mecperf::core {

using nlohmann::json;

namespace {

std::string join(const std::string& path, std::string_view key) {
  if (path.empty()) return std::string(key);
  return path + "." + std::string(key);
}

const json& require(const json& j, const std::string& path, std::string_view key) {
  if (!j.is_object()) throw DecodeError(path.empty() ? "$" : path, "expected an object");
  auto it = j.find(key);
  if (it == j.end()) throw DecodeError(join(path, key), "missing field");
  return *it;
}

std::string require_string(const json& j, const std::string& path, std::string_view key) {
  const json& v = require(j, path, key);
  if (!v.is_string()) throw DecodeError(join(path, key), "expected a string");
  return v.get<std::string>();
}

double require_number(const json& j, const std::string& path, std::string_view key) {
  const json& v = require(j, path, key);
  if (!v.is_number()) throw DecodeError(join(path, key), "expected a number");
  return v.get<double>();
}

template <typename Fn>
auto parse_enum(const json& j, const std::string& path, std::string_view key, Fn parse) {
  const std::string s = require_string(j, path, key);
  try {
    return parse(s);
  } catch (const DomainError& e) {
    throw DecodeError(join(path, key), e.what());
  }
}

template <typename Fn>
auto optional_enum(const json& j, const std::string& path, std::string_view key, Fn parse)
    -> std::optional<decltype(parse(std::string_view{}))> {
  if (!j.contains(key)) return std::nullopt;
  return parse_enum(j, path, key, parse);
}

std::uint32_t to_count(const json& v, const std::string& field) {
  if (!v.is_number_integer() || v.get<std::int64_t>() <= 0 ||
      v.get<std::int64_t>() > std::numeric_limits<std::uint32_t>::max()) {
    throw DecodeError(field, "expected a positive integer");
  }
  return static_cast<std::uint32_t>(v.get<std::int64_t>());
}

struct UnitScale {
  std::string_view unit;
  double to_canonical;
};

constexpr UnitScale kRateUnits[] = {
    {"bps", 1e-6}, {"Kbps", 1e-3}, {"kbps", 1e-3}, {"Mbps", 1.0}, {"Gbps", 1e3},
};
constexpr UnitScale kTimeUnits[] = {
    {"us", 1e-3}, {"ms", 1.0}, {"s", 1e3},
};

}  // namespace

void MeasurementRecord::validate() const {
  descriptor.validate();
  if (!std::isfinite(value)) throw DomainError("value must be finite");
  if (value < 0.0) throw DomainError("value must be non-negative");
  if (descriptor.metric.type() != MetricType::self_metric &&
      unit != canonical_unit(descriptor.metric.type())) {
    throw DomainError("unit '" + unit + "' is not the canonical unit '" +
                      std::string(canonical_unit(descriptor.metric.type())) + "' for " +
                      std::string(to_string(descriptor.metric.type())));
  }
  if (id.empty()) throw DomainError("id must be non-empty");
  if (run_id.empty()) throw DomainError("run_id must be non-empty");
}

json encode(const TraceDescriptor& d) {
  json j;
  j["method"] = to_string(d.method);
  j["metric"] = to_string(d.metric.type());
  if (d.metric.type() == MetricType::self_metric) j["label"] = d.metric.label();
  j["segment"] = to_string(d.segment);
  j["direction"] = to_string(d.direction);
  j["access_technology"] = to_string(d.access_technology);
  j["cross_traffic_mbps"] = d.cross_traffic_mbps;
  if (d.num_clients) j["num_clients"] = *d.num_clients;
  return j;
}

json encode(const MeasurementRecord& r) {
  json j;
  j["id"] = r.id;
  j["run_id"] = r.run_id;
  j["timestamp_us"] = r.timestamp.micros;
  j["value"] = r.value;
  j["unit"] = r.unit;
  if (!r.tag.empty()) j["tag"] = r.tag;
  j["descriptor"] = encode(r.descriptor);
  return j;
}

json encode(const DescriptorQuery& q) {
  json j = json::object();
  if (q.method) j["method"] = to_string(*q.method);
  if (q.metric) j["metric"] = to_string(*q.metric);
  if (q.label) j["label"] = *q.label;
  if (q.segment) j["segment"] = to_string(*q.segment);
  if (q.direction) j["direction"] = to_string(*q.direction);
  if (q.access_technology) j["access_technology"] = to_string(*q.access_technology);
  if (q.cross_traffic_mbps) j["cross_traffic_mbps"] = *q.cross_traffic_mbps;
  if (q.num_clients) j["num_clients"] = *q.num_clients;
  return j;
}

TraceDescriptor decode_descriptor(const json& j, const std::string& path) {
  if (!j.is_object()) throw DecodeError(path, "expected an object");
  TraceDescriptor d;
  d.method = parse_enum(j, path, "method", parse_method);
  const MetricType type = parse_enum(j, path, "metric", parse_metric_type);
  if (type == MetricType::self_metric) {
    const std::string label = j.contains("label") ? require_string(j, path, "label") : "";
    if (label.empty()) throw DecodeError(join(path, "label"), "self_metric requires a non-empty label");
    d.metric = MetricKind::self_metric(label);
  } else {
    d.metric = MetricKind(type);
  }
  d.segment = parse_enum(j, path, "segment", parse_segment);
  d.direction = parse_enum(j, path, "direction", parse_direction);
  d.access_technology = parse_enum(j, path, "access_technology", parse_access_technology);
  d.cross_traffic_mbps = require_number(j, path, "cross_traffic_mbps");
  if (j.contains("num_clients") && !j["num_clients"].is_null()) {
    d.num_clients = to_count(j["num_clients"], join(path, "num_clients"));
  }
  try {
    d.validate();
  } catch (const DomainError& e) {
    throw DecodeError(path, e.what());
  }
  return d;
}

MeasurementRecord decode_record(const json& j, const std::string& path) {
  MeasurementRecord r;
  r.id = require_string(j, path, "id");
  r.run_id = require_string(j, path, "run_id");
  const json& ts = require(j, path, "timestamp_us");
  if (!ts.is_number_integer()) throw DecodeError(join(path, "timestamp_us"), "expected an integer");
  r.timestamp.micros = ts.get<std::int64_t>();
  r.value = require_number(j, path, "value");
  r.unit = require_string(j, path, "unit");
  if (j.contains("tag")) r.tag = require_string(j, path, "tag");
  r.descriptor = decode_descriptor(require(j, path, "descriptor"), join(path, "descriptor"));
  return r;
}

DescriptorQuery decode_query(const json& j, const std::string& path) {
  if (!j.is_object()) throw DecodeError(path, "expected an object");
  DescriptorQuery q;
  q.method = optional_enum(j, path, "method", parse_method);
  q.metric = optional_enum(j, path, "metric", parse_metric_type);
  if (j.contains("label")) q.label = require_string(j, path, "label");
  q.segment = optional_enum(j, path, "segment", parse_segment);
  q.direction = optional_enum(j, path, "direction", parse_direction);
  q.access_technology = optional_enum(j, path, "access_technology", parse_access_technology);
  if (j.contains("cross_traffic_mbps")) q.cross_traffic_mbps = require_number(j, path, "cross_traffic_mbps");
  if (j.contains("num_clients")) q.num_clients = to_count(j["num_clients"], join(path, "num_clients"));
  return q;
}

std::string encode_ndjson(const std::vector<MeasurementRecord>& records) {
  std::string out;
  for (const auto& r : records) {
    out += encode(r).dump();
    out += '\n';
  }
  return out;
}

std::vector<MeasurementRecord> decode_ndjson(std::string_view text) {
  std::vector<MeasurementRecord> out;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw DecodeError("line " + std::to_string(line_no), e.what());
    }
    out.push_back(decode_record(j, "line " + std::to_string(line_no)));
  }
  return out;
}

MeasurementRecord normalize_units(MeasurementRecord r) {
  const MetricType type = r.descriptor.metric.type();
  if (type == MetricType::self_metric) return r;
  const bool rate = r.descriptor.metric.is_bandwidth();
  auto scan = [&](const auto& table) -> bool {
    for (const auto& [unit, scale] : table) {
      if (unit == r.unit) {
        r.value *= scale;
        r.unit = std::string(canonical_unit(type));
        return true;
      }
    }
    return false;
  };
  if (!(rate ? scan(kRateUnits) : scan(kTimeUnits))) {
    throw DomainError("unknown unit '" + r.unit + "' for " + std::string(to_string(type)));
  }
  return r;
}

std::string make_id() {
  thread_local std::mt19937_64 gen{std::random_device{}()};
  char buf[33];
  std::snprintf(buf, sizeof buf, "%016llx%016llx", static_cast<unsigned long long>(gen()),
                static_cast<unsigned long long>(gen()));
  return buf;
}

}  // namespace mecperf::core
