#pragma once

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mecperf/core/types.hpp"

namespace mecperf::core {

/// One KPI sample with the metadata needed to find it again.
struct MeasurementRecord {
  std::string id;
  TraceDescriptor descriptor;
  Timestamp timestamp;
  double value = 0.0;
  std::string unit;
  std::string run_id;
  // Free-form annotation, e.g. "pair" / "median" for capacity records or
  // "timeouts=3" on a partially answered latency set. Empty when unused.
  std::string tag;

  friend bool operator==(const MeasurementRecord&, const MeasurementRecord&) = default;

  /// Enforces value >= 0, finite latency, and a unit matching the metric.
  void validate() const;
};

/// Field-level decode failure; `field` is a JSON-pointer-like path.
class DecodeError : public std::runtime_error {
 public:
  DecodeError(std::string field, const std::string& message)
      : std::runtime_error(field + ": " + message), field_(std::move(field)) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

nlohmann::json encode(const TraceDescriptor& d);
nlohmann::json encode(const MeasurementRecord& r);
nlohmann::json encode(const DescriptorQuery& q);

TraceDescriptor decode_descriptor(const nlohmann::json& j, const std::string& path = "descriptor");
MeasurementRecord decode_record(const nlohmann::json& j, const std::string& path = "");
DescriptorQuery decode_query(const nlohmann::json& j, const std::string& path = "query");

/// One record per line, keys sorted, no trailing whitespace. Deterministic.
std::string encode_ndjson(const std::vector<MeasurementRecord>& records);
std::vector<MeasurementRecord> decode_ndjson(std::string_view text);

/// Converts a value expressed in `unit` into the metric's canonical unit.
/// Rates accept bps/Kbps/Mbps/Gbps, latencies accept us/ms/s. Self metrics
/// are returned unchanged. Throws DomainError for an unknown unit.
MeasurementRecord normalize_units(MeasurementRecord r);

/// Random 128-bit hex identifier.
std::string make_id();

}  // namespace mecperf::core
