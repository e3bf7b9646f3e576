#pragma once

#include <span>
#include <string>
#include <vector>

#include "mecperf/core/record.hpp"

namespace mecperf::core {

/// Destination for finished measurements, usually the aggregator client.
class MeasurementSink {
 public:
  virtual ~MeasurementSink() = default;

  /// Persists `records`; may split them into one batch per descriptor.
  /// Returns the assigned batch ids. Throws on failure.
  virtual std::vector<std::string> submit(std::span<const MeasurementRecord> records, Method source) = 0;
};

}  // namespace mecperf::core
