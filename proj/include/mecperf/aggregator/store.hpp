#pragma once

// Persistent measurement store backed by a single SQLite file.
//
// Schema (see docs/aggregator.md):
//   batches(id INTEGER PRIMARY KEY AUTOINCREMENT, idempotency_key UNIQUE,
//           received_at_us, source, submitter, record_count)
//   records(batch_id, id UNIQUE, run_id, method, metric, label, segment,
//           direction, access_technology, cross_traffic_mbps, num_clients,
//           timestamp_us, value, unit, tag)
// with indices on the descriptor columns, timestamp and run_id.

#include <cstdint>
#include <filesystem>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "mecperf/core/record.hpp"
#include "mecperf/core/sink.hpp"

struct sqlite3;

namespace mecperf::aggregator {

/// Partial descriptor plus optional [from_us, to_us] range and run id.
struct QueryFilter {
  core::DescriptorQuery descriptor;
  std::optional<std::int64_t> from_us;
  std::optional<std::int64_t> to_us;
  std::optional<std::string> run_id;

  friend bool operator==(const QueryFilter&, const QueryFilter&) = default;
};

bool filter_matches(const core::MeasurementRecord& r, const QueryFilter& f);

struct FieldError {
  std::string field;
  std::string message;
};

/// A submission the service refuses (HTTP 400).
class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(std::vector<FieldError> errors);
  ValidationError(std::string field, std::string message)
      : ValidationError(std::vector<FieldError>{{std::move(field), std::move(message)}}) {}
  const std::vector<FieldError>& errors() const { return errors_; }

 private:
  std::vector<FieldError> errors_;
};

/// The database could not be read or written (HTTP 500).
class StorageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Batch {
  core::Method source = core::Method::active;
  std::string submitter;
  std::vector<core::MeasurementRecord> records;
  std::optional<std::string> idempotency_key;
};

struct SubmitResult {
  std::int64_t batch_id = 0;
  std::size_t records = 0;
  bool duplicate = false;  // idempotency key seen before; nothing written
};

/// Throws ValidationError listing every problem: empty batch, invalid
/// records, descriptors that differ from the first record's, or a source
/// that disagrees with the descriptor method.
void validate_batch(const Batch& batch);

class Store {
 public:
  /// Opens or creates the database at `path` (":memory:" for a scratch store).
  explicit Store(const std::filesystem::path& path);
  ~Store();
  Store(const Store&) = delete;
  Store& operator=(const Store&) = delete;

  /// Validates and writes the batch in one transaction. The batch is on
  /// disk (WAL, synchronous=FULL) when this returns.
  SubmitResult submit(const Batch& batch);

  /// Matching records ordered by timestamp, then insertion order.
  std::vector<core::MeasurementRecord> query(const QueryFilter& filter) const;

  std::size_t record_count() const;
  std::size_t batch_count() const;

 private:
  sqlite3* db_ = nullptr;
  mutable std::mutex mutex_;
};

/// Adapter so that probes and analyzers can write straight into a store.
class StoreSink : public core::MeasurementSink {
 public:
  StoreSink(Store& store, std::string submitter) : store_(store), submitter_(std::move(submitter)) {}
  std::vector<std::string> submit(std::span<const core::MeasurementRecord> records, core::Method source) override;

 private:
  Store& store_;
  std::string submitter_;
};

/// Splits records into runs of equal descriptor, preserving order.
std::vector<std::vector<core::MeasurementRecord>> group_by_descriptor(std::span<const core::MeasurementRecord> records);

/// Stable key for a batch's content, used so that resubmitting the same
/// records is a no-op.
std::string content_key(core::Method source, std::span<const core::MeasurementRecord> records);

}  // namespace mecperf::aggregator
