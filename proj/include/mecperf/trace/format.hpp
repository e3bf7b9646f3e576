#pragma once

// On-disk trace repository format, shared by the aggregator export and the
// replay library.
//
//   <root>/manifest.json     {"format": "mecperf-trace-manifest/1",
//                             "traces": [{"file", "run_id", "records",
//                                         "descriptor"}, ...]}
//   <root>/<run>.ndjson      one MeasurementRecord JSON object per line,
//                            ordered by timestamp

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "mecperf/core/record.hpp"

namespace mecperf::trace {

inline constexpr const char* kManifestName = "manifest.json";
inline constexpr const char* kManifestFormat = "mecperf-trace-manifest/1";

struct ManifestEntry {
  std::string file;  // relative to the repository root
  std::string run_id;
  std::size_t records = 0;
  core::TraceDescriptor descriptor;

  friend bool operator==(const ManifestEntry&, const ManifestEntry&) = default;
};

class TraceFormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string encode_manifest(const std::vector<ManifestEntry>& entries);
std::vector<ManifestEntry> decode_manifest(std::string_view text);

/// File name for a run: the run id with unsafe characters replaced, plus a
/// hash suffix when anything had to be replaced.
std::string trace_file_name(const std::string& run_id);

/// In-memory export: manifest plus file name -> NDJSON text.
struct TraceBundle {
  std::vector<ManifestEntry> manifest;
  std::map<std::string, std::string> files;
};

/// Groups records by run id (runs in lexicographic order, records by
/// timestamp then id). Throws TraceFormatError if a run mixes descriptors.
TraceBundle build_bundle(std::vector<core::MeasurementRecord> records);

/// Writes every file of the bundle plus the manifest. Each file is written
/// to a temporary name and renamed into place; on failure every file written
/// by this call is removed and the error rethrown.
std::vector<std::filesystem::path> write_bundle(const TraceBundle& bundle, const std::filesystem::path& dir);

/// Converts "timestamp,value" CSV lines (timestamp in seconds since the
/// epoch, value in `unit`) into records of one run. Lines starting with '#'
/// and a header line are ignored.
std::vector<core::MeasurementRecord> import_csv(std::string_view csv, const core::TraceDescriptor& descriptor,
                                                const std::string& run_id, const std::string& unit);

std::string read_file(const std::filesystem::path& path);

}  // namespace mecperf::trace
