#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <vector>

#include "mecperf/trace/format.hpp"
#include "mecperf/trace/network_trace.hpp"

namespace mecperf::trace {

class DescriptorNotFound : public std::runtime_error {
 public:
  DescriptorNotFound(const std::string& message, std::vector<core::TraceDescriptor> nearest)
      : std::runtime_error(message), nearest_(std::move(nearest)) {}
  const std::vector<core::TraceDescriptor>& nearest() const { return nearest_; }

 private:
  std::vector<core::TraceDescriptor> nearest_;
};

/// Which manifest entries a selection drew; indices into the manifest.
struct Selection {
  std::optional<std::size_t> bandwidth;
  std::optional<std::size_t> rtt;
  friend bool operator==(const Selection&, const Selection&) = default;
};

/// A directory of trace files plus its manifest. Trace files are parsed on
/// first use and cached, so a repository may be shared between threads.
class TraceRepository {
 public:
  /// Reads `<root>/manifest.json` and checks that every listed file exists.
  static TraceRepository open(const std::filesystem::path& root);
  TraceRepository(std::filesystem::path root, std::vector<ManifestEntry> manifest);

  const std::filesystem::path& root() const { return root_; }
  const std::vector<ManifestEntry>& manifest() const { return manifest_; }

  /// Chooses the bandwidth and RTT files for `query`. Candidates are the
  /// matching entries in manifest order, split into rate metrics and
  /// latency metrics (the query's metric, when set, picks one side and the
  /// other side matches on the remaining fields). A SplitMix64 seeded with
  /// `seed` draws the bandwidth index first, then the RTT index, each
  /// reduced modulo the candidate count.
  Selection select(const core::DescriptorQuery& query, std::uint64_t seed) const;

  /// All values of one manifest entry on the absolute clock, sorted.
  std::shared_ptr<const std::vector<TimedValue>> load(std::size_t index) const;

 private:
  std::filesystem::path root_;
  std::vector<ManifestEntry> manifest_;
  mutable std::mutex mutex_;
  mutable std::map<std::size_t, std::shared_ptr<const std::vector<TimedValue>>> cache_;
};

/// Selects files for `query` with `seed`, loads them and aligns them into a
/// replayable trace. Throws DescriptorNotFound when nothing matches and
/// TraceFormatError naming the file when one cannot be parsed.
NetworkTrace open_trace(const TraceRepository& repo, const core::DescriptorQuery& query, std::uint64_t seed,
                        bool circular);

/// The loading half of open_trace, for callers that cache by selection.
NetworkTrace open_selection(const TraceRepository& repo, const Selection& selection, bool circular);

}  // namespace mecperf::trace
