#pragma once

// Seeded trace sets in the repository format. Same seed, same bytes.

#include <cstdint>
#include <filesystem>
#include <vector>

#include "mecperf/core/record.hpp"

namespace mecperf::fixtures {

struct TraceSetSpec {
  std::uint64_t seed = 42;
  std::int64_t start_us = 1'700'000'000'000'000LL;
  std::uint32_t samples = 120;
  std::int64_t step_us = 1'000'000;
};

/// Paired tcp_bandwidth and tcp_latency runs for every combination of
/// {wifi, lte} x {access_mec, mec_cloud} x {upstream, downstream} x
/// cross-traffic {0, 50}. The two runs of a combination share one time
/// window, so they align without trimming.
std::vector<core::MeasurementRecord> synthetic_traces(const TraceSetSpec& spec = {});

struct BimodalPoolSpec {
  std::uint64_t seed = 7;
  std::uint32_t pairs = 16;
  std::uint32_t samples = 60;
  std::int64_t step_us = 1'000'000;
  double good_low_ms = 5.0, good_high_ms = 15.0;
  double bad_low_ms = 80.0, bad_high_ms = 120.0;
};

/// tcp_latency runs for wifi (first operator) and lte (second operator),
/// grouped in pairs. Pair k holds one wifi and one lte run, exactly one of
/// them good: even pairs have good wifi, odd pairs good lte. Good runs carry
/// cross_traffic 0 and bad runs cross_traffic 50, so each technology has
/// equally many of both. Run ids sort by pair, so the k-th wifi and k-th
/// lte manifest entries form pair k.
std::vector<core::MeasurementRecord> bimodal_rtt_pool(const BimodalPoolSpec& spec = {});

/// Writes records as a trace repository (manifest plus one file per run).
void write_trace_repository(std::vector<core::MeasurementRecord> records, const std::filesystem::path& dir);

/// Pcap fixtures with a manifest.json describing each file: a constant
/// 10 Mbps TCP flow, TCP flows acknowledged after 10, 50 and 100 ms, a flow
/// with retransmissions and a constant-rate UDP flow.
std::vector<std::filesystem::path> write_pcap_fixtures(const std::filesystem::path& dir, std::uint64_t seed);

}  // namespace mecperf::fixtures
