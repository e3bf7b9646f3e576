#include "mecperf/trace/repository.hpp"

#include <algorithm>

#include "mecperf/core/rng.hpp"

namespace mecperf::trace {

namespace {

int mismatches(const core::TraceDescriptor& d, const core::DescriptorQuery& q) {
  int n = 0;
  n += q.method && *q.method != d.method;
  n += q.metric && *q.metric != d.metric.type();
  n += q.label && *q.label != d.metric.label();
  n += q.segment && *q.segment != d.segment;
  n += q.direction && *q.direction != d.direction;
  n += q.access_technology && *q.access_technology != d.access_technology;
  n += q.cross_traffic_mbps && *q.cross_traffic_mbps != d.cross_traffic_mbps;
  n += q.num_clients && q.num_clients != d.num_clients;
  return n;
}

std::string describe(const core::TraceDescriptor& d) { return core::encode(d).dump(); }

}  // namespace

TraceRepository::TraceRepository(std::filesystem::path root, std::vector<ManifestEntry> manifest)
    : root_(std::move(root)), manifest_(std::move(manifest)) {
  for (const auto& e : manifest_) {
    if (!std::filesystem::exists(root_ / e.file)) {
      throw TraceFormatError("manifest lists missing file " + (root_ / e.file).string());
    }
  }
}

TraceRepository TraceRepository::open(const std::filesystem::path& root) {
  const auto manifest_path = root / kManifestName;
  std::string text;
  try {
    text = read_file(manifest_path);
  } catch (const std::exception&) {
    throw TraceFormatError("no manifest at " + manifest_path.string());
  }
  return TraceRepository(root, decode_manifest(text));
}

Selection TraceRepository::select(const core::DescriptorQuery& query, std::uint64_t seed) const {
  std::vector<std::size_t> rates;
  std::vector<std::size_t> latencies;
  core::DescriptorQuery rest = query;
  rest.metric.reset();
  for (std::size_t i = 0; i < manifest_.size(); ++i) {
    const auto& d = manifest_[i].descriptor;
    if (!core::descriptor_matches(d, rest)) continue;
    // A metric in the query pins its own side; the other side takes any
    // metric of its family.
    const bool pinned = query.metric && *query.metric == d.metric.type();
    const bool free = !query.metric || core::is_rate_metric(*query.metric) != d.metric.is_bandwidth();
    if (!pinned && !free) continue;
    if (d.metric.is_bandwidth()) rates.push_back(i);
    if (d.metric.is_latency()) latencies.push_back(i);
  }
  bool missing = rates.empty() && latencies.empty();
  if (query.metric) {
    const bool want_rate = core::is_rate_metric(*query.metric);
    const bool want_latency = core::is_latency_metric(*query.metric);
    missing = (want_rate && rates.empty()) || (want_latency && latencies.empty()) || (!want_rate && !want_latency);
  }
  if (missing) {
    std::vector<std::pair<int, std::size_t>> ranked;
    for (std::size_t i = 0; i < manifest_.size(); ++i) ranked.emplace_back(mismatches(manifest_[i].descriptor, query), i);
    std::stable_sort(ranked.begin(), ranked.end(),
                     [](const auto& a, const auto& b) { return a.first < b.first; });
    std::vector<core::TraceDescriptor> nearest;
    std::string message = "no trace matches " + core::encode(query).dump();
    for (std::size_t k = 0; k < ranked.size() && k < 3; ++k) {
      nearest.push_back(manifest_[ranked[k].second].descriptor);
      message += (k == 0 ? "; nearest: " : ", ") + describe(nearest.back());
    }
    throw DescriptorNotFound(message, std::move(nearest));
  }
  core::SplitMix64 prng(seed);
  Selection s;
  const std::uint64_t first = prng.next();
  const std::uint64_t second = prng.next();
  if (!rates.empty()) s.bandwidth = rates[first % rates.size()];
  if (!latencies.empty()) s.rtt = latencies[second % latencies.size()];
  return s;
}

std::shared_ptr<const std::vector<TimedValue>> TraceRepository::load(std::size_t index) const {
  {
    std::lock_guard lock(mutex_);
    if (auto it = cache_.find(index); it != cache_.end()) return it->second;
  }
  const auto& entry = manifest_.at(index);
  const auto path = root_ / entry.file;
  std::vector<core::MeasurementRecord> records;
  try {
    records = core::decode_ndjson(read_file(path));
  } catch (const std::exception& e) {
    throw TraceFormatError("cannot parse trace file " + path.string() + ": " + e.what());
  }
  if (records.empty()) throw TraceFormatError("trace file " + path.string() + " has no records");
  auto values = std::make_shared<std::vector<TimedValue>>();
  values->reserve(records.size());
  for (const auto& r : records) {
    if (!(r.descriptor == entry.descriptor)) {
      throw TraceFormatError("trace file " + path.string() + " holds a record whose descriptor differs from the manifest");
    }
    values->push_back({r.timestamp.micros, r.value});
  }
  std::stable_sort(values->begin(), values->end(), [](const auto& a, const auto& b) { return a.time_us < b.time_us; });
  std::lock_guard lock(mutex_);
  return cache_.try_emplace(index, std::move(values)).first->second;
}

NetworkTrace open_trace(const TraceRepository& repo, const core::DescriptorQuery& query, std::uint64_t seed,
                        bool circular) {
  return open_selection(repo, repo.select(query, seed), circular);
}

NetworkTrace open_selection(const TraceRepository& repo, const Selection& s, bool circular) {
  if (!s.bandwidth && !s.rtt) throw std::invalid_argument("empty selection");
  const auto& manifest = repo.manifest();
  if (s.bandwidth && s.rtt) {
    const auto bw = repo.load(*s.bandwidth);
    const auto rtt = repo.load(*s.rtt);
    const bool overlap = bw->back().time_us >= rtt->front().time_us && rtt->back().time_us >= bw->front().time_us;
    if (overlap) return align(*bw, *rtt, circular, manifest[*s.bandwidth].descriptor, manifest[*s.rtt].descriptor);
    // Files from unrelated runs: replay each from its own first sample.
    return NetworkTrace(manifest[*s.bandwidth].descriptor, to_series(*bw, bw->front().time_us),
                        manifest[*s.rtt].descriptor, to_series(*rtt, rtt->front().time_us), circular);
  }
  if (s.bandwidth) {
    const auto bw = repo.load(*s.bandwidth);
    return NetworkTrace(manifest[*s.bandwidth].descriptor, to_series(*bw, bw->front().time_us), std::nullopt, Series{},
                        circular);
  }
  const auto rtt = repo.load(*s.rtt);
  return NetworkTrace(std::nullopt, Series{}, manifest[*s.rtt].descriptor, to_series(*rtt, rtt->front().time_us),
                      circular);
}

}  // namespace mecperf::trace
