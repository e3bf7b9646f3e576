#include "mecperf/passive/analyzer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace mecperf::passive {

namespace {

// Unwraps 32-bit sequence space into a monotone 64-bit space around the
// previously seen value.
class SeqUnwrapper {
 public:
  explicit SeqUnwrapper(std::uint32_t base) : last_(std::int64_t{1} << 32 | base) {}

  std::int64_t operator()(std::uint32_t raw) {
    const auto delta = static_cast<std::int32_t>(raw - static_cast<std::uint32_t>(last_));
    last_ += delta;
    return last_;
  }

 private:
  std::int64_t last_;
};

// Range-maximum sparse table over reverse-direction ack numbers.
class RangeMax {
 public:
  explicit RangeMax(std::vector<std::int64_t> values) {
    table_.push_back(std::move(values));
    const std::size_t n = table_[0].size();
    for (std::size_t span = 2; span <= n; span *= 2) {
      const auto& prev = table_.back();
      std::vector<std::int64_t> level(n - span + 1);
      for (std::size_t i = 0; i + span <= n; ++i) level[i] = std::max(prev[i], prev[i + span / 2]);
      table_.push_back(std::move(level));
    }
  }

  // max over [lo, hi], inclusive, lo <= hi.
  std::int64_t query(std::size_t lo, std::size_t hi) const {
    const std::size_t len = hi - lo + 1;
    std::size_t k = 0;
    while ((std::size_t{2} << k) <= len) ++k;
    return std::max(table_[k][lo], table_[k][hi + 1 - (std::size_t{1} << k)]);
  }

 private:
  std::vector<std::vector<std::int64_t>> table_;
};

std::vector<AckSample> half_latency(const std::vector<PacketRecord>& data,
                                    const std::vector<PacketRecord>& reverse, bool from_initiator) {
  std::vector<AckSample> out;
  if (data.empty()) return out;

  SeqUnwrapper seq_unwrap(data.front().tcp->seq);
  SeqUnwrapper ack_unwrap(data.front().tcp->seq);

  struct Segment {
    core::Timestamp time;
    std::int64_t begin;
    std::int64_t end;
    bool retransmission;
  };
  std::vector<Segment> segments;
  std::vector<std::pair<std::int64_t, std::int64_t>> ambiguous;
  std::int64_t highest_end = std::numeric_limits<std::int64_t>::min();
  for (const auto& p : data) {
    const std::int64_t seq = seq_unwrap(p.tcp->seq);
    if (p.payload_length == 0) continue;
    const std::int64_t end = seq + p.payload_length;
    const bool retrans = seq < highest_end;
    if (retrans) ambiguous.emplace_back(seq, end);
    highest_end = std::max(highest_end, end);
    segments.push_back({p.capture_timestamp, seq, end, retrans});
  }
  if (segments.empty()) return out;

  std::sort(ambiguous.begin(), ambiguous.end());
  std::vector<std::pair<std::int64_t, std::int64_t>> merged;
  for (const auto& r : ambiguous) {
    if (!merged.empty() && r.first <= merged.back().second) {
      merged.back().second = std::max(merged.back().second, r.second);
    } else {
      merged.push_back(r);
    }
  }
  auto overlaps_ambiguous = [&merged](std::int64_t begin, std::int64_t end) {
    auto it = std::upper_bound(merged.begin(), merged.end(), std::make_pair(begin, std::numeric_limits<std::int64_t>::max()));
    if (it != merged.end() && it->first < end) return true;
    if (it != merged.begin() && std::prev(it)->second > begin) return true;
    return false;
  };

  std::vector<core::Timestamp> ack_times;
  std::vector<std::int64_t> acks;
  for (const auto& p : reverse) {
    if (!(p.tcp->flags & tcp_flags::ack)) continue;
    ack_times.push_back(p.capture_timestamp);
    acks.push_back(ack_unwrap(p.tcp->ack));
  }
  if (acks.empty()) return out;
  const RangeMax range_max(acks);

  for (const auto& s : segments) {
    if (s.retransmission || overlaps_ambiguous(s.begin, s.end)) continue;
    const auto first = static_cast<std::size_t>(
        std::upper_bound(ack_times.begin(), ack_times.end(), s.time) - ack_times.begin());
    if (first >= acks.size() || range_max.query(first, acks.size() - 1) < s.end) continue;
    std::size_t lo = first;
    std::size_t hi = acks.size() - 1;
    while (lo < hi) {
      const std::size_t mid = lo + (hi - lo) / 2;
      if (range_max.query(first, mid) >= s.end) {
        hi = mid;
      } else {
        lo = mid + 1;
      }
    }
    const double ms = static_cast<double>(ack_times[lo].micros - s.time.micros) / 1000.0;
    out.push_back({s.time, ms, from_initiator});
  }
  return out;
}

std::uint64_t fnv1a(std::span<const std::uint8_t> bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::uint8_t b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::vector<std::string_view> split_words(std::string_view s) {
  std::vector<std::string_view> words;
  std::size_t pos = 0;
  while (pos < s.size()) {
    const std::size_t start = s.find_first_not_of(" \t", pos);
    if (start == std::string_view::npos) break;
    std::size_t end = s.find_first_of(" \t", start);
    if (end == std::string_view::npos) end = s.size();
    words.push_back(s.substr(start, end - start));
    pos = end;
  }
  return words;
}

}  // namespace

FlowKey FlowKey::of(const PacketRecord& p) {
  const Endpoint a{p.src, p.src_port};
  const Endpoint b{p.dst, p.dst_port};
  return a <= b ? FlowKey{p.transport, a, b} : FlowKey{p.transport, b, a};
}

HalfDirection half_of(const FlowKey& key, const PacketRecord& p) {
  return Endpoint{p.src, p.src_port} == key.low ? HalfDirection::low_to_high
                                                : HalfDirection::high_to_low;
}

const std::vector<PacketRecord>& Flow::from_initiator() const {
  return initiator == key.low ? low_to_high : high_to_low;
}

const std::vector<PacketRecord>& Flow::to_initiator() const {
  return initiator == key.low ? high_to_low : low_to_high;
}

PacketPredicate parse_filter(std::string_view expression) {
  struct Term {
    enum class Side { any, src, dst } side = Side::any;
    bool is_host = false;
    Ipv4 host;
    std::uint16_t port = 0;
  };
  std::vector<Term> terms;
  const auto words = split_words(expression);
  std::size_t i = 0;
  auto fail = [&](const std::string& why) {
    return std::invalid_argument("bad filter '" + std::string(expression) + "': " + why);
  };
  while (i < words.size()) {
    Term t;
    if (words[i] == "src" || words[i] == "dst") {
      t.side = words[i] == "src" ? Term::Side::src : Term::Side::dst;
      ++i;
    }
    if (i + 1 >= words.size()) throw fail("expected 'host ADDR' or 'port N'");
    if (words[i] == "host") {
      t.is_host = true;
      try {
        t.host = Ipv4::parse(words[i + 1]);
      } catch (const std::invalid_argument& e) {
        throw fail(e.what());
      }
    } else if (words[i] == "port") {
      unsigned long port = 0;
      try {
        port = std::stoul(std::string(words[i + 1]));
      } catch (const std::exception&) {
        throw fail("bad port");
      }
      if (port > 65535) throw fail("bad port");
      t.port = static_cast<std::uint16_t>(port);
    } else {
      throw fail("unknown term '" + std::string(words[i]) + "'");
    }
    terms.push_back(t);
    i += 2;
    if (i < words.size()) {
      if (words[i] != "and") throw fail("terms must be joined by 'and'");
      if (++i >= words.size()) throw fail("dangling 'and'");
    }
  }
  return [terms](const PacketRecord& p) {
    for (const auto& t : terms) {
      bool src_hit = t.is_host ? p.src == t.host : p.src_port == t.port;
      bool dst_hit = t.is_host ? p.dst == t.host : p.dst_port == t.port;
      bool hit = t.side == Term::Side::src   ? src_hit
                 : t.side == Term::Side::dst ? dst_hit
                                              : (src_hit || dst_hit);
      if (!hit) return false;
    }
    return true;
  };
}

std::map<FlowKey, Flow> extract_flows(std::span<const PacketRecord> records, const PacketPredicate& filter) {
  std::vector<const PacketRecord*> ordered;
  ordered.reserve(records.size());
  for (const auto& r : records) {
    if (!filter || filter(r)) ordered.push_back(&r);
  }
  std::stable_sort(ordered.begin(), ordered.end(), [](const PacketRecord* a, const PacketRecord* b) {
    return a->capture_timestamp < b->capture_timestamp;
  });

  std::map<FlowKey, Flow> flows;
  std::map<FlowKey, bool> saw_syn;
  for (const PacketRecord* p : ordered) {
    const FlowKey key = FlowKey::of(*p);
    auto [it, inserted] = flows.try_emplace(key);
    Flow& flow = it->second;
    if (inserted) {
      flow.key = key;
      flow.initiator = Endpoint{p->src, p->src_port};
    }
    const bool bare_syn = p->tcp && (p->tcp->flags & tcp_flags::syn) && !(p->tcp->flags & tcp_flags::ack);
    if (bare_syn && !saw_syn[key]) {
      saw_syn[key] = true;
      flow.initiator = Endpoint{p->src, p->src_port};
    }
    (half_of(key, *p) == HalfDirection::low_to_high ? flow.low_to_high : flow.high_to_low).push_back(*p);
  }
  return flows;
}

std::vector<ThroughputBin> binned_throughput(std::span<const PacketRecord> packets, double bin_width_s) {
  if (!(bin_width_s > 0.0)) throw std::invalid_argument("bin width must be positive");
  const std::int64_t width_us = std::llround(bin_width_s * 1e6);
  if (width_us <= 0) throw std::invalid_argument("bin width below one microsecond");
  std::vector<ThroughputBin> bins;
  if (packets.empty()) return bins;

  std::int64_t first = packets.front().capture_timestamp.micros;
  std::int64_t last = first;
  for (const auto& p : packets) {
    first = std::min(first, p.capture_timestamp.micros);
    last = std::max(last, p.capture_timestamp.micros);
  }
  const std::size_t count = static_cast<std::size_t>((last - first) / width_us) + 1;
  bins.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    bins[i].bin_start.micros = first + static_cast<std::int64_t>(i) * width_us;
    bins[i].bin_width_s = static_cast<double>(width_us) * 1e-6;
  }
  for (const auto& p : packets) {
    bins[static_cast<std::size_t>((p.capture_timestamp.micros - first) / width_us)].bytes += p.payload_length;
  }
  for (auto& b : bins) b.throughput_mbps = static_cast<double>(b.bytes) * 8.0 / b.bin_width_s / 1e6;
  return bins;
}

std::vector<AckSample> ack_latency(const Flow& flow) {
  if (flow.key.transport != Transport::tcp) {
    throw UnsupportedMetric("ACK latency is only defined for TCP flows");
  }
  auto samples = half_latency(flow.from_initiator(), flow.to_initiator(), true);
  auto reverse = half_latency(flow.to_initiator(), flow.from_initiator(), false);
  samples.insert(samples.end(), reverse.begin(), reverse.end());
  std::stable_sort(samples.begin(), samples.end(),
                   [](const AckSample& a, const AckSample& b) { return a.data_time < b.data_time; });
  return samples;
}

AnalysisResult analyze_capture(std::span<const std::uint8_t> capture, const core::TraceDescriptor& descriptor,
                               const AnalysisOptions& options, core::MeasurementSink* sink) {
  using core::Direction;
  using core::MetricKind;
  using core::MetricType;
  if (descriptor.method != core::Method::passive) {
    throw std::invalid_argument("analyze_capture requires a passive descriptor");
  }

  AnalysisResult result;
  const ParsedCapture parsed = parse_capture(capture);
  result.skipped_packets = parsed.skipped;
  const auto flows = extract_flows(parsed.packets, options.filter);
  result.flows = flows.size();
  if (flows.empty()) {
    result.warnings.push_back("no flow matched the filter");
  }

  char prefix[40];
  std::snprintf(prefix, sizeof prefix, "pcap-%016llx", static_cast<unsigned long long>(fnv1a(capture)));

  std::size_t flow_index = 0;
  for (const auto& [key, flow] : flows) {
    const std::string flow_tag = std::string(prefix) + "-f" + std::to_string(flow_index++);

    auto emit = [&](const std::string& run_id, MetricType metric, Direction dir, core::Timestamp ts, double value) {
      core::MeasurementRecord r;
      r.descriptor = descriptor;
      r.descriptor.metric = MetricKind(metric);
      r.descriptor.direction = dir;
      r.run_id = run_id;
      r.id = run_id + "-" + std::to_string(result.records.size());
      r.timestamp = ts;
      r.value = value;
      r.unit = std::string(core::canonical_unit(metric));
      result.records.push_back(std::move(r));
    };

    const std::pair<const std::vector<PacketRecord>*, Direction> halves[] = {
        {&flow.from_initiator(), Direction::upstream},
        {&flow.to_initiator(), Direction::downstream},
    };
    for (const auto& [packets, dir] : halves) {
      const std::string run_id = flow_tag + "-" + std::string(core::to_string(dir)) + "-throughput";
      for (const auto& bin : binned_throughput(*packets, options.bin_width_s)) {
        emit(run_id, MetricType::passive_throughput, dir, bin.bin_start, bin.throughput_mbps);
      }
    }

    if (key.transport != Transport::tcp) continue;
    try {
      for (const auto& s : ack_latency(flow)) {
        const Direction dir = s.from_initiator ? Direction::upstream : Direction::downstream;
        emit(flow_tag + "-" + std::string(core::to_string(dir)) + "-latency", MetricType::passive_latency, dir,
             s.data_time, s.latency_ms);
      }
    } catch (const std::exception& e) {
      result.errors.push_back(flow_tag + ": " + e.what());
    }
  }

  // Group runs together so each run is contiguous and in timestamp order.
  std::stable_sort(result.records.begin(), result.records.end(),
                   [](const core::MeasurementRecord& a, const core::MeasurementRecord& b) {
                     return a.run_id != b.run_id ? a.run_id < b.run_id : a.timestamp < b.timestamp;
                   });

  if (sink != nullptr && !result.records.empty()) {
    try {
      sink->submit(result.records, core::Method::passive);
    } catch (const std::exception& e) {
      result.errors.push_back(std::string("submission failed: ") + e.what());
    }
  }
  return result;
}

std::vector<AnalysisResult> analyze_captures(std::span<const std::vector<std::uint8_t>> captures,
                                             const core::TraceDescriptor& descriptor,
                                             const AnalysisOptions& options) {
  std::vector<AnalysisResult> results(captures.size());
  std::vector<std::string> failures(captures.size());
  const auto n = static_cast<std::int64_t>(captures.size());
#pragma omp parallel for schedule(dynamic)
  for (std::int64_t i = 0; i < n; ++i) {
    try {
      results[static_cast<std::size_t>(i)] = analyze_capture(captures[static_cast<std::size_t>(i)], descriptor, options);
    } catch (const std::exception& e) {
      failures[static_cast<std::size_t>(i)] = e.what();
    }
  }
  for (std::size_t i = 0; i < failures.size(); ++i) {
    if (!failures[i].empty()) results[i].errors.push_back(failures[i]);
  }
  return results;
}

std::string dump_csv(const AnalysisResult& result) {
  std::ostringstream out;
  out << "run_id,metric,direction,timestamp_us,value,unit\n";
  for (const auto& r : result.records) {
    char value[32];
    std::snprintf(value, sizeof value, "%.6f", r.value);
    out << r.run_id << ',' << core::to_string(r.descriptor.metric.type()) << ','
        << core::to_string(r.descriptor.direction) << ',' << r.timestamp.micros << ',' << value << ','
        << r.unit << '\n';
  }
  return out.str();
}

}  // namespace mecperf::passive
