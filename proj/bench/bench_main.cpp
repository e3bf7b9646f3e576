// Serial reference vs OpenMP kernels. Thread count follows OMP_NUM_THREADS.

#include <benchmark/benchmark.h>

#include <filesystem>

#include "mecperf/core/record.hpp"
#include "mecperf/fixtures/synthetic_capture.hpp"
#include "mecperf/fixtures/synthetic_traces.hpp"
#include "mecperf/passive/analyzer.hpp"
#include "mecperf/sim/simulator.hpp"

using namespace mecperf;

namespace {

struct Pool {
  std::filesystem::path dir;
  std::unique_ptr<trace::TraceRepository> repo;
  Pool() {
    dir = std::filesystem::temp_directory_path() / ("mecperf-bench-" + core::make_id());
    fixtures::write_trace_repository(fixtures::bimodal_rtt_pool(), dir);
    repo.reset(new trace::TraceRepository(trace::TraceRepository::open(dir)));
  }
  ~Pool() { std::filesystem::remove_all(dir); }
};

Pool& pool() {
  static Pool p;
  return p;
}

sim::SimulationConfig study_config(std::int64_t slots) {
  sim::SimulationConfig c;
  c.num_slots = static_cast<std::uint32_t>(slots);
  c.num_replications = 8;
  c.trace_query_op1.metric = core::MetricType::tcp_latency;
  c.trace_query_op1.access_technology = core::AccessTechnology::wifi;
  c.trace_query_op2.metric = core::MetricType::tcp_latency;
  c.trace_query_op2.access_technology = core::AccessTechnology::lte;
  return c;
}

const std::vector<double> kGrid{0.0, 0.1, 0.2, 0.5};

void BM_StudySerial(benchmark::State& state) {
  const auto c = study_config(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(sim::run_study_serial(c, kGrid, *pool().repo));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(kGrid.size()) * c.num_replications);
}

void BM_StudyParallel(benchmark::State& state) {
  const auto c = study_config(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(sim::run_study(c, kGrid, *pool().repo));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(kGrid.size()) * c.num_replications);
}

std::vector<std::vector<std::uint8_t>> captures(std::size_t n) {
  std::vector<std::vector<std::uint8_t>> out;
  for (std::size_t i = 0; i < n; ++i) {
    fixtures::TcpFlowSpec s;
    s.client_port = static_cast<std::uint16_t>(40000 + i);
    s.duration_s = 2.0;
    s.retransmit = {5, 100};
    out.push_back(fixtures::to_pcap(fixtures::synthetic_tcp_flow(s)));
  }
  return out;
}

core::TraceDescriptor passive_descriptor() {
  core::TraceDescriptor d;
  d.method = core::Method::passive;
  d.metric = core::MetricType::passive_throughput;
  return d;
}

void BM_AnalyzeSerial(benchmark::State& state) {
  const auto caps = captures(static_cast<std::size_t>(state.range(0)));
  const auto d = passive_descriptor();
  for (auto _ : state) {
    for (const auto& c : caps) benchmark::DoNotOptimize(passive::analyze_capture(c, d));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_AnalyzeParallel(benchmark::State& state) {
  const auto caps = captures(static_cast<std::size_t>(state.range(0)));
  const auto d = passive_descriptor();
  for (auto _ : state) benchmark::DoNotOptimize(passive::analyze_captures(caps, d));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

}  // namespace

BENCHMARK(BM_StudySerial)->Arg(200)->Arg(1000)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_StudyParallel)->Arg(200)->Arg(1000)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_AnalyzeSerial)->Arg(8)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_AnalyzeParallel)->Arg(8)->Unit(benchmark::kMillisecond)->UseRealTime();

BENCHMARK_MAIN();
