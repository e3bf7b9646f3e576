#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>

#include "mecperf/fixtures/synthetic_traces.hpp"
#include "mecperf/sim/simulator.hpp"
#include "mecperf/sim/stats.hpp"
#include "sim_reference.hpp"

using namespace mecperf;
using namespace mecperf::sim;

namespace {

struct TempDir {
  std::filesystem::path path;
  TempDir() {
    path = std::filesystem::temp_directory_path() / ("mecperf-sim-" + core::make_id());
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
};

std::vector<core::MeasurementRecord> constant_run(core::AccessTechnology tech, double value, std::size_t n) {
  std::vector<core::MeasurementRecord> out;
  for (std::size_t i = 0; i < n; ++i) {
    core::MeasurementRecord r;
    r.descriptor.metric = core::MetricType::tcp_latency;
    r.descriptor.access_technology = tech;
    r.run_id = "const-" + std::string(core::to_string(tech));
    r.id = r.run_id + "-" + std::to_string(i);
    r.timestamp.micros = 1'000'000'000 + static_cast<std::int64_t>(i) * 1'000'000;
    r.value = value;
    r.unit = "ms";
    out.push_back(r);
  }
  return out;
}

SimulationConfig wifi_lte_config() {
  SimulationConfig c;
  c.trace_query_op1.metric = core::MetricType::tcp_latency;
  c.trace_query_op1.access_technology = core::AccessTechnology::wifi;
  c.trace_query_op2.metric = core::MetricType::tcp_latency;
  c.trace_query_op2.access_technology = core::AccessTechnology::lte;
  return c;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), {}};
}

}  // namespace

TEST_CASE("draw_period is geometric with the configured mean") {
  core::SplitMix64 g(99);
  double sum = 0;
  std::uint32_t lowest = 1000;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    const auto p = draw_period(g, 10.0);
    lowest = std::min(lowest, p);
    sum += p;
  }
  CHECK(lowest >= 1);
  CHECK(std::abs(sum / n - 10.0) < 0.2);

  core::SplitMix64 a(5), b(5);
  for (int i = 0; i < 100; ++i) CHECK(draw_period(a, 3.5) == draw_period(b, 3.5));
  core::SplitMix64 c(5);
  for (int i = 0; i < 100; ++i) CHECK(draw_period(c, 0.5) == 1);
}

TEST_CASE("migration_count rounds up") {
  CHECK(migration_count(0.0, 100) == 0);
  CHECK(migration_count(0.2, 10) == 2);
  CHECK(migration_count(0.5, 50) == 25);
  CHECK(migration_count(0.1, 25) == 3);
  CHECK(migration_count(0.3, 10) == 3);  // 0.3 * 10 is 3.0000000000000004 in binary
  CHECK(migration_count(0.7, 10) == 7);
  CHECK(migration_count(1.0, 7) == 7);
  CHECK(migration_count(0.01, 1) == 1);
  CHECK(migration_count(0.5, 0) == 0);
}

TEST_CASE("quantile and confidence interval") {
  CHECK(quantile({3, 1, 2, 4}, 0.5) == doctest::Approx(2.5));
  CHECK(quantile({10, 20, 30, 40, 50}, 0.75) == doctest::Approx(40));
  CHECK(quantile({1, 2}, 0.95) == doctest::Approx(1.95));
  CHECK(std::isnan(quantile({}, 0.5)));

  // With 2 degrees of freedom the t quantile has the closed form
  // (2p - 1) / sqrt(2 p (1 - p)); the sample sd of {1, 2, 3} is 1.
  const double p = 0.975;
  const double t2 = (2 * p - 1) / std::sqrt(2 * p * (1 - p));
  CHECK(t2 == doctest::Approx(4.302652729).epsilon(1e-9));
  const std::vector<double> v{1, 2, 3};
  const auto ci = confidence_interval(v);
  CHECK(ci.mean == doctest::Approx(2.0));
  CHECK(ci.half_width == doctest::Approx(t2 / std::sqrt(3.0)).epsilon(1e-12));
  const std::vector<double> one{7};
  CHECK(confidence_interval(one).half_width == 0.0);
  const std::vector<double> flat{20, 20, 20};
  CHECK(confidence_interval(flat).half_width == 0.0);
}

TEST_CASE("config validation") {
  SimulationConfig c;
  CHECK_NOTHROW(c.validate());
  auto bad = [&](auto mutate) {
    SimulationConfig x;
    mutate(x);
    CHECK_THROWS_AS(x.validate(), core::DomainError);
  };
  bad([](auto& x) { x.gamma = 1.5; });
  bad([](auto& x) { x.gamma = -0.1; });
  bad([](auto& x) { x.num_clients = 0; });
  bad([](auto& x) { x.mean_period = 0; });
  bad([](auto& x) { x.num_replications = 0; });
  bad([](auto& x) { x.quantiles = {0.9, 0.5}; });
  bad([](auto& x) { x.quantiles = {0.0}; });
  bad([](auto& x) { x.seconds_per_slot = 0; });
}

TEST_CASE("constant trace gives exact quantiles and zero-width intervals") {
  TempDir dir;
  auto records = constant_run(core::AccessTechnology::wifi, 20.0, 30);
  auto lte = constant_run(core::AccessTechnology::lte, 20.0, 30);
  records.insert(records.end(), lte.begin(), lte.end());
  fixtures::write_trace_repository(records, dir.path);
  const auto repo = trace::TraceRepository::open(dir.path);
  auto c = wifi_lte_config();
  c.num_slots = 200;
  c.num_replications = 5;
  const std::vector<double> grid{0.0};
  const auto study = run_study(c, grid, repo);
  REQUIRE(study.size() == 1);
  CHECK(study[0].total_migrations == 0);
  for (const auto& q : study[0].quantiles) {
    CHECK(q.mean == 20.0);
    CHECK(q.ci_low == 20.0);
    CHECK(q.ci_high == 20.0);
  }
}

TEST_CASE("simulation against the reference model") {
  TempDir dir;
  fixtures::write_trace_repository(fixtures::bimodal_rtt_pool(), dir.path);
  const auto repo = trace::TraceRepository::open(dir.path);

  SUBCASE("slot reports match the reference exactly") {
    for (double gamma : {0.0, 0.1, 0.25, 0.5, 1.0}) {
      for (std::uint64_t seed : {1ULL, 2ULL, 77ULL}) {
        auto c = wifi_lte_config();
        c.num_clients = 12;
        c.num_slots = 60;
        c.mean_period = 4;
        c.gamma = gamma;
        const auto expected = reference::simulate(c, repo, seed);
        std::vector<SlotReport> got;
        run_replication(c, repo, seed, [&](const SlotReport& r) { got.push_back(r); });
        REQUIRE(got.size() == expected.size());
        for (std::size_t s = 0; s < got.size(); ++s) {
          CHECK(got[s].rtt_ms == expected[s].rtt);
          for (int op = 0; op < 2; ++op) {
            CHECK(got[s].subscribed[op] == expected[s].subscribed[op]);
            CHECK(got[s].migrated[op] == expected[s].migrated[op]);
          }
        }
      }
    }
  }

  SUBCASE("single client with no migration replays its trace") {
    auto c = wifi_lte_config();
    c.num_clients = 1;
    c.num_slots = 300;
    std::vector<double> oracle;
    for (const auto& slot : reference::simulate(c, repo, 5)) {
      for (const auto& [id, rtt] : slot.rtt) oracle.push_back(rtt);
    }
    const auto result = run_replication(c, repo, 5);
    CHECK(result.migrations == 0);
    CHECK(result.pool == oracle);
    CHECK(!oracle.empty());
  }

  SUBCASE("invariants of every slot") {
    auto c = wifi_lte_config();
    c.gamma = 0.3;
    c.num_slots = 200;
    World world(c, repo, 11);
    for (std::uint32_t s = 0; s < c.num_slots; ++s) {
      const auto r = world.step();
      CHECK(r.subscribed[0] + r.subscribed[1] + r.inactive == c.num_clients);
      CHECK(r.rtt_ms.size() == r.subscribed[0] + r.subscribed[1]);
      // Operator at read time: migrated clients have already switched.
      std::array<std::vector<double>, 2> kept;
      std::array<std::vector<double>, 2> moved;
      std::set<std::uint32_t> migrated(r.migrated[0].begin(), r.migrated[0].end());
      migrated.insert(r.migrated[1].begin(), r.migrated[1].end());
      for (const auto& [id, rtt] : r.rtt_ms) {
        const int now = static_cast<int>(world.clients()[id].op);
        const int then = migrated.count(id) ? 1 - now : now;
        (migrated.count(id) ? moved : kept)[then].push_back(rtt);
      }
      for (int op = 0; op < 2; ++op) {
        CHECK(r.migrated[op].size() == migration_count(c.gamma, r.subscribed[op]));
        CHECK(moved[op].size() == r.migrated[op].size());
        if (!moved[op].empty() && !kept[op].empty()) {
          CHECK(*std::min_element(moved[op].begin(), moved[op].end()) >=
                *std::max_element(kept[op].begin(), kept[op].end()));
        }
      }
    }
  }

  SUBCASE("determinism and empty runs") {
    auto c = wifi_lte_config();
    c.gamma = 0.1;
    c.num_slots = 100;
    CHECK(run_replication(c, repo, 3).pool == run_replication(c, repo, 3).pool);
    CHECK(run_replication(c, repo, 3).pool != run_replication(c, repo, 4).pool);
    c.num_slots = 0;
    CHECK(run_replication(c, repo, 3).pool.empty());
  }

  SUBCASE("small-scale bimodal case: migration lowers the median") {
    auto c = wifi_lte_config();
    c.num_clients = 4;
    c.num_slots = 20;
    c.num_replications = 40;
    std::array<double, 2> mean_median{};
    for (int g = 0; g < 2; ++g) {
      c.gamma = g == 0 ? 0.0 : 0.1;
      for (std::uint32_t r = 0; r < c.num_replications; ++r) {
        std::vector<double> pool;
        for (const auto& slot : reference::simulate(c, repo, replication_seed(c, r))) {
          for (const auto& [id, rtt] : slot.rtt) pool.push_back(rtt);
        }
        mean_median[g] += quantile(pool, 0.5) / c.num_replications;
      }
    }
    const std::vector<double> grid{0.0, 0.1};
    const auto study = run_study(c, grid, repo);
    CHECK(study[0].quantiles[0].mean == doctest::Approx(mean_median[0]).epsilon(1e-12));
    CHECK(study[1].quantiles[0].mean == doctest::Approx(mean_median[1]).epsilon(1e-12));
    CHECK(mean_median[1] < mean_median[0]);
  }

  SUBCASE("parallel study equals the serial reference") {
    auto c = wifi_lte_config();
    c.num_slots = 150;
    c.num_replications = 6;
    const std::vector<double> grid{0.0, 0.1, 0.5};
    const auto a = run_study(c, grid, repo);
    const auto b = run_study_serial(c, grid, repo);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(a[i].total_migrations == b[i].total_migrations);
      for (std::size_t q = 0; q < a[i].quantiles.size(); ++q) {
        CHECK(a[i].quantiles[q].per_replication == b[i].quantiles[q].per_replication);
      }
    }
    CHECK(to_csv(a) == to_csv(b));
    CHECK(a[0].total_migrations == 0);
    CHECK(a[2].migrations_per_slot_mean > a[1].migrations_per_slot_mean);
  }

  SUBCASE("csv layout") {
    auto c = wifi_lte_config();
    c.num_slots = 20;
    c.num_replications = 2;
    const std::vector<double> grid{0.0, 0.5};
    const auto csv = to_csv(run_study(c, grid, repo));
    CHECK(csv.rfind("gamma,quantile,mean,ci_low,ci_high,migrations_per_slot_mean\n", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 1 + 2 * 3);
    CHECK(csv.find("\n0.5,0.95,") != std::string::npos);
  }

  SUBCASE("a query with no traces aborts the study") {
    auto c = wifi_lte_config();
    c.trace_query_op2.cross_traffic_mbps = 25.0;
    c.num_slots = 5;
    const std::vector<double> grid{0.0, 0.1};
    CHECK_THROWS_AS(run_study(c, grid, repo), trace::DescriptorNotFound);
    CHECK_THROWS_AS(run_study_serial(c, grid, repo), trace::DescriptorNotFound);
    const std::vector<double> bad_grid{0.0, 2.0};
    CHECK_THROWS_AS(run_study(wifi_lte_config(), bad_grid, repo), core::DomainError);
    CHECK_THROWS_AS(run_study(wifi_lte_config(), std::span<const double>{}, repo), core::DomainError);
  }
}

TEST_CASE("trace fixtures") {
  SUBCASE("bimodal pool pairs one good with one bad run") {
    const auto records = fixtures::bimodal_rtt_pool();
    const auto bundle = trace::build_bundle(records);
    std::map<std::string, int> count;
    for (const auto& e : bundle.manifest) {
      count[std::string(core::to_string(e.descriptor.access_technology)) +
            (e.descriptor.cross_traffic_mbps == 0 ? "-good" : "-bad")]++;
    }
    CHECK(count["wifi-good"] == 8);
    CHECK(count["wifi-bad"] == 8);
    CHECK(count["lte-good"] == 8);
    CHECK(count["lte-bad"] == 8);
    std::vector<const trace::ManifestEntry*> wifi, lte;
    for (const auto& e : bundle.manifest) {
      (e.descriptor.access_technology == core::AccessTechnology::wifi ? wifi : lte).push_back(&e);
    }
    REQUIRE(wifi.size() == lte.size());
    for (std::size_t k = 0; k < wifi.size(); ++k) {
      CHECK((wifi[k]->descriptor.cross_traffic_mbps == 0) != (lte[k]->descriptor.cross_traffic_mbps == 0));
    }
    for (const auto& r : records) {
      if (r.descriptor.cross_traffic_mbps == 0) {
        CHECK((r.value >= 5 && r.value <= 15));
      } else {
        CHECK((r.value >= 80 && r.value <= 120));
      }
    }
  }

  SUBCASE("synthetic traces are byte-identical for one seed") {
    TempDir a, b, c;
    fixtures::write_trace_repository(fixtures::synthetic_traces({.seed = 42}), a.path);
    fixtures::write_trace_repository(fixtures::synthetic_traces({.seed = 42}), b.path);
    fixtures::write_trace_repository(fixtures::synthetic_traces({.seed = 43}), c.path);
    std::size_t files = 0;
    bool differs = false;
    for (const auto& entry : std::filesystem::directory_iterator(a.path)) {
      const auto name = entry.path().filename();
      CHECK(slurp(entry.path()) == slurp(b.path / name));
      differs = differs || slurp(entry.path()) != slurp(c.path / name);
      ++files;
    }
    CHECK(files == 33);
    CHECK(differs);
    const auto repo = trace::TraceRepository::open(a.path);
    core::DescriptorQuery q;
    q.access_technology = core::AccessTechnology::lte;
    q.segment = core::SegmentId::mec_cloud;
    q.direction = core::Direction::downstream;
    q.cross_traffic_mbps = 50.0;
    const auto t = trace::open_trace(repo, q, 1, false);
    CHECK(t.get_bandwidth(0) > 0);
    CHECK(t.get_rtt(0) > 0);
    CHECK(t.duration_us() == 120'000'000);
  }

  SUBCASE("pcap fixtures") {
    TempDir a, b;
    const auto files = fixtures::write_pcap_fixtures(a.path, 42);
    fixtures::write_pcap_fixtures(b.path, 42);
    CHECK(files.size() == 7);
    for (const auto& f : files) CHECK(slurp(f) == slurp(b.path / f.filename()));
  }
}
