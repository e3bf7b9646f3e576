#include "mecperf/sim/simulator.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <exception>

#include "mecperf/sim/stats.hpp"

namespace mecperf::sim {

void SimulationConfig::validate() const {
  if (num_clients < 1) throw core::DomainError("num_clients must be positive");
  if (!(mean_period > 0) || !std::isfinite(mean_period)) throw core::DomainError("mean_period must be positive");
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw core::DomainError("gamma must be in [0, 1]");
  if (num_replications < 1) throw core::DomainError("num_replications must be positive");
  if (!(seconds_per_slot > 0) || !std::isfinite(seconds_per_slot)) {
    throw core::DomainError("seconds_per_slot must be positive");
  }
  for (std::size_t i = 0; i < quantiles.size(); ++i) {
    if (!(quantiles[i] > 0.0 && quantiles[i] < 1.0)) throw core::DomainError("quantiles must lie in (0, 1)");
    if (i > 0 && quantiles[i] <= quantiles[i - 1]) throw core::DomainError("quantiles must be strictly ascending");
  }
}

std::uint32_t draw_period(core::SplitMix64& prng, double mean) {
  const double u = prng.uniform();
  if (mean <= 1.0) return 1;
  // P(ceil(E) = k) = (1 - p)^(k - 1) p with p = 1 / mean when E has rate -ln(1 - p).
  const double x = std::log1p(-u) / std::log1p(-1.0 / mean);
  const double k = std::ceil(x);
  if (k < 1.0) return 1;
  if (k > 1e9) return 1'000'000'000u;
  return static_cast<std::uint32_t>(k);
}

std::uint32_t migration_count(double gamma, std::uint32_t n) {
  const double exact = gamma * static_cast<double>(n);
  return static_cast<std::uint32_t>(std::min<double>(n, std::ceil(exact - 1e-9)));
}

World::World(const SimulationConfig& config, const trace::TraceRepository& repo, std::uint64_t seed)
    : config_(config), repo_(repo), prng_(seed) {
  clients_.resize(config.num_clients);
  for (std::uint32_t i = 0; i < config.num_clients; ++i) {
    auto& c = clients_[i];
    c.client_id = i;
    if (prng_.uniform() < 0.5) {
      activate(c);
    } else {
      c.active = false;
      c.phase_remaining = draw_period(prng_, config_.mean_period);
    }
  }
}

const trace::NetworkTrace& World::trace_for(const core::DescriptorQuery& query, std::uint64_t seed) {
  const auto sel = repo_.select(query, seed);
  const auto key = std::make_pair(sel.bandwidth, sel.rtt);
  auto it = cache_.find(key);
  if (it == cache_.end()) it = cache_.emplace(key, trace::open_selection(repo_, sel, true)).first;
  return it->second;
}

void World::activate(ClientState& c) {
  c.active = true;
  c.op = prng_.uniform() < 0.5 ? Operator::op1 : Operator::op2;
  // One seed for both operators: a repository listing paired runs in
  // matching order then hands the client a matched pair.
  const std::uint64_t seed = prng_.next();
  c.trace_op1 = trace_for(config_.trace_query_op1, seed);
  c.trace_op2 = trace_for(config_.trace_query_op2, seed);
  c.local_clock = 0;
  c.phase_remaining = draw_period(prng_, config_.mean_period);
}

SlotReport World::step() {
  SlotReport report;
  report.slot = slot_;
  for (auto& c : clients_) {
    if (c.phase_remaining > 0) continue;
    if (c.active) {
      c.active = false;
      c.trace_op1.reset();
      c.trace_op2.reset();
      c.phase_remaining = draw_period(prng_, config_.mean_period);
    } else {
      activate(c);
    }
  }

  std::array<std::vector<std::pair<double, std::uint32_t>>, 2> by_op;
  for (const auto& c : clients_) {
    if (!c.active) {
      ++report.inactive;
      continue;
    }
    const auto& t = c.op == Operator::op1 ? *c.trace_op1 : *c.trace_op2;
    const double rtt = t.get_rtt(static_cast<double>(c.local_clock) * config_.seconds_per_slot);
    report.rtt_ms.emplace(c.client_id, rtt);
    by_op[static_cast<int>(c.op)].emplace_back(rtt, c.client_id);
  }

  for (int op = 0; op < 2; ++op) {
    auto& list = by_op[op];
    report.subscribed[op] = static_cast<std::uint32_t>(list.size());
    const std::uint32_t k = migration_count(config_.gamma, report.subscribed[op]);
    std::partial_sort(list.begin(), list.begin() + k, list.end(), [](const auto& a, const auto& b) {
      if (a.first != b.first) return a.first > b.first;
      return a.second < b.second;
    });
    for (std::uint32_t i = 0; i < k; ++i) report.migrated[op].push_back(list[i].second);
  }

  for (int op = 0; op < 2; ++op) {
    for (auto id : report.migrated[op]) {
      auto& c = clients_[id];
      c.op = c.op == Operator::op1 ? Operator::op2 : Operator::op1;
    }
  }
  for (auto& c : clients_) {
    --c.phase_remaining;
    if (c.active) ++c.local_clock;
  }
  ++slot_;
  return report;
}

ReplicationResult run_replication(const SimulationConfig& config, const trace::TraceRepository& repo,
                                  std::uint64_t seed, const std::function<void(const SlotReport&)>& observer) {
  config.validate();
  ReplicationResult out;
  World world(config, repo, seed);
  for (std::uint32_t s = 0; s < config.num_slots; ++s) {
    const SlotReport report = world.step();
    for (const auto& [id, rtt] : report.rtt_ms) out.pool.push_back(rtt);
    out.migrations += report.migrated[0].size() + report.migrated[1].size();
    if (observer) observer(report);
  }
  return out;
}

std::uint64_t replication_seed(const SimulationConfig& config, std::uint32_t r) {
  return core::derive_seed(config.seed, r);
}

namespace {

struct Cell {
  std::vector<double> quantiles;
  std::uint64_t migrations = 0;
};

Cell run_cell(const SimulationConfig& base, double gamma, std::uint32_t rep, const trace::TraceRepository& repo) {
  SimulationConfig cfg = base;
  cfg.gamma = gamma;
  const auto result = run_replication(cfg, repo, replication_seed(base, rep));
  Cell cell;
  for (double q : base.quantiles) cell.quantiles.push_back(quantile(result.pool, q));
  cell.migrations = result.migrations;
  return cell;
}

std::vector<StudyPoint> summarize(const SimulationConfig& config, std::span<const double> grid,
                                  const std::vector<Cell>& cells) {
  std::vector<StudyPoint> out;
  const std::uint32_t reps = config.num_replications;
  for (std::size_t g = 0; g < grid.size(); ++g) {
    StudyPoint p;
    p.gamma = grid[g];
    double per_slot = 0.0;
    for (std::uint32_t r = 0; r < reps; ++r) {
      const auto& cell = cells[g * reps + r];
      p.total_migrations += cell.migrations;
      per_slot += config.num_slots ? static_cast<double>(cell.migrations) / config.num_slots : 0.0;
    }
    p.migrations_per_slot_mean = per_slot / reps;
    for (std::size_t qi = 0; qi < config.quantiles.size(); ++qi) {
      QuantileResult qr;
      qr.q = config.quantiles[qi];
      for (std::uint32_t r = 0; r < reps; ++r) qr.per_replication.push_back(cells[g * reps + r].quantiles[qi]);
      const auto ci = confidence_interval(qr.per_replication);
      qr.mean = ci.mean;
      qr.ci_low = ci.low();
      qr.ci_high = ci.high();
      p.quantiles.push_back(std::move(qr));
    }
    out.push_back(std::move(p));
  }
  return out;
}

void check_grid(const SimulationConfig& config, std::span<const double> grid) {
  config.validate();
  if (grid.empty()) throw core::DomainError("gamma grid must not be empty");
  for (double g : grid) {
    if (!(g >= 0.0 && g <= 1.0)) throw core::DomainError("gamma must be in [0, 1]");
  }
}

}  // namespace

std::vector<StudyPoint> run_study(const SimulationConfig& config, std::span<const double> grid,
                                  const trace::TraceRepository& repo) {
  check_grid(config, grid);
  const std::uint32_t reps = config.num_replications;
  const auto tasks = static_cast<std::int64_t>(grid.size() * reps);
  std::vector<Cell> cells(static_cast<std::size_t>(tasks));
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(tasks));
#pragma omp parallel for schedule(dynamic)
  for (std::int64_t t = 0; t < tasks; ++t) {
    try {
      cells[t] = run_cell(config, grid[static_cast<std::size_t>(t) / reps], static_cast<std::uint32_t>(t % reps), repo);
    } catch (...) {
      errors[t] = std::current_exception();
    }
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return summarize(config, grid, cells);
}

std::vector<StudyPoint> run_study_serial(const SimulationConfig& config, std::span<const double> grid,
                                         const trace::TraceRepository& repo) {
  check_grid(config, grid);
  std::vector<Cell> cells;
  for (double g : grid) {
    for (std::uint32_t r = 0; r < config.num_replications; ++r) cells.push_back(run_cell(config, g, r, repo));
  }
  return summarize(config, grid, cells);
}

namespace {

std::string num(double v) {
  char buf[64];
  const auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return ec == std::errc() ? std::string(buf, end) : "nan";
}

}  // namespace

std::string to_csv(std::span<const StudyPoint> study) {
  std::string out = "gamma,quantile,mean,ci_low,ci_high,migrations_per_slot_mean\n";
  for (const auto& p : study) {
    for (const auto& q : p.quantiles) {
      out += num(p.gamma) + "," + num(q.q) + "," + num(q.mean) + "," + num(q.ci_low) + "," + num(q.ci_high) + "," +
             num(p.migrations_per_slot_mean) + "\n";
    }
  }
  return out;
}

}  // namespace mecperf::sim
