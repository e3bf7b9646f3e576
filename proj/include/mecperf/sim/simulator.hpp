#pragma once

// Two federated operators, on/off clients replaying RTT traces, and per-slot
// migration of each operator's worst-RTT fraction gamma to the peer.

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mecperf/core/rng.hpp"
#include "mecperf/trace/repository.hpp"

namespace mecperf::sim {

enum class Operator : std::uint8_t { op1 = 0, op2 = 1 };

struct SimulationConfig {
  std::uint32_t num_clients = 100;
  double mean_period = 10.0;  // slots, for both active and inactive periods
  double gamma = 0.0;
  std::uint32_t num_slots = 1000;
  std::uint32_t num_replications = 20;
  std::uint64_t seed = 1;
  core::DescriptorQuery trace_query_op1;
  core::DescriptorQuery trace_query_op2;
  std::vector<double> quantiles{0.5, 0.75, 0.95};
  double seconds_per_slot = 1.0;

  /// Throws core::DomainError on out-of-range fields.
  void validate() const;
};

/// Active/inactive period length: ceil of an exponential whose rate makes
/// the rounded value's mean exactly `mean` (a geometric law on 1, 2, ...).
/// Always >= 1; means <= 1 give 1.
std::uint32_t draw_period(core::SplitMix64& prng, double mean);

/// ceil(gamma * n), robust to binary rounding of gamma.
std::uint32_t migration_count(double gamma, std::uint32_t n);

struct ClientState {
  std::uint32_t client_id = 0;
  bool active = false;
  std::uint32_t phase_remaining = 0;
  Operator op = Operator::op1;
  std::optional<trace::NetworkTrace> trace_op1;
  std::optional<trace::NetworkTrace> trace_op2;
  std::uint32_t local_clock = 0;
};

struct SlotReport {
  std::uint32_t slot = 0;
  std::array<std::uint32_t, 2> subscribed{};  // active clients per operator
  std::uint32_t inactive = 0;
  std::map<std::uint32_t, double> rtt_ms;               // client id -> RTT this slot
  std::array<std::vector<std::uint32_t>, 2> migrated;  // per source operator
};

/// State of one replication. Construction draws the initial phases.
class World {
 public:
  World(const SimulationConfig& config, const trace::TraceRepository& repo, std::uint64_t seed);

  /// Applies phase transitions, reads every active client's RTT, and picks
  /// each operator's ceil(gamma * subscribed) highest-RTT clients (ties by
  /// ascending id) to switch operator from the next slot on.
  SlotReport step();

  const std::vector<ClientState>& clients() const { return clients_; }
  std::uint32_t slot() const { return slot_; }

 private:
  void activate(ClientState& c);
  const trace::NetworkTrace& trace_for(const core::DescriptorQuery& query, std::uint64_t seed);

  const SimulationConfig& config_;
  const trace::TraceRepository& repo_;
  core::SplitMix64 prng_;
  std::vector<ClientState> clients_;
  std::map<std::pair<std::optional<std::size_t>, std::optional<std::size_t>>, trace::NetworkTrace> cache_;
  std::uint32_t slot_ = 0;
};

struct ReplicationResult {
  std::vector<double> pool;  // every RTT sample collected, in slot then client order
  std::uint64_t migrations = 0;
};

ReplicationResult run_replication(const SimulationConfig& config, const trace::TraceRepository& repo,
                                  std::uint64_t seed, const std::function<void(const SlotReport&)>& observer = {});

struct QuantileResult {
  double q = 0.0;
  std::vector<double> per_replication;
  double mean = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
};

struct StudyPoint {
  double gamma = 0.0;
  std::vector<QuantileResult> quantiles;
  double migrations_per_slot_mean = 0.0;
  std::uint64_t total_migrations = 0;
};

/// Seed of replication `r`, shared by every gamma of a study.
std::uint64_t replication_seed(const SimulationConfig& config, std::uint32_t r);

/// Every (gamma, replication) pair runs as an independent OpenMP task.
std::vector<StudyPoint> run_study(const SimulationConfig& config, std::span<const double> gamma_grid,
                                  const trace::TraceRepository& repo);
/// Reference implementation: same results, one replication at a time.
std::vector<StudyPoint> run_study_serial(const SimulationConfig& config, std::span<const double> gamma_grid,
                                         const trace::TraceRepository& repo);

/// CSV with columns gamma,quantile,mean,ci_low,ci_high,migrations_per_slot_mean.
std::string to_csv(std::span<const StudyPoint> study);

}  // namespace mecperf::sim
