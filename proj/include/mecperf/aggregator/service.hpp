#pragma once

// REST surface of the aggregator.
//
//   POST /v1/measurements   {"source", "submitter", "records": [...]}  -> 201 {"batch_id", "records", "duplicate"}
//   POST /v1/self           one self_metric record                     -> 201 {"id", "batch_id"}
//   GET  /v1/measurements   ?<filter params>                           -> 200 {"records": [...]}
//   GET  /v1/export         ?<filter params>                           -> 200 {"manifest": [...], "files": {...}}
//   GET  /v1/health                                                    -> 200 {"status": "ok"}
//
// Filter params: method, metric, label, segment, direction,
// access_technology, cross_traffic_mbps, num_clients, from_us, to_us, run_id.
// An "Idempotency-Key" header makes a POST safe to retry. Rejections carry
// {"error": ..., "fields": [{"field", "message"}]}.

#include <chrono>
#include <map>
#include <memory>
#include <string>
#include <thread>

#include "mecperf/aggregator/store.hpp"
#include "mecperf/trace/format.hpp"

namespace httplib {
class Server;
}

namespace mecperf::aggregator {

std::map<std::string, std::string> to_params(const QueryFilter& filter);
/// Throws ValidationError naming the bad parameter.
QueryFilter from_params(const std::multimap<std::string, std::string>& params);

/// Records matching `filter` grouped into trace files plus a manifest.
trace::TraceBundle export_bundle(const Store& store, const QueryFilter& filter);
/// export_bundle written to `destination`; returns the written paths.
std::vector<std::filesystem::path> export_traces(const Store& store, const QueryFilter& filter,
                                                 const std::filesystem::path& destination);

nlohmann::json encode(const trace::TraceBundle& bundle);
trace::TraceBundle decode_bundle(const nlohmann::json& j);

struct ServerOptions {
  std::string token;  // when non-empty, requests need "Authorization: Bearer <token>"
  std::size_t max_body_bytes = 64u << 20;
};

class Server {
 public:
  Server(Store& store, ServerOptions options = {});
  ~Server();

  /// Binds to `host:port` (port 0 picks a free port) and returns the port.
  /// Throws std::runtime_error if the address is unavailable.
  int bind(const std::string& host, int port);
  /// Serves until stop(); call after bind().
  void run();
  /// bind() plus run() on a background thread.
  int start(const std::string& host, int port);
  void stop();

 private:
  Store& store_;
  ServerOptions options_;
  std::unique_ptr<httplib::Server> http_;
  std::thread thread_;
};

struct ClientOptions {
  std::string token;
  std::string submitter = "mecperf";
  std::chrono::milliseconds timeout{10000};
  int attempts = 3;  // connection failures and 5xx are retried with the same key
};

/// Error reported by the service; `status` is the HTTP code (0 when no
/// response was received).
class ServiceError : public std::runtime_error {
 public:
  ServiceError(int status, const std::string& message) : std::runtime_error(message), status_(status) {}
  int status() const { return status_; }

 private:
  int status_;
};

class Client : public core::MeasurementSink {
 public:
  /// `base_url` like "http://127.0.0.1:8080".
  explicit Client(std::string base_url, ClientOptions options = {});

  /// One POST per descriptor; each carries an idempotency key derived from
  /// its content so a retried or repeated submission is not duplicated.
  std::vector<std::string> submit(std::span<const core::MeasurementRecord> records, core::Method source) override;
  SubmitResult submit_batch(const Batch& batch);
  /// Returns the record id.
  std::string post_self(const core::MeasurementRecord& record);
  std::vector<core::MeasurementRecord> query(const QueryFilter& filter);
  trace::TraceBundle export_bundle(const QueryFilter& filter);
  bool healthy();

 private:
  nlohmann::json request(const std::string& method, const std::string& path, const std::string& body,
                         const std::string& idempotency_key, int expected_status);

  std::string base_url_;
  ClientOptions options_;
};

}  // namespace mecperf::aggregator
