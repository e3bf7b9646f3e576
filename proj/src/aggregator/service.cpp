#include "mecperf/aggregator/service.hpp"

#include <httplib.h>

#include <charconv>

namespace mecperf::aggregator {

using nlohmann::json;

namespace {

std::string number(double v) { return json(v).dump(); }

std::int64_t parse_int(const std::string& field, const std::string& s) {
  std::int64_t v = 0;
  const auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || end != s.data() + s.size()) throw ValidationError(field, "expected an integer");
  return v;
}

double parse_double(const std::string& field, const std::string& s) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used == s.size()) return v;
  } catch (const std::exception&) {
  }
  throw ValidationError(field, "expected a number");
}

json field_errors(const std::string& error, const std::vector<FieldError>& fields) {
  json list = json::array();
  for (const auto& f : fields) list.push_back({{"field", f.field}, {"message", f.message}});
  return {{"error", error}, {"fields", list}};
}

void reply(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

core::MeasurementRecord decode_ingested(const json& j, const std::string& path) {
  auto r = core::decode_record(j, path);
  try {
    return core::normalize_units(std::move(r));
  } catch (const core::DomainError& e) {
    throw ValidationError(path + ".unit", e.what());
  }
}

std::optional<std::string> idempotency_key(const httplib::Request& req) {
  if (!req.has_header("Idempotency-Key")) return std::nullopt;
  auto key = req.get_header_value("Idempotency-Key");
  if (key.empty()) return std::nullopt;
  return key;
}

}  // namespace

std::map<std::string, std::string> to_params(const QueryFilter& f) {
  std::map<std::string, std::string> p;
  const auto& q = f.descriptor;
  if (q.method) p["method"] = core::to_string(*q.method);
  if (q.metric) p["metric"] = core::to_string(*q.metric);
  if (q.label) p["label"] = *q.label;
  if (q.segment) p["segment"] = core::to_string(*q.segment);
  if (q.direction) p["direction"] = core::to_string(*q.direction);
  if (q.access_technology) p["access_technology"] = core::to_string(*q.access_technology);
  if (q.cross_traffic_mbps) p["cross_traffic_mbps"] = number(*q.cross_traffic_mbps);
  if (q.num_clients) p["num_clients"] = std::to_string(*q.num_clients);
  if (f.from_us) p["from_us"] = std::to_string(*f.from_us);
  if (f.to_us) p["to_us"] = std::to_string(*f.to_us);
  if (f.run_id) p["run_id"] = *f.run_id;
  return p;
}

QueryFilter from_params(const std::multimap<std::string, std::string>& params) {
  QueryFilter f;
  auto& q = f.descriptor;
  std::vector<FieldError> errors;
  for (const auto& [key, value] : params) {
    try {
      if (key == "method") {
        q.method = core::parse_method(value);
      } else if (key == "metric") {
        q.metric = core::parse_metric_type(value);
      } else if (key == "label") {
        q.label = value;
      } else if (key == "segment") {
        q.segment = core::parse_segment(value);
      } else if (key == "direction") {
        q.direction = core::parse_direction(value);
      } else if (key == "access_technology") {
        q.access_technology = core::parse_access_technology(value);
      } else if (key == "cross_traffic_mbps") {
        q.cross_traffic_mbps = parse_double(key, value);
      } else if (key == "num_clients") {
        const auto n = parse_int(key, value);
        if (n <= 0 || n > std::numeric_limits<std::uint32_t>::max()) throw ValidationError(key, "out of range");
        q.num_clients = static_cast<std::uint32_t>(n);
      } else if (key == "from_us") {
        f.from_us = parse_int(key, value);
      } else if (key == "to_us") {
        f.to_us = parse_int(key, value);
      } else if (key == "run_id") {
        f.run_id = value;
      } else {
        errors.push_back({key, "unknown filter parameter"});
      }
    } catch (const ValidationError& e) {
      errors.insert(errors.end(), e.errors().begin(), e.errors().end());
    } catch (const core::DomainError& e) {
      errors.push_back({key, e.what()});
    }
  }
  if (f.from_us && f.to_us && *f.from_us > *f.to_us) errors.push_back({"from_us", "must not exceed to_us"});
  if (!errors.empty()) throw ValidationError(std::move(errors));
  return f;
}

trace::TraceBundle export_bundle(const Store& store, const QueryFilter& filter) {
  return trace::build_bundle(store.query(filter));
}

std::vector<std::filesystem::path> export_traces(const Store& store, const QueryFilter& filter,
                                                 const std::filesystem::path& destination) {
  return trace::write_bundle(export_bundle(store, filter), destination);
}

json encode(const trace::TraceBundle& bundle) {
  return {{"manifest", json::parse(trace::encode_manifest(bundle.manifest))}, {"files", bundle.files}};
}

trace::TraceBundle decode_bundle(const json& j) {
  trace::TraceBundle b;
  b.manifest = trace::decode_manifest(j.at("manifest").dump());
  b.files = j.at("files").get<std::map<std::string, std::string>>();
  for (const auto& e : b.manifest) {
    if (!b.files.count(e.file)) throw trace::TraceFormatError("bundle lacks file " + e.file);
  }
  return b;
}

Server::Server(Store& store, ServerOptions options)
    : store_(store), options_(std::move(options)), http_(std::make_unique<httplib::Server>()) {
  auto& http = *http_;
  http.set_payload_max_length(options_.max_body_bytes);

  http.set_pre_routing_handler([this](const httplib::Request& req, httplib::Response& res) {
    if (options_.token.empty() || req.path == "/v1/health") return httplib::Server::HandlerResponse::Unhandled;
    if (req.get_header_value("Authorization") == "Bearer " + options_.token) {
      return httplib::Server::HandlerResponse::Unhandled;
    }
    reply(res, 401, {{"error", "missing or wrong bearer token"}});
    return httplib::Server::HandlerResponse::Handled;
  });

  // Maps exceptions from a handler to status codes.
  auto guarded = [](auto body) {
    return [body](const httplib::Request& req, httplib::Response& res) {
      try {
        body(req, res);
      } catch (const ValidationError& e) {
        reply(res, 400, field_errors("invalid request", e.errors()));
      } catch (const core::DecodeError& e) {
        reply(res, 400, field_errors("invalid request", {{e.field(), e.what()}}));
      } catch (const json::exception& e) {
        reply(res, 400, field_errors("invalid request", {{"body", e.what()}}));
      } catch (const trace::TraceFormatError& e) {
        reply(res, 409, {{"error", e.what()}});
      } catch (const std::exception& e) {
        reply(res, 500, {{"error", e.what()}});
      }
    };
  };

  http.Get("/v1/health", [](const httplib::Request&, httplib::Response& res) { reply(res, 200, {{"status", "ok"}}); });

  http.Post("/v1/measurements", guarded([this](const httplib::Request& req, httplib::Response& res) {
              const json body = json::parse(req.body);
              if (!body.is_object()) throw ValidationError("body", "expected an object");
              Batch batch;
              if (!body.contains("source") || !body["source"].is_string()) {
                throw ValidationError("source", "required: active, passive or self");
              }
              try {
                batch.source = core::parse_method(body["source"].get<std::string>());
              } catch (const core::DomainError& e) {
                throw ValidationError("source", e.what());
              }
              batch.submitter = body.value("submitter", "");
              if (!body.contains("records") || !body["records"].is_array()) {
                throw ValidationError("records", "required array");
              }
              std::size_t i = 0;
              for (const auto& r : body["records"]) {
                batch.records.push_back(decode_ingested(r, "records[" + std::to_string(i++) + "]"));
              }
              batch.idempotency_key = idempotency_key(req);
              const auto result = store_.submit(batch);
              reply(res, result.duplicate ? 200 : 201,
                    {{"batch_id", result.batch_id}, {"records", result.records}, {"duplicate", result.duplicate}});
            }));

  http.Post("/v1/self", guarded([this](const httplib::Request& req, httplib::Response& res) {
              const json body = json::parse(req.body);
              Batch batch;
              batch.source = core::Method::self;
              batch.submitter = req.get_header_value("X-Submitter");
              auto record = core::decode_record(body, "");
              if (record.descriptor.method != core::Method::self ||
                  record.descriptor.metric.type() != core::MetricType::self_metric) {
                throw ValidationError("descriptor", "self ingestion needs method 'self' and metric 'self_metric'");
              }
              batch.records.push_back(std::move(record));
              batch.idempotency_key = idempotency_key(req);
              const auto result = store_.submit(batch);
              reply(res, result.duplicate ? 200 : 201,
                    {{"id", batch.records.front().id}, {"batch_id", result.batch_id}, {"duplicate", result.duplicate}});
            }));

  http.Get("/v1/measurements", guarded([this](const httplib::Request& req, httplib::Response& res) {
             const auto records = store_.query(from_params(req.params));
             json list = json::array();
             for (const auto& r : records) list.push_back(core::encode(r));
             reply(res, 200, {{"records", std::move(list)}});
           }));

  http.Get("/v1/export", guarded([this](const httplib::Request& req, httplib::Response& res) {
             reply(res, 200, encode(export_bundle(store_, from_params(req.params))));
           }));
}

Server::~Server() { stop(); }

int Server::bind(const std::string& host, int port) {
  const bool ok = port == 0 ? (port = http_->bind_to_any_port(host)) > 0 : http_->bind_to_port(host, port);
  if (!ok) throw std::runtime_error("cannot bind aggregator to " + host + ":" + std::to_string(port));
  return port;
}

void Server::run() { http_->listen_after_bind(); }

int Server::start(const std::string& host, int port) {
  const int bound = bind(host, port);
  thread_ = std::thread([this] { run(); });
  http_->wait_until_ready();
  return bound;
}

void Server::stop() {
  http_->stop();
  if (thread_.joinable()) thread_.join();
}

}  // namespace mecperf::aggregator
