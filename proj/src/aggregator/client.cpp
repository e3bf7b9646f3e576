#include <httplib.h>

#include "mecperf/aggregator/service.hpp"

namespace mecperf::aggregator {

using nlohmann::json;

Client::Client(std::string base_url, ClientOptions options)
    : base_url_(std::move(base_url)), options_(std::move(options)) {
  while (!base_url_.empty() && base_url_.back() == '/') base_url_.pop_back();
}

json Client::request(const std::string& method, const std::string& path, const std::string& body,
                     const std::string& idempotency_key, int expected_status) {
  httplib::Client http(base_url_);
  http.set_connection_timeout(options_.timeout);
  http.set_read_timeout(options_.timeout);
  http.set_write_timeout(options_.timeout);
  httplib::Headers headers;
  if (!options_.token.empty()) headers.emplace("Authorization", "Bearer " + options_.token);
  if (!idempotency_key.empty()) headers.emplace("Idempotency-Key", idempotency_key);
  headers.emplace("X-Submitter", options_.submitter);

  std::string last_error;
  for (int attempt = 0; attempt < std::max(1, options_.attempts); ++attempt) {
    if (attempt > 0) std::this_thread::sleep_for(std::chrono::milliseconds(100 << attempt));
    const auto res = method == "POST" ? http.Post(path, headers, body, "application/json") : http.Get(path, headers);
    if (!res) {
      last_error = "no response from " + base_url_ + ": " + httplib::to_string(res.error());
      continue;
    }
    if (res->status == expected_status || (expected_status == 201 && res->status == 200)) {
      return json::parse(res->body);
    }
    std::string message = "HTTP " + std::to_string(res->status) + " from " + method + " " + path;
    if (!res->body.empty()) message += ": " + res->body;
    if (res->status >= 500) {
      last_error = message;
      continue;
    }
    throw ServiceError(res->status, message);
  }
  throw ServiceError(0, last_error);
}

SubmitResult Client::submit_batch(const Batch& batch) {
  json records = json::array();
  for (const auto& r : batch.records) records.push_back(core::encode(r));
  const json body{{"source", core::to_string(batch.source)}, {"submitter", batch.submitter}, {"records", records}};
  const std::string key = batch.idempotency_key.value_or(content_key(batch.source, batch.records));
  const json out = request("POST", "/v1/measurements", body.dump(), key, 201);
  return {out.at("batch_id").get<std::int64_t>(), out.at("records").get<std::size_t>(), out.at("duplicate").get<bool>()};
}

std::vector<std::string> Client::submit(std::span<const core::MeasurementRecord> records, core::Method source) {
  std::vector<std::string> ids;
  for (auto& group : group_by_descriptor(records)) {
    Batch b;
    b.source = source;
    b.submitter = options_.submitter;
    b.records = std::move(group);
    ids.push_back(std::to_string(submit_batch(b).batch_id));
  }
  return ids;
}

std::string Client::post_self(const core::MeasurementRecord& record) {
  const core::MeasurementRecord one[] = {record};
  const json out = request("POST", "/v1/self", core::encode(record).dump(), content_key(core::Method::self, one), 201);
  return out.at("id").get<std::string>();
}

namespace {

std::string with_params(const std::string& path, const QueryFilter& filter) {
  httplib::Params params;
  for (const auto& [k, v] : to_params(filter)) params.emplace(k, v);
  return params.empty() ? path : httplib::append_query_params(path, params);
}

}  // namespace

std::vector<core::MeasurementRecord> Client::query(const QueryFilter& filter) {
  const json out = request("GET", with_params("/v1/measurements", filter), "", "", 200);
  std::vector<core::MeasurementRecord> records;
  for (const auto& r : out.at("records")) records.push_back(core::decode_record(r));
  return records;
}

trace::TraceBundle Client::export_bundle(const QueryFilter& filter) {
  return decode_bundle(request("GET", with_params("/v1/export", filter), "", "", 200));
}

bool Client::healthy() {
  try {
    request("GET", "/v1/health", "", "", 200);
    return true;
  } catch (const std::exception&) {
    return false;
  }
}

}  // namespace mecperf::aggregator
