#include "mecperf/aggregator/store.hpp"

#include <sqlite3.h>

#include <algorithm>
#include <cstdio>
#include <functional>

namespace mecperf::aggregator {

using core::MeasurementRecord;

namespace {

constexpr const char* kSchema = R"sql(
CREATE TABLE IF NOT EXISTS batches (
  id INTEGER PRIMARY KEY AUTOINCREMENT,
  idempotency_key TEXT UNIQUE,
  received_at_us INTEGER NOT NULL,
  source TEXT NOT NULL,
  submitter TEXT NOT NULL,
  record_count INTEGER NOT NULL
);
CREATE TABLE IF NOT EXISTS records (
  seq INTEGER PRIMARY KEY,
  batch_id INTEGER NOT NULL REFERENCES batches(id),
  id TEXT NOT NULL UNIQUE,
  run_id TEXT NOT NULL,
  method TEXT NOT NULL,
  metric TEXT NOT NULL,
  label TEXT NOT NULL,
  segment TEXT NOT NULL,
  direction TEXT NOT NULL,
  access_technology TEXT NOT NULL,
  cross_traffic_mbps REAL NOT NULL,
  num_clients INTEGER,
  timestamp_us INTEGER NOT NULL,
  value REAL NOT NULL,
  unit TEXT NOT NULL,
  tag TEXT NOT NULL
);
CREATE INDEX IF NOT EXISTS records_descriptor
  ON records(metric, segment, direction, access_technology, method);
CREATE INDEX IF NOT EXISTS records_time ON records(timestamp_us);
CREATE INDEX IF NOT EXISTS records_run ON records(run_id);
)sql";

class Statement {
 public:
  Statement(sqlite3* db, const std::string& sql) : db_(db) {
    if (sqlite3_prepare_v2(db, sql.c_str(), -1, &stmt_, nullptr) != SQLITE_OK) {
      throw StorageError(std::string("prepare failed: ") + sqlite3_errmsg(db));
    }
  }
  ~Statement() { sqlite3_finalize(stmt_); }
  Statement(const Statement&) = delete;
  Statement& operator=(const Statement&) = delete;

  void bind(int i, const std::string& s) { check(sqlite3_bind_text(stmt_, i, s.c_str(), -1, SQLITE_TRANSIENT)); }
  void bind(int i, std::int64_t v) { check(sqlite3_bind_int64(stmt_, i, v)); }
  void bind(int i, double v) { check(sqlite3_bind_double(stmt_, i, v)); }
  void bind_null(int i) { check(sqlite3_bind_null(stmt_, i)); }

  /// True while rows remain.
  bool step() {
    const int rc = sqlite3_step(stmt_);
    if (rc == SQLITE_ROW) return true;
    if (rc == SQLITE_DONE) return false;
    throw StorageError(std::string("step failed: ") + sqlite3_errmsg(db_));
  }
  void reset() {
    sqlite3_reset(stmt_);
    sqlite3_clear_bindings(stmt_);
  }

  std::string text(int col) const {
    const auto* p = sqlite3_column_text(stmt_, col);
    return p ? reinterpret_cast<const char*>(p) : "";
  }
  std::int64_t int64(int col) const { return sqlite3_column_int64(stmt_, col); }
  double real(int col) const { return sqlite3_column_double(stmt_, col); }
  bool is_null(int col) const { return sqlite3_column_type(stmt_, col) == SQLITE_NULL; }

 private:
  void check(int rc) {
    if (rc != SQLITE_OK) throw StorageError(std::string("bind failed: ") + sqlite3_errmsg(db_));
  }
  sqlite3* db_;
  sqlite3_stmt* stmt_ = nullptr;
};

void exec(sqlite3* db, const char* sql) {
  char* err = nullptr;
  if (sqlite3_exec(db, sql, nullptr, nullptr, &err) != SQLITE_OK) {
    std::string msg = err ? err : "unknown error";
    sqlite3_free(err);
    throw StorageError(msg);
  }
}

std::uint64_t fnv1a64(std::string_view s, std::uint64_t h = 1469598103934665603ULL) {
  for (char c : s) {
    h ^= static_cast<std::uint8_t>(c);
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace

bool filter_matches(const MeasurementRecord& r, const QueryFilter& f) {
  if (!core::descriptor_matches(r.descriptor, f.descriptor)) return false;
  if (f.from_us && r.timestamp.micros < *f.from_us) return false;
  if (f.to_us && r.timestamp.micros > *f.to_us) return false;
  if (f.run_id && r.run_id != *f.run_id) return false;
  return true;
}

ValidationError::ValidationError(std::vector<FieldError> errors)
    : std::runtime_error([&] {
        std::string msg = "invalid batch";
        for (const auto& e : errors) msg += "; " + e.field + ": " + e.message;
        return msg;
      }()),
      errors_(std::move(errors)) {}

void validate_batch(const Batch& batch) {
  std::vector<FieldError> errors;
  if (batch.records.empty()) errors.push_back({"records", "a batch needs at least one record"});
  for (std::size_t i = 0; i < batch.records.size(); ++i) {
    const auto& r = batch.records[i];
    const std::string path = "records[" + std::to_string(i) + "]";
    try {
      r.validate();
    } catch (const std::exception& e) {
      errors.push_back({path, e.what()});
    }
    if (i > 0 && !(r.descriptor == batch.records[0].descriptor)) {
      errors.push_back({path + ".descriptor", "differs from records[0].descriptor; a batch holds one descriptor"});
    }
    if (r.descriptor.method != batch.source) {
      errors.push_back({path + ".descriptor.method", "method '" + std::string(core::to_string(r.descriptor.method)) +
                                                         "' does not match batch source '" +
                                                         std::string(core::to_string(batch.source)) + "'"});
    }
    if (errors.size() > 50) break;
  }
  if (!errors.empty()) throw ValidationError(std::move(errors));
}

Store::Store(const std::filesystem::path& path) {
  if (sqlite3_open(path.string().c_str(), &db_) != SQLITE_OK) {
    std::string msg = db_ ? sqlite3_errmsg(db_) : "out of memory";
    sqlite3_close(db_);
    throw StorageError("cannot open " + path.string() + ": " + msg);
  }
  try {
    sqlite3_busy_timeout(db_, 5000);
    exec(db_, "PRAGMA journal_mode=WAL;");
    exec(db_, "PRAGMA synchronous=FULL;");
    exec(db_, "PRAGMA foreign_keys=ON;");
    exec(db_, kSchema);
  } catch (...) {
    sqlite3_close(db_);
    throw;
  }
}

Store::~Store() { sqlite3_close(db_); }

SubmitResult Store::submit(const Batch& batch) {
  validate_batch(batch);
  std::lock_guard lock(mutex_);
  if (batch.idempotency_key) {
    Statement find(db_, "SELECT id, record_count FROM batches WHERE idempotency_key = ?1");
    find.bind(1, *batch.idempotency_key);
    if (find.step()) return {find.int64(0), static_cast<std::size_t>(find.int64(1)), true};
  }
  exec(db_, "BEGIN IMMEDIATE;");
  try {
    Statement ins(db_,
                  "INSERT INTO batches(idempotency_key, received_at_us, source, submitter, record_count) "
                  "VALUES (?1, ?2, ?3, ?4, ?5)");
    if (batch.idempotency_key) {
      ins.bind(1, *batch.idempotency_key);
    } else {
      ins.bind_null(1);
    }
    ins.bind(2, core::Timestamp::now().micros);
    ins.bind(3, std::string(core::to_string(batch.source)));
    ins.bind(4, batch.submitter);
    ins.bind(5, static_cast<std::int64_t>(batch.records.size()));
    ins.step();
    const std::int64_t batch_id = sqlite3_last_insert_rowid(db_);

    Statement rec(db_,
                  "INSERT INTO records(batch_id, id, run_id, method, metric, label, segment, direction, "
                  "access_technology, cross_traffic_mbps, num_clients, timestamp_us, value, unit, tag) "
                  "VALUES (?1, ?2, ?3, ?4, ?5, ?6, ?7, ?8, ?9, ?10, ?11, ?12, ?13, ?14, ?15)");
    for (const auto& r : batch.records) {
      const auto& d = r.descriptor;
      rec.bind(1, batch_id);
      rec.bind(2, r.id);
      rec.bind(3, r.run_id);
      rec.bind(4, std::string(core::to_string(d.method)));
      rec.bind(5, std::string(core::to_string(d.metric.type())));
      rec.bind(6, d.metric.label());
      rec.bind(7, std::string(core::to_string(d.segment)));
      rec.bind(8, std::string(core::to_string(d.direction)));
      rec.bind(9, std::string(core::to_string(d.access_technology)));
      rec.bind(10, d.cross_traffic_mbps);
      if (d.num_clients) {
        rec.bind(11, static_cast<std::int64_t>(*d.num_clients));
      } else {
        rec.bind_null(11);
      }
      rec.bind(12, r.timestamp.micros);
      rec.bind(13, r.value);
      rec.bind(14, r.unit);
      rec.bind(15, r.tag);
      rec.step();
      rec.reset();
    }
    exec(db_, "COMMIT;");
    return {batch_id, batch.records.size(), false};
  } catch (const StorageError& e) {
    sqlite3_exec(db_, "ROLLBACK;", nullptr, nullptr, nullptr);
    if (std::string_view(e.what()).find("UNIQUE constraint failed: records.id") != std::string_view::npos) {
      throw ValidationError("records", "a record id in this batch is already stored");
    }
    throw;
  }
}

std::vector<MeasurementRecord> Store::query(const QueryFilter& filter) const {
  std::string sql =
      "SELECT id, run_id, method, metric, label, segment, direction, access_technology, cross_traffic_mbps, "
      "num_clients, timestamp_us, value, unit, tag FROM records WHERE 1";
  std::vector<std::pair<int, std::function<void(Statement&, int)>>> binds;
  int n = 0;
  auto add_text = [&](const char* column, std::string value) {
    sql += std::string(" AND ") + column + " = ?" + std::to_string(++n);
    binds.emplace_back(n, [value = std::move(value)](Statement& s, int i) { s.bind(i, value); });
  };
  const auto& q = filter.descriptor;
  if (q.method) add_text("method", std::string(core::to_string(*q.method)));
  if (q.metric) add_text("metric", std::string(core::to_string(*q.metric)));
  if (q.label) add_text("label", *q.label);
  if (q.segment) add_text("segment", std::string(core::to_string(*q.segment)));
  if (q.direction) add_text("direction", std::string(core::to_string(*q.direction)));
  if (q.access_technology) add_text("access_technology", std::string(core::to_string(*q.access_technology)));
  if (q.cross_traffic_mbps) {
    sql += " AND cross_traffic_mbps = ?" + std::to_string(++n);
    binds.emplace_back(n, [v = *q.cross_traffic_mbps](Statement& s, int i) { s.bind(i, v); });
  }
  if (q.num_clients) {
    sql += " AND num_clients = ?" + std::to_string(++n);
    binds.emplace_back(n, [v = static_cast<std::int64_t>(*q.num_clients)](Statement& s, int i) { s.bind(i, v); });
  }
  if (filter.from_us) {
    sql += " AND timestamp_us >= ?" + std::to_string(++n);
    binds.emplace_back(n, [v = *filter.from_us](Statement& s, int i) { s.bind(i, v); });
  }
  if (filter.to_us) {
    sql += " AND timestamp_us <= ?" + std::to_string(++n);
    binds.emplace_back(n, [v = *filter.to_us](Statement& s, int i) { s.bind(i, v); });
  }
  if (filter.run_id) add_text("run_id", *filter.run_id);
  sql += " ORDER BY timestamp_us, seq";

  std::lock_guard lock(mutex_);
  Statement st(db_, sql);
  for (auto& [i, bind] : binds) bind(st, i);
  std::vector<MeasurementRecord> out;
  while (st.step()) {
    MeasurementRecord r;
    r.id = st.text(0);
    r.run_id = st.text(1);
    auto& d = r.descriptor;
    d.method = core::parse_method(st.text(2));
    const auto type = core::parse_metric_type(st.text(3));
    d.metric = type == core::MetricType::self_metric ? core::MetricKind::self_metric(st.text(4)) : core::MetricKind(type);
    d.segment = core::parse_segment(st.text(5));
    d.direction = core::parse_direction(st.text(6));
    d.access_technology = core::parse_access_technology(st.text(7));
    d.cross_traffic_mbps = st.real(8);
    if (!st.is_null(9)) d.num_clients = static_cast<std::uint32_t>(st.int64(9));
    r.timestamp.micros = st.int64(10);
    r.value = st.real(11);
    r.unit = st.text(12);
    r.tag = st.text(13);
    out.push_back(std::move(r));
  }
  return out;
}

std::size_t Store::record_count() const {
  std::lock_guard lock(mutex_);
  Statement st(db_, "SELECT COUNT(*) FROM records");
  st.step();
  return static_cast<std::size_t>(st.int64(0));
}

std::size_t Store::batch_count() const {
  std::lock_guard lock(mutex_);
  Statement st(db_, "SELECT COUNT(*) FROM batches");
  st.step();
  return static_cast<std::size_t>(st.int64(0));
}

std::vector<std::vector<MeasurementRecord>> group_by_descriptor(std::span<const MeasurementRecord> records) {
  std::vector<std::vector<MeasurementRecord>> groups;
  for (const auto& r : records) {
    auto it = std::find_if(groups.begin(), groups.end(),
                           [&](const auto& g) { return g.front().descriptor == r.descriptor; });
    if (it == groups.end()) {
      groups.push_back({r});
    } else {
      it->push_back(r);
    }
  }
  return groups;
}

std::string content_key(core::Method source, std::span<const MeasurementRecord> records) {
  std::uint64_t h = fnv1a64(core::to_string(source));
  for (const auto& r : records) h = fnv1a64(core::encode(r).dump(), h);
  char buf[32];
  std::snprintf(buf, sizeof buf, "c-%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::vector<std::string> StoreSink::submit(std::span<const MeasurementRecord> records, core::Method source) {
  std::vector<std::string> ids;
  for (auto& group : group_by_descriptor(records)) {
    Batch b;
    b.source = source;
    b.submitter = submitter_;
    b.idempotency_key = content_key(source, group);
    b.records = std::move(group);
    ids.push_back(std::to_string(store_.submit(b).batch_id));
  }
  return ids;
}

}  // namespace mecperf::aggregator
