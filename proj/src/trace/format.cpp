#include "mecperf/trace/format.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace mecperf::trace {

using nlohmann::json;

namespace {

std::uint32_t fnv1a32(std::string_view s) {
  std::uint32_t h = 2166136261u;
  for (char c : s) {
    h ^= static_cast<std::uint8_t>(c);
    h *= 16777619u;
  }
  return h;
}

void write_atomically(const std::filesystem::path& target, const std::string& content) {
  auto tmp = target;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) {
      out.close();
      std::filesystem::remove(tmp);
      throw std::runtime_error("write failed for " + tmp.string());
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, target, ec);
  if (ec) {
    std::filesystem::remove(tmp);
    throw std::runtime_error("cannot rename into " + target.string() + ": " + ec.message());
  }
}

}  // namespace

std::string encode_manifest(const std::vector<ManifestEntry>& entries) {
  json traces = json::array();
  for (const auto& e : entries) {
    traces.push_back({{"file", e.file},
                      {"run_id", e.run_id},
                      {"records", e.records},
                      {"descriptor", core::encode(e.descriptor)}});
  }
  json root{{"format", kManifestFormat}, {"traces", traces}};
  return root.dump(2) + "\n";
}

std::vector<ManifestEntry> decode_manifest(std::string_view text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw TraceFormatError(std::string("manifest is not valid JSON: ") + e.what());
  }
  if (!root.is_object() || root.value("format", "") != kManifestFormat || !root.contains("traces") ||
      !root["traces"].is_array()) {
    throw TraceFormatError(std::string("manifest must be an object with format '") + kManifestFormat +
                           "' and a 'traces' array");
  }
  std::vector<ManifestEntry> out;
  std::size_t i = 0;
  for (const auto& t : root["traces"]) {
    const std::string path = "traces[" + std::to_string(i++) + "]";
    try {
      ManifestEntry e;
      e.file = t.at("file").get<std::string>();
      e.run_id = t.value("run_id", "");
      e.records = t.value("records", std::size_t{0});
      e.descriptor = core::decode_descriptor(t.at("descriptor"), path + ".descriptor");
      out.push_back(std::move(e));
    } catch (const std::exception& e) {
      throw TraceFormatError("manifest " + path + ": " + e.what());
    }
  }
  return out;
}

std::string trace_file_name(const std::string& run_id) {
  std::string name;
  bool replaced = run_id.empty();
  for (char c : run_id) {
    const bool safe = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '-' ||
                      c == '_' || c == '.';
    name += safe ? c : '_';
    replaced |= !safe;
  }
  if (name.empty() || name.front() == '.') {
    name.insert(name.begin(), 'r');
    replaced = true;
  }
  if (replaced) {
    char suffix[16];
    std::snprintf(suffix, sizeof suffix, "-%08x", fnv1a32(run_id));
    name += suffix;
  }
  return name + ".ndjson";
}

TraceBundle build_bundle(std::vector<core::MeasurementRecord> records) {
  std::stable_sort(records.begin(), records.end(), [](const auto& a, const auto& b) {
    if (a.run_id != b.run_id) return a.run_id < b.run_id;
    if (a.timestamp != b.timestamp) return a.timestamp < b.timestamp;
    return a.id < b.id;
  });
  TraceBundle bundle;
  std::size_t i = 0;
  while (i < records.size()) {
    std::size_t j = i;
    while (j < records.size() && records[j].run_id == records[i].run_id) {
      if (!(records[j].descriptor == records[i].descriptor)) {
        throw TraceFormatError("run '" + records[i].run_id + "' mixes descriptors");
      }
      ++j;
    }
    ManifestEntry entry;
    entry.run_id = records[i].run_id;
    entry.file = trace_file_name(entry.run_id);
    entry.records = j - i;
    entry.descriptor = records[i].descriptor;
    if (bundle.files.count(entry.file) != 0) {
      throw TraceFormatError("file name collision for run '" + entry.run_id + "'");
    }
    bundle.files[entry.file] = core::encode_ndjson({records.begin() + static_cast<std::ptrdiff_t>(i),
                                                    records.begin() + static_cast<std::ptrdiff_t>(j)});
    bundle.manifest.push_back(std::move(entry));
    i = j;
  }
  return bundle;
}

std::vector<std::filesystem::path> write_bundle(const TraceBundle& bundle, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::vector<std::filesystem::path> written;
  try {
    for (const auto& entry : bundle.manifest) {
      const auto target = dir / entry.file;
      write_atomically(target, bundle.files.at(entry.file));
      written.push_back(target);
    }
    const auto manifest = dir / kManifestName;
    write_atomically(manifest, encode_manifest(bundle.manifest));
    written.push_back(manifest);
  } catch (...) {
    for (const auto& p : written) {
      std::error_code ec;
      std::filesystem::remove(p, ec);
    }
    throw;
  }
  return written;
}

std::vector<core::MeasurementRecord> import_csv(std::string_view csv, const core::TraceDescriptor& descriptor,
                                                const std::string& run_id, const std::string& unit) {
  std::vector<core::MeasurementRecord> out;
  std::istringstream in{std::string(csv)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw TraceFormatError("line " + std::to_string(line_no) + ": expected 'timestamp,value'");
    double ts = 0;
    double value = 0;
    try {
      std::size_t used = 0;
      ts = std::stod(line.substr(0, comma), &used);
      value = std::stod(line.substr(comma + 1));
    } catch (const std::exception&) {
      if (line_no == 1) continue;  // header
      throw TraceFormatError("line " + std::to_string(line_no) + ": not numeric");
    }
    core::MeasurementRecord r;
    r.descriptor = descriptor;
    r.run_id = run_id;
    r.id = run_id + "-" + std::to_string(out.size());
    r.timestamp.micros = std::llround(ts * 1e6);
    r.value = value;
    r.unit = unit;
    r = core::normalize_units(std::move(r));
    r.validate();
    out.push_back(std::move(r));
  }
  return out;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace mecperf::trace
