#pragma once

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <set>
#include <shared_mutex>
#include <sstream>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include "groundkit/errors.hpp"
#include "groundkit/font.hpp"
#include "groundkit/geometry.hpp"
#include "groundkit/hash.hpp"
#include "groundkit/image.hpp"
#include "groundkit/methods.hpp"
#include "groundkit/model_client.hpp"
#include "groundkit/sample.hpp"

namespace groundkit {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Benchmarks

struct Benchmark {
  std::string name;
  std::vector<GroundingSample> samples;
};

struct LoadOptions {
  bool verify_images = true;
};

inline fs::path resolve_image(const fs::path& base_dir, const std::string& ref) {
  const fs::path p(ref);
  return p.is_absolute() ? p : base_dir / p;
}

namespace harness_detail {

inline std::string sample_label(const nlohmann::json& row, std::size_t line) {
  if (row.is_object() && row.contains("id") && row["id"].is_string()) return "sample '" + row["id"].get<std::string>() + "'";
  return "line " + std::to_string(line);
}

inline void check_sample_fields(const GroundingSample& s, const std::string& where) {
  if (s.id.empty()) throw FormatError(where + ": field 'id' is empty");
  if (s.image_ref.empty()) throw FormatError(where + ": field 'image' is empty");
  if (s.instruction.empty()) throw FormatError(where + ": field 'instruction' is empty");
  if (!s.gt.valid()) throw FormatError(where + ": field 'bbox' must satisfy x1 < x2 and y1 < y2");
}

}  // namespace harness_detail

// Reads a canonical JSON Lines manifest:
//   {"id","image","instruction","bbox":[x1,y1,x2,y2],"platform","source"}
// Image paths are relative to the manifest's directory.
inline std::vector<GroundingSample> load_benchmark(const fs::path& manifest, const LoadOptions& opts = {}) {
  std::ifstream in(manifest);
  if (!in) throw IoError("cannot open manifest " + manifest.string());
  std::vector<GroundingSample> out;
  std::set<std::string> seen;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json row;
    try {
      row = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(manifest.string() + ": line " + std::to_string(lineno) + ": invalid JSON: " + e.what());
    }
    const std::string where = manifest.string() + ": " + harness_detail::sample_label(row, lineno);
    auto str_field = [&](const char* key) {
      if (!row.contains(key) || !row[key].is_string()) throw FormatError(where + ": field '" + key + "' missing or not a string");
      return row[key].get<std::string>();
    };
    GroundingSample s;
    s.id = str_field("id");
    s.image_ref = str_field("image");
    s.instruction = str_field("instruction");
    if (!row.contains("bbox") || !row["bbox"].is_array() || row["bbox"].size() != 4) {
      throw FormatError(where + ": field 'bbox' must be [x1,y1,x2,y2]");
    }
    for (const auto& v : row["bbox"]) {
      if (!v.is_number()) throw FormatError(where + ": field 'bbox' must hold numbers");
    }
    s.gt = {row["bbox"][0].get<double>(), row["bbox"][1].get<double>(), row["bbox"][2].get<double>(),
            row["bbox"][3].get<double>()};
    try {
      s.platform = platform_from_string(str_field("platform"));
    } catch (const ArgumentError& e) {
      throw FormatError(where + ": field 'platform': " + e.what());
    }
    s.source = row.contains("source") && row["source"].is_string() ? row["source"].get<std::string>() : "";
    harness_detail::check_sample_fields(s, where);
    if (!seen.insert(s.id).second) throw FormatError(where + ": field 'id' is not unique");
    out.push_back(std::move(s));
  }

  if (opts.verify_images) {
    const fs::path base = manifest.parent_path();
    std::vector<std::string> missing;
    for (const auto& s : out) {
      if (!fs::exists(resolve_image(base, s.image_ref))) missing.push_back(s.image_ref);
    }
    if (!missing.empty()) {
      std::string msg = manifest.string() + ": " + std::to_string(missing.size()) + " missing image(s):";
      for (const auto& m : missing) msg += " " + m;
      throw IoError(msg);
    }
    for (const auto& s : out) {
      const RasterImage img = read_png(resolve_image(base, s.image_ref));
      if (s.gt.left < 0 || s.gt.top < 0 || s.gt.right > img.width() || s.gt.bottom > img.height()) {
        throw FormatError(manifest.string() + ": sample '" + s.id + "': field 'bbox' extends past the " +
                          std::to_string(img.width()) + "x" + std::to_string(img.height()) + " image");
      }
    }
  }
  return out;
}

inline void write_manifest(const fs::path& manifest, const std::vector<GroundingSample>& samples) {
  std::ofstream out(manifest, std::ios::trunc);
  if (!out) throw IoError("cannot write manifest " + manifest.string());
  for (const auto& s : samples) {
    out << nlohmann::json{{"id", s.id},
                          {"image", s.image_ref},
                          {"instruction", s.instruction},
                          {"bbox", {s.gt.left, s.gt.top, s.gt.right, s.gt.bottom}},
                          {"platform", to_string(s.platform)},
                          {"source", s.source}}
               .dump()
        << '\n';
  }
}

enum class BBoxConvention { kX1Y1X2Y2, kX1Y1WH };

// Field mapping from an upstream annotation file (JSON array or JSON Lines)
// into canonical samples. Field names differ between benchmark releases, so
// every name is configurable.
struct UpstreamAdapter {
  std::string source;
  std::string id_field = "id";  // generated as "<source>-<index>" when absent
  std::string image_field = "img_filename";
  std::string instruction_field = "instruction";
  std::string bbox_field = "bbox";
  std::string platform_field = "data_type";
  BBoxConvention convention = BBoxConvention::kX1Y1X2Y2;
  std::string image_prefix;  // prepended to every image reference

  static BBox to_canonical(const std::vector<double>& v, BBoxConvention c) {
    if (v.size() != 4) throw FormatError("bbox must have four numbers");
    if (c == BBoxConvention::kX1Y1WH) return {v[0], v[1], v[0] + v[2], v[1] + v[3]};
    return {v[0], v[1], v[2], v[3]};
  }

  static Platform guess_platform(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
    if (s.find("mobile") != std::string::npos || s == "ios" || s == "android") return Platform::kMobile;
    if (s.find("desktop") != std::string::npos || s == "windows" || s == "macos" || s == "linux") return Platform::kDesktop;
    if (s.find("web") != std::string::npos) return Platform::kWeb;
    return Platform::kOther;
  }

  std::vector<GroundingSample> convert(const std::string& text) const {
    std::vector<nlohmann::json> rows;
    const auto first = text.find_first_not_of(" \t\r\n");
    if (first != std::string::npos && text[first] == '[') {
      for (auto& r : nlohmann::json::parse(text)) rows.push_back(std::move(r));
    } else {
      std::istringstream in(text);
      std::string line;
      while (std::getline(in, line)) {
        if (line.find_first_not_of(" \t\r") != std::string::npos) rows.push_back(nlohmann::json::parse(line));
      }
    }
    std::vector<GroundingSample> out;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const auto& r = rows[i];
      const std::string where = source + " record " + std::to_string(i);
      auto need = [&](const std::string& key) -> const nlohmann::json& {
        if (!r.contains(key)) throw FormatError(where + ": field '" + key + "' missing");
        return r[key];
      };
      GroundingSample s;
      s.id = r.contains(id_field) ? (r[id_field].is_string() ? r[id_field].get<std::string>() : r[id_field].dump())
                                  : source + "-" + std::to_string(i);
      s.image_ref = image_prefix + need(image_field).get<std::string>();
      s.instruction = need(instruction_field).get<std::string>();
      s.gt = to_canonical(need(bbox_field).get<std::vector<double>>(), convention);
      s.platform = r.contains(platform_field) && r[platform_field].is_string()
                       ? guess_platform(r[platform_field].get<std::string>())
                       : Platform::kOther;
      s.source = source;
      harness_detail::check_sample_fields(s, where);
      out.push_back(std::move(s));
    }
    return out;
  }
};

// ---------------------------------------------------------------------------
// Scoring

struct EvalRecord {
  std::string sample_id;
  std::string method_digest;
  std::string model_name;
  bool hit = false;
  std::optional<Point> click;
  FailureKind failure = FailureKind::kNone;
  std::string failure_reason;
  std::string stage_trace_ref;
  double wall_time_s = 0.0;
};

struct PlatformCount {
  int total = 0;
  int hits = 0;
  double accuracy = 0.0;
};

struct EvalSummary {
  int total = 0;
  int hits = 0;
  int parse_failures = 0;
  int transport_failures = 0;
  int other_failures = 0;
  double accuracy = 0.0;  // percent
  std::map<std::string, PlatformCount> per_platform;
};

inline std::string format_accuracy(double pct) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", pct);
  return buf;
}

inline double percent(int hits, int total) { return total == 0 ? 0.0 : 100.0 * hits / total; }

// Micro-averaged click accuracy; failures count as misses. Requires exactly
// one record per sample.
inline EvalSummary score(const std::vector<EvalRecord>& records, const std::vector<GroundingSample>& samples) {
  if (records.size() != samples.size()) {
    throw ArgumentError("score: " + std::to_string(records.size()) + " records for " +
                        std::to_string(samples.size()) + " samples");
  }
  std::unordered_map<std::string, const GroundingSample*> by_id;
  for (const auto& s : samples) by_id[s.id] = &s;
  std::set<std::string> seen;
  EvalSummary sum;
  for (const auto& r : records) {
    const auto it = by_id.find(r.sample_id);
    if (it == by_id.end()) throw ArgumentError("score: record for unknown sample '" + r.sample_id + "'");
    if (!seen.insert(r.sample_id).second) throw ArgumentError("score: duplicate record for '" + r.sample_id + "'");
    const bool hit = r.hit && r.click && point_in_bbox(*r.click, it->second->gt);
    auto& pc = sum.per_platform[to_string(it->second->platform)];
    ++sum.total;
    ++pc.total;
    if (hit) {
      ++sum.hits;
      ++pc.hits;
    }
    if (r.failure == FailureKind::kParse) ++sum.parse_failures;
    else if (r.failure == FailureKind::kTransport) ++sum.transport_failures;
    else if (!r.click) ++sum.other_failures;
  }
  sum.accuracy = percent(sum.hits, sum.total);
  for (auto& [_, pc] : sum.per_platform) pc.accuracy = percent(pc.hits, pc.total);
  return sum;
}

inline nlohmann::json summary_to_json(const EvalSummary& s) {
  nlohmann::json per = nlohmann::json::object();
  for (const auto& [k, v] : s.per_platform) {
    per[k] = {{"total", v.total}, {"hits", v.hits}, {"accuracy", format_accuracy(v.accuracy)}};
  }
  return {{"total", s.total},
          {"hits", s.hits},
          {"accuracy", format_accuracy(s.accuracy)},
          {"parse_failures", s.parse_failures},
          {"transport_failures", s.transport_failures},
          {"other_failures", s.other_failures},
          {"per_platform", per}};
}

inline EvalSummary summary_from_json(const nlohmann::json& j) {
  EvalSummary s;
  s.total = j.at("total").get<int>();
  s.hits = j.at("hits").get<int>();
  s.parse_failures = j.value("parse_failures", 0);
  s.transport_failures = j.value("transport_failures", 0);
  s.other_failures = j.value("other_failures", 0);
  s.accuracy = percent(s.hits, s.total);
  for (const auto& [k, v] : j.at("per_platform").items()) {
    PlatformCount pc{v.at("total").get<int>(), v.at("hits").get<int>(), 0.0};
    pc.accuracy = percent(pc.hits, pc.total);
    s.per_platform[k] = pc;
  }
  return s;
}

// ---------------------------------------------------------------------------
// Response cache

// Content-addressed store of raw model answers, one JSON object per line in
// <dir>/responses.jsonl. Lookups run concurrently; appends are serialized.
class ResponseCache {
 public:
  explicit ResponseCache(fs::path dir) : dir_(std::move(dir)) {
    fs::create_directories(dir_);
    std::ifstream in(file());
    std::string line;
    while (std::getline(in, line)) {
      try {
        const auto j = nlohmann::json::parse(line);
        entries_[j.at("key").get<std::string>()] = j.at("raw_response").get<std::string>();
      } catch (const nlohmann::json::exception&) {
        // torn trailing line from an interrupted run
      }
    }
  }

  static std::string key_for(const std::string& model, const StageContext& ctx, const std::string& prompt_hash,
                             const std::vector<std::string>& image_digests) {
    Sha256 h;
    h.field(model).field(ctx.method_digest).field(ctx.sample_id).field(std::to_string(ctx.stage)).field(prompt_hash);
    for (const auto& d : image_digests) h.field(d);
    return h.hex();
  }

  std::optional<std::string> lookup(const std::string& key) const {
    std::shared_lock lock(mu_);
    const auto it = entries_.find(key);
    if (it == entries_.end()) return std::nullopt;
    return it->second;
  }

  void store(const std::string& key, const std::string& prompt_hash, const std::vector<std::string>& image_digests,
             const std::string& raw) {
    std::unique_lock lock(mu_);
    if (entries_.count(key)) return;
    const nlohmann::json row{{"key", key},
                             {"prompt_hash", prompt_hash},
                             {"image_digests", image_digests},
                             {"raw_response", raw},
                             {"ts", std::time(nullptr)}};
    std::ofstream out(file(), std::ios::app);
    out << row.dump() << '\n';
    out.flush();
    if (!out) throw IoError("cannot append to " + file().string());
    entries_[key] = raw;
  }

  std::size_t size() const {
    std::shared_lock lock(mu_);
    return entries_.size();
  }
  fs::path file() const { return dir_ / "responses.jsonl"; }

 private:
  fs::path dir_;
  mutable std::shared_mutex mu_;
  std::unordered_map<std::string, std::string> entries_;
};

// Serves answers from the cache and records fresh ones. Counts how many
// calls actually reached the wrapped model. A null cache only counts.
class CachedModel : public Model {
 public:
  CachedModel(std::shared_ptr<Model> inner, std::shared_ptr<ResponseCache> cache)
      : inner_(std::move(inner)), cache_(std::move(cache)) {}

  std::string name() const override { return inner_->name(); }

  Completion complete(const ChatRequest& req, const StageContext& ctx) override {
    if (!cache_) {
      Completion c = inner_->complete(req, ctx);
      ++new_calls_;
      return c;
    }
    std::vector<std::string> digests;
    for (const auto& img : req.images) digests.push_back(img.digest());
    const std::string prompt_hash = sha256_hex(req.prompt);
    const std::string key = ResponseCache::key_for(inner_->name(), ctx, prompt_hash, digests);
    if (auto hit = cache_->lookup(key)) {
      ++hits_;
      Completion c{*hit};
      c.from_cache = true;
      return c;
    }
    Completion c = inner_->complete(req, ctx);
    ++new_calls_;
    cache_->store(key, prompt_hash, digests, c.text);
    return c;
  }

  long new_calls() const { return new_calls_.load(); }
  long cache_hits() const { return hits_.load(); }

 private:
  std::shared_ptr<Model> inner_;
  std::shared_ptr<ResponseCache> cache_;
  std::atomic<long> new_calls_{0};
  std::atomic<long> hits_{0};
};

// ---------------------------------------------------------------------------
// Matrix runs

struct MatrixSpec {
  std::vector<Benchmark> benchmarks;
  std::vector<fs::path> image_roots;  // one per benchmark: base dir for image refs
  std::vector<MethodConfig> methods;
  std::vector<std::shared_ptr<Model>> models;
};

struct RunOptions {
  int concurrency = 1;
  std::optional<fs::path> cache_dir;
  std::optional<fs::path> trace_dir;  // stage traces written here when set
  CallOptions call;
};

struct CellResult {
  std::string benchmark;
  MethodConfig method;
  std::string model_name;
  std::vector<EvalRecord> records;  // sample order of the benchmark
  EvalSummary summary;
};

struct MatrixResults {
  std::vector<CellResult> cells;
  long new_calls = 0;
  long cache_hits = 0;
};

namespace harness_detail {

inline std::string safe_name(std::string s) {
  for (char& c : s) {
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '-' && c != '_' && c != '.') c = '_';
  }
  return s;
}

}  // namespace harness_detail

// Runs every benchmark x method x model cell. Samples are distributed over a
// pool of `concurrency` workers; each sample's image is decoded once. Sample
// failures become recorded misses and never abort the run.
inline MatrixResults run_matrix(const MatrixSpec& spec, const RunOptions& opts) {
  if (opts.concurrency < 1) throw ArgumentError("concurrency must be >= 1");
  if (spec.image_roots.size() != spec.benchmarks.size()) throw ArgumentError("one image root per benchmark required");
  for (const auto& m : spec.methods) m.validate();

  std::shared_ptr<ResponseCache> cache;
  if (opts.cache_dir) cache = std::make_shared<ResponseCache>(*opts.cache_dir);
  std::vector<std::shared_ptr<Model>> models;
  std::vector<std::shared_ptr<CachedModel>> cached;
  for (const auto& m : spec.models) {
    cached.push_back(std::make_shared<CachedModel>(m, cache));
    models.push_back(cached.back());
  }

  MatrixResults res;
  // cell index = ((b * methods) + m) * models + k
  const std::size_t n_methods = spec.methods.size();
  const std::size_t n_models = models.size();
  for (const auto& b : spec.benchmarks) {
    for (const auto& m : spec.methods) {
      for (const auto& model : models) {
        CellResult cell{b.name, m, model->name(), std::vector<EvalRecord>(b.samples.size()), {}};
        res.cells.push_back(std::move(cell));
      }
    }
  }

  struct Task {
    std::size_t bench;
    std::size_t sample;
  };
  std::vector<Task> tasks;
  for (std::size_t b = 0; b < spec.benchmarks.size(); ++b) {
    for (std::size_t s = 0; s < spec.benchmarks[b].samples.size(); ++s) tasks.push_back({b, s});
  }

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t t = next++; t < tasks.size(); t = next++) {
      const auto [bi, si] = tasks[t];
      const Benchmark& bench = spec.benchmarks[bi];
      const GroundingSample& sample = bench.samples[si];
      std::optional<RasterImage> image;
      std::string load_error;
      try {
        image = read_png(resolve_image(spec.image_roots[bi], sample.image_ref));
      } catch (const Error& e) {
        load_error = e.what();
      }
      for (std::size_t mi = 0; mi < n_methods; ++mi) {
        for (std::size_t ki = 0; ki < n_models; ++ki) {
          const MethodConfig& cfg = spec.methods[mi];
          Model& model = *models[ki];
          EvalRecord rec;
          rec.sample_id = sample.id;
          rec.method_digest = method_digest(cfg);
          rec.model_name = model.name();
          const auto start = std::chrono::steady_clock::now();
          if (!image) {
            rec.failure_reason = "image load failed: " + load_error;
          } else {
            try {
              const Prediction pred = run_method(sample, *image, model, cfg, opts.call);
              rec.click = pred.click;
              rec.failure = pred.failure;
              rec.failure_reason = pred.failure_reason;
              rec.hit = pred.click && point_in_bbox(*pred.click, sample.gt);
              if (opts.trace_dir) {
                const fs::path rel = fs::path("traces") / harness_detail::safe_name(bench.name) / rec.method_digest /
                                     harness_detail::safe_name(rec.model_name) /
                                     (harness_detail::safe_name(sample.id) + ".json");
                fs::create_directories((*opts.trace_dir / rel).parent_path());
                std::ofstream(*opts.trace_dir / rel) << prediction_to_json(pred).dump(2) << '\n';
                rec.stage_trace_ref = rel.generic_string();
              }
            } catch (const TransportError& e) {
              rec.failure = FailureKind::kTransport;
              rec.failure_reason = e.what();
            } catch (const RequestError& e) {
              rec.failure = FailureKind::kTransport;
              rec.failure_reason = e.what();
            } catch (const Error& e) {
              rec.failure_reason = e.what();
            }
          }
          rec.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
          const std::size_t cell = (bi * n_methods + mi) * n_models + ki;
          res.cells[cell].records[si] = std::move(rec);
        }
      }
    }
  };

  std::vector<std::thread> pool;
  const int n_threads = std::min<int>(opts.concurrency, std::max<int>(1, static_cast<int>(tasks.size())));
  for (int i = 1; i < n_threads; ++i) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();

  for (auto& cell : res.cells) {
    const auto& bench = *std::find_if(spec.benchmarks.begin(), spec.benchmarks.end(),
                                      [&](const Benchmark& b) { return b.name == cell.benchmark; });
    cell.summary = score(cell.records, bench.samples);
  }
  for (const auto& c : cached) {
    res.new_calls += c->new_calls();
    res.cache_hits += c->cache_hits();
  }
  return res;
}

// Deterministic per-cell summaries (no timings, no timestamps).
inline nlohmann::json summaries_to_json(const MatrixResults& res) {
  nlohmann::json cells = nlohmann::json::array();
  for (const auto& c : res.cells) {
    cells.push_back({{"benchmark", c.benchmark},
                     {"method", c.method.to_json()},
                     {"method_label", c.method.label()},
                     {"method_digest", method_digest(c.method)},
                     {"model", c.model_name},
                     {"summary", summary_to_json(c.summary)}});
  }
  return {{"cells", cells}};
}

inline nlohmann::json records_to_json(const CellResult& c) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& r : c.records) {
    nlohmann::json j{{"sample_id", r.sample_id},
                     {"method_digest", r.method_digest},
                     {"model", r.model_name},
                     {"hit", r.hit},
                     {"failure", to_string(r.failure)},
                     {"wall_time_s", r.wall_time_s}};
    j["click"] = r.click ? nlohmann::json::array({r.click->x, r.click->y}) : nlohmann::json();
    if (!r.failure_reason.empty()) j["failure_reason"] = r.failure_reason;
    if (!r.stage_trace_ref.empty()) j["stage_trace"] = r.stage_trace_ref;
    out.push_back(std::move(j));
  }
  return out;
}

// Writes summaries.json plus one records JSONL per cell under `dir`.
inline void write_results(const fs::path& dir, const MatrixResults& res) {
  fs::create_directories(dir / "records");
  std::ofstream(dir / "summaries.json") << summaries_to_json(res).dump(2) << '\n';
  for (const auto& c : res.cells) {
    const auto name = harness_detail::safe_name(c.benchmark) + "__" + method_digest(c.method) + "__" +
                      harness_detail::safe_name(c.model_name) + ".jsonl";
    std::ofstream out(dir / "records" / name);
    for (const auto& r : records_to_json(c)) out << r.dump() << '\n';
  }
}

// Rebuilds the summary side of a results tree (records are not needed for
// reports).
inline MatrixResults read_results(const fs::path& dir) {
  std::ifstream in(dir / "summaries.json");
  if (!in) throw IoError("no summaries.json in " + dir.string());
  const auto j = nlohmann::json::parse(in);
  MatrixResults res;
  for (const auto& c : j.at("cells")) {
    CellResult cell;
    cell.benchmark = c.at("benchmark").get<std::string>();
    cell.method = MethodConfig::from_json(c.at("method"));
    cell.model_name = c.at("model").get<std::string>();
    cell.summary = summary_from_json(c.at("summary"));
    res.cells.push_back(std::move(cell));
  }
  return res;
}

// ---------------------------------------------------------------------------
// Reports

enum class ReportFormat { kMarkdown, kCsv };

namespace harness_detail {

inline std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

template <typename T>
std::vector<T> unique_in_order(const std::vector<T>& v) {
  std::vector<T> out;
  for (const auto& x : v) {
    if (std::find(out.begin(), out.end(), x) == out.end()) out.push_back(x);
  }
  return out;
}

}  // namespace harness_detail

// Per-benchmark method x model accuracy tables. In each model column the
// best value is bold and the second best underlined.
inline std::string report_markdown(const MatrixResults& res) {
  if (res.cells.empty()) throw ArgumentError("report: empty results");
  std::vector<std::string> benches;
  for (const auto& c : res.cells) benches.push_back(c.benchmark);
  benches = harness_detail::unique_in_order(benches);
  std::ostringstream md;
  for (const auto& b : benches) {
    std::vector<std::string> methods;
    std::vector<std::string> models;
    std::map<std::pair<std::string, std::string>, const CellResult*> at;
    std::map<std::string, std::string> labels;
    for (const auto& c : res.cells) {
      if (c.benchmark != b) continue;
      const std::string d = method_digest(c.method);
      methods.push_back(d);
      labels[d] = c.method.label();
      models.push_back(c.model_name);
      at[{d, c.model_name}] = &c;
    }
    methods = harness_detail::unique_in_order(methods);
    models = harness_detail::unique_in_order(models);

    // rank per column on the 2-decimal values that are displayed
    std::map<std::string, std::pair<std::string, std::string>> best;  // model -> (first, second)
    for (const auto& m : models) {
      std::vector<double> vals;
      for (const auto& d : methods) {
        if (auto it = at.find({d, m}); it != at.end()) vals.push_back(std::stod(format_accuracy(it->second->summary.accuracy)));
      }
      std::sort(vals.begin(), vals.end(), std::greater<>());
      vals.erase(std::unique(vals.begin(), vals.end()), vals.end());
      best[m] = {vals.size() > 0 ? format_accuracy(vals[0]) : "", vals.size() > 1 ? format_accuracy(vals[1]) : ""};
    }

    md << "### " << b << "\n\n| Method |";
    for (const auto& m : models) md << ' ' << m << " |";
    md << "\n|---|";
    for (std::size_t i = 0; i < models.size(); ++i) md << "---:|";
    md << '\n';
    for (const auto& d : methods) {
      md << "| " << labels[d] << " |";
      for (const auto& m : models) {
        const auto it = at.find({d, m});
        if (it == at.end()) {
          md << " -- |";
          continue;
        }
        const std::string v = format_accuracy(it->second->summary.accuracy);
        if (models.size() > 0 && methods.size() > 1 && v == best[m].first) md << " **" << v << "** |";
        else if (methods.size() > 2 && v == best[m].second) md << " <u>" << v << "</u> |";
        else md << ' ' << v << " |";
      }
      md << '\n';
    }
    md << '\n';
  }
  return md.str();
}

// One row per matrix cell.
inline std::string report_cells_csv(const MatrixResults& res) {
  std::ostringstream csv;
  csv << "benchmark,method,method_digest,params,model,total,hits,parse_failures,transport_failures,accuracy\n";
  for (const auto& c : res.cells) {
    csv << harness_detail::csv_escape(c.benchmark) << ',' << to_string(c.method.kind) << ',' << method_digest(c.method)
        << ',' << harness_detail::csv_escape(c.method.to_json().dump()) << ',' << harness_detail::csv_escape(c.model_name)
        << ',' << c.summary.total << ',' << c.summary.hits << ',' << c.summary.parse_failures << ','
        << c.summary.transport_failures << ',' << format_accuracy(c.summary.accuracy) << '\n';
  }
  return csv.str();
}

// One CSV per method kind whose columns are that kind's parameters, i.e.
// the axes an ablation varies.
inline std::map<std::string, std::string> report_ablation_csvs(const MatrixResults& res) {
  std::map<std::string, std::vector<const CellResult*>> by_kind;
  for (const auto& c : res.cells) by_kind[to_string(c.method.kind)].push_back(&c);
  std::map<std::string, std::string> out;
  for (const auto& [kind, cells] : by_kind) {
    std::vector<std::string> params;
    const auto first = cells.front()->method.to_json();
    for (auto it = first.begin(); it != first.end(); ++it) {
      if (it.key() != "kind") params.push_back(it.key());
    }
    std::ostringstream csv;
    csv << "benchmark,model";
    for (const auto& p : params) csv << ',' << p;
    csv << ",total,hits,accuracy\n";
    for (const CellResult* c : cells) {
      const auto j = c->method.to_json();
      csv << harness_detail::csv_escape(c->benchmark) << ',' << harness_detail::csv_escape(c->model_name);
      for (const auto& p : params) {
        csv << ',' << harness_detail::csv_escape(j[p].is_string() ? j[p].get<std::string>() : j[p].dump());
      }
      csv << ',' << c->summary.total << ',' << c->summary.hits << ',' << format_accuracy(c->summary.accuracy) << '\n';
    }
    out["ablation_" + kind + ".csv"] = csv.str();
  }
  return out;
}

// File name -> contents for the requested format.
inline std::map<std::string, std::string> report(const MatrixResults& res, ReportFormat format) {
  if (res.cells.empty()) throw ArgumentError("report: empty results");
  if (format == ReportFormat::kMarkdown) return {{"report.md", report_markdown(res)}};
  auto out = report_ablation_csvs(res);
  out["cells.csv"] = report_cells_csv(res);
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic benchmark

struct SynthOptions {
  std::uint64_t seed = 1;
  int n_samples = 64;
  int width = 1024;
  int height = 768;
  int grid_rows = 8;  // mark-grid grid used for the target-size guarantee
  int grid_cols = 8;
  int crop_short_side = 512;
  int min_target_cells = 1;     // full fine-stage cells inside every target
  double center_fraction = 0.25;  // share of targets that contain the image center
};

struct SynthBenchmark {
  Benchmark benchmark;
  std::vector<RasterImage> images;
  int center_targets = 0;
};

namespace synth_detail {

// Portable draws from mt19937_64 (distribution objects are
// implementation-defined).
struct Rng {
  std::mt19937_64 gen;
  int uniform(int lo, int hi) {
    return lo + static_cast<int>(gen() % static_cast<std::uint64_t>(hi - lo + 1));
  }
};

inline const std::vector<std::string>& words() {
  static const std::vector<std::string> kWords{
      "SAVE",  "OPEN",   "CLOSE", "PRINT", "SEARCH", "SHARE", "DELETE", "EDIT",  "HELP",  "SEND",
      "CANCEL", "APPLY", "UNDO",  "REDO",  "LOGIN",  "MENU",  "HOME",   "BACK",  "NEXT",  "PLAY",
      "PAUSE", "STOP",   "ZOOM",  "COPY",  "PASTE",  "CUT",   "EXPORT", "IMPORT", "SYNC", "MAIL"};
  return kWords;
}

inline Rgb darker(Rgb c) {
  return {static_cast<std::uint8_t>(c.r * 3 / 5), static_cast<std::uint8_t>(c.g * 3 / 5),
          static_cast<std::uint8_t>(c.b * 3 / 5)};
}

inline void draw_widget(RasterImage& img, const BBox& b, Rgb fill, const std::string& label) {
  const int l = static_cast<int>(b.left), t = static_cast<int>(b.top);
  const int r = static_cast<int>(b.right), bt = static_cast<int>(b.bottom);
  img.fill_rect(l, t, r, bt, darker(fill));
  img.fill_rect(l + 1, t + 1, r - 1, bt - 1, fill);
  const int fh = 10;
  const TextExtent ext = text_extent(label, fh);
  draw_text(img, l + (r - l - ext.width) / 2, t + (bt - t - ext.height) / 2, label, fh, colors::kBlack, std::nullopt);
}

// Number of fine-stage grid cells lying fully inside `gt`, after the coarse
// pass selects the cells covering it and the crop is magnified.
inline int full_fine_cells(const BBox& gt, const SynthOptions& o) {
  const GridSpec coarse(o.grid_rows, o.grid_cols, o.width, o.height);
  const BBox b0 = extremity_bbox(coarse, extremity_ids_for(coarse, gt));
  const int cw = static_cast<int>(b0.width());
  const int ch = static_cast<int>(b0.height());
  const double scale = static_cast<double>(o.crop_short_side) / std::min(cw, ch);
  const int out_w = static_cast<int>(std::lround(cw * scale));
  const int out_h = static_cast<int>(std::lround(ch * scale));
  if (out_w < o.grid_cols || out_h < o.grid_rows) return 0;
  const GridSpec fine(o.grid_rows, o.grid_cols, out_w, out_h);
  const Transform t{b0.left, b0.top, scale};
  const BBox g = transform_to_crop(gt, t);
  int cols = 0;
  int rows = 0;
  for (int j = 0; j < fine.cols(); ++j) cols += (fine.x_boundary(j) >= g.left && fine.x_boundary(j + 1) <= g.right);
  for (int i = 0; i < fine.rows(); ++i) rows += (fine.y_boundary(i) >= g.top && fine.y_boundary(i + 1) <= g.bottom);
  return cols * rows;
}

}  // namespace synth_detail

// Deterministic synthetic screenshots: flat background, labeled rectangular
// widgets, one target per image. Exactly round(center_fraction * n) targets
// contain the image center (width/2, height/2); the rest do not.
inline SynthBenchmark synth_benchmark(const SynthOptions& o) {
  if (o.n_samples < 1) throw ArgumentError("synth: n_samples must be >= 1");
  if (o.center_fraction < 0 || o.center_fraction > 1) throw ArgumentError("synth: center_fraction outside [0, 1]");
  constexpr int kMinW = 48, kMaxW = 240, kMinH = 32, kMaxH = 128;
  if (o.width < 2 * kMaxW || o.height < 2 * kMaxH) {
    throw ArgumentError("synth: image " + std::to_string(o.width) + "x" + std::to_string(o.height) +
                        " is too small for the widget size range");
  }
  const GridSpec coarse_check(o.grid_rows, o.grid_cols, o.width, o.height);
  (void)coarse_check;

  synth_detail::Rng rng{std::mt19937_64(o.seed)};
  const int n_center = static_cast<int>(std::lround(o.center_fraction * o.n_samples));
  std::vector<bool> is_center(static_cast<std::size_t>(o.n_samples), false);
  for (int i = 0; i < n_center; ++i) is_center[static_cast<std::size_t>(i)] = true;
  for (int i = o.n_samples - 1; i > 0; --i) std::swap(is_center[static_cast<std::size_t>(i)], is_center[static_cast<std::size_t>(rng.uniform(0, i))]);

  const Point center{o.width / 2.0, o.height / 2.0};
  static const Rgb kBackgrounds[] = {{245, 245, 245}, {236, 240, 246}, {250, 248, 240}, {40, 44, 52}, {230, 236, 230}};
  static const Rgb kWidgets[] = {{120, 170, 230}, {240, 190, 90}, {150, 210, 150}, {220, 130, 130}, {190, 160, 220}};
  static const Platform kPlatforms[] = {Platform::kMobile, Platform::kDesktop, Platform::kWeb};

  SynthBenchmark out;
  out.benchmark.name = "synthetic";
  out.center_targets = n_center;
  for (int i = 0; i < o.n_samples; ++i) {
    const bool want_center = is_center[static_cast<std::size_t>(i)];
    BBox gt{};
    bool ok = false;
    for (int attempt = 0; attempt < 10000 && !ok; ++attempt) {
      const int w = rng.uniform(kMinW, kMaxW);
      const int h = rng.uniform(kMinH, kMaxH);
      int x;
      int y;
      if (want_center) {
        const int cx = o.width / 2;
        const int cy = o.height / 2;
        x = rng.uniform(cx - w + 1, cx - 1);
        y = rng.uniform(cy - h + 1, cy - 1);
      } else {
        x = rng.uniform(0, o.width - w);
        y = rng.uniform(0, o.height - h);
      }
      gt = {static_cast<double>(x), static_cast<double>(y), static_cast<double>(x + w), static_cast<double>(y + h)};
      ok = point_in_bbox(center, gt) == want_center && synth_detail::full_fine_cells(gt, o) >= o.min_target_cells;
    }
    if (!ok) throw ArgumentError("synth: cannot place a target with " + std::to_string(o.min_target_cells) + " full fine cells");

    RasterImage img(o.width, o.height, kBackgrounds[rng.uniform(0, 4)]);
    std::vector<std::string> pool = synth_detail::words();
    for (int k = static_cast<int>(pool.size()) - 1; k > 0; --k) std::swap(pool[static_cast<std::size_t>(k)], pool[static_cast<std::size_t>(rng.uniform(0, k))]);
    const std::string target_label = pool[0];
    const int n_distractors = rng.uniform(2, 5);
    std::vector<BBox> placed{gt};
    for (int d = 0; d < n_distractors; ++d) {
      for (int attempt = 0; attempt < 200; ++attempt) {
        const int w = rng.uniform(kMinW, kMaxW);
        const int h = rng.uniform(kMinH, kMaxH);
        const int x = rng.uniform(0, o.width - w);
        const int y = rng.uniform(0, o.height - h);
        const BBox b{static_cast<double>(x), static_cast<double>(y), static_cast<double>(x + w), static_cast<double>(y + h)};
        const bool overlaps = std::any_of(placed.begin(), placed.end(), [&](const BBox& p) {
          return b.left < p.right + 8 && p.left < b.right + 8 && b.top < p.bottom + 8 && p.top < b.bottom + 8;
        });
        if (overlaps) continue;
        placed.push_back(b);
        synth_detail::draw_widget(img, b, kWidgets[rng.uniform(0, 4)], pool[static_cast<std::size_t>(d + 1)]);
        break;
      }
    }
    synth_detail::draw_widget(img, gt, kWidgets[rng.uniform(0, 4)], target_label);

    char id[32];
    std::snprintf(id, sizeof id, "synth-%04d", i);
    GroundingSample s;
    s.id = id;
    s.image_ref = std::string("images/") + id + ".png";
    std::string lower = target_label;
    std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
    s.instruction = "click the " + lower + " button";
    s.gt = gt;
    s.platform = kPlatforms[rng.uniform(0, 2)];
    s.source = "synthetic";
    out.benchmark.samples.push_back(std::move(s));
    out.images.push_back(std::move(img));
  }
  return out;
}

// Writes images/<id>.png and manifest.jsonl under `dir`; returns the manifest path.
inline fs::path write_synth_benchmark(const fs::path& dir, const SynthBenchmark& sb) {
  fs::create_directories(dir / "images");
  for (std::size_t i = 0; i < sb.images.size(); ++i) {
    write_png(dir / sb.benchmark.samples[i].image_ref, sb.images[i]);
  }
  const fs::path manifest = dir / "manifest.jsonl";
  write_manifest(manifest, sb.benchmark.samples);
  return manifest;
}

}  // namespace groundkit
