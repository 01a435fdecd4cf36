// Acceptance run: one PASS/FAIL/SKIP line per criterion, non-zero exit on
// any FAIL.

#include <unistd.h>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "groundkit.hpp"
#include "oracles.hpp"
#include "parser_corpus.hpp"

namespace gk = groundkit;
namespace fs = std::filesystem;

namespace {

enum class Verdict { kPass, kFail, kSkip };

struct Outcome {
  Verdict verdict = Verdict::kPass;
  std::string detail;
};

Outcome fail(std::string why) { return {Verdict::kFail, std::move(why)}; }

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

struct Scratch {
  fs::path path;
  Scratch() : path(fs::temp_directory_path() / ("groundkit_acceptance_" + std::to_string(::getpid()))) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~Scratch() { fs::remove_all(path); }
};

Outcome p1_grid_geometry() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937 rng(1);
  std::uniform_int_distribution<int> dim(50, 4096), cnt(2, 16);
  for (int trial = 0; trial < 1000; ++trial) {
    const int w = dim(rng), h = dim(rng), rows = cnt(rng), cols = cnt(rng);
    const gk::GridSpec g(rows, cols, w, h);
    for (int j = 0; j <= cols; ++j) {
      if (g.x_boundary(j) != oracles::boundary(j, w, cols)) return fail("x boundary mismatch");
    }
    for (int i = 0; i <= rows; ++i) {
      if (g.y_boundary(i) != oracles::boundary(i, h, rows)) return fail("y boundary mismatch");
    }
    long long area = 0;
    std::set<std::pair<int, int>> seen;
    for (int id = 1; id <= rows * cols; ++id) {
      const gk::BBox b = gk::cell_id_to_bounds(g, id);
      area += static_cast<long long>(b.width()) * static_cast<long long>(b.height());
      if (!seen.insert({g.row_of(id), g.col_of(id)}).second || g.id_of(g.row_of(id), g.col_of(id)) != id) {
        return fail("id bijection broken at " + std::to_string(w) + "x" + std::to_string(h));
      }
      const gk::Point c = gk::cell_center(g, id);
      if (!(c.x > b.left && c.x < b.right && c.y > b.top && c.y < b.bottom)) return fail("center outside cell");
      if (g.col_of(id) + 1 < cols && b.right != gk::cell_id_to_bounds(g, id + 1).left) return fail("gap between columns");
      if (g.row_of(id) + 1 < rows && b.bottom != gk::cell_id_to_bounds(g, id + cols).top) return fail("gap between rows");
    }
    if (area != static_cast<long long>(w) * h) return fail("cells do not tile the image");
  }
  const double s = seconds_since(t0);
  if (s >= 5.0) return fail("took " + fmt("%.2f", s) + " s");
  return {Verdict::kPass, "1000 cases, " + fmt("%.2f", s) + " s"};
}

Outcome p2_mark_grid_arithmetic() {
  const gk::Point c1 = gk::cell_center(gk::GridSpec(8, 8, 800, 600), 1);
  if (!(c1 == gk::Point{50.0, 37.5})) return fail("cell 1 center is not (50, 37.5)");
  const gk::Cropped crop = gk::crop_and_resize(gk::RasterImage(800, 600), {100, 100, 300, 200});
  if (crop.image.width() != 1024 || crop.image.height() != 512 || crop.transform.scale != 5.12) {
    return fail("200x100 crop gave " + std::to_string(crop.image.width()) + "x" +
                std::to_string(crop.image.height()));
  }
  std::mt19937 rng(2);
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int cw = std::uniform_int_distribution<int>(8, 512)(rng);
    const int ch = std::uniform_int_distribution<int>(8, 512)(rng);
    const int x0 = std::uniform_int_distribution<int>(0, 1920 - cw)(rng);
    const int y0 = std::uniform_int_distribution<int>(0, 1080 - ch)(rng);
    const gk::BBox box{double(x0), double(y0), double(x0 + cw), double(y0 + ch)};
    const gk::Transform t{box.left, box.top, 512.0 / std::min(cw, ch)};
    const gk::Point p{std::uniform_real_distribution<double>(box.left, box.right)(rng),
                      std::uniform_real_distribution<double>(box.top, box.bottom)(rng)};
    // a crop-pixel answer maps back to the original point it names
    const gk::Point q = gk::transform_to_crop(p, t);
    const gk::Point back = gk::transform_to_original(gk::Point{std::round(q.x), std::round(q.y)}, t);
    worst = std::max({worst, std::abs(back.x - p.x), std::abs(back.y - p.y)});
  }
  if (worst > 0.5) return fail("round trip error " + fmt("%.3f", worst) + " px");
  return {Verdict::kPass, "cell 1 center (50, 37.5); 200x100 -> 1024x512 at 5.12; round trip max " +
                              fmt("%.3f", worst) + " px"};
}

Outcome p3_pointing_game() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937 rng(3);
  int hits = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    gk::AttentionDump d = oracles::random_dump(rng, trial % 3 == 0);
    std::uniform_real_distribution<double> ux(0, d.image_w), uy(0, d.image_h);
    double x1 = ux(rng), x2 = ux(rng), y1 = uy(rng), y2 = uy(rng);
    if (x1 > x2) std::swap(x1, x2);
    if (y1 > y2) std::swap(y1, y2);
    const gk::BBox gt{x1, y1, x2 + 1, y2 + 1};
    const bool hit = gk::pointing_game_score(d, gt).hit;
    if (hit != oracles::reference_hit(d, gt)) return fail("pipeline differs from reference on dump " + std::to_string(trial));
    hits += hit;
    // appending a layer never loses a hit
    d.layers.emplace_back(d.layers[0].rbegin(), d.layers[0].rend());
    ++d.layer_count;
    if (hit && !gk::pointing_game_score(d, gt).hit) return fail("appending a layer lost a hit");
  }
  for (int trial = 0; trial < 1000; ++trial) {
    const int gh = std::uniform_int_distribution<int>(1, 12)(rng);
    const int gw = std::uniform_int_distribution<int>(1, 12)(rng);
    const int oh = std::uniform_int_distribution<int>(gh, 300)(rng);
    const int ow = std::uniform_int_distribution<int>(gw, 300)(rng);
    const int hot = std::uniform_int_distribution<int>(0, gh * gw - 1)(rng);
    std::vector<double> v(static_cast<std::size_t>(gh * gw), 0.0);
    v[static_cast<std::size_t>(hot)] = 1.0;
    const gk::Point p = gk::argmax_point(gk::reshape_resize(v, gh, gw, oh, ow, gk::Interp::kNearest));
    const int r = hot / gw, c = hot % gw;
    if (!(p.x * gw >= c * ow && p.x * gw < (c + 1) * ow && p.y * gh >= r * oh && p.y * gh < (r + 1) * oh)) {
      return fail("nearest argmax outside the hot cell footprint");
    }
  }
  const double s = seconds_since(t0);
  if (s >= 30.0) return fail("took " + fmt("%.2f", s) + " s");
  return {Verdict::kPass, "1000 dumps match reference (" + std::to_string(hits) + " hits), " + fmt("%.2f", s) + " s"};
}

struct SynthRun {
  gk::SynthBenchmark sb;
  gk::MatrixSpec spec;
};

SynthRun synth_spec(const fs::path& dir, int n, std::vector<gk::MethodConfig> methods,
                    std::vector<std::shared_ptr<gk::Model>> models) {
  gk::SynthOptions o;
  o.n_samples = n;
  SynthRun r{gk::synth_benchmark(o), {}};
  const fs::path manifest = gk::write_synth_benchmark(dir / "synthetic", r.sb);
  r.spec.benchmarks.push_back({"synthetic", gk::load_benchmark(manifest)});
  r.spec.image_roots.push_back(manifest.parent_path());
  r.spec.methods = std::move(methods);
  r.spec.models = std::move(models);
  return r;
}

Outcome p4_end_to_end(const fs::path& scratch) {
  SynthRun r = synth_spec(scratch / "p4", 64,
                          {gk::MethodConfig::defaults(gk::MethodKind::kMarkGrid),
                           gk::MethodConfig::defaults(gk::MethodKind::kDirect)},
                          {std::make_shared<gk::PerfectReaderModel>(), std::make_shared<gk::CenterResponderModel>()});
  gk::RunOptions opts;
  opts.concurrency = 4;
  const gk::MatrixResults res = gk::run_matrix(r.spec, opts);
  // cells: (mark-grid, perfect), (mark-grid, center), (direct, perfect), (direct, center)
  const std::string mark = gk::format_accuracy(res.cells[0].summary.accuracy);
  const std::string direct = gk::format_accuracy(res.cells[3].summary.accuracy);
  const std::string expected = gk::format_accuracy(gk::percent(r.sb.center_targets, 64));
  if (mark != "100.00") return fail("mark-grid with perfect reader: " + mark);
  if (res.cells[3].summary.hits != r.sb.center_targets || direct != expected) {
    return fail("direct with center responder: " + direct + ", constructed " + expected);
  }
  return {Verdict::kPass, "mark-grid/perfect " + mark + ", direct/center " + direct + " (constructed " + expected + ")"};
}

Outcome p5_scorer_and_cache(const fs::path& scratch) {
  std::mt19937 rng(5);
  for (int trial = 0; trial < 500; ++trial) {
    const int n = std::uniform_int_distribution<int>(1, 80)(rng);
    std::vector<gk::GroundingSample> samples(static_cast<std::size_t>(n));
    std::vector<gk::EvalRecord> records(static_cast<std::size_t>(n));
    int expect = 0;
    for (int i = 0; i < n; ++i) {
      auto& s = samples[static_cast<std::size_t>(i)];
      s.id = std::to_string(i);
      s.gt = {10, 10, 20, 20};
      auto& rec = records[static_cast<std::size_t>(i)];
      rec.sample_id = s.id;
      switch (std::uniform_int_distribution<int>(0, 3)(rng)) {
        case 0: rec.click = gk::Point{15, 15}, rec.hit = true; break;
        case 1: rec.click = gk::Point{25, 15}; break;
        case 2: rec.failure = gk::FailureKind::kParse; break;
        default: rec.failure = gk::FailureKind::kTransport; break;
      }
      expect += rec.click && rec.click->x >= 10 && rec.click->x <= 20 && rec.click->y >= 10 && rec.click->y <= 20;
    }
    std::shuffle(records.begin(), records.end(), rng);
    const gk::EvalSummary sum = gk::score(records, samples);
    if (sum.hits != expect || sum.total != n || sum.accuracy != 100.0 * expect / n) return fail("score differs from count");
  }

  SynthRun r = synth_spec(scratch / "p5", 16,
                          {gk::parse_method_spec("direct"), gk::parse_method_spec("axis-grid"),
                           gk::parse_method_spec("mark-grid")},
                          {std::make_shared<gk::PerfectReaderModel>()});
  gk::RunOptions opts;
  opts.cache_dir = scratch / "p5" / "cache";
  opts.concurrency = 3;
  const gk::MatrixResults first = gk::run_matrix(r.spec, opts);
  gk::write_results(scratch / "p5" / "a", first);
  const gk::MatrixResults second = gk::run_matrix(r.spec, opts);
  gk::write_results(scratch / "p5" / "b", second);
  if (second.new_calls != 0) return fail("rerun made " + std::to_string(second.new_calls) + " new calls");
  if (slurp(scratch / "p5" / "a" / "summaries.json") != slurp(scratch / "p5" / "b" / "summaries.json")) {
    return fail("summaries differ between runs");
  }
  return {Verdict::kPass, "500 random record sets exact; rerun 0 new calls, " + std::to_string(second.cache_hits) +
                              " cache hits; summaries identical"};
}

Outcome p6_parser_corpus() {
  int checked = 0;
  for (const auto& c : corpus::point_answers()) {
    try {
      const gk::Point p = gk::parse_point(c.raw, corpus::kWidth, corpus::kHeight);
      if (!c.expect || std::abs(p.x - c.expect->x) > 1e-9 || std::abs(p.y - c.expect->y) > 1e-9) {
        return fail("point answer misparsed: " + c.raw);
      }
    } catch (const gk::ParseError&) {
      if (c.expect) return fail("point answer rejected: " + c.raw);
    }
    ++checked;
  }
  for (const auto& c : corpus::grid_id_answers()) {
    try {
      const gk::ExtremityIds ids = gk::parse_grid_ids(c.raw, corpus::kMaxId);
      if (!c.expect || !(ids == *c.expect)) return fail("grid answer misparsed: " + c.raw);
    } catch (const gk::ParseError&) {
      if (c.expect) return fail("grid answer rejected: " + c.raw);
    }
    ++checked;
  }
  if (checked < 30) return fail("corpus has only " + std::to_string(checked) + " strings");
  gk::GroundingSample s;
  s.id = "refusal";
  s.instruction = "open settings";
  s.gt = {10, 10, 50, 50};
  const gk::RasterImage img(400, 300);
  for (const auto& refusal : corpus::refusals()) {
    for (const char* spec : {"direct", "grid-augmented", "scaffold-prompting", "coordinate-scaffold", "axis-grid",
                             "mark-grid"}) {
      gk::ConstantResponderModel model(refusal);
      const gk::Prediction p = gk::run_method(s, img, model, gk::parse_method_spec(spec));
      if (p.click || p.failure != gk::FailureKind::kParse) return fail(std::string(spec) + " did not record a miss");
    }
  }
  return {Verdict::kPass, std::to_string(checked) + " strings; refusals recorded as misses"};
}

// Needs a hosted endpoint and a local benchmark subset.
Outcome p7_hosted_ordering(const fs::path& scratch) {
  std::vector<std::string> missing;
  for (const char* v : {"GROUND_BASE_URL", "GROUND_API_KEY", "GROUND_P7_MANIFEST", "GROUND_P7_MODEL"}) {
    const char* val = std::getenv(v);
    if (!val || !*val) missing.push_back(v);
  }
  if (!missing.empty()) {
    std::string why = "set";
    for (const auto& m : missing) why += " " + m;
    return {Verdict::kSkip, why};
  }
  const fs::path manifest = std::getenv("GROUND_P7_MANIFEST");
  gk::Benchmark b{"hosted", gk::load_benchmark(manifest)};
  if (b.samples.size() > 50) b.samples.resize(50);
  gk::ModelEndpoint ep;
  ep.base_url = std::getenv("GROUND_BASE_URL");
  ep.model_name = std::getenv("GROUND_P7_MODEL");
  gk::MatrixSpec spec;
  spec.benchmarks.push_back(b);
  spec.image_roots.push_back(manifest.parent_path());
  spec.methods = {gk::parse_method_spec("direct"), gk::parse_method_spec("axis-grid"),
                  gk::parse_method_spec("mark-grid")};
  spec.models = {std::make_shared<gk::HttpModel>(ep)};
  gk::RunOptions opts;
  opts.concurrency = 4;
  opts.cache_dir = scratch / "p7-cache";
  const gk::MatrixResults res = gk::run_matrix(spec, opts);
  const double direct = res.cells[0].summary.accuracy;
  const double axis = res.cells[1].summary.accuracy;
  const double mark = res.cells[2].summary.accuracy;
  const std::string detail = "mark-grid " + gk::format_accuracy(mark) + ", axis-grid " + gk::format_accuracy(axis) +
                             ", direct " + gk::format_accuracy(direct) + " on " + std::to_string(b.samples.size()) +
                             " samples";
  if (mark >= axis && axis >= direct) return {Verdict::kPass, detail};
  return fail(detail);
}

}  // namespace

int main() {
  Scratch scratch;
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"P1 grid geometry", p1_grid_geometry},
      {"P2 mark-grid arithmetic", p2_mark_grid_arithmetic},
      {"P3 pointing game oracle", p3_pointing_game},
      {"P4 end-to-end mock benchmark", [&] { return p4_end_to_end(scratch.path); }},
      {"P5 scorer and cache", [&] { return p5_scorer_and_cache(scratch.path); }},
      {"P6 parser corpus", p6_parser_corpus},
      {"P7 hosted method ordering", [&] { return p7_hosted_ordering(scratch.path); }},
  };
  int failures = 0;
  for (const auto& [name, check] : criteria) {
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o = fail(std::string("exception: ") + e.what());
    }
    const char* tag = o.verdict == Verdict::kPass ? "PASS" : o.verdict == Verdict::kFail ? "FAIL" : "SKIP";
    failures += o.verdict == Verdict::kFail;
    std::cout << tag << ' ' << name << ": " << o.detail << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
