#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "groundkit.hpp"

namespace gk = groundkit;
namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitIo = 3;
constexpr int kExitTransport = 4;
constexpr int kExitParse = 5;

// Method flags shared by overlay, ground and run. Each one overrides the
// value carried by the --method spec.
struct MethodFlags {
  std::string method = "direct";
  std::optional<int> rows, cols, interval, zoom, short_side;
  std::optional<std::string> sides, labels, center;
  std::optional<double> margin;
  bool no_grid = false;

  void add_to(CLI::App* app, bool multi = false) {
    if (!multi) {
      app->add_option("--method", method, "Method kind or spec, e.g. mark-grid:rows=5,cols=5,zoom=2");
    }
    app->add_option("--rows", rows, "Grid / dot-matrix rows")->check(CLI::PositiveNumber);
    app->add_option("--cols", cols, "Grid / dot-matrix columns")->check(CLI::PositiveNumber);
    app->add_option("--interval", interval, "Axis tick interval in pixels");
    app->add_option("--sides", sides, "Axis sides: all or e.g. top+left");
    app->add_option("--labels", labels, "Scaffold labels: none, indices or coords");
    app->add_flag("--no-grid", no_grid, "Axis-grid without interior grid lines");
    app->add_option("--zoom", zoom, "Mark-grid refinement stages (0-2)");
    app->add_option("--short-side", short_side, "Mark-grid crop short side in pixels");
    app->add_option("--margin", margin, "Mark-grid crop margin in pixels");
    app->add_option("--center", center, "Mark-grid click rule: box or centroid");
  }

  gk::MethodConfig resolve(const std::string& spec) const {
    gk::MethodConfig c = gk::parse_method_spec(spec);
    if (rows) c.rows = *rows;
    if (cols) c.cols = *cols;
    if (interval) c.axis_interval = *interval;
    if (sides) c.axis_sides = gk::axis_sides_from_string(*sides);
    if (labels) c.label_mode = gk::label_mode_from_string(*labels);
    if (no_grid) c.draw_grid = false;
    if (zoom) c.zoom_levels = *zoom;
    if (short_side) c.crop_short_side = *short_side;
    if (margin) c.crop_margin = *margin;
    if (center) {
      if (*center != "box" && *center != "centroid") throw gk::ArgumentError("--center must be box or centroid");
      c.center_mode = *center == "centroid" ? gk::CenterMode::kCellCentroid : gk::CenterMode::kExtremityBox;
    }
    c.validate();
    return c;
  }
};

struct EndpointFlags {
  std::string base_url;
  std::string api_key_env = "GROUND_API_KEY";
  double rate_limit = 2.0;
  double timeout = 120.0;
  int retries = 3;

  void add_to(CLI::App* app) {
    app->add_option("--base-url", base_url, "OpenAI-compatible base URL (default: $GROUND_BASE_URL)");
    app->add_option("--api-key-env", api_key_env, "Environment variable holding the API key; empty for none");
    app->add_option("--rate-limit", rate_limit, "Requests per second");
    app->add_option("--timeout", timeout, "Per-request timeout in seconds");
    app->add_option("--retries", retries, "Retries on 429/5xx/connection errors");
  }

  gk::ModelEndpoint endpoint(const std::string& model_name) const {
    gk::ModelEndpoint ep;
    ep.base_url = base_url;
    if (ep.base_url.empty()) {
      if (const char* env = std::getenv("GROUND_BASE_URL")) ep.base_url = env;
    }
    ep.model_name = model_name;
    ep.auth_env = api_key_env;
    ep.rate_limit = rate_limit;
    ep.request_timeout_s = timeout;
    ep.max_retries = retries;
    return ep;
  }
};

gk::BBox parse_box(const std::string& s, const std::string& flag) {
  std::vector<double> v;
  std::istringstream in(s);
  std::string part;
  while (std::getline(in, part, ',')) {
    try {
      v.push_back(std::stod(part));
    } catch (const std::logic_error&) {
      throw gk::ArgumentError(flag + ": '" + part + "' is not a number");
    }
  }
  if (v.size() != 4) throw gk::ArgumentError(flag + " expects x1,y1,x2,y2");
  const gk::BBox b{v[0], v[1], v[2], v[3]};
  if (!b.valid()) throw gk::ArgumentError(flag + " needs x1 < x2 and y1 < y2");
  return b;
}

// mock:perfect, mock:center, mock:fixed:TEXT, http:MODEL_NAME
std::shared_ptr<gk::Model> make_model(const std::string& spec, const EndpointFlags& ep) {
  if (spec == "mock:perfect") return std::make_shared<gk::PerfectReaderModel>();
  if (spec == "mock:center") return std::make_shared<gk::CenterResponderModel>();
  if (spec.rfind("mock:fixed:", 0) == 0) return std::make_shared<gk::ConstantResponderModel>(spec.substr(11));
  if (spec.rfind("http:", 0) == 0) return std::make_shared<gk::HttpModel>(ep.endpoint(spec.substr(5)));
  throw gk::ArgumentError("unknown model '" + spec + "' (mock:perfect, mock:center, mock:fixed:TEXT, http:NAME)");
}

int cmd_overlay(const std::string& image, const MethodFlags& mf, const std::string& out, const std::string& plan_out) {
  const gk::MethodConfig cfg = mf.resolve(mf.method);
  const gk::RasterImage img = gk::read_png(image);
  const gk::Rendered r = gk::render_method_overlay(img, cfg);
  gk::write_png(out, r.image);
  if (!plan_out.empty()) {
    std::ofstream po(plan_out);
    if (!po) throw gk::IoError("cannot write " + plan_out);
    po << nlohmann::json(r.plan).dump(2) << '\n';
  }
  std::cout << "wrote " << out << " (" << r.plan.lines.size() << " lines, " << r.plan.dots.size() << " dots, "
            << r.plan.texts.size() << " labels)\n";
  return kExitOk;
}

int cmd_ground(const std::string& image, const std::string& instruction, const MethodFlags& mf,
               const std::string& mock, const std::string& gt, const std::string& model_name,
               const EndpointFlags& ep, const std::string& trace_out) {
  const gk::MethodConfig cfg = mf.resolve(mf.method);
  std::shared_ptr<gk::Model> model;
  if (mock == "perfect") {
    if (gt.empty()) throw gk::ArgumentError("--mock perfect needs --gt x1,y1,x2,y2");
    model = std::make_shared<gk::PerfectReaderModel>();
  } else if (mock.rfind("fixed:", 0) == 0) {
    model = std::make_shared<gk::ConstantResponderModel>(mock.substr(6));
  } else if (!mock.empty()) {
    throw gk::ArgumentError("--mock must be perfect or fixed:TEXT");
  } else {
    if (model_name.empty()) throw gk::ArgumentError("--model-name or --mock is required");
    model = std::make_shared<gk::HttpModel>(ep.endpoint(model_name));
  }

  const gk::RasterImage img = gk::read_png(image);
  gk::GroundingSample sample;
  sample.id = fs::path(image).stem().string();
  sample.image_ref = image;
  sample.instruction = instruction;
  if (!gt.empty()) sample.gt = parse_box(gt, "--gt");

  const gk::Prediction pred = gk::run_method(sample, img, *model, cfg);
  std::ofstream tr(trace_out);
  if (!tr) throw gk::IoError("cannot write " + trace_out);
  tr << gk::prediction_to_json(pred).dump(2) << '\n';
  tr.close();
  if (!pred.click) {
    std::cerr << "error: no click: " << pred.failure_reason << "\ntrace: " << trace_out << '\n';
    return kExitParse;
  }
  std::cout << gk::format_number(pred.click->x) << ' ' << gk::format_number(pred.click->y) << '\n';
  if (pred.degraded) std::cerr << "warning: a refinement stage failed; click comes from an earlier stage\n";
  std::cout << "trace: " << trace_out << '\n';
  return kExitOk;
}

int cmd_pointing_game(const std::string& dump, const std::string& bbox, const std::string& interp) {
  if (interp != "nearest" && interp != "bilinear") throw gk::ArgumentError("--interp must be nearest or bilinear");
  const gk::BBox gt = parse_box(bbox, "--bbox");
  const gk::AttentionDump d = gk::load_attention_dump(dump);
  const auto res =
      gk::pointing_game_score(d, gt, interp == "bilinear" ? gk::Interp::kBilinear : gk::Interp::kNearest);
  std::cout << "hit: " << (res.hit ? "true" : "false") << "\n\nlayer  argmax_x  argmax_y  hit\n";
  for (std::size_t l = 0; l < res.per_layer.size(); ++l) {
    std::printf("%5zu  %8.0f  %8.0f  %s\n", l + 1, res.per_layer_points[l].x, res.per_layer_points[l].y,
                res.per_layer[l] ? "yes" : "no");
  }
  std::fflush(stdout);
  return kExitOk;
}

int cmd_run(const std::vector<std::string>& manifests, const std::vector<std::string>& methods, const MethodFlags& mf,
            const std::vector<std::string>& models, const EndpointFlags& ep, const std::string& cache,
            int concurrency, const std::string& out) {
  gk::MatrixSpec spec;
  for (const auto& m : manifests) {
    gk::Benchmark b;
    b.name = fs::path(m).parent_path().filename().string();
    if (b.name.empty()) b.name = fs::path(m).stem().string();
    b.samples = gk::load_benchmark(m);
    spec.benchmarks.push_back(std::move(b));
    spec.image_roots.push_back(fs::path(m).parent_path());
  }
  for (const auto& m : methods) spec.methods.push_back(mf.resolve(m));
  for (const auto& m : models) spec.models.push_back(make_model(m, ep));

  gk::RunOptions opts;
  opts.concurrency = concurrency;
  if (!cache.empty()) opts.cache_dir = fs::path(cache);
  opts.trace_dir = fs::path(out);
  const gk::MatrixResults res = gk::run_matrix(spec, opts);
  gk::write_results(out, res);

  for (const auto& c : res.cells) {
    std::cerr << c.benchmark << " | " << c.method.label() << " | " << c.model_name << ": "
              << gk::format_accuracy(c.summary.accuracy) << " (" << c.summary.hits << "/" << c.summary.total << ")\n";
  }
  std::cerr << res.new_calls << " new calls, " << res.cache_hits << " cache hits\n";
  std::cout << "results: " << out << '\n';
  return kExitOk;
}

int cmd_report(const std::string& results, const std::string& format, const std::string& out) {
  if (format != "md" && format != "csv") throw gk::ArgumentError("--format must be md or csv");
  const auto docs = gk::report(gk::read_results(results),
                               format == "md" ? gk::ReportFormat::kMarkdown : gk::ReportFormat::kCsv);
  if (out.empty()) {
    for (const auto& [name, body] : docs) {
      if (docs.size() > 1) std::cout << "# " << name << '\n';
      std::cout << body;
    }
    return kExitOk;
  }
  fs::create_directories(out);
  for (const auto& [name, body] : docs) {
    std::ofstream f(fs::path(out) / name);
    if (!f) throw gk::IoError("cannot write " + (fs::path(out) / name).string());
    f << body;
    std::cout << "wrote " << (fs::path(out) / name).string() << '\n';
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"GUI grounding toolkit: visual scaffolds, grounding controllers and benchmark harness"};
  app.set_config("--config", "", "TOML key = value file; command-line flags take precedence");
  app.require_subcommand(1);

  std::string image, out, plan_out, instruction, mock, gt, model_name, trace_out = "trace.json";
  std::string dump, bbox, interp = "nearest", cache, results, format = "md";
  std::vector<std::string> manifests, methods, models;
  int concurrency = 1;
  MethodFlags mf;
  EndpointFlags ep;

  auto* overlay = app.add_subcommand("overlay", "Render a method's overlay onto a screenshot");
  overlay->add_option("--image", image, "Input PNG")->required();
  overlay->add_option("--out", out, "Output PNG")->required();
  overlay->add_option("--plan-out", plan_out, "Write the render plan as JSON");
  mf.add_to(overlay);

  auto* ground = app.add_subcommand("ground", "Ground one instruction on one screenshot");
  ground->add_option("--image", image, "Input PNG")->required();
  ground->add_option("--instruction", instruction, "Natural-language instruction")->required();
  ground->add_option("--mock", mock, "perfect (needs --gt) or fixed:TEXT");
  ground->add_option("--gt", gt, "Ground-truth box x1,y1,x2,y2");
  ground->add_option("--model-name", model_name, "Model served at --base-url");
  ground->add_option("--trace-out", trace_out, "Stage trace JSON path");
  mf.add_to(ground);
  ep.add_to(ground);

  auto* pg = app.add_subcommand("pointing-game", "Score an attention dump against a box");
  pg->add_option("--dump", dump, "Dump directory (meta.json + layer_NNN.bin)")->required();
  pg->add_option("--bbox", bbox, "Target box x1,y1,x2,y2")->required();
  pg->add_option("--interp", interp, "nearest or bilinear");

  auto* run = app.add_subcommand("run", "Run a benchmark x method x model matrix");
  run->add_option("--manifest", manifests, "Benchmark manifest (JSONL); repeatable")->required();
  run->add_option("--method", methods, "Method spec; repeatable")->required();
  run->add_option("--model", models, "mock:perfect, mock:center, mock:fixed:TEXT or http:NAME; repeatable")
      ->required();
  run->add_option("--cache", cache, "Response cache directory");
  run->add_option("--concurrency", concurrency, "Worker threads")->check(CLI::PositiveNumber);
  run->add_option("--out", out, "Results directory")->required();
  mf.add_to(run, true);
  ep.add_to(run);

  auto* rep = app.add_subcommand("report", "Tabulate a results directory");
  rep->add_option("--results", results, "Results directory written by run")->required();
  rep->add_option("--format", format, "md or csv");
  rep->add_option("--out", out, "Output directory (default: stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*overlay) return cmd_overlay(image, mf, out, plan_out);
    if (*ground) return cmd_ground(image, instruction, mf, mock, gt, model_name, ep, trace_out);
    if (*pg) return cmd_pointing_game(dump, bbox, interp);
    if (*run) return cmd_run(manifests, methods, mf, models, ep, cache, concurrency, out);
    if (*rep) return cmd_report(results, format, out);
  } catch (const gk::ParseError& e) {
    std::cerr << "parse error: " << e.what() << '\n';
    return kExitParse;
  } catch (const gk::TransportError& e) {
    std::cerr << "transport error: " << e.what() << '\n';
    return kExitTransport;
  } catch (const gk::RequestError& e) {
    std::cerr << "request error: " << e.what() << '\n';
    return kExitTransport;
  } catch (const gk::IoError& e) {
    std::cerr << "io error: " << e.what() << '\n';
    return kExitIo;
  } catch (const gk::FormatError& e) {
    std::cerr << "format error: " << e.what() << '\n';
    return kExitIo;
  } catch (const gk::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "io error: " << e.what() << '\n';
    return kExitIo;
  }
  return kExitUsage;
}
