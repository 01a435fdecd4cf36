#pragma once

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <optional>
#include <regex>
#include <sstream>
#include <string>
#include <vector>

#include "groundkit/errors.hpp"
#include "groundkit/geometry.hpp"
#include "groundkit/hash.hpp"
#include "groundkit/image.hpp"
#include "groundkit/model_client.hpp"
#include "groundkit/overlay.hpp"
#include "groundkit/sample.hpp"

namespace groundkit {

enum class MethodKind { kDirect, kGridAugmented, kScaffoldPrompting, kCoordinateScaffold, kAxisGrid, kMarkGrid };

inline std::string to_string(MethodKind k) {
  switch (k) {
    case MethodKind::kDirect: return "direct";
    case MethodKind::kGridAugmented: return "grid-augmented";
    case MethodKind::kScaffoldPrompting: return "scaffold-prompting";
    case MethodKind::kCoordinateScaffold: return "coordinate-scaffold";
    case MethodKind::kAxisGrid: return "axis-grid";
    case MethodKind::kMarkGrid: return "mark-grid";
  }
  return "direct";
}

inline MethodKind method_kind_from_string(std::string s) {
  std::replace(s.begin(), s.end(), '_', '-');
  for (MethodKind k : {MethodKind::kDirect, MethodKind::kGridAugmented, MethodKind::kScaffoldPrompting,
                       MethodKind::kCoordinateScaffold, MethodKind::kAxisGrid, MethodKind::kMarkGrid}) {
    if (to_string(k) == s) return k;
  }
  throw ArgumentError("unknown method '" + s + "'");
}

inline std::string to_string(LabelMode m) {
  switch (m) {
    case LabelMode::kNone: return "none";
    case LabelMode::kIndices: return "indices";
    case LabelMode::kCoords: return "coords";
  }
  return "none";
}

inline LabelMode label_mode_from_string(const std::string& s) {
  if (s == "none") return LabelMode::kNone;
  if (s == "indices") return LabelMode::kIndices;
  if (s == "coords") return LabelMode::kCoords;
  throw ArgumentError("unknown label mode '" + s + "' (expected none, indices or coords)");
}

// "all", or any '+'/','-separated combination of top, bottom, left, right.
inline unsigned axis_sides_from_string(const std::string& s) {
  if (s == "all") return kAxisAll;
  unsigned out = 0;
  std::string token;
  std::istringstream in(s);
  while (std::getline(in, token, '+')) {
    std::istringstream parts(token);
    std::string side;
    while (std::getline(parts, side, ',')) {
      if (side == "top") out |= kAxisTop;
      else if (side == "bottom") out |= kAxisBottom;
      else if (side == "left") out |= kAxisLeft;
      else if (side == "right") out |= kAxisRight;
      else throw ArgumentError("unknown axis side '" + side + "'");
    }
  }
  if (out == 0) throw ArgumentError("axis sides must name at least one side");
  return out;
}

inline std::string axis_sides_to_string(unsigned sides) {
  if ((sides & kAxisAll) == kAxisAll) return "all";
  std::string out;
  auto add = [&](unsigned bit, const char* name) {
    if (sides & bit) out += (out.empty() ? "" : "+") + std::string(name);
  };
  add(kAxisTop, "top");
  add(kAxisBottom, "bottom");
  add(kAxisLeft, "left");
  add(kAxisRight, "right");
  return out;
}

enum class CenterMode { kExtremityBox, kCellCentroid };

struct MethodConfig {
  MethodKind kind = MethodKind::kDirect;
  int rows = 0;  // grid / dot-matrix / mark-grid rows
  int cols = 0;
  LabelMode label_mode = LabelMode::kNone;
  int axis_interval = 100;
  unsigned axis_sides = kAxisAll;
  bool draw_grid = true;
  int zoom_levels = 1;
  int crop_short_side = 512;
  double crop_margin = 0.0;
  CenterMode center_mode = CenterMode::kExtremityBox;

  static MethodConfig defaults(MethodKind kind) {
    MethodConfig c;
    c.kind = kind;
    switch (kind) {
      case MethodKind::kDirect: break;
      case MethodKind::kGridAugmented: c.rows = c.cols = 9; break;
      case MethodKind::kScaffoldPrompting:
        c.rows = c.cols = 6;
        c.label_mode = LabelMode::kIndices;
        break;
      case MethodKind::kCoordinateScaffold:
        c.rows = c.cols = 6;
        c.label_mode = LabelMode::kCoords;
        break;
      case MethodKind::kAxisGrid: break;
      case MethodKind::kMarkGrid: c.rows = c.cols = 8; break;
    }
    return c;
  }

  bool single_pass() const { return kind != MethodKind::kMarkGrid; }

  void validate() const {
    const bool gridded = kind == MethodKind::kGridAugmented || kind == MethodKind::kScaffoldPrompting ||
                         kind == MethodKind::kCoordinateScaffold || kind == MethodKind::kMarkGrid;
    if (gridded && (rows < 2 || cols < 2)) throw ArgumentError(to_string(kind) + ": rows and cols must be >= 2");
    if (kind == MethodKind::kAxisGrid) {
      if (axis_interval < 10) throw ArgumentError("axis-grid: interval must be >= 10");
      if ((axis_sides & kAxisAll) == 0) throw ArgumentError("axis-grid: at least one side required");
    }
    if (kind == MethodKind::kMarkGrid) {
      if (zoom_levels < 0 || zoom_levels > 2) throw ArgumentError("mark-grid: zoom_levels must be 0, 1 or 2");
      if (crop_short_side < 64) throw ArgumentError("mark-grid: crop_short_side must be >= 64");
      if (crop_margin < 0) throw ArgumentError("mark-grid: crop_margin must be >= 0");
    }
  }

  // Only the parameters that affect this kind, so unrelated fields never
  // perturb the digest.
  nlohmann::json to_json() const {
    nlohmann::json j{{"kind", to_string(kind)}};
    switch (kind) {
      case MethodKind::kDirect: break;
      case MethodKind::kGridAugmented:
        j["rows"] = rows;
        j["cols"] = cols;
        break;
      case MethodKind::kScaffoldPrompting:
      case MethodKind::kCoordinateScaffold:
        j["rows"] = rows;
        j["cols"] = cols;
        j["label_mode"] = to_string(label_mode);
        break;
      case MethodKind::kAxisGrid:
        j["interval"] = axis_interval;
        j["sides"] = axis_sides_to_string(axis_sides);
        j["draw_grid"] = draw_grid;
        break;
      case MethodKind::kMarkGrid:
        j["rows"] = rows;
        j["cols"] = cols;
        j["zoom_levels"] = zoom_levels;
        j["crop_short_side"] = crop_short_side;
        j["crop_margin"] = crop_margin;
        j["center_mode"] = center_mode == CenterMode::kExtremityBox ? "extremity-box" : "cell-centroid";
        break;
    }
    return j;
  }

  static MethodConfig from_json(const nlohmann::json& j) {
    MethodConfig c = defaults(method_kind_from_string(j.at("kind").get<std::string>()));
    if (j.contains("rows")) c.rows = j["rows"].get<int>();
    if (j.contains("cols")) c.cols = j["cols"].get<int>();
    if (j.contains("label_mode")) c.label_mode = label_mode_from_string(j["label_mode"].get<std::string>());
    if (j.contains("interval")) c.axis_interval = j["interval"].get<int>();
    if (j.contains("sides")) c.axis_sides = axis_sides_from_string(j["sides"].get<std::string>());
    if (j.contains("draw_grid")) c.draw_grid = j["draw_grid"].get<bool>();
    if (j.contains("zoom_levels")) c.zoom_levels = j["zoom_levels"].get<int>();
    if (j.contains("crop_short_side")) c.crop_short_side = j["crop_short_side"].get<int>();
    if (j.contains("crop_margin")) c.crop_margin = j["crop_margin"].get<double>();
    if (j.contains("center_mode")) {
      c.center_mode = j["center_mode"] == "cell-centroid" ? CenterMode::kCellCentroid : CenterMode::kExtremityBox;
    }
    c.validate();
    return c;
  }

  // Short display name, with parameters for non-default configurations.
  std::string label() const {
    const MethodConfig d = defaults(kind);
    std::string base;
    switch (kind) {
      case MethodKind::kDirect: base = "Direct Prediction"; break;
      case MethodKind::kGridAugmented: base = "Grid-Augmented Vision"; break;
      case MethodKind::kScaffoldPrompting: base = "Scaffold Prompting"; break;
      case MethodKind::kCoordinateScaffold: base = "Coordinate Scaffold"; break;
      case MethodKind::kAxisGrid: base = "Axis-Grid Scaffold"; break;
      case MethodKind::kMarkGrid: base = "Mark-Grid Scaffold"; break;
    }
    const nlohmann::json mine = to_json();
    const nlohmann::json def = d.to_json();
    std::string params;
    for (auto it = mine.begin(); it != mine.end(); ++it) {
      if (it.key() == "kind" || (def.contains(it.key()) && def[it.key()] == it.value())) continue;
      const std::string v = it.value().is_string() ? it.value().get<std::string>() : it.value().dump();
      params += (params.empty() ? "" : ",") + it.key() + "=" + v;
    }
    return params.empty() ? base : base + " [" + params + "]";
  }
};

inline constexpr const char* kPromptVersion = "prompts-v1";

// Content hash of the prompt templates version plus every parameter that
// affects this method's behaviour.
inline std::string method_digest(const MethodConfig& cfg) {
  return sha256_hex(std::string(kPromptVersion) + "|" + cfg.to_json().dump()).substr(0, 16);
}

// "mark-grid:rows=5,cols=5,zoom=2", "axis-grid:interval=50,sides=bottom+left,grid=false", "direct".
inline MethodConfig parse_method_spec(const std::string& spec) {
  const auto colon = spec.find(':');
  MethodConfig c = MethodConfig::defaults(method_kind_from_string(spec.substr(0, colon)));
  if (colon != std::string::npos) {
    std::istringstream in(spec.substr(colon + 1));
    std::string kv;
    while (std::getline(in, kv, ',')) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw ArgumentError("method parameter '" + kv + "' is not key=value");
      const std::string k = kv.substr(0, eq);
      const std::string v = kv.substr(eq + 1);
      try {
        if (k == "rows") c.rows = std::stoi(v);
        else if (k == "cols") c.cols = std::stoi(v);
        else if (k == "size") c.rows = c.cols = std::stoi(v);
        else if (k == "labels" || k == "label_mode") c.label_mode = label_mode_from_string(v);
        else if (k == "interval") c.axis_interval = std::stoi(v);
        else if (k == "sides") c.axis_sides = axis_sides_from_string(v);
        else if (k == "grid" || k == "draw_grid") c.draw_grid = (v == "true" || v == "1");
        else if (k == "zoom" || k == "zoom_levels") c.zoom_levels = std::stoi(v);
        else if (k == "short_side" || k == "crop_short_side") c.crop_short_side = std::stoi(v);
        else if (k == "margin") c.crop_margin = std::stod(v);
        else if (k == "center") c.center_mode = v == "centroid" ? CenterMode::kCellCentroid : CenterMode::kExtremityBox;
        else throw ArgumentError("unknown method parameter '" + k + "'");
      } catch (const std::logic_error&) {
        throw ArgumentError("bad value for method parameter '" + k + "': " + v);
      }
    }
  }
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------
// Prompts

inline std::string prompt_stem(const std::string& instruction) {
  return "Where should I click if I want to " + instruction + "?";
}

namespace prompt_detail {

inline std::string coordinate_answer(int w, int h) {
  return " The image is " + std::to_string(w) + "x" + std::to_string(h) +
         " pixels with the origin at the top-left corner. Answer with the click point as (x, y) in pixel "
         "coordinates of this image and nothing else.";
}

inline std::string extremity_answer(int max_id) {
  return " Identify the grid IDs of the cells that contain the target element's four extremities: leftmost, "
         "topmost, rightmost and bottommost. IDs run from 1 to " +
         std::to_string(max_id) +
         ", left to right and top to bottom. Answer exactly in the form \"leftmost: ID, topmost: ID, rightmost: ID, "
         "bottommost: ID\".";
}

inline std::string sides_phrase(unsigned sides) {
  if ((sides & kAxisAll) == kAxisAll) return "all four edges";
  std::vector<std::string> names;
  if (sides & kAxisTop) names.emplace_back("top");
  if (sides & kAxisBottom) names.emplace_back("bottom");
  if (sides & kAxisLeft) names.emplace_back("left");
  if (sides & kAxisRight) names.emplace_back("right");
  std::string out;
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (i > 0) out += i + 1 == names.size() ? " and " : ", ";
    out += names[i];
  }
  return out + (names.size() == 1 ? " edge" : " edges");
}

}  // namespace prompt_detail

// Deterministic prompt for one stage. `image_w` x `image_h` are the
// dimensions of the image the answer refers to.
inline std::string build_prompt(const MethodConfig& cfg, const std::string& instruction, int stage, int image_w,
                                int image_h) {
  if (instruction.empty()) throw ArgumentError("instruction must not be empty");
  std::string p = prompt_stem(instruction);
  switch (cfg.kind) {
    case MethodKind::kDirect:
      return p + prompt_detail::coordinate_answer(image_w, image_h);
    case MethodKind::kGridAugmented:
      return p + " A " + std::to_string(cfg.rows) + "x" + std::to_string(cfg.cols) +
             " black grid is drawn over the screenshot as a spatial reference." +
             prompt_detail::coordinate_answer(image_w, image_h);
    case MethodKind::kScaffoldPrompting:
    case MethodKind::kCoordinateScaffold: {
      p += " A " + std::to_string(cfg.rows) + "x" + std::to_string(cfg.cols) +
           " matrix of red dots is drawn over the screenshot as anchor points";
      if (cfg.label_mode == LabelMode::kIndices) {
        p += "; each dot is labeled (row,column) with 1-based indices.";
      } else if (cfg.label_mode == LabelMode::kCoords) {
        p += "; each dot is labeled (x,y) with its exact pixel coordinates.";
      } else {
        p += ".";
      }
      return p + prompt_detail::coordinate_answer(image_w, image_h);
    }
    case MethodKind::kAxisGrid:
      p += " Coordinate scales marked every " + std::to_string(cfg.axis_interval) + " pixels run along the " +
           prompt_detail::sides_phrase(cfg.axis_sides) + " of the image";
      p += cfg.draw_grid ? ", with matching grid lines across the image." : ".";
      return p + prompt_detail::coordinate_answer(image_w, image_h);
    case MethodKind::kMarkGrid: {
      const int n = cfg.rows * cfg.cols;
      const std::string grid = std::to_string(cfg.rows) + "x" + std::to_string(cfg.cols);
      if (stage == 0) {
        return p + " An " + grid + " grid is drawn over the screenshot and every cell is labeled with a unique ID "
                                   "at its center." +
               prompt_detail::extremity_answer(n);
      }
      return p + " You are shown two images. The first is the original screenshot annotated with a red box around "
                 "the region predicted in the previous step. The second is a magnified crop of that region with a "
                 "fresh " +
             grid + " grid whose cells are labeled with unique IDs at their centers. Use the magnified crop." +
             prompt_detail::extremity_answer(n);
    }
  }
  return p;
}

// ---------------------------------------------------------------------------
// Answer parsing

namespace parse_detail {

inline const std::string& number_pattern() {
  static const std::string kNum = R"((-?\d+(?:\.\d+)?))";
  return kNum;
}

}  // namespace parse_detail

// First plausible coordinate pair in a model answer, in pixels of a
// width x height image. Accepts "x=.., y=..", "(x, y)", "[x, y]" and bare
// "x, y". Pairs with both values <= 1 are normalized; pairs <= 1000 that
// overflow the image are read as 0-1000 normalized. The result is clamped
// into the image.
inline Point parse_point(const std::string& raw, int image_w, int image_h) {
  using parse_detail::number_pattern;
  static const std::regex kLabeled(R"(["']?\bx["']?\s*[:=]\s*)" + number_pattern() +
                                       R"([\s,;]*(?:and\s+)?["']?\by["']?\s*[:=]\s*)" + number_pattern(),
                                   std::regex::icase);
  static const std::regex kBracketed(R"([\(\[]\s*)" + number_pattern() + R"(\s*[,;]\s*)" + number_pattern() +
                                     R"(\s*[\)\]])");
  static const std::regex kBare(number_pattern() + R"(\s*,\s*)" + number_pattern());

  std::smatch m;
  bool found = false;
  for (const std::regex* re : {&kLabeled, &kBracketed, &kBare}) {
    if (std::regex_search(raw, m, *re)) {
      found = true;
      break;
    }
  }
  if (!found) throw ParseError("no coordinate pair found in model answer", raw);
  double x = std::stod(m[1].str());
  double y = std::stod(m[2].str());
  if (!std::isfinite(x) || !std::isfinite(y)) throw ParseError("non-finite coordinate", raw);
  if (x >= 0 && y >= 0 && x <= 1.0 && y <= 1.0) {
    x *= image_w;
    y *= image_h;
  } else if (x <= 1000 && y <= 1000 && (x > image_w || y > image_h)) {
    x = x * image_w / 1000.0;
    y = y * image_h / 1000.0;
  }
  return clamp_to_image({x, y}, image_w, image_h);
}

// Four extremity ids from a model answer. Labeled values win; otherwise
// exactly four in-range integers are taken in the order leftmost, topmost,
// rightmost, bottommost.
inline ExtremityIds parse_grid_ids(const std::string& raw, int max_id) {
  if (max_id < 1) throw ArgumentError("max_id must be >= 1");
  static const std::regex kLabel(R"(\b(left|top|right|bottom)(?:[\s_-]?most)?\b[^0-9\n]{0,24}?(\d+))",
                                 std::regex::icase);
  std::optional<int> found[4];
  for (auto it = std::sregex_iterator(raw.begin(), raw.end(), kLabel); it != std::sregex_iterator(); ++it) {
    std::string side = (*it)[1].str();
    std::transform(side.begin(), side.end(), side.begin(), [](unsigned char c) { return std::tolower(c); });
    const int slot = side == "left" ? 0 : side == "top" ? 1 : side == "right" ? 2 : 3;
    if (found[slot]) continue;
    const std::string digits = (*it)[2].str();
    const long v = digits.size() > 9 ? -1 : std::stol(digits);
    if (v < 1 || v > max_id) {
      throw ParseError(side + "most id " + digits + " outside 1.." + std::to_string(max_id), raw);
    }
    found[slot] = static_cast<int>(v);
  }
  if (found[0] && found[1] && found[2] && found[3]) return {*found[0], *found[1], *found[2], *found[3]};

  static const std::regex kInt(R"(\d+)");
  std::vector<int> in_range;
  for (auto it = std::sregex_iterator(raw.begin(), raw.end(), kInt); it != std::sregex_iterator(); ++it) {
    const std::string digits = it->str();
    if (digits.size() > 9) continue;
    const long v = std::stol(digits);
    if (v >= 1 && v <= max_id) in_range.push_back(static_cast<int>(v));
  }
  if (in_range.size() == 4) return {in_range[0], in_range[1], in_range[2], in_range[3]};
  throw ParseError("expected four grid ids in 1.." + std::to_string(max_id) + ", found " +
                       std::to_string(in_range.size()),
                   raw);
}

// ---------------------------------------------------------------------------
// Controllers

struct StageRecord {
  std::string prompt;
  std::vector<std::string> image_digests;
  std::string raw_response;
  nlohmann::json parsed;
};

enum class FailureKind { kNone, kParse, kTransport };

struct Prediction {
  std::optional<Point> click;  // original-image pixels
  std::optional<BBox> bbox;
  std::vector<StageRecord> stages;
  MethodConfig method;
  std::string model_name;
  FailureKind failure = FailureKind::kNone;
  std::string failure_reason;
  bool degraded = false;  // a refinement stage failed; click comes from an earlier box
};

struct CallOptions {
  int max_tokens = 512;
  double temperature = 0.0;
};

namespace method_detail {

inline nlohmann::json grid_json(const GridSpec& g) {
  return {{"rows", g.rows()}, {"cols", g.cols()}, {"width", g.width()}, {"height", g.height()}};
}
inline GridSpec grid_from_json(const nlohmann::json& j) {
  return {j.at("rows").get<int>(), j.at("cols").get<int>(), j.at("width").get<int>(), j.at("height").get<int>()};
}
inline nlohmann::json transform_json(const Transform& t) {
  return {{"offset_x", t.offset_x}, {"offset_y", t.offset_y}, {"scale", t.scale}};
}
inline Transform transform_from_json(const nlohmann::json& j) {
  return {j.at("offset_x").get<double>(), j.at("offset_y").get<double>(), j.at("scale").get<double>()};
}
inline nlohmann::json ids_json(const ExtremityIds& ids) {
  return {{"leftmost", ids.leftmost}, {"topmost", ids.topmost}, {"rightmost", ids.rightmost},
          {"bottommost", ids.bottommost}};
}
inline ExtremityIds ids_from_json(const nlohmann::json& j) {
  return {j.at("leftmost").get<int>(), j.at("topmost").get<int>(), j.at("rightmost").get<int>(),
          j.at("bottommost").get<int>()};
}
inline nlohmann::json box_json(const BBox& b) { return nlohmann::json::array({b.left, b.top, b.right, b.bottom}); }
inline BBox box_from_json(const nlohmann::json& j) {
  return {j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>(), j.at(3).get<double>()};
}

// Final point of a mark-grid stage, in original pixels.
inline Point stage_click(const GridSpec& grid, const ExtremityIds& ids, const Transform& t, CenterMode mode) {
  if (mode == CenterMode::kCellCentroid) return transform_to_original(extremity_centroid(grid, ids), t);
  return transform_to_original(extremity_bbox(grid, ids), t).center();
}

inline Rendered render_single_pass_overlay(const RasterImage& img, const MethodConfig& cfg) {
  switch (cfg.kind) {
    case MethodKind::kDirect: return {img, {}};
    case MethodKind::kGridAugmented: return render_grid_augmented(img, cfg.rows, cfg.cols);
    case MethodKind::kScaffoldPrompting:
    case MethodKind::kCoordinateScaffold:
      return render_scaffold_dots(img, cfg.rows, cfg.cols, cfg.label_mode);
    case MethodKind::kAxisGrid:
      return render_axis_grid(img, cfg.axis_interval, cfg.axis_sides, cfg.draw_grid);
    case MethodKind::kMarkGrid: break;
  }
  throw ArgumentError("mark-grid is not a single-pass method");
}

}  // namespace method_detail

// Overlay the method shows the model first (the input itself for direct
// prediction; the coarse grid for mark-grid).
inline Rendered render_method_overlay(const RasterImage& img, const MethodConfig& cfg) {
  cfg.validate();
  if (cfg.kind == MethodKind::kMarkGrid) {
    MarkGridRendered m = render_mark_grid(img, cfg.rows, cfg.cols);
    return {std::move(m.image), std::move(m.plan)};
  }
  return method_detail::render_single_pass_overlay(img, cfg);
}

// One overlay, one model call, one parsed point. A parse failure yields a
// prediction without a click; model errors propagate.
inline Prediction run_single_pass(const GroundingSample& sample, const RasterImage& image, Model& model,
                                  const MethodConfig& cfg, const CallOptions& opts = {}) {
  cfg.validate();
  if (!cfg.single_pass()) throw ArgumentError("run_single_pass called with a multi-stage method");
  Prediction pred;
  pred.method = cfg;
  pred.model_name = model.name();

  ChatRequest req;
  req.images.push_back(method_detail::render_single_pass_overlay(image, cfg).image);
  req.prompt = build_prompt(cfg, sample.instruction, 0, image.width(), image.height());
  req.max_tokens = opts.max_tokens;
  req.temperature = opts.temperature;

  StageContext ctx;
  ctx.sample_id = sample.id;
  ctx.method_digest = method_digest(cfg);
  ctx.method_kind = to_string(cfg.kind);
  ctx.shown_w = image.width();
  ctx.shown_h = image.height();
  ctx.gt = sample.gt;

  StageRecord stage{req.prompt, {req.images[0].digest()}, {}, nlohmann::json::object()};
  stage.raw_response = model.complete(req, ctx).text;
  try {
    const Point p = parse_point(stage.raw_response, image.width(), image.height());
    stage.parsed = {{"point", {p.x, p.y}}};
    pred.click = p;
  } catch (const ParseError& e) {
    stage.parsed = {{"error", e.what()}};
    pred.failure = FailureKind::kParse;
    pred.failure_reason = e.what();
  }
  pred.stages.push_back(std::move(stage));
  return pred;
}

// Coarse grid pass on the full screenshot, then `zoom_levels` refinement
// passes, each on a magnified crop of the previous box with a fresh grid.
inline Prediction run_mark_grid(const GroundingSample& sample, const RasterImage& image, Model& model,
                                const MethodConfig& cfg, const CallOptions& opts = {}) {
  cfg.validate();
  if (cfg.kind != MethodKind::kMarkGrid) throw ArgumentError("run_mark_grid needs a mark-grid config");
  Prediction pred;
  pred.method = cfg;
  pred.model_name = model.name();
  const std::string digest = method_digest(cfg);
  const int max_id = cfg.rows * cfg.cols;

  auto make_ctx = [&](int stage, const GridSpec& grid, const Transform& t) {
    StageContext ctx;
    ctx.sample_id = sample.id;
    ctx.method_digest = digest;
    ctx.method_kind = to_string(cfg.kind);
    ctx.stage = stage;
    ctx.shown_w = grid.width();
    ctx.shown_h = grid.height();
    ctx.grid = grid;
    ctx.to_original = t;
    ctx.gt = sample.gt;
    return ctx;
  };

  // stage 0
  const MarkGridRendered coarse = render_mark_grid(image, cfg.rows, cfg.cols);
  ChatRequest req{{coarse.image}, build_prompt(cfg, sample.instruction, 0, image.width(), image.height()),
                  opts.max_tokens, opts.temperature};
  StageRecord s0{req.prompt, {coarse.image.digest()}, {}, nlohmann::json::object()};
  s0.raw_response = model.complete(req, make_ctx(0, coarse.grid, Transform::identity())).text;
  BBox box;
  try {
    const ExtremityIds ids = parse_grid_ids(s0.raw_response, max_id);
    box = extremity_bbox(coarse.grid, ids);
    pred.click = clamp_to_image(method_detail::stage_click(coarse.grid, ids, Transform::identity(), cfg.center_mode),
                                image.width(), image.height());
    pred.bbox = box;
    s0.parsed = {{"ids", method_detail::ids_json(ids)},
                 {"grid", method_detail::grid_json(coarse.grid)},
                 {"transform", method_detail::transform_json(Transform::identity())},
                 {"box", method_detail::box_json(box)},
                 {"image", {image.width(), image.height()}}};
  } catch (const ParseError& e) {
    s0.parsed = {{"error", e.what()}};
    pred.failure = FailureKind::kParse;
    pred.failure_reason = std::string("stage 0: ") + e.what();
    pred.stages.push_back(std::move(s0));
    return pred;
  }
  pred.stages.push_back(std::move(s0));

  for (int z = 1; z <= cfg.zoom_levels; ++z) {
    const BBox crop_box = expand_and_clip(box, cfg.crop_margin, image.width(), image.height());
    const Cropped crop = crop_and_resize(image, crop_box, cfg.crop_short_side);
    const MarkGridRendered fine = render_mark_grid(crop.image, cfg.rows, cfg.cols);
    const RasterImage context = annotate_bbox(image, box).image;
    ChatRequest zreq{{context, fine.image},
                     build_prompt(cfg, sample.instruction, z, crop.image.width(), crop.image.height()),
                     opts.max_tokens, opts.temperature};
    StageRecord sz{zreq.prompt, {context.digest(), fine.image.digest()}, {}, nlohmann::json::object()};
    sz.raw_response = model.complete(zreq, make_ctx(z, fine.grid, crop.transform)).text;
    try {
      const ExtremityIds ids = parse_grid_ids(sz.raw_response, max_id);
      box = transform_to_original(extremity_bbox(fine.grid, ids), crop.transform);
      pred.click = clamp_to_image(method_detail::stage_click(fine.grid, ids, crop.transform, cfg.center_mode),
                                  image.width(), image.height());
      pred.bbox = box;
      sz.parsed = {{"ids", method_detail::ids_json(ids)},
                   {"grid", method_detail::grid_json(fine.grid)},
                   {"transform", method_detail::transform_json(crop.transform)},
                   {"box", method_detail::box_json(box)}};
      pred.stages.push_back(std::move(sz));
    } catch (const ParseError& e) {
      sz.parsed = {{"error", e.what()}};
      pred.degraded = true;
      pred.stages.push_back(std::move(sz));
      break;
    }
  }
  return pred;
}

inline Prediction run_method(const GroundingSample& sample, const RasterImage& image, Model& model,
                             const MethodConfig& cfg, const CallOptions& opts = {}) {
  return cfg.single_pass() ? run_single_pass(sample, image, model, cfg, opts)
                           : run_mark_grid(sample, image, model, cfg, opts);
}

// Re-derives the click from the stored stage trace alone.
inline std::optional<Point> replay_click(const Prediction& pred) {
  if (pred.stages.empty()) return std::nullopt;
  if (pred.method.single_pass()) {
    const auto& parsed = pred.stages.front().parsed;
    if (!parsed.contains("point")) return std::nullopt;
    return Point{parsed["point"][0].get<double>(), parsed["point"][1].get<double>()};
  }
  const auto& first = pred.stages.front().parsed;
  if (!first.contains("ids")) return std::nullopt;
  const int w = first["image"][0].get<int>();
  const int h = first["image"][1].get<int>();
  std::optional<Point> click;
  for (const auto& st : pred.stages) {
    if (!st.parsed.contains("ids")) break;
    const GridSpec grid = method_detail::grid_from_json(st.parsed["grid"]);
    const ExtremityIds ids = method_detail::ids_from_json(st.parsed["ids"]);
    const Transform t = method_detail::transform_from_json(st.parsed["transform"]);
    click = clamp_to_image(method_detail::stage_click(grid, ids, t, pred.method.center_mode), w, h);
  }
  return click;
}

inline std::string to_string(FailureKind k) {
  switch (k) {
    case FailureKind::kNone: return "none";
    case FailureKind::kParse: return "parse";
    case FailureKind::kTransport: return "transport";
  }
  return "none";
}

// Audit record of a prediction: method, every stage and the final geometry.
inline nlohmann::json prediction_to_json(const Prediction& pred) {
  nlohmann::json stages = nlohmann::json::array();
  for (const auto& s : pred.stages) {
    stages.push_back({{"prompt", s.prompt},
                      {"image_digests", s.image_digests},
                      {"raw_response", s.raw_response},
                      {"parsed", s.parsed}});
  }
  nlohmann::json j{{"method", pred.method.to_json()},
                   {"method_digest", method_digest(pred.method)},
                   {"model", pred.model_name},
                   {"stages", stages},
                   {"failure", to_string(pred.failure)},
                   {"degraded", pred.degraded}};
  j["click"] = pred.click ? nlohmann::json::array({pred.click->x, pred.click->y}) : nlohmann::json();
  j["bbox"] = pred.bbox ? method_detail::box_json(*pred.bbox) : nlohmann::json();
  if (!pred.failure_reason.empty()) j["failure_reason"] = pred.failure_reason;
  return j;
}

inline Prediction prediction_from_json(const nlohmann::json& j) {
  Prediction p;
  p.method = MethodConfig::from_json(j.at("method"));
  p.model_name = j.value("model", "");
  for (const auto& s : j.at("stages")) {
    p.stages.push_back({s.at("prompt").get<std::string>(), s.at("image_digests").get<std::vector<std::string>>(),
                        s.at("raw_response").get<std::string>(), s.at("parsed")});
  }
  if (j.contains("click") && j["click"].is_array()) p.click = Point{j["click"][0].get<double>(), j["click"][1].get<double>()};
  if (j.contains("bbox") && j["bbox"].is_array()) p.bbox = method_detail::box_from_json(j["bbox"]);
  const std::string f = j.value("failure", "none");
  p.failure = f == "parse" ? FailureKind::kParse : f == "transport" ? FailureKind::kTransport : FailureKind::kNone;
  p.failure_reason = j.value("failure_reason", "");
  p.degraded = j.value("degraded", false);
  return p;
}

}  // namespace groundkit
