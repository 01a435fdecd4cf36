#pragma once

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "groundkit/errors.hpp"
#include "groundkit/font.hpp"
#include "groundkit/geometry.hpp"
#include "groundkit/image.hpp"

namespace groundkit {

struct OverlayStyle {
  Rgb line_color = colors::kRed;
  int line_thickness = 2;
  Rgb label_color = colors::kBlack;
  std::optional<Rgb> label_background = colors::kWhite;
  int font_height = 12;
  int dot_radius = 4;

  // Plain black lines, no label box.
  static OverlayStyle grid_augmented() {
    OverlayStyle s;
    s.line_color = colors::kBlack;
    s.label_background.reset();
    return s;
  }
  // Red lines with white-backed black labels.
  static OverlayStyle scaffold() { return {}; }

  void validate() const {
    if (line_thickness < 1) throw ArgumentError("line_thickness must be >= 1");
    if (font_height < 6) throw ArgumentError("font_height must be >= 6");
    if (dot_radius < 1) throw ArgumentError("dot_radius must be >= 1");
  }
};

// Structured record of every primitive an overlay drew, so geometry can be
// checked without reading pixels back.
struct PlanLine {
  int x1, y1, x2, y2;
  friend bool operator==(const PlanLine&, const PlanLine&) = default;
};
struct PlanDot {
  int x, y, r;
  friend bool operator==(const PlanDot&, const PlanDot&) = default;
};
// (x, y) is the center of the rendered label box.
struct PlanText {
  double x, y;
  std::string s;
  friend bool operator==(const PlanText&, const PlanText&) = default;
};

struct RenderPlan {
  std::vector<PlanLine> lines;
  std::vector<PlanDot> dots;
  std::vector<PlanText> texts;
  friend bool operator==(const RenderPlan&, const RenderPlan&) = default;
};

inline void to_json(nlohmann::json& j, const RenderPlan& plan) {
  j = nlohmann::json{{"lines", nlohmann::json::array()},
                     {"dots", nlohmann::json::array()},
                     {"texts", nlohmann::json::array()}};
  for (const auto& l : plan.lines) j["lines"].push_back({{"x1", l.x1}, {"y1", l.y1}, {"x2", l.x2}, {"y2", l.y2}});
  for (const auto& d : plan.dots) j["dots"].push_back({{"x", d.x}, {"y", d.y}, {"r", d.r}});
  for (const auto& t : plan.texts) j["texts"].push_back({{"x", t.x}, {"y", t.y}, {"s", t.s}});
}

inline void from_json(const nlohmann::json& j, RenderPlan& plan) {
  plan = {};
  for (const auto& l : j.at("lines")) {
    plan.lines.push_back({l.at("x1").get<int>(), l.at("y1").get<int>(), l.at("x2").get<int>(),
                          l.at("y2").get<int>()});
  }
  for (const auto& d : j.at("dots")) {
    plan.dots.push_back({d.at("x").get<int>(), d.at("y").get<int>(), d.at("r").get<int>()});
  }
  for (const auto& t : j.at("texts")) {
    plan.texts.push_back({t.at("x").get<double>(), t.at("y").get<double>(), t.at("s").get<std::string>()});
  }
}

struct Rendered {
  RasterImage image;
  RenderPlan plan;
};

struct MarkGridRendered {
  RasterImage image;
  RenderPlan plan;
  GridSpec grid;
};

struct Cropped {
  RasterImage image;
  Transform transform;  // crop pixels -> source pixels
};

enum class LabelMode { kNone, kIndices, kCoords };

enum AxisSide : unsigned {
  kAxisTop = 1u << 0,
  kAxisBottom = 1u << 1,
  kAxisLeft = 1u << 2,
  kAxisRight = 1u << 3,
  kAxisAll = kAxisTop | kAxisBottom | kAxisLeft | kAxisRight,
};

namespace overlay_detail {

// Axis-aligned segment, thickness centered on the nominal coordinate.
inline void draw_line(RasterImage& img, const PlanLine& l, const OverlayStyle& style) {
  const int t = style.line_thickness;
  const int lo = -(t / 2);
  if (l.x1 == l.x2) {
    const int y0 = std::min(l.y1, l.y2);
    const int y1 = std::max(l.y1, l.y2);
    img.fill_rect(l.x1 + lo, y0, l.x1 + lo + t, y1 + 1, style.line_color);
  } else {
    const int x0 = std::min(l.x1, l.x2);
    const int x1 = std::max(l.x1, l.x2);
    img.fill_rect(x0, l.y1 + lo, x1 + 1, l.y1 + lo + t, style.line_color);
  }
}

inline void draw_dot(RasterImage& img, const PlanDot& d, Rgb color) {
  for (int dy = -d.r; dy <= d.r; ++dy) {
    for (int dx = -d.r; dx <= d.r; ++dx) {
      if (dx * dx + dy * dy <= d.r * d.r && img.contains(d.x + dx, d.y + dy)) {
        img.set(d.x + dx, d.y + dy, color);
      }
    }
  }
}

// Places a label box whose center is (cx, cy), shifted as needed to stay
// fully inside the frame. Returns the center actually used.
inline PlanText place_label(RasterImage& img, double cx, double cy, std::string s,
                            const OverlayStyle& style) {
  const TextExtent ext = text_extent(s, style.font_height);
  const double max_x = std::max(0, img.width() - ext.width);
  const double max_y = std::max(0, img.height() - ext.height);
  const double left = std::clamp(std::round(cx - ext.width / 2.0), 0.0, max_x);
  const double top = std::clamp(std::round(cy - ext.height / 2.0), 0.0, max_y);
  draw_text(img, static_cast<int>(left), static_cast<int>(top), s, style.font_height, style.label_color,
            style.label_background);
  const bool moved = left != std::round(cx - ext.width / 2.0) || top != std::round(cy - ext.height / 2.0);
  if (!moved) return {cx, cy, std::move(s)};
  return {left + ext.width / 2.0, top + ext.height / 2.0, std::move(s)};
}

inline void add_line(Rendered& out, PlanLine l, const OverlayStyle& style) {
  draw_line(out.image, l, style);
  out.plan.lines.push_back(l);
}

inline void draw_grid_lines(Rendered& out, const GridSpec& grid, const OverlayStyle& style) {
  const int w = out.image.width();
  const int h = out.image.height();
  for (int j = 1; j < grid.cols(); ++j) add_line(out, {grid.x_boundary(j), 0, grid.x_boundary(j), h - 1}, style);
  for (int i = 1; i < grid.rows(); ++i) add_line(out, {0, grid.y_boundary(i), w - 1, grid.y_boundary(i)}, style);
}

inline void require_min_grid(int rows, int cols) {
  if (rows < 2 || cols < 2) throw ArgumentError("rows and cols must be >= 2");
}

}  // namespace overlay_detail

// Plain black lattice: (rows-1) horizontal and (cols-1) vertical interior
// lines on the GridSpec boundaries, no labels.
inline Rendered render_grid_augmented(const RasterImage& img, int rows = 9, int cols = 9,
                                      const OverlayStyle& style = OverlayStyle::grid_augmented()) {
  style.validate();
  overlay_detail::require_min_grid(rows, cols);
  const GridSpec grid(rows, cols, img.width(), img.height());
  Rendered out{img, {}};
  overlay_detail::draw_grid_lines(out, grid, style);
  return out;
}

// Dot anchor position for index k of n along an axis of `extent` pixels:
// round((k + 0.5) * extent / n).
inline int scaffold_anchor(int k, int n, int extent) {
  const long long num = static_cast<long long>(2 * k + 1) * extent + n;
  return static_cast<int>(num / (2LL * n));
}

// Dot matrix with optional labels: "(row,col)" 1-based in indices mode, the
// dot's own pixel position "(x,y)" in coords mode.
inline Rendered render_scaffold_dots(const RasterImage& img, int rows, int cols, LabelMode mode,
                                     const OverlayStyle& style = OverlayStyle::scaffold()) {
  style.validate();
  overlay_detail::require_min_grid(rows, cols);
  Rendered out{img, {}};
  for (int i = 0; i < rows; ++i) {
    const int y = scaffold_anchor(i, rows, img.height());
    for (int j = 0; j < cols; ++j) {
      const int x = scaffold_anchor(j, cols, img.width());
      const PlanDot dot{x, y, style.dot_radius};
      overlay_detail::draw_dot(out.image, dot, style.line_color);
      out.plan.dots.push_back(dot);
    }
  }
  if (mode == LabelMode::kNone) return out;
  const int label_h = text_extent("0", style.font_height).height;
  for (int i = 0; i < rows; ++i) {
    const int y = scaffold_anchor(i, rows, img.height());
    for (int j = 0; j < cols; ++j) {
      const int x = scaffold_anchor(j, cols, img.width());
      const std::string s = mode == LabelMode::kIndices
                                ? "(" + std::to_string(i + 1) + "," + std::to_string(j + 1) + ")"
                                : "(" + std::to_string(x) + "," + std::to_string(y) + ")";
      const double cy = y + style.dot_radius + 1 + label_h / 2.0;
      out.plan.texts.push_back(overlay_detail::place_label(out.image, x, cy, s, style));
    }
  }
  return out;
}

// Ticks and numeric labels at 0, interval, 2*interval, ... (strictly inside
// the frame) along the selected sides, plus full-length grid lines at the
// same coordinates when `draw_grid` is set.
inline Rendered render_axis_grid(const RasterImage& img, int interval = 100, unsigned sides = kAxisAll,
                                 bool draw_grid = true, const OverlayStyle& style = OverlayStyle::scaffold()) {
  style.validate();
  if (interval < 10) throw ArgumentError("axis interval must be >= 10");
  const int w = img.width();
  const int h = img.height();
  Rendered out{img, {}};
  std::vector<int> xs;
  std::vector<int> ys;
  for (int x = 0; x < w; x += interval) xs.push_back(x);
  for (int y = 0; y < h; y += interval) ys.push_back(y);

  if (draw_grid) {
    for (int x : xs) overlay_detail::add_line(out, {x, 0, x, h - 1}, style);
    for (int y : ys) overlay_detail::add_line(out, {0, y, w - 1, y}, style);
  }

  const int tick = std::max(4, style.font_height / 2);
  const TextExtent glyph_box = text_extent("0", style.font_height);
  auto label = [&](double cx, double cy, int v) {
    out.plan.texts.push_back(overlay_detail::place_label(out.image, cx, cy, std::to_string(v), style));
  };
  if (sides & kAxisTop) {
    for (int x : xs) {
      overlay_detail::add_line(out, {x, 0, x, tick}, style);
      label(x, tick + 1 + glyph_box.height / 2.0, x);
    }
  }
  if (sides & kAxisBottom) {
    for (int x : xs) {
      overlay_detail::add_line(out, {x, h - 1 - tick, x, h - 1}, style);
      label(x, h - 1 - tick - 1 - glyph_box.height / 2.0, x);
    }
  }
  if (sides & kAxisLeft) {
    for (int y : ys) {
      overlay_detail::add_line(out, {0, y, tick, y}, style);
      const double half_w = text_extent(std::to_string(y), style.font_height).width / 2.0;
      label(tick + 1 + half_w, y, y);
    }
  }
  if (sides & kAxisRight) {
    for (int y : ys) {
      overlay_detail::add_line(out, {w - 1 - tick, y, w - 1, y}, style);
      const double half_w = text_extent(std::to_string(y), style.font_height).width / 2.0;
      label(w - 1 - tick - 1 - half_w, y, y);
    }
  }
  return out;
}

// Grid lines on the GridSpec boundaries and each cell's id (row-major from
// 1) centered in the cell.
inline MarkGridRendered render_mark_grid(const RasterImage& img, int rows = 8, int cols = 8,
                                         const OverlayStyle& style = OverlayStyle::scaffold()) {
  style.validate();
  overlay_detail::require_min_grid(rows, cols);
  const GridSpec grid(rows, cols, img.width(), img.height());
  for (int j = 0; j < cols; ++j) {
    for (int i = 0; i < rows; ++i) {
      const int cw = grid.x_boundary(j + 1) - grid.x_boundary(j);
      const int ch = grid.y_boundary(i + 1) - grid.y_boundary(i);
      if (std::min(cw, ch) < style.font_height) {
        throw DegenerateInputError("mark-grid cell " + std::to_string(cw) + "x" + std::to_string(ch) +
                                   " px is smaller than font height " + std::to_string(style.font_height) +
                                   "; use a smaller grid or a larger image");
      }
    }
  }
  Rendered out{img, {}};
  overlay_detail::draw_grid_lines(out, grid, style);
  for (int id = 1; id <= grid.cell_count(); ++id) {
    const Point c = cell_center(grid, id);
    out.plan.texts.push_back(overlay_detail::place_label(out.image, c.x, c.y, std::to_string(id), style));
  }
  return {std::move(out.image), std::move(out.plan), grid};
}

// Rectangle outline for `box`, each edge clipped into [0, width-1] x
// [0, height-1].
inline Rendered annotate_bbox(const RasterImage& img, const BBox& box,
                              const OverlayStyle& style = OverlayStyle::scaffold()) {
  style.validate();
  const int w = img.width();
  const int h = img.height();
  if (!box.valid() || box.right < 0 || box.bottom < 0 || box.left > w - 1 || box.top > h - 1) {
    throw DegenerateInputError("bbox does not intersect the image");
  }
  const int l = std::clamp(static_cast<int>(std::lround(box.left)), 0, w - 1);
  const int t = std::clamp(static_cast<int>(std::lround(box.top)), 0, h - 1);
  const int r = std::clamp(static_cast<int>(std::lround(box.right)), 0, w - 1);
  const int b = std::clamp(static_cast<int>(std::lround(box.bottom)), 0, h - 1);
  Rendered out{img, {}};
  overlay_detail::add_line(out, {l, t, r, t}, style);
  overlay_detail::add_line(out, {r, t, r, b}, style);
  overlay_detail::add_line(out, {l, b, r, b}, style);
  overlay_detail::add_line(out, {l, t, l, b}, style);
  return out;
}

// Crops the pixel-aligned hull of `box` and scales it uniformly so the
// shorter side becomes `short_side`.
inline Cropped crop_and_resize(const RasterImage& img, const BBox& box, int short_side = 512) {
  if (short_side < 1) throw ArgumentError("short_side must be >= 1");
  if (!box.valid()) throw DegenerateInputError("crop box has zero or negative area");
  const int x0 = std::clamp(static_cast<int>(std::floor(box.left)), 0, img.width());
  const int y0 = std::clamp(static_cast<int>(std::floor(box.top)), 0, img.height());
  const int x1 = std::clamp(static_cast<int>(std::ceil(box.right)), 0, img.width());
  const int y1 = std::clamp(static_cast<int>(std::ceil(box.bottom)), 0, img.height());
  if (x1 - x0 < 1 || y1 - y0 < 1) throw DegenerateInputError("crop box has no area inside the image");
  const int cw = x1 - x0;
  const int ch = y1 - y0;
  const double scale = static_cast<double>(short_side) / std::min(cw, ch);
  const int out_w = std::max(1, static_cast<int>(std::lround(cw * scale)));
  const int out_h = std::max(1, static_cast<int>(std::lround(ch * scale)));
  const RasterImage region = crop_pixels(img, x0, y0, x1, y1);
  RasterImage resized = scale == 1.0 ? region : resize_uniform(region, out_w, out_h, scale);
  return {std::move(resized), Transform{static_cast<double>(x0), static_cast<double>(y0), scale}};
}

}  // namespace groundkit
