#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "groundkit/errors.hpp"

namespace groundkit {

// Image-space point: x counts columns from the left edge, y counts rows from
// the top edge.
struct Point {
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const Point&, const Point&) = default;
};

// Closed axis-aligned box [left, right] x [top, bottom].
struct BBox {
  double left = 0.0;
  double top = 0.0;
  double right = 0.0;
  double bottom = 0.0;

  double width() const { return right - left; }
  double height() const { return bottom - top; }
  double area() const { return width() * height(); }
  Point center() const { return {(left + right) / 2.0, (top + bottom) / 2.0}; }
  bool valid() const {
    return std::isfinite(left) && std::isfinite(top) && std::isfinite(right) &&
           std::isfinite(bottom) && left < right && top < bottom;
  }

  friend bool operator==(const BBox&, const BBox&) = default;
};

inline BBox make_bbox(double left, double top, double right, double bottom) {
  BBox b{left, top, right, bottom};
  if (!b.valid()) {
    throw ArgumentError("invalid bbox: expected finite left < right and top < bottom");
  }
  return b;
}

inline BBox bbox_union(const BBox& a, const BBox& b) {
  return {std::min(a.left, b.left), std::min(a.top, b.top), std::max(a.right, b.right),
          std::max(a.bottom, b.bottom)};
}

inline bool point_in_bbox(const Point& p, const BBox& b) {
  return b.left <= p.x && p.x <= b.right && b.top <= p.y && p.y <= b.bottom;
}

// Maps coordinates of a cropped-and-scaled image back to its source:
// source = crop / scale + offset.
struct Transform {
  double offset_x = 0.0;
  double offset_y = 0.0;
  double scale = 1.0;

  static Transform identity() { return {}; }
  friend bool operator==(const Transform&, const Transform&) = default;
};

inline Point transform_to_original(const Point& p, const Transform& t) {
  return {p.x / t.scale + t.offset_x, p.y / t.scale + t.offset_y};
}

inline Point transform_to_crop(const Point& p, const Transform& t) {
  return {(p.x - t.offset_x) * t.scale, (p.y - t.offset_y) * t.scale};
}

inline BBox transform_to_original(const BBox& b, const Transform& t) {
  const Point lt = transform_to_original(Point{b.left, b.top}, t);
  const Point rb = transform_to_original(Point{b.right, b.bottom}, t);
  return {lt.x, lt.y, rb.x, rb.y};
}

inline BBox transform_to_crop(const BBox& b, const Transform& t) {
  const Point lt = transform_to_crop(Point{b.left, b.top}, t);
  const Point rb = transform_to_crop(Point{b.right, b.bottom}, t);
  return {lt.x, lt.y, rb.x, rb.y};
}

// `inner` maps a crop-of-a-crop into the first crop, `outer` maps the first
// crop into the original. The result maps the innermost image straight to
// the original.
inline Transform compose(const Transform& outer, const Transform& inner) {
  return {outer.offset_x + inner.offset_x / outer.scale,
          outer.offset_y + inner.offset_y / outer.scale, outer.scale * inner.scale};
}

// Integer tiling of a width x height image into rows x cols cells. Boundary j
// sits at round(j * extent / count), so cell sizes differ by at most one
// pixel. Cell ids run 1..rows*cols, row-major.
class GridSpec {
 public:
  GridSpec() = default;
  GridSpec(int rows, int cols, int width, int height)
      : rows_(rows), cols_(cols), width_(width), height_(height) {
    if (rows < 1 || cols < 1) throw ArgumentError("grid rows and cols must be >= 1");
    if (width < cols || height < rows) {
      throw DegenerateInputError("image " + std::to_string(width) + "x" + std::to_string(height) +
                                 " is smaller than a " + std::to_string(rows) + "x" +
                                 std::to_string(cols) + " grid");
    }
  }

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  int width() const { return width_; }
  int height() const { return height_; }
  int cell_count() const { return rows_ * cols_; }

  // Column boundary j in [0, cols].
  int x_boundary(int j) const { return rounded_split(j, width_, cols_); }
  // Row boundary i in [0, rows].
  int y_boundary(int i) const { return rounded_split(i, height_, rows_); }

  bool valid_id(int id) const { return id >= 1 && id <= cell_count(); }
  int id_of(int row, int col) const { return row * cols_ + col + 1; }
  int row_of(int id) const { return (checked(id) - 1) / cols_; }
  int col_of(int id) const { return (checked(id) - 1) % cols_; }

  // Column whose half-open span [x_j, x_{j+1}) holds x; clamped into the grid.
  int col_at(double x) const { return index_at(x, cols_, [this](int j) { return x_boundary(j); }); }
  int row_at(double y) const { return index_at(y, rows_, [this](int i) { return y_boundary(i); }); }

  friend bool operator==(const GridSpec&, const GridSpec&) = default;

 private:
  static int rounded_split(int j, int extent, int count) {
    // round-half-up of j * extent / count in exact integer arithmetic
    const std::int64_t num = 2LL * j * extent + count;
    return static_cast<int>(num / (2LL * count));
  }

  int checked(int id) const {
    if (!valid_id(id)) {
      throw ArgumentError("cell id " + std::to_string(id) + " outside 1.." +
                          std::to_string(cell_count()));
    }
    return id;
  }

  template <typename Boundary>
  static int index_at(double v, int count, Boundary boundary) {
    int lo = 0;
    int hi = count - 1;
    while (lo < hi) {
      const int mid = (lo + hi + 1) / 2;
      if (boundary(mid) <= v) {
        lo = mid;
      } else {
        hi = mid - 1;
      }
    }
    return lo;
  }

  int rows_ = 1;
  int cols_ = 1;
  int width_ = 1;
  int height_ = 1;
};

inline BBox cell_id_to_bounds(const GridSpec& grid, int id) {
  const int r = grid.row_of(id);
  const int c = grid.col_of(id);
  return {static_cast<double>(grid.x_boundary(c)), static_cast<double>(grid.y_boundary(r)),
          static_cast<double>(grid.x_boundary(c + 1)), static_cast<double>(grid.y_boundary(r + 1))};
}

inline Point cell_center(const GridSpec& grid, int id) { return cell_id_to_bounds(grid, id).center(); }

// Cell ids naming the four sides of an object.
struct ExtremityIds {
  int leftmost = 1;
  int topmost = 1;
  int rightmost = 1;
  int bottommost = 1;

  friend bool operator==(const ExtremityIds&, const ExtremityIds&) = default;
};

// Box spanned by the outer edges of the extremity cells. When the answer is
// inverted (right edge at or left of the left edge, or bottom above top) the
// union of the four cells is returned instead.
inline BBox extremity_bbox(const GridSpec& grid, const ExtremityIds& ids) {
  const BBox l = cell_id_to_bounds(grid, ids.leftmost);
  const BBox t = cell_id_to_bounds(grid, ids.topmost);
  const BBox r = cell_id_to_bounds(grid, ids.rightmost);
  const BBox b = cell_id_to_bounds(grid, ids.bottommost);
  const BBox edges{l.left, t.top, r.right, b.bottom};
  if (edges.right <= edges.left || edges.bottom <= edges.top) {
    return bbox_union(bbox_union(l, t), bbox_union(r, b));
  }
  return edges;
}

// Centroid of the four extremity cell centers; ablation alternative to the
// center of extremity_bbox.
inline Point extremity_centroid(const GridSpec& grid, const ExtremityIds& ids) {
  const Point a = cell_center(grid, ids.leftmost);
  const Point b = cell_center(grid, ids.topmost);
  const Point c = cell_center(grid, ids.rightmost);
  const Point d = cell_center(grid, ids.bottommost);
  return {(a.x + b.x + c.x + d.x) / 4.0, (a.y + b.y + c.y + d.y) / 4.0};
}

// Extremity ids an exact reader would name for `box` (in grid coordinates).
// Covered cells are those whose interior meets the box; a box edge lying
// exactly on a boundary does not pull in the neighbouring cell. Among the
// covered block: leftmost/rightmost are the top cells of the outer columns,
// topmost is the first covered cell in row-major order, bottommost the last.
inline ExtremityIds extremity_ids_for(const GridSpec& grid, const BBox& box) {
  const double l = std::clamp(box.left, 0.0, static_cast<double>(grid.width()));
  const double r = std::clamp(box.right, 0.0, static_cast<double>(grid.width()));
  const double t = std::clamp(box.top, 0.0, static_cast<double>(grid.height()));
  const double b = std::clamp(box.bottom, 0.0, static_cast<double>(grid.height()));

  const int c0 = grid.col_at(l);
  int c1 = grid.col_at(r);
  if (c1 > c0 && grid.x_boundary(c1) >= r) --c1;
  const int r0 = grid.row_at(t);
  int r1 = grid.row_at(b);
  if (r1 > r0 && grid.y_boundary(r1) >= b) --r1;

  return {grid.id_of(r0, c0), grid.id_of(r0, c0), grid.id_of(r0, c1), grid.id_of(r1, c1)};
}

// Pads a box by `margin` pixels on every side and clips it to width x height.
inline BBox expand_and_clip(const BBox& b, double margin, int width, int height) {
  return {std::max(0.0, b.left - margin), std::max(0.0, b.top - margin),
          std::min(static_cast<double>(width), b.right + margin),
          std::min(static_cast<double>(height), b.bottom + margin)};
}

inline Point clamp_to_image(const Point& p, int width, int height) {
  return {std::clamp(p.x, 0.0, static_cast<double>(width)),
          std::clamp(p.y, 0.0, static_cast<double>(height))};
}

}  // namespace groundkit
