#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <set>
#include <vector>

#include "groundkit/geometry.hpp"
#include "oracles.hpp"

using namespace groundkit;
using oracles::boundary;

TEST(GridSpec, CellBoundsOn800x600) {
  const GridSpec g(8, 8, 800, 600);
  EXPECT_EQ(cell_id_to_bounds(g, 1), (BBox{0, 0, 100, 75}));
  EXPECT_EQ(cell_id_to_bounds(g, 64), (BBox{700, 525, 800, 600}));
  EXPECT_THROW(cell_id_to_bounds(g, 0), ArgumentError);
  EXPECT_THROW(cell_id_to_bounds(g, 65), ArgumentError);
}

TEST(GridSpec, CellCenters) {
  EXPECT_EQ(cell_center(GridSpec(8, 8, 800, 600), 1), (Point{50.0, 37.5}));
  EXPECT_EQ(cell_center(GridSpec(2, 2, 100, 100), 4), (Point{75.0, 75.0}));
}

TEST(GridSpec, CentersStrictlyInsideOddSizedCells) {
  const GridSpec g(8, 8, 801, 601);
  for (int id = 1; id <= 64; ++id) {
    const BBox b = cell_id_to_bounds(g, id);
    const Point c = cell_center(g, id);
    EXPECT_GT(c.x, b.left);
    EXPECT_LT(c.x, b.right);
    EXPECT_GT(c.y, b.top);
    EXPECT_LT(c.y, b.bottom);
  }
}

TEST(GridSpec, ImageSmallerThanGridIsDegenerate) {
  EXPECT_THROW(GridSpec(8, 8, 7, 100), DegenerateInputError);
  EXPECT_THROW(GridSpec(8, 8, 100, 7), DegenerateInputError);
  EXPECT_THROW(GridSpec(0, 8, 100, 100), ArgumentError);
}

TEST(GridSpec, RandomTilingMatchesOracles) {
  std::mt19937 rng(20240611);
  std::uniform_int_distribution<int> dim(50, 4096);
  std::uniform_int_distribution<int> cnt(2, 16);
  for (int trial = 0; trial < 1000; ++trial) {
    const int w = dim(rng), h = dim(rng), rows = cnt(rng), cols = cnt(rng);
    const GridSpec g(rows, cols, w, h);
    for (int j = 0; j <= cols; ++j) ASSERT_EQ(g.x_boundary(j), boundary(j, w, cols));
    for (int i = 0; i <= rows; ++i) ASSERT_EQ(g.y_boundary(i), boundary(i, h, rows));

    long long area = 0;
    std::set<std::pair<int, int>> cells;
    int min_w = w, max_w = 0;
    for (int id = 1; id <= rows * cols; ++id) {
      const BBox b = cell_id_to_bounds(g, id);
      area += static_cast<long long>(b.width()) * static_cast<long long>(b.height());
      ASSERT_TRUE(cells.insert({g.row_of(id), g.col_of(id)}).second);
      ASSERT_EQ(g.id_of(g.row_of(id), g.col_of(id)), id);
      ASSERT_TRUE(point_in_bbox(cell_center(g, id), b));
      // right neighbour shares the exact edge
      if (g.col_of(id) + 1 < cols) ASSERT_EQ(b.right, cell_id_to_bounds(g, id + 1).left);
      if (g.row_of(id) + 1 < rows) ASSERT_EQ(b.bottom, cell_id_to_bounds(g, id + cols).top);
      min_w = std::min(min_w, static_cast<int>(b.width()));
      max_w = std::max(max_w, static_cast<int>(b.width()));
    }
    ASSERT_EQ(area, static_cast<long long>(w) * h);
    ASSERT_EQ(static_cast<int>(cells.size()), rows * cols);
    ASSERT_LE(max_w - min_w, 1);
  }
}

TEST(GridSpec, ColumnLookupMatchesLinearScan) {
  std::mt19937 rng(7);
  for (int trial = 0; trial < 200; ++trial) {
    const int w = std::uniform_int_distribution<int>(20, 900)(rng);
    const int cols = std::uniform_int_distribution<int>(2, 16)(rng);
    const GridSpec g(2, cols, w, 10);
    for (int x = 0; x < w; ++x) {
      int expect = -1;
      for (int j = 0; j < cols; ++j) {
        if (g.x_boundary(j) <= x && x < g.x_boundary(j + 1)) expect = j;
      }
      ASSERT_EQ(g.col_at(x), expect) << "w=" << w << " cols=" << cols << " x=" << x;
    }
    ASSERT_EQ(g.col_at(w), cols - 1);
  }
}

TEST(ExtremityBBox, SingleCell) {
  const GridSpec g(8, 8, 800, 600);
  for (int id : {1, 10, 37, 64}) EXPECT_EQ(extremity_bbox(g, {id, id, id, id}), cell_id_to_bounds(g, id));
}

TEST(ExtremityBBox, EdgeRuleSpansImage) {
  const GridSpec g(8, 8, 800, 600);
  EXPECT_EQ(extremity_bbox(g, {9, 2, 16, 58}), (BBox{0, 0, 800, 600}));
}

TEST(ExtremityBBox, InvertedFallsBackToUnion) {
  const GridSpec g(8, 8, 800, 600);
  // left=16 (x 700..800), right=9 (x 0..100): edge rule would give right < left
  const BBox expect = bbox_union(bbox_union(cell_id_to_bounds(g, 16), cell_id_to_bounds(g, 2)),
                                 bbox_union(cell_id_to_bounds(g, 9), cell_id_to_bounds(g, 2)));
  EXPECT_EQ(extremity_bbox(g, {16, 2, 9, 2}), expect);
  EXPECT_EQ(expect, (BBox{0, 0, 800, 150}));
}

TEST(ExtremityBBox, InvalidIdThrows) {
  const GridSpec g(8, 8, 800, 600);
  EXPECT_THROW(extremity_bbox(g, {0, 1, 1, 1}), ArgumentError);
  EXPECT_THROW(extremity_bbox(g, {1, 1, 1, 65}), ArgumentError);
}

// Moving an extremity one cell outward never shrinks the box, as long as the
// answer stays in the edge-rule regime.
TEST(ExtremityBBox, MonotoneOutward) {
  std::mt19937 rng(99);
  const GridSpec g(8, 8, 800, 600);
  std::uniform_int_distribution<int> id(1, 64);
  auto contains = [](const BBox& outer, const BBox& inner) {
    return outer.left <= inner.left && outer.top <= inner.top && outer.right >= inner.right &&
           outer.bottom >= inner.bottom;
  };
  auto edge_regime = [&](const ExtremityIds& e) {
    return g.col_of(e.rightmost) >= g.col_of(e.leftmost) && g.row_of(e.bottommost) >= g.row_of(e.topmost);
  };
  int checked = 0;
  for (int trial = 0; trial < 5000; ++trial) {
    const ExtremityIds e{id(rng), id(rng), id(rng), id(rng)};
    if (!edge_regime(e)) continue;
    const BBox base = extremity_bbox(g, e);
    std::vector<ExtremityIds> moved;
    if (g.col_of(e.leftmost) > 0) moved.push_back({e.leftmost - 1, e.topmost, e.rightmost, e.bottommost});
    if (g.row_of(e.topmost) > 0) moved.push_back({e.leftmost, e.topmost - 8, e.rightmost, e.bottommost});
    if (g.col_of(e.rightmost) < 7) moved.push_back({e.leftmost, e.topmost, e.rightmost + 1, e.bottommost});
    if (g.row_of(e.bottommost) < 7) moved.push_back({e.leftmost, e.topmost, e.rightmost, e.bottommost + 8});
    for (const auto& m : moved) {
      ASSERT_TRUE(contains(extremity_bbox(g, m), base));
      ++checked;
    }
  }
  EXPECT_GT(checked, 1000);
}

TEST(ExtremityIds, PerfectReaderOnAlignedBox) {
  const GridSpec g(8, 8, 800, 600);
  // cells 2,3,10,11 exactly
  const ExtremityIds ids = extremity_ids_for(g, {100, 0, 300, 150});
  EXPECT_EQ(ids, (ExtremityIds{2, 2, 3, 11}));
  EXPECT_EQ(extremity_bbox(g, ids), (BBox{100, 0, 300, 150}));
}

TEST(ExtremityIds, BoxAlwaysInsideSelectedCells) {
  std::mt19937 rng(5);
  for (int trial = 0; trial < 2000; ++trial) {
    const int w = std::uniform_int_distribution<int>(100, 2000)(rng);
    const int h = std::uniform_int_distribution<int>(100, 2000)(rng);
    const int n = std::uniform_int_distribution<int>(2, 12)(rng);
    const GridSpec g(n, n, w, h);
    std::uniform_real_distribution<double> ux(0, w), uy(0, h);
    double x1 = ux(rng), x2 = ux(rng), y1 = uy(rng), y2 = uy(rng);
    if (x1 > x2) std::swap(x1, x2);
    if (y1 > y2) std::swap(y1, y2);
    if (x2 - x1 < 1 || y2 - y1 < 1) continue;
    const BBox box{x1, y1, x2, y2};
    const BBox cover = extremity_bbox(g, extremity_ids_for(g, box));
    ASSERT_LE(cover.left, box.left);
    ASSERT_LE(cover.top, box.top);
    ASSERT_GE(cover.right, box.right);
    ASSERT_GE(cover.bottom, box.bottom);
    // tight: every covered column / row meets the box interior
    ASSERT_LT(cover.left + 0, box.right);
    ASSERT_GT(cover.right, box.left);
  }
}

TEST(Transform, Formula) {
  const Point p{123.5, 7.25};
  EXPECT_EQ(transform_to_original(p, Transform::identity()), p);
  const Point q = transform_to_original(Point{512, 256}, Transform{100, 50, 5.12});
  EXPECT_NEAR(q.x, 200.0, 1e-12);
  EXPECT_NEAR(q.y, 100.0, 1e-12);
}

TEST(Transform, CompositionMatchesSequentialApplication) {
  std::mt19937 rng(3);
  std::uniform_real_distribution<double> off(0, 1000), sc(0.25, 8), coord(0, 2000);
  for (int i = 0; i < 1000; ++i) {
    const Transform outer{off(rng), off(rng), sc(rng)};
    const Transform inner{off(rng), off(rng), sc(rng)};
    const Point p{coord(rng), coord(rng)};
    const Point seq = transform_to_original(transform_to_original(p, inner), outer);
    const Point once = transform_to_original(p, compose(outer, inner));
    ASSERT_NEAR(seq.x, once.x, 1e-9);
    ASSERT_NEAR(seq.y, once.y, 1e-9);
  }
}

TEST(PointInBBox, ClosedBox) {
  const BBox b{10, 20, 30, 40};
  EXPECT_TRUE(point_in_bbox({10, 20}, b));
  EXPECT_TRUE(point_in_bbox({30, 40}, b));
  EXPECT_TRUE(point_in_bbox(b.center(), b));
  EXPECT_FALSE(point_in_bbox({30.001, 30}, b));
  EXPECT_FALSE(point_in_bbox({20, 19.999}, b));
}

TEST(BBox, Validation) {
  EXPECT_THROW(make_bbox(10, 0, 10, 5), ArgumentError);
  EXPECT_THROW(make_bbox(0, 0, NAN, 5), ArgumentError);
  EXPECT_NO_THROW(make_bbox(0, 0, 1, 1));
}

TEST(ExpandAndClip, ClipsToFrame) {
  EXPECT_EQ(expand_and_clip({5, 5, 95, 50}, 10, 100, 60), (BBox{0, 0, 100, 60}));
  EXPECT_EQ(expand_and_clip({20, 20, 40, 40}, 0, 100, 60), (BBox{20, 20, 40, 40}));
}
