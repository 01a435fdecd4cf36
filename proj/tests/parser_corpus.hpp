#pragma once

// Raw answers in the shapes hosted models actually produce, with the
// expected parse. Point answers refer to a kWidth x kHeight image; grid-id
// answers to an 8x8 grid.

#include <optional>
#include <string>
#include <vector>

#include "groundkit/geometry.hpp"

namespace corpus {

using groundkit::ExtremityIds;
using groundkit::Point;

inline constexpr int kWidth = 800;
inline constexpr int kHeight = 600;
inline constexpr int kMaxId = 64;

struct PointCase {
  std::string raw;
  std::optional<Point> expect;  // nullopt: parse error
};

struct IdsCase {
  std::string raw;
  std::optional<ExtremityIds> expect;
};

inline std::vector<PointCase> point_answers() {
  return {
      {"(150, 125)", Point{150, 125}},
      {"The element is at (150, 125).", Point{150, 125}},
      {"[150, 125]", Point{150, 125}},
      {"x=150, y=125", Point{150, 125}},
      {"X: 150 Y: 125", Point{150, 125}},
      {"{\"x\": 150, \"y\": 125}", Point{150, 125}},
      {"click at x=0.5, y=0.25", Point{400, 150}},
      {"(0.5, 0.5)", Point{400, 300}},
      {"```\n(320, 240)\n```", Point{320, 240}},
      {"```json\n{\"x\": 10.5, \"y\": 20.25}\n```", Point{10.5, 20.25}},
      {"150, 125", Point{150, 125}},
      {"I would click (  42 ,  17 ) to open it", Point{42, 17}},
      {"(500, 900)", Point{400, 540}},  // 0-1000 normalized: y overflows
      {"(900, 500)", Point{720, 300}},
      {"(1200, 900)", Point{800, 600}},  // out of range, not normalizable: clamped
      {"(-5, 30)", Point{0, 30}},
      {"Sure! Based on the axis labels, the button is around (612, 48); click there.", Point{612, 48}},
      {"(1, 1)", Point{800, 600}},
      {"x = 100 and y = 200", Point{100, 200}},
      {"(100; 200)", Point{100, 200}},
      {"I cannot determine that", std::nullopt},
      {"I'm sorry, but I can't help with that request.", std::nullopt},
      {"", std::nullopt},
      {"The settings icon is in the top-right corner.", std::nullopt},
      {"```\n```", std::nullopt},
  };
}

inline std::vector<IdsCase> grid_id_answers() {
  return {
      {"leftmost: 10, topmost: 2, rightmost: 12, bottommost: 26", ExtremityIds{10, 2, 12, 26}},
      {"10 2 12 26", ExtremityIds{10, 2, 12, 26}},
      {"Leftmost: 10\nTopmost: 2\nRightmost: 12\nBottommost: 26", ExtremityIds{10, 2, 12, 26}},
      {"```\nleftmost: 3, topmost: 3, rightmost: 4, bottommost: 11\n```", ExtremityIds{3, 3, 4, 11}},
      {"{\"leftmost\": 5, \"topmost\": 5, \"rightmost\": 6, \"bottommost\": 13}", ExtremityIds{5, 5, 6, 13}},
      {"bottommost: 26, rightmost: 12, topmost: 2, leftmost: 10", ExtremityIds{10, 2, 12, 26}},
      {"left-most 7, top-most 7, right-most 8, bottom-most 16", ExtremityIds{7, 7, 8, 16}},
      {"left: 1 top: 1 right: 1 bottom: 1", ExtremityIds{1, 1, 1, 1}},
      {"The leftmost cell is ID 19, the topmost is ID 20, the rightmost is ID 21 and the bottommost is ID 29.",
       ExtremityIds{19, 20, 21, 29}},
      {"[10, 2, 12, 26]", ExtremityIds{10, 2, 12, 26}},
      {"leftmost: 99, topmost: 2, rightmost: 12, bottommost: 26", std::nullopt},
      {"leftmost: 99", std::nullopt},
      {"10 2 12", std::nullopt},
      {"10 2 12 26 30", std::nullopt},
      {"The target is not visible in this screenshot.", std::nullopt},
      {"I can't identify the element.", std::nullopt},
  };
}

// Refusals: must become recorded misses for every method.
inline std::vector<std::string> refusals() {
  return {"I cannot determine that", "I'm sorry, I can't help with that.",
          "The element is not visible in this screenshot."};
}

}  // namespace corpus
