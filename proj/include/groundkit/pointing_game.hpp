#pragma once

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "groundkit/errors.hpp"
#include "groundkit/geometry.hpp"

namespace groundkit {

// Attention from the last instruction token to every image token, per layer
// and head. layers[l] is row-major [heads, image_token_count].
struct AttentionDump {
  int layer_count = 0;
  int heads = 0;
  int grid_h = 0;
  int grid_w = 0;
  int t_star = 0;
  int total_tokens = 0;
  int image_token_count = 0;
  int image_w = 0;
  int image_h = 0;
  std::string model_id;
  std::vector<std::vector<float>> layers;

  float at(int layer, int head, int token) const {
    return layers[static_cast<std::size_t>(layer)]
                 [static_cast<std::size_t>(head) * image_token_count + token];
  }
};

// Row-major height x width map in original-image pixels.
struct AttentionMap {
  int width = 0;
  int height = 0;
  std::vector<double> values;

  double at(int x, int y) const { return values[static_cast<std::size_t>(y) * width + x]; }
};

enum class Interp { kNearest, kBilinear };

inline constexpr double kRowSumTolerance = 1e-4;

inline std::string layer_file_name(int layer) {
  std::ostringstream os;
  os << "layer_" << std::setw(3) << std::setfill('0') << layer << ".bin";
  return os.str();
}

// Checks every AttentionDump invariant; throws FormatError naming the first
// offending field.
inline void validate_dump(const AttentionDump& d) {
  auto fail = [](const std::string& field, const std::string& why) {
    throw FormatError("attention dump: " + field + ": " + why);
  };
  if (d.layer_count < 1) fail("layers", "must be >= 1");
  if (d.heads < 1) fail("heads", "must be >= 1");
  if (d.grid_h < 1 || d.grid_w < 1) fail("grid_h/grid_w", "must be >= 1");
  if (d.image_token_count != d.grid_h * d.grid_w) {
    fail("image_token_count", std::to_string(d.image_token_count) + " != grid_h*grid_w = " +
                                  std::to_string(d.grid_h * d.grid_w));
  }
  if (d.image_w < 1 || d.image_h < 1) fail("image_w/image_h", "must be >= 1");
  if (d.total_tokens <= d.image_token_count) {
    fail("total_tokens", "must exceed image_token_count (the query is a text token)");
  }
  if (d.t_star < 0 || d.t_star >= d.total_tokens) fail("t_star", "outside [0, total_tokens)");
  if (static_cast<int>(d.layers.size()) != d.layer_count) fail("layers", "layer data count mismatch");
  const std::size_t row = static_cast<std::size_t>(d.image_token_count);
  for (int l = 0; l < d.layer_count; ++l) {
    const auto& v = d.layers[static_cast<std::size_t>(l)];
    const std::string where = layer_file_name(l);
    if (v.size() != row * static_cast<std::size_t>(d.heads)) fail(where, "wrong element count");
    for (int h = 0; h < d.heads; ++h) {
      double sum = 0.0;
      for (std::size_t k = 0; k < row; ++k) {
        const float a = v[static_cast<std::size_t>(h) * row + k];
        if (!std::isfinite(a)) fail(where, "non-finite value");
        if (a < 0.0f) fail(where, "negative attention value");
        if (a > 1.0f) fail(where, "attention value above 1");
        sum += a;
      }
      if (sum > 1.0 + kRowSumTolerance) {
        fail(where, "head " + std::to_string(h) + " row sum " + std::to_string(sum) + " exceeds 1");
      }
    }
  }
}

// Reads meta.json plus layer_NNN.bin files (little-endian f32, row-major
// [heads, image_token_count]) and validates the result.
inline AttentionDump load_attention_dump(const std::filesystem::path& dir) {
  const auto meta_path = dir / "meta.json";
  std::ifstream meta_in(meta_path);
  if (!meta_in) throw FormatError("attention dump: meta.json: missing in " + dir.string());
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(meta_in);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("attention dump: meta.json: ") + e.what());
  }
  AttentionDump d;
  auto get_int = [&](const char* key) {
    if (!meta.contains(key) || !meta[key].is_number_integer()) {
      throw FormatError(std::string("attention dump: ") + key + ": missing or not an integer");
    }
    return meta[key].get<int>();
  };
  d.layer_count = get_int("layers");
  d.heads = get_int("heads");
  d.grid_h = get_int("grid_h");
  d.grid_w = get_int("grid_w");
  d.t_star = get_int("t_star");
  d.total_tokens = get_int("total_tokens");
  d.image_token_count = get_int("image_token_count");
  d.image_w = get_int("image_w");
  d.image_h = get_int("image_h");
  if (!meta.contains("dtype") || meta["dtype"] != "f32le") {
    throw FormatError("attention dump: dtype: only \"f32le\" is supported");
  }
  if (!meta.contains("model_id") || !meta["model_id"].is_string()) {
    throw FormatError("attention dump: model_id: missing or not a string");
  }
  d.model_id = meta["model_id"].get<std::string>();
  if (d.layer_count < 1 || d.heads < 1 || d.image_token_count < 1) {
    throw FormatError("attention dump: layers/heads/image_token_count: must be >= 1");
  }
  if (d.image_token_count != d.grid_h * d.grid_w) {
    throw FormatError("attention dump: image_token_count: " + std::to_string(d.image_token_count) +
                      " != grid_h*grid_w = " + std::to_string(d.grid_h * d.grid_w));
  }

  const std::size_t count = static_cast<std::size_t>(d.heads) * d.image_token_count;
  for (int l = 0; l < d.layer_count; ++l) {
    const auto path = dir / layer_file_name(l);
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("attention dump: " + layer_file_name(l) + ": missing");
    std::vector<std::uint8_t> raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (raw.size() != count * 4) {
      throw FormatError("attention dump: " + layer_file_name(l) + ": expected " + std::to_string(count * 4) +
                        " bytes, found " + std::to_string(raw.size()));
    }
    std::vector<float> values(count);
    for (std::size_t i = 0; i < count; ++i) {
      const std::uint32_t bits = static_cast<std::uint32_t>(raw[4 * i]) |
                                 static_cast<std::uint32_t>(raw[4 * i + 1]) << 8 |
                                 static_cast<std::uint32_t>(raw[4 * i + 2]) << 16 |
                                 static_cast<std::uint32_t>(raw[4 * i + 3]) << 24;
      std::memcpy(&values[i], &bits, sizeof bits);
    }
    d.layers.push_back(std::move(values));
  }
  validate_dump(d);
  return d;
}

// Writes the on-disk dump format. Used by fixtures and tooling.
inline void write_attention_dump(const std::filesystem::path& dir, const AttentionDump& d) {
  std::filesystem::create_directories(dir);
  const nlohmann::json meta{{"layers", d.layer_count},       {"heads", d.heads},
                            {"grid_h", d.grid_h},             {"grid_w", d.grid_w},
                            {"t_star", d.t_star},             {"total_tokens", d.total_tokens},
                            {"image_token_count", d.image_token_count},
                            {"image_w", d.image_w},           {"image_h", d.image_h},
                            {"dtype", "f32le"},               {"model_id", d.model_id}};
  std::ofstream(dir / "meta.json") << meta.dump(2) << '\n';
  for (int l = 0; l < static_cast<int>(d.layers.size()); ++l) {
    std::ofstream out(dir / layer_file_name(l), std::ios::binary | std::ios::trunc);
    for (float f : d.layers[static_cast<std::size_t>(l)]) {
      std::uint32_t bits = 0;
      std::memcpy(&bits, &f, sizeof bits);
      const char le[4] = {static_cast<char>(bits & 0xff), static_cast<char>((bits >> 8) & 0xff),
                          static_cast<char>((bits >> 16) & 0xff), static_cast<char>((bits >> 24) & 0xff)};
      out.write(le, 4);
    }
    if (!out) throw IoError("cannot write " + (dir / layer_file_name(l)).string());
  }
}

// Mean over heads of one layer's attention row. `layer` is 1-based.
inline std::vector<double> head_average(const AttentionDump& d, int layer) {
  if (layer < 1 || layer > d.layer_count) {
    throw ArgumentError("layer " + std::to_string(layer) + " outside 1.." + std::to_string(d.layer_count));
  }
  std::vector<double> avg(static_cast<std::size_t>(d.image_token_count), 0.0);
  for (int h = 0; h < d.heads; ++h) {
    for (int k = 0; k < d.image_token_count; ++k) avg[static_cast<std::size_t>(k)] += d.at(layer - 1, h, k);
  }
  for (double& v : avg) v /= d.heads;
  return avg;
}

// Row-major reshape to grid_h x grid_w followed by a resize to out_h x out_w.
// Nearest maps output pixel (x, y) to cell (floor(y*grid_h/out_h),
// floor(x*grid_w/out_w)); bilinear samples at pixel centers.
inline AttentionMap reshape_resize(const std::vector<double>& v, int grid_h, int grid_w, int out_h, int out_w,
                                   Interp interp) {
  if (grid_h < 1 || grid_w < 1 || out_h < 1 || out_w < 1) throw ArgumentError("dimensions must be >= 1");
  if (v.size() != static_cast<std::size_t>(grid_h) * grid_w) {
    throw ArgumentError("vector length " + std::to_string(v.size()) + " != " + std::to_string(grid_h) + "x" +
                        std::to_string(grid_w));
  }
  AttentionMap m{out_w, out_h, std::vector<double>(static_cast<std::size_t>(out_w) * out_h)};
  auto cell = [&](int r, int c) { return v[static_cast<std::size_t>(r) * grid_w + c]; };
  for (int y = 0; y < out_h; ++y) {
    for (int x = 0; x < out_w; ++x) {
      double value = 0.0;
      if (interp == Interp::kNearest) {
        const int r = static_cast<int>(static_cast<long long>(y) * grid_h / out_h);
        const int c = static_cast<int>(static_cast<long long>(x) * grid_w / out_w);
        value = cell(r, c);
      } else {
        const double fy = std::clamp((y + 0.5) * grid_h / out_h - 0.5, 0.0, grid_h - 1.0);
        const double fx = std::clamp((x + 0.5) * grid_w / out_w - 0.5, 0.0, grid_w - 1.0);
        const int r0 = static_cast<int>(fy);
        const int c0 = static_cast<int>(fx);
        const int r1 = std::min(r0 + 1, grid_h - 1);
        const int c1 = std::min(c0 + 1, grid_w - 1);
        const double wy = fy - r0;
        const double wx = fx - c0;
        const double top = cell(r0, c0) * (1 - wx) + cell(r0, c1) * wx;
        const double bot = cell(r1, c0) * (1 - wx) + cell(r1, c1) * wx;
        value = top * (1 - wy) + bot * wy;
      }
      m.values[static_cast<std::size_t>(y) * out_w + x] = value;
    }
  }
  return m;
}

// Location of the maximum; ties go to the smallest y, then the smallest x.
inline Point argmax_point(const AttentionMap& m) {
  if (m.values.empty()) throw ArgumentError("argmax of an empty map");
  std::size_t best = 0;
  for (std::size_t i = 1; i < m.values.size(); ++i) {
    if (m.values[i] > m.values[best]) best = i;
  }
  return {static_cast<double>(best % static_cast<std::size_t>(m.width)),
          static_cast<double>(best / static_cast<std::size_t>(m.width))};
}

inline bool layer_hit(const Point& p, const BBox& gt) { return point_in_bbox(p, gt); }

struct PointingGameResult {
  bool hit = false;
  std::vector<bool> per_layer;
  std::vector<Point> per_layer_points;
};

// Union over layers of "argmax of the head-averaged, resized map lies in gt".
inline PointingGameResult pointing_game_score(const AttentionDump& d, const BBox& gt,
                                              Interp interp = Interp::kNearest) {
  PointingGameResult res;
  for (int l = 1; l <= d.layer_count; ++l) {
    const AttentionMap m = reshape_resize(head_average(d, l), d.grid_h, d.grid_w, d.image_h, d.image_w, interp);
    const Point p = argmax_point(m);
    const bool hit = layer_hit(p, gt);
    res.per_layer.push_back(hit);
    res.per_layer_points.push_back(p);
    res.hit = res.hit || hit;
  }
  return res;
}

}  // namespace groundkit
