#pragma once

// Brute-force references shared by the unit tests and the acceptance run.

#include <cmath>
#include <random>
#include <vector>

#include "groundkit/geometry.hpp"
#include "groundkit/pointing_game.hpp"

namespace oracles {

using groundkit::AttentionDump;
using groundkit::BBox;

// Nearest integer to j*extent/count, halves up, in long double.
inline int boundary(int j, int extent, int count) {
  return static_cast<int>(std::floor(static_cast<long double>(j) * extent / count + 0.5L));
}

// Random dump whose head rows are scaled softmax-like distributions. With
// `quantized`, values snap to 1/32 steps so ties are common.
inline AttentionDump random_dump(std::mt19937& rng, bool quantized) {
  AttentionDump d;
  d.layer_count = std::uniform_int_distribution<int>(1, 4)(rng);
  d.heads = std::uniform_int_distribution<int>(1, 4)(rng);
  d.grid_h = std::uniform_int_distribution<int>(1, 8)(rng);
  d.grid_w = std::uniform_int_distribution<int>(1, 8)(rng);
  d.image_token_count = d.grid_h * d.grid_w;
  d.total_tokens = d.image_token_count + std::uniform_int_distribution<int>(1, 40)(rng);
  d.t_star = d.total_tokens - 1;
  d.image_w = std::uniform_int_distribution<int>(d.grid_w, 160)(rng);
  d.image_h = std::uniform_int_distribution<int>(d.grid_h, 160)(rng);
  d.model_id = "synthetic";
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int l = 0; l < d.layer_count; ++l) {
    std::vector<float> layer;
    for (int h = 0; h < d.heads; ++h) {
      std::vector<double> row(static_cast<std::size_t>(d.image_token_count));
      double sum = 0;
      for (double& v : row) sum += (v = std::exp(4.0 * u(rng)));
      const double mass = 0.2 + 0.8 * u(rng);
      for (double v : row) {
        double a = v / sum * mass;
        if (quantized) a = std::floor(a * 32.0) / 32.0;
        layer.push_back(static_cast<float>(a));
      }
    }
    d.layers.push_back(std::move(layer));
  }
  return d;
}

// Monolithic reference: materializes the full 4-D slice, every resized map
// and the union in one pass, without calling any pipeline stage.
inline bool reference_hit(const AttentionDump& d, const BBox& gt) {
  const int L = d.layer_count, H = d.heads, gh = d.grid_h, gw = d.grid_w;
  std::vector<std::vector<std::vector<std::vector<double>>>> A(
      L, std::vector<std::vector<std::vector<double>>>(H, std::vector<std::vector<double>>(gh, std::vector<double>(gw))));
  for (int l = 0; l < L; ++l) {
    for (int h = 0; h < H; ++h) {
      for (int r = 0; r < gh; ++r) {
        for (int c = 0; c < gw; ++c) A[l][h][r][c] = d.layers[l][static_cast<std::size_t>(h * gh * gw + r * gw + c)];
      }
    }
  }
  bool any = false;
  for (int l = 0; l < L; ++l) {
    double best = -1.0;
    int bx = 0, by = 0;
    for (int y = 0; y < d.image_h; ++y) {
      // source row: the last r with r * image_h <= y * grid_h
      int r = 0;
      while (r + 1 < gh && (r + 1) * d.image_h <= y * gh) ++r;
      for (int x = 0; x < d.image_w; ++x) {
        int c = 0;
        while (c + 1 < gw && (c + 1) * d.image_w <= x * gw) ++c;
        double mean = 0.0;
        for (int h = 0; h < H; ++h) mean += A[l][h][r][c];
        mean /= H;
        if (mean > best) {
          best = mean;
          bx = x;
          by = y;
        }
      }
    }
    any = any || (gt.left <= bx && bx <= gt.right && gt.top <= by && by <= gt.bottom);
  }
  return any;
}

}  // namespace oracles
