#pragma once

#include <png.h>

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "groundkit/errors.hpp"
#include "groundkit/hash.hpp"

namespace groundkit {

struct Rgb {
  std::uint8_t r = 0;
  std::uint8_t g = 0;
  std::uint8_t b = 0;

  friend bool operator==(const Rgb&, const Rgb&) = default;
};

namespace colors {
inline constexpr Rgb kBlack{0, 0, 0};
inline constexpr Rgb kWhite{255, 255, 255};
inline constexpr Rgb kRed{230, 0, 0};
}  // namespace colors

// Row-major RGB8 pixel buffer.
class RasterImage {
 public:
  RasterImage() = default;
  RasterImage(int width, int height, Rgb fill = colors::kWhite) : width_(width), height_(height) {
    if (width < 1 || height < 1) {
      throw ArgumentError("image dimensions must be >= 1, got " + std::to_string(width) + "x" +
                          std::to_string(height));
    }
    pixels_.resize(static_cast<std::size_t>(width) * height * 3);
    for (std::size_t i = 0; i < pixels_.size(); i += 3) {
      pixels_[i] = fill.r;
      pixels_[i + 1] = fill.g;
      pixels_[i + 2] = fill.b;
    }
  }
  RasterImage(int width, int height, std::vector<std::uint8_t> pixels)
      : width_(width), height_(height), pixels_(std::move(pixels)) {
    if (width < 1 || height < 1 ||
        pixels_.size() != static_cast<std::size_t>(width) * height * 3) {
      throw ArgumentError("pixel buffer does not match " + std::to_string(width) + "x" +
                          std::to_string(height) + "x3");
    }
  }

  int width() const { return width_; }
  int height() const { return height_; }
  bool empty() const { return pixels_.empty(); }
  std::span<const std::uint8_t> bytes() const { return pixels_; }

  bool contains(int x, int y) const { return x >= 0 && y >= 0 && x < width_ && y < height_; }

  Rgb at(int x, int y) const {
    const std::size_t i = index(x, y);
    return {pixels_[i], pixels_[i + 1], pixels_[i + 2]};
  }

  void set(int x, int y, Rgb c) {
    const std::size_t i = index(x, y);
    pixels_[i] = c.r;
    pixels_[i + 1] = c.g;
    pixels_[i + 2] = c.b;
  }

  // Fills [x0, x1) x [y0, y1) intersected with the frame.
  void fill_rect(int x0, int y0, int x1, int y1, Rgb c) {
    x0 = std::max(x0, 0);
    y0 = std::max(y0, 0);
    x1 = std::min(x1, width_);
    y1 = std::min(y1, height_);
    for (int y = y0; y < y1; ++y) {
      for (int x = x0; x < x1; ++x) set(x, y, c);
    }
  }

  // SHA-256 over dimensions and pixel bytes.
  std::string digest() const {
    Sha256 h;
    h.field(std::to_string(width_) + "x" + std::to_string(height_));
    h.update(std::span<const std::uint8_t>(pixels_));
    return h.hex();
  }

  friend bool operator==(const RasterImage&, const RasterImage&) = default;

 private:
  std::size_t index(int x, int y) const {
    return (static_cast<std::size_t>(y) * width_ + x) * 3;
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> pixels_;
};

// Copies the integer rectangle [x0, x1) x [y0, y1) out of `img`.
inline RasterImage crop_pixels(const RasterImage& img, int x0, int y0, int x1, int y1) {
  RasterImage out(x1 - x0, y1 - y0);
  for (int y = y0; y < y1; ++y) {
    for (int x = x0; x < x1; ++x) out.set(x - x0, y - y0, img.at(x, y));
  }
  return out;
}

// Bilinear resample where destination pixel centers map to source through a
// single uniform `scale` (dst = src * scale), so both axes share one factor.
inline RasterImage resize_uniform(const RasterImage& src, int out_w, int out_h, double scale) {
  RasterImage out(out_w, out_h);
  const int sw = src.width();
  const int sh = src.height();
  for (int y = 0; y < out_h; ++y) {
    const double fy = std::clamp((y + 0.5) / scale - 0.5, 0.0, static_cast<double>(sh - 1));
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, sh - 1);
    const double wy = fy - y0;
    for (int x = 0; x < out_w; ++x) {
      const double fx = std::clamp((x + 0.5) / scale - 0.5, 0.0, static_cast<double>(sw - 1));
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, sw - 1);
      const double wx = fx - x0;
      const Rgb a = src.at(x0, y0), b = src.at(x1, y0), c = src.at(x0, y1), d = src.at(x1, y1);
      auto mix = [&](std::uint8_t pa, std::uint8_t pb, std::uint8_t pc, std::uint8_t pd) {
        const double top = pa + (pb - pa) * wx;
        const double bot = pc + (pd - pc) * wx;
        return static_cast<std::uint8_t>(std::lround(top + (bot - top) * wy));
      };
      out.set(x, y, {mix(a.r, b.r, c.r, d.r), mix(a.g, b.g, c.g, d.g), mix(a.b, b.b, c.b, d.b)});
    }
  }
  return out;
}

namespace png_detail {

inline void on_error(png_structp png, png_const_charp msg) {
  auto* err = static_cast<std::string*>(png_get_error_ptr(png));
  if (err) *err = msg;
  std::longjmp(png_jmpbuf(png), 1);
}

inline void on_warning(png_structp, png_const_charp) {}

struct ReadCursor {
  const std::uint8_t* data;
  std::size_t size;
  std::size_t pos;
};

inline void read_from_memory(png_structp png, png_bytep out, png_size_t n) {
  auto* cur = static_cast<ReadCursor*>(png_get_io_ptr(png));
  if (cur->pos + n > cur->size) png_error(png, "unexpected end of PNG data");
  std::memcpy(out, cur->data + cur->pos, n);
  cur->pos += n;
}

inline void write_to_vector(png_structp png, png_bytep in, png_size_t n) {
  auto* out = static_cast<std::vector<std::uint8_t>*>(png_get_io_ptr(png));
  out->insert(out->end(), in, in + n);
}

inline void flush_noop(png_structp) {}

}  // namespace png_detail

// Encodes as 8-bit RGB PNG. Output is deterministic for identical pixels.
inline std::vector<std::uint8_t> encode_png(const RasterImage& img) {
  std::vector<std::uint8_t> out;
  std::string err;
  png_structp png =
      png_create_write_struct(PNG_LIBPNG_VER_STRING, &err, png_detail::on_error, png_detail::on_warning);
  if (!png) throw IoError("png: cannot allocate write struct");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw IoError("png: cannot allocate info struct");
  }
  std::vector<png_bytep> rows(static_cast<std::size_t>(img.height()));
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("png encode failed: " + err);
  }
  png_set_write_fn(png, &out, png_detail::write_to_vector, png_detail::flush_noop);
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.width()), static_cast<png_uint_32>(img.height()),
               8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  auto* base = const_cast<std::uint8_t*>(img.bytes().data());
  for (int y = 0; y < img.height(); ++y) {
    rows[static_cast<std::size_t>(y)] = base + static_cast<std::size_t>(y) * img.width() * 3;
  }
  png_write_info(png, info);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return out;
}

// Decodes any PNG into RGB8: palette, gray and 16-bit inputs are expanded,
// alpha is composited onto white.
inline RasterImage decode_png(std::span<const std::uint8_t> data) {
  if (data.size() < 8 || png_sig_cmp(data.data(), 0, 8) != 0) {
    throw FormatError("not a PNG stream");
  }
  std::string err;
  png_structp png =
      png_create_read_struct(PNG_LIBPNG_VER_STRING, &err, png_detail::on_error, png_detail::on_warning);
  if (!png) throw IoError("png: cannot allocate read struct");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw IoError("png: cannot allocate info struct");
  }
  png_detail::ReadCursor cursor{data.data(), data.size(), 0};
  std::vector<std::uint8_t> pixels;
  std::vector<png_bytep> rows;
  png_uint_32 w = 0;
  png_uint_32 h = 0;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw FormatError("png decode failed: " + err);
  }
  png_set_read_fn(png, &cursor, png_detail::read_from_memory);
  png_read_info(png, info);
  w = png_get_image_width(png, info);
  h = png_get_image_height(png, info);
  const int color = png_get_color_type(png, info);
  if (png_get_bit_depth(png, info) == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA) {
    png_set_expand_gray_1_2_4_to_8(png);
    png_set_gray_to_rgb(png);
  }
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  png_color_16 white{0, 0xffff, 0xffff, 0xffff, 0xffff};
  png_set_background(png, &white, PNG_BACKGROUND_GAMMA_SCREEN, 0, 1.0);
  png_read_update_info(png, info);
  if (png_get_channels(png, info) != 3) png_error(png, "unsupported channel layout");
  pixels.resize(static_cast<std::size_t>(w) * h * 3);
  rows.resize(h);
  for (png_uint_32 y = 0; y < h; ++y) rows[y] = pixels.data() + static_cast<std::size_t>(y) * w * 3;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return RasterImage(static_cast<int>(w), static_cast<int>(h), std::move(pixels));
}

inline std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("short write to " + path.string());
}

inline RasterImage read_png(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  try {
    return decode_png(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

inline void write_png(const std::filesystem::path& path, const RasterImage& img) {
  write_file_bytes(path, encode_png(img));
}

}  // namespace groundkit
