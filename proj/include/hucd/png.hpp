#pragma once

#include <png.h>

#include <array>
#include <csetjmp>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "hucd/error.hpp"

namespace hucd::png {

struct Gray16 {
  int h = 0, w = 0;
  std::vector<std::uint16_t> pixels;  // row-major
};

namespace detail {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using File = std::unique_ptr<std::FILE, FileCloser>;

inline void on_error(png_structp p, png_const_charp msg) {
  auto* buf = static_cast<std::string*>(png_get_error_ptr(p));
  if (buf) *buf = msg;
  png_longjmp(p, 1);
}
inline void on_warning(png_structp, png_const_charp) {}

}  // namespace detail

/// Reads a single-channel 8- or 16-bit grayscale PNG (8-bit values are widened).
inline Gray16 read_gray16(const std::filesystem::path& path) {
  detail::File f(std::fopen(path.c_str(), "rb"));
  if (!f) throw DataError(hucd::detail::cat("cannot open '", path.string(), "'"));
  std::string err;
  png_structp p = png_create_read_struct(PNG_LIBPNG_VER_STRING, &err, detail::on_error, detail::on_warning);
  png_infop info = p ? png_create_info_struct(p) : nullptr;
  if (!p || !info) {
    png_destroy_read_struct(&p, &info, nullptr);
    throw DataError("libpng: allocation failed");
  }
  Gray16 out;
  std::vector<png_bytep> rows;
  std::vector<unsigned char> raw;
  if (setjmp(png_jmpbuf(p))) {
    png_destroy_read_struct(&p, &info, nullptr);
    throw DataError(hucd::detail::cat("'", path.string(), "': invalid PNG (", err, ")"));
  }
  png_init_io(p, f.get());
  png_read_info(p, info);
  const int color = png_get_color_type(p, info);
  const int depth = png_get_bit_depth(p, info);
  if (color != PNG_COLOR_TYPE_GRAY || (depth != 8 && depth != 16)) {
    png_destroy_read_struct(&p, &info, nullptr);
    throw DataError(hucd::detail::cat("'", path.string(), "': label map must be 8/16-bit grayscale"));
  }
  out.w = static_cast<int>(png_get_image_width(p, info));
  out.h = static_cast<int>(png_get_image_height(p, info));
  const std::size_t stride = png_get_rowbytes(p, info);
  raw.resize(stride * static_cast<std::size_t>(out.h));
  rows.resize(static_cast<std::size_t>(out.h));
  for (int y = 0; y < out.h; ++y) rows[static_cast<std::size_t>(y)] = raw.data() + stride * static_cast<std::size_t>(y);
  png_read_image(p, rows.data());
  png_read_end(p, nullptr);
  png_destroy_read_struct(&p, &info, nullptr);
  out.pixels.resize(static_cast<std::size_t>(out.h) * out.w);
  for (int y = 0; y < out.h; ++y)
    for (int x = 0; x < out.w; ++x) {
      const unsigned char* r = rows[static_cast<std::size_t>(y)];
      const auto i = static_cast<std::size_t>(y) * out.w + x;
      // PNG stores 16-bit samples big-endian.
      out.pixels[i] = depth == 16 ? static_cast<std::uint16_t>((r[2 * x] << 8) | r[2 * x + 1]) : r[x];
    }
  return out;
}

namespace detail {

template <typename Fill>
void write_png(const std::filesystem::path& path, int h, int w, int color, int depth, Fill&& setup,
               const std::vector<unsigned char>& raw, std::size_t stride) {
  File f(std::fopen(path.c_str(), "wb"));
  if (!f) throw DataError(hucd::detail::cat("cannot write '", path.string(), "'"));
  std::string err;
  png_structp p = png_create_write_struct(PNG_LIBPNG_VER_STRING, &err, on_error, on_warning);
  png_infop info = p ? png_create_info_struct(p) : nullptr;
  if (!p || !info) {
    png_destroy_write_struct(&p, &info);
    throw DataError("libpng: allocation failed");
  }
  std::vector<png_bytep> rows(static_cast<std::size_t>(h));
  if (setjmp(png_jmpbuf(p))) {
    png_destroy_write_struct(&p, &info);
    throw DataError(hucd::detail::cat("writing '", path.string(), "' failed (", err, ")"));
  }
  png_init_io(p, f.get());
  png_set_IHDR(p, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), depth, color, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  setup(p, info);
  // No timestamps or text chunks, so identical inputs give identical files.
  png_write_info(p, info);
  for (int y = 0; y < h; ++y)
    rows[static_cast<std::size_t>(y)] = const_cast<unsigned char*>(raw.data()) + stride * static_cast<std::size_t>(y);
  png_write_image(p, rows.data());
  png_write_end(p, nullptr);
  png_destroy_write_struct(&p, &info);
}

}  // namespace detail

inline void write_gray16(const std::filesystem::path& path, const Gray16& img) {
  const std::size_t stride = static_cast<std::size_t>(img.w) * 2;
  std::vector<unsigned char> raw(stride * static_cast<std::size_t>(img.h));
  for (std::size_t i = 0; i < img.pixels.size(); ++i) {
    raw[2 * i] = static_cast<unsigned char>(img.pixels[i] >> 8);
    raw[2 * i + 1] = static_cast<unsigned char>(img.pixels[i] & 0xff);
  }
  detail::write_png(path, img.h, img.w, PNG_COLOR_TYPE_GRAY, 16, [](png_structp, png_infop) {}, raw, stride);
}

using Rgb = std::array<std::uint8_t, 3>;

/// Indexed-color image; `index` holds palette entries row-major.
inline void write_indexed(const std::filesystem::path& path, int h, int w, const std::vector<std::uint8_t>& index,
                          const std::vector<Rgb>& palette) {
  if (palette.empty() || palette.size() > 256) throw ArgumentError("write_indexed: palette must hold 1..256 colors");
  if (index.size() != static_cast<std::size_t>(h) * w) throw ArgumentError("write_indexed: index size mismatch");
  for (auto v : index)
    if (v >= palette.size()) throw ArgumentError("write_indexed: index outside palette");
  std::vector<png_color> pal(palette.size());
  for (std::size_t i = 0; i < palette.size(); ++i) pal[i] = {palette[i][0], palette[i][1], palette[i][2]};
  const std::vector<unsigned char> raw(index.begin(), index.end());
  detail::write_png(
      path, h, w, PNG_COLOR_TYPE_PALETTE, 8,
      [&](png_structp p, png_infop info) { png_set_PLTE(p, info, pal.data(), static_cast<int>(pal.size())); }, raw,
      static_cast<std::size_t>(w));
}

}  // namespace hucd::png
