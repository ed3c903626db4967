// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include <png.h>

#include "anytsr/core/errors.hpp"
#include "anytsr/imaging/image.hpp"

namespace anytsr {

namespace detail {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

inline ImageGray finish_load(std::vector<uint16_t>&& raw, int64_t h, int64_t w,
                             int bit_depth, const std::string& path) {
  const double maxv = bit_depth == 16 ? 65535.0 : 255.0;
  ImageGray img(h, w);
  for (size_t i = 0; i < raw.size(); ++i)
    img.values[i] = static_cast<double>(raw[i]) / maxv;
  if (h < 3 || w < 3)
    throw DataError("image too small (need >= 3x3): " + path);
  return img;
}

// ------------------------------------------------------------------- PGM P5

inline int pgm_token(std::FILE* f, char* buf, size_t cap) {
  int c = std::fgetc(f);
  while (c != EOF && (std::isspace(c) || c == '#')) {
    if (c == '#')
      while (c != EOF && c != '\n') c = std::fgetc(f);
    c = std::fgetc(f);
  }
  size_t n = 0;
  while (c != EOF && !std::isspace(c) && n + 1 < cap) {
    buf[n++] = static_cast<char>(c);
    c = std::fgetc(f);
  }
  buf[n] = 0;
  return n > 0 ? 0 : -1;
}

inline ImageGray load_pgm(const std::string& path) {
  FilePtr f(std::fopen(path.c_str(), "rb"));
  if (!f) throw DataError("cannot open file: " + path);
  char tok[64];
  if (pgm_token(f.get(), tok, sizeof tok) != 0 || std::strcmp(tok, "P5") != 0)
    throw DataError("not a binary PGM (P5): " + path);
  if (pgm_token(f.get(), tok, sizeof tok) != 0) throw DataError("bad PGM header: " + path);
  const int64_t w = std::atoll(tok);
  if (pgm_token(f.get(), tok, sizeof tok) != 0) throw DataError("bad PGM header: " + path);
  const int64_t h = std::atoll(tok);
  if (pgm_token(f.get(), tok, sizeof tok) != 0) throw DataError("bad PGM header: " + path);
  const int64_t maxval = std::atoll(tok);
  if (w < 1 || h < 1 || maxval < 1 || maxval > 65535)
    throw DataError("bad PGM dimensions/maxval: " + path);
  const int bit_depth = maxval > 255 ? 16 : 8;
  std::vector<uint16_t> raw(static_cast<size_t>(h * w));
  if (bit_depth == 8) {
    std::vector<uint8_t> bytes(raw.size());
    if (std::fread(bytes.data(), 1, bytes.size(), f.get()) != bytes.size())
      throw DataError("truncated PGM data: " + path);
    for (size_t i = 0; i < raw.size(); ++i) raw[i] = bytes[i];
  } else {
    std::vector<uint8_t> bytes(raw.size() * 2);
    if (std::fread(bytes.data(), 1, bytes.size(), f.get()) != bytes.size())
      throw DataError("truncated PGM data: " + path);
    for (size_t i = 0; i < raw.size(); ++i)
      raw[i] = static_cast<uint16_t>((bytes[2 * i] << 8) | bytes[2 * i + 1]);
  }
  // normalize by the max representable value of the stored bit depth
  const int64_t full = bit_depth == 16 ? 65535 : 255;
  if (maxval != full)
    for (auto& v : raw)
      v = static_cast<uint16_t>(static_cast<int64_t>(v) * full / maxval);
  return finish_load(std::move(raw), h, w, bit_depth, path);
}

inline void save_pgm(const std::string& path, const ImageGray& img, int bit_depth) {
  FilePtr f(std::fopen(path.c_str(), "wb"));
  if (!f) throw DataError("cannot write file: " + path);
  const int64_t maxv = bit_depth == 16 ? 65535 : 255;
  std::fprintf(f.get(), "P5\n%lld %lld\n%lld\n", static_cast<long long>(img.width),
               static_cast<long long>(img.height), static_cast<long long>(maxv));
  if (bit_depth == 8) {
    std::vector<uint8_t> bytes(static_cast<size_t>(img.numel()));
    for (size_t i = 0; i < bytes.size(); ++i)
      bytes[i] = static_cast<uint8_t>(
          std::lround(std::min(1.0, std::max(0.0, img.values[i])) * 255.0));
    std::fwrite(bytes.data(), 1, bytes.size(), f.get());
  } else {
    std::vector<uint8_t> bytes(static_cast<size_t>(img.numel()) * 2);
    for (size_t i = 0; i < static_cast<size_t>(img.numel()); ++i) {
      const uint16_t v = static_cast<uint16_t>(
          std::lround(std::min(1.0, std::max(0.0, img.values[i])) * 65535.0));
      bytes[2 * i] = static_cast<uint8_t>(v >> 8);
      bytes[2 * i + 1] = static_cast<uint8_t>(v & 0xff);
    }
    std::fwrite(bytes.data(), 1, bytes.size(), f.get());
  }
}

// -------------------------------------------------------------------- PNG

inline ImageGray load_png(const std::string& path) {
  FilePtr f(std::fopen(path.c_str(), "rb"));
  if (!f) throw DataError("cannot open file: " + path);
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw DataError("libpng init failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw DataError("libpng init failed");
  }
  std::vector<uint16_t> raw;
  int64_t w = 0, h = 0;
  int bit_depth = 8;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw DataError("corrupt or unreadable PNG: " + path);
  }
  png_init_io(png, f.get());
  png_read_info(png, info);
  const int color = png_get_color_type(png, info);
  bit_depth = png_get_bit_depth(png, info);
  if (color != PNG_COLOR_TYPE_GRAY) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw DataError("multi-channel PNG rejected (single-channel thermal only): " + path);
  }
  if (bit_depth < 8) {
    png_set_expand_gray_1_2_4_to_8(png);
    bit_depth = 8;
  }
  w = static_cast<int64_t>(png_get_image_width(png, info));
  h = static_cast<int64_t>(png_get_image_height(png, info));
  raw.assign(static_cast<size_t>(h * w), 0);
  std::vector<png_bytep> rows(static_cast<size_t>(h));
  std::vector<uint8_t> buf;
  const size_t stride = static_cast<size_t>(w) * (bit_depth == 16 ? 2 : 1);
  buf.resize(static_cast<size_t>(h) * stride);
  for (int64_t y = 0; y < h; ++y)
    rows[static_cast<size_t>(y)] = buf.data() + static_cast<size_t>(y) * stride;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  if (bit_depth == 16) {
    for (size_t i = 0; i < raw.size(); ++i)
      raw[i] = static_cast<uint16_t>((buf[2 * i] << 8) | buf[2 * i + 1]);  // PNG is BE
  } else {
    for (size_t i = 0; i < raw.size(); ++i) raw[i] = buf[i];
  }
  return finish_load(std::move(raw), h, w, bit_depth, path);
}

inline void save_png(const std::string& path, const ImageGray& img, int bit_depth) {
  FilePtr f(std::fopen(path.c_str(), "wb"));
  if (!f) throw DataError("cannot write file: " + path);
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw DataError("libpng init failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw DataError("libpng init failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw DataError("PNG write failed: " + path);
  }
  png_init_io(png, f.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.width),
               static_cast<png_uint_32>(img.height), bit_depth, PNG_COLOR_TYPE_GRAY,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  const size_t stride = static_cast<size_t>(img.width) * (bit_depth == 16 ? 2 : 1);
  std::vector<uint8_t> buf(static_cast<size_t>(img.height) * stride);
  for (size_t i = 0; i < static_cast<size_t>(img.numel()); ++i) {
    const double v = std::min(1.0, std::max(0.0, img.values[i]));
    if (bit_depth == 16) {
      const uint16_t q = static_cast<uint16_t>(std::lround(v * 65535.0));
      buf[2 * i] = static_cast<uint8_t>(q >> 8);
      buf[2 * i + 1] = static_cast<uint8_t>(q & 0xff);
    } else {
      buf[i] = static_cast<uint8_t>(std::lround(v * 255.0));
    }
  }
  std::vector<png_bytep> rows(static_cast<size_t>(img.height));
  for (int64_t y = 0; y < img.height; ++y)
    rows[static_cast<size_t>(y)] = buf.data() + static_cast<size_t>(y) * stride;
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace detail

// Loads an 8/16-bit single-channel PNG or PGM (P5); values scaled to [0,1]
// by the max representable value of the bit depth.
inline ImageGray load_image(const std::string& path) {
  FILE* probe = std::fopen(path.c_str(), "rb");
  if (!probe) throw DataError("cannot open file: " + path);
  unsigned char magic[2] = {0, 0};
  const size_t got = std::fread(magic, 1, 2, probe);
  std::fclose(probe);
  if (got == 2 && magic[0] == 'P' && magic[1] == '5') return detail::load_pgm(path);
  if (got == 2 && magic[0] == 0x89 && magic[1] == 'P') return detail::load_png(path);
  throw DataError("unsupported image format (need PNG or binary PGM): " + path);
}

// Saves by extension (.png or .pgm), 16-bit by default.
inline void save_image(const std::string& path, const ImageGray& img, int bit_depth = 16) {
  const auto ext = std::filesystem::path(path).extension().string();
  if (ext == ".pgm")
    detail::save_pgm(path, img, bit_depth);
  else if (ext == ".png")
    detail::save_png(path, img, bit_depth);
  else
    throw DataError("unsupported output extension (use .png or .pgm): " + path);
}

// Dataset directory layout: <root>/train/*.png|pgm and <root>/test/*.png|pgm.
inline std::vector<std::string> list_images(const std::string& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw DataError("dataset directory not found: " + dir);
  std::vector<std::string> paths;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    const auto ext = e.path().extension().string();
    if (ext == ".png" || ext == ".pgm") paths.push_back(e.path().string());
  }
  std::sort(paths.begin(), paths.end());
  return paths;
}

inline std::vector<ImageGray> load_image_dir(const std::string& dir) {
  std::vector<ImageGray> out;
  for (const auto& p : list_images(dir)) out.push_back(load_image(p));
  if (out.empty()) throw DataError("no .png/.pgm images found in: " + dir);
  return out;
}

}  // namespace anytsr
