// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "anytsr/core/errors.hpp"

namespace anytsr {

// Single-channel raster, values in [0,1], row-major, double precision.
struct ImageGray {
  int64_t height = 0;
  int64_t width = 0;
  std::vector<double> values;

  ImageGray() = default;
  ImageGray(int64_t h, int64_t w) : height(h), width(w) {
    values.assign(static_cast<size_t>(h * w), 0.0);
  }

  double& at(int64_t y, int64_t x) { return values[static_cast<size_t>(y * width + x)]; }
  double at(int64_t y, int64_t x) const {
    return values[static_cast<size_t>(y * width + x)];
  }

  int64_t numel() const { return height * width; }

  void clip01() {
    for (double& v : values) v = std::min(1.0, std::max(0.0, v));
  }

  bool in_unit_range() const {
    for (double v : values)
      if (!std::isfinite(v) || v < 0.0 || v > 1.0) return false;
    return true;
  }

  double mean() const {
    double s = 0;
    for (double v : values) s += v;
    return s / static_cast<double>(numel());
  }

  double stddev() const {
    const double m = mean();
    double s = 0;
    for (double v : values) s += (v - m) * (v - m);
    return std::sqrt(s / static_cast<double>(numel()));
  }
};

inline ImageGray crop(const ImageGray& img, int64_t top, int64_t left, int64_t ch,
                      int64_t cw) {
  if (top < 0 || left < 0 || top + ch > img.height || left + cw > img.width)
    throw DataError("crop window outside image bounds");
  ImageGray out(ch, cw);
  for (int64_t y = 0; y < ch; ++y)
    for (int64_t x = 0; x < cw; ++x) out.at(y, x) = img.at(top + y, left + x);
  return out;
}

}  // namespace anytsr
