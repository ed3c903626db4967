// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "anytsr/core/errors.hpp"
#include "anytsr/imaging/image.hpp"

namespace anytsr {

// Cubic convolution kernel with a = -0.5 (Catmull-Rom family), the dominant
// "bicubic" convention. Support [-2, 2], partition of unity on 4 taps.
inline double cubic_kernel(double t) {
  constexpr double a = -0.5;
  const double at = std::abs(t);
  if (at <= 1.0) return ((a + 2.0) * at - (a + 3.0)) * at * at + 1.0;
  if (at < 2.0) return ((a * at - 5.0 * a) * at + 8.0 * a) * at - 4.0 * a;
  return 0.0;
}

namespace detail {

// Per-axis tap positions and weights, half-pixel aligned, indices clamped.
struct Taps {
  std::vector<int64_t> idx;   // 4 per output cell
  std::vector<double> w;
};

inline Taps make_taps(int64_t in_n, int64_t out_n) {
  Taps t;
  t.idx.resize(static_cast<size_t>(out_n * 4));
  t.w.resize(static_cast<size_t>(out_n * 4));
  const double ratio = static_cast<double>(in_n) / static_cast<double>(out_n);
  for (int64_t o = 0; o < out_n; ++o) {
    const double src = (static_cast<double>(o) + 0.5) * ratio - 0.5;
    const int64_t base = static_cast<int64_t>(std::floor(src));
    for (int64_t k = 0; k < 4; ++k) {
      const int64_t raw = base - 1 + k;
      t.idx[static_cast<size_t>(o * 4 + k)] =
          std::min<int64_t>(in_n - 1, std::max<int64_t>(0, raw));
      t.w[static_cast<size_t>(o * 4 + k)] = cubic_kernel(src - static_cast<double>(raw));
    }
  }
  return t;
}

}  // namespace detail

// Separable bicubic resampling to (out_h, out_w); no value clipping.
inline ImageGray bicubic_resample_raw(const ImageGray& img, int64_t out_h,
                                      int64_t out_w) {
  if (out_h < 1 || out_w < 1) throw DataError("bicubic_resample: output dims must be >= 1");
  const detail::Taps tx = detail::make_taps(img.width, out_w);
  const detail::Taps ty = detail::make_taps(img.height, out_h);

  // horizontal pass
  ImageGray mid(img.height, out_w);
  for (int64_t y = 0; y < img.height; ++y)
    for (int64_t x = 0; x < out_w; ++x) {
      double acc = 0;
      for (int64_t k = 0; k < 4; ++k)
        acc += tx.w[static_cast<size_t>(x * 4 + k)] *
               img.at(y, tx.idx[static_cast<size_t>(x * 4 + k)]);
      mid.at(y, x) = acc;
    }
  // vertical pass
  ImageGray out(out_h, out_w);
  for (int64_t y = 0; y < out_h; ++y)
    for (int64_t x = 0; x < out_w; ++x) {
      double acc = 0;
      for (int64_t k = 0; k < 4; ++k)
        acc += ty.w[static_cast<size_t>(y * 4 + k)] *
               mid.at(ty.idx[static_cast<size_t>(y * 4 + k)], x);
      out.at(y, x) = acc;
    }
  return out;
}

// Public resample: clipped to [0,1] so PSNR's peak stays well-defined.
inline ImageGray bicubic_resample(const ImageGray& img, int64_t out_h, int64_t out_w) {
  ImageGray out = bicubic_resample_raw(img, out_h, out_w);
  out.clip01();
  return out;
}

}  // namespace anytsr
