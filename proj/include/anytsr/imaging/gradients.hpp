// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "anytsr/core/errors.hpp"
#include "anytsr/imaging/image.hpp"

namespace anytsr {

// First-order Sobel (x, y) and 4-neighbour Laplacian responses of an image,
// replicate-padded so constant borders produce no spurious edges.
struct GradientStack {
  int64_t height = 0;
  int64_t width = 0;
  std::vector<double> gx;   // Sobel x: [[-1,0,1],[-2,0,2],[-1,0,1]]
  std::vector<double> gy;   // Sobel y (transpose)
  std::vector<double> lap;  // [[0,1,0],[1,-4,1],[0,1,0]]
};

inline GradientStack gradients(const ImageGray& img) {
  if (img.height < 3 || img.width < 3)
    throw DataError("gradients: image smaller than the 3x3 kernel support");
  const int64_t h = img.height, w = img.width;
  GradientStack gs;
  gs.height = h;
  gs.width = w;
  gs.gx.resize(static_cast<size_t>(h * w));
  gs.gy.resize(static_cast<size_t>(h * w));
  gs.lap.resize(static_cast<size_t>(h * w));
  auto px = [&](int64_t y, int64_t x) {
    y = std::min<int64_t>(h - 1, std::max<int64_t>(0, y));
    x = std::min<int64_t>(w - 1, std::max<int64_t>(0, x));
    return img.at(y, x);
  };
  for (int64_t y = 0; y < h; ++y)
    for (int64_t x = 0; x < w; ++x) {
      const double p00 = px(y - 1, x - 1), p01 = px(y - 1, x), p02 = px(y - 1, x + 1);
      const double p10 = px(y, x - 1), p11 = px(y, x), p12 = px(y, x + 1);
      const double p20 = px(y + 1, x - 1), p21 = px(y + 1, x), p22 = px(y + 1, x + 1);
      const size_t i = static_cast<size_t>(y * w + x);
      gs.gx[i] = (p02 + 2.0 * p12 + p22) - (p00 + 2.0 * p10 + p20);
      gs.gy[i] = (p20 + 2.0 * p21 + p22) - (p00 + 2.0 * p01 + p02);
      gs.lap[i] = p01 + p10 + p12 + p21 - 4.0 * p11;
    }
  return gs;
}

}  // namespace anytsr
