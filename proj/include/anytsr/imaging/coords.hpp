// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "anytsr/core/errors.hpp"

namespace anytsr {

// Center-aligned grid over [-1,1]^2: cell (i,j) has center
// y = -1 + (2i+1)/h, x = -1 + (2j+1)/w.
struct CoordGrid {
  int64_t height = 0;
  int64_t width = 0;
  std::vector<double> ys;  // per-row centers
  std::vector<double> xs;  // per-col centers
};

inline double cell_center(int64_t i, int64_t n) {
  return -1.0 + (2.0 * static_cast<double>(i) + 1.0) / static_cast<double>(n);
}

inline CoordGrid make_coord_grid(int64_t h, int64_t w) {
  if (h < 1 || w < 1) throw DataError("make_coord_grid: dims must be >= 1");
  CoordGrid g;
  g.height = h;
  g.width = w;
  g.ys.resize(static_cast<size_t>(h));
  g.xs.resize(static_cast<size_t>(w));
  for (int64_t i = 0; i < h; ++i) g.ys[static_cast<size_t>(i)] = cell_center(i, h);
  for (int64_t j = 0; j < w; ++j) g.xs[static_cast<size_t>(j)] = cell_center(j, w);
  return g;
}

// Flat (y, x) query list in raster order.
struct CoordList {
  std::vector<double> ys;
  std::vector<double> xs;
  int64_t size() const { return static_cast<int64_t>(ys.size()); }
};

inline CoordList flatten_grid(const CoordGrid& g) {
  CoordList c;
  c.ys.reserve(static_cast<size_t>(g.height * g.width));
  c.xs.reserve(static_cast<size_t>(g.height * g.width));
  for (int64_t i = 0; i < g.height; ++i)
    for (int64_t j = 0; j < g.width; ++j) {
      c.ys.push_back(g.ys[static_cast<size_t>(i)]);
      c.xs.push_back(g.xs[static_cast<size_t>(j)]);
    }
  return c;
}

}  // namespace anytsr
