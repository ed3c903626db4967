// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "anytsr/core/errors.hpp"
#include "anytsr/core/rng.hpp"
#include "anytsr/imaging/image.hpp"
#include "anytsr/imaging/resample.hpp"

namespace anytsr {

// Thermal-like synthetic content: a smooth low-frequency field plus
// hard-edged rectangles and line segments (hot/cold structures) and mild
// noise. Deterministic per (seed, index).
inline ImageGray synth_image(int64_t size, Rng& rng) {
  ImageGray img(size, size);

  // smooth base: bicubically upsampled coarse random grid
  const int64_t coarse = 4 + rng.uniform_int(4);  // 4..7
  ImageGray base(coarse, coarse);
  for (double& v : base.values) v = rng.uniform(0.2, 0.8);
  ImageGray smooth = bicubic_resample_raw(base, size, size);

  // one or two broad gaussian hot spots
  const int64_t nblobs = 1 + rng.uniform_int(2);
  for (int64_t b = 0; b < nblobs; ++b) {
    const double cy = rng.uniform(0.2, 0.8) * static_cast<double>(size);
    const double cx = rng.uniform(0.2, 0.8) * static_cast<double>(size);
    const double rad = rng.uniform(0.12, 0.3) * static_cast<double>(size);
    const double amp = rng.uniform(-0.25, 0.35);
    for (int64_t y = 0; y < size; ++y)
      for (int64_t x = 0; x < size; ++x) {
        const double d2 = (y - cy) * (y - cy) + (x - cx) * (x - cx);
        smooth.at(y, x) += amp * std::exp(-d2 / (2.0 * rad * rad));
      }
  }

  // hard-edged rectangles
  const int64_t nrect = 2 + rng.uniform_int(4);
  for (int64_t r = 0; r < nrect; ++r) {
    const int64_t rh = 4 + rng.uniform_int(size / 3);
    const int64_t rw = 4 + rng.uniform_int(size / 3);
    const int64_t top = rng.uniform_int(size - rh);
    const int64_t left = rng.uniform_int(size - rw);
    const double amp = (rng.uniform() < 0.5 ? -1.0 : 1.0) * rng.uniform(0.15, 0.4);
    for (int64_t y = top; y < top + rh; ++y)
      for (int64_t x = left; x < left + rw; ++x) smooth.at(y, x) += amp;
  }

  // thin line segments
  const int64_t nlines = 1 + rng.uniform_int(3);
  for (int64_t l = 0; l < nlines; ++l) {
    const double y0 = rng.uniform(0.0, static_cast<double>(size - 1));
    const double x0 = rng.uniform(0.0, static_cast<double>(size - 1));
    const double y1 = rng.uniform(0.0, static_cast<double>(size - 1));
    const double x1 = rng.uniform(0.0, static_cast<double>(size - 1));
    const double amp = (rng.uniform() < 0.5 ? -1.0 : 1.0) * rng.uniform(0.15, 0.35);
    const int64_t thick = 1 + rng.uniform_int(2);
    const int64_t steps = 2 * size;
    for (int64_t s = 0; s <= steps; ++s) {
      const double f = static_cast<double>(s) / static_cast<double>(steps);
      const int64_t y = static_cast<int64_t>(std::lround(y0 + f * (y1 - y0)));
      const int64_t x = static_cast<int64_t>(std::lround(x0 + f * (x1 - x0)));
      for (int64_t dy = 0; dy < thick; ++dy)
        for (int64_t dx = 0; dx < thick; ++dx) {
          const int64_t yy = y + dy, xx = x + dx;
          if (yy >= 0 && yy < size && xx >= 0 && xx < size) {
            double& v = smooth.at(yy, xx);
            // lines overwrite rather than accumulate along their own path
            v = 0.5 * v + 0.5 * (0.5 + amp);
          }
        }
    }
  }

  // mild sensor noise
  for (double& v : smooth.values) v += 0.004 * rng.gaussian();

  // squash into [0.02, 0.98] around the running range, then clip
  double lo = smooth.values[0], hi = smooth.values[0];
  for (double v : smooth.values) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  const double span = std::max(1e-9, hi - lo);
  for (size_t i = 0; i < smooth.values.size(); ++i)
    img.values[i] = 0.02 + 0.96 * (smooth.values[i] - lo) / span;
  img.clip01();
  return img;
}

inline std::vector<ImageGray> synth_dataset(int64_t count, int64_t size, uint64_t seed) {
  if (count < 1) throw DataError("synth_dataset: count must be >= 1");
  if (size < 64) throw DataError("synth_dataset: size must be >= 64");
  std::vector<ImageGray> out;
  out.reserve(static_cast<size_t>(count));
  for (int64_t i = 0; i < count; ++i) {
    Rng rng(mix_seed(seed, 0x53, static_cast<uint64_t>(i)));
    out.push_back(synth_image(size, rng));
  }
  return out;
}

}  // namespace anytsr
