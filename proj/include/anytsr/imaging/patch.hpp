// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "anytsr/core/errors.hpp"
#include "anytsr/core/rng.hpp"
#include "anytsr/imaging/coords.hpp"
#include "anytsr/imaging/image.hpp"
#include "anytsr/imaging/resample.hpp"

namespace anytsr {

// One training sample: an LR patch, its scale, and lr_size^2 ground-truth
// pixels drawn without replacement from the HR crop, with their normalized
// coordinates inside the crop.
struct PatchPair {
  ImageGray lr;
  double scale = 1.0;
  CoordList gt_coords;
  std::vector<double> gt_values;
};

inline PatchPair sample_patch_pair(const ImageGray& hr, double scale, int64_t lr_size,
                                   Rng& rng) {
  if (scale < 1.0) throw DataError("sample_patch_pair: scale must be >= 1");
  const int64_t crop_size = static_cast<int64_t>(std::llround(scale * static_cast<double>(lr_size)));
  if (crop_size > hr.height || crop_size > hr.width)
    throw DataError("sample_patch_pair: HR image too small for requested scale");

  const int64_t top = rng.uniform_int(hr.height - crop_size + 1);
  const int64_t left = rng.uniform_int(hr.width - crop_size + 1);
  const ImageGray region = crop(hr, top, left, crop_size, crop_size);

  PatchPair pp;
  pp.scale = scale;
  pp.lr = bicubic_resample(region, lr_size, lr_size);

  const int64_t k = lr_size * lr_size;
  const std::vector<int64_t> cells =
      rng.sample_without_replacement(crop_size * crop_size, k);
  pp.gt_coords.ys.resize(static_cast<size_t>(k));
  pp.gt_coords.xs.resize(static_cast<size_t>(k));
  pp.gt_values.resize(static_cast<size_t>(k));
  for (int64_t i = 0; i < k; ++i) {
    const int64_t cell = cells[static_cast<size_t>(i)];
    const int64_t cy = cell / crop_size;
    const int64_t cx = cell % crop_size;
    pp.gt_coords.ys[static_cast<size_t>(i)] = cell_center(cy, crop_size);
    pp.gt_coords.xs[static_cast<size_t>(i)] = cell_center(cx, crop_size);
    pp.gt_values[static_cast<size_t>(i)] = region.at(cy, cx);
  }
  return pp;
}

}  // namespace anytsr
