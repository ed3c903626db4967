// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <functional>

#include "anytsr/core/errors.hpp"
#include "anytsr/imaging/image.hpp"

namespace anytsr {

// Saturated-PSNR report value for identical images (MSE = 0).
constexpr double kPsnrCap = 100.0;

inline double mse(const ImageGray& a, const ImageGray& b) {
  if (a.height != b.height || a.width != b.width)
    throw DataError("psnr/mse: image dimensions differ");
  double acc = 0;
  for (size_t i = 0; i < a.values.size(); ++i) {
    const double d = a.values[i] - b.values[i];
    acc += d * d;
  }
  return acc / static_cast<double>(a.numel());
}

// 10 log10(peak^2 / MSE), capped at 100 dB when the images are identical.
inline double psnr(const ImageGray& a, const ImageGray& b, double peak = 1.0) {
  const double m = mse(a, b);
  if (m == 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(peak * peak / m));
}

inline ImageGray crop_border(const ImageGray& img, int64_t border) {
  if (border <= 0) return img;
  if (2 * border >= img.height || 2 * border >= img.width)
    throw DataError("crop_border: border too large for image");
  return crop(img, border, border, img.height - 2 * border, img.width - 2 * border);
}

// Metric plug-in hook (e.g. LPIPS); no implementation is bundled since it
// would require pretrained perceptual weights.
using MetricFn = std::function<double(const ImageGray& a, const ImageGray& b)>;

inline double l1_metric(const std::vector<double>& pred, const std::vector<double>& gt) {
  if (pred.empty() || pred.size() != gt.size())
    throw DataError("l1: operand sizes differ or empty");
  double acc = 0;
  for (size_t i = 0; i < pred.size(); ++i) acc += std::abs(pred[i] - gt[i]);
  return acc / static_cast<double>(pred.size());
}

}  // namespace anytsr
