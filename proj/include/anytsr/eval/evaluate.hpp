// SPDX-License-Identifier: Apache-2.0
//
// Test-time protocol: downsample the HR image by s (bicubic), super-resolve
// back to the original dims, score against the original. Includes the
// multi-step synthesis experiment and CSV report writers.
#pragma once

#include <cmath>
#include <cstdint>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "anytsr/eval/metrics.hpp"
#include "anytsr/imaging/resample.hpp"
#include "anytsr/nn/model.hpp"

namespace anytsr {

struct EvalRow {
  double scale = 0.0;
  bool ood = false;  // above the training scale range
  std::vector<double> psnr_model;
  std::vector<double> psnr_bicubic;
  std::vector<double> extra;  // optional plug-in metric
  double mean_model = 0.0;
  double mean_bicubic = 0.0;
};

struct EvalReport {
  std::string model_id;
  std::string flags;
  std::vector<EvalRow> rows;
};

struct MultiStepRow {
  std::vector<double> chain;
  double psnr_mean = 0.0;
  double net_scale = 1.0;
};

namespace detail {

inline double mean_of(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

}  // namespace detail

template <typename T>
EvalRow eval_scale(const Model<T>& model, const std::vector<ImageGray>& test_images,
                   double s, double trained_scale_max = 4.0, int64_t border = 0,
                   const MetricFn& extra = nullptr) {
  if (s < 1.0) throw DataError("eval_scale: scale must be >= 1");
  EvalRow row;
  row.scale = s;
  row.ood = s > trained_scale_max;
  for (const ImageGray& hr : test_images) {
    const int64_t lh = static_cast<int64_t>(std::llround(hr.height / s));
    const int64_t lw = static_cast<int64_t>(std::llround(hr.width / s));
    if (lh < 8 || lw < 8)
      throw DataError("eval_scale: HR image too small for scale (needs >= 8 LR px)");
    const ImageGray lr = bicubic_resample(hr, lh, lw);
    const ImageGray sr = model.super_resolve(lr, s, hr.height, hr.width);
    const ImageGray up = bicubic_resample(lr, hr.height, hr.width);
    row.psnr_model.push_back(psnr(crop_border(sr, border), crop_border(hr, border)));
    row.psnr_bicubic.push_back(psnr(crop_border(up, border), crop_border(hr, border)));
    if (extra) row.extra.push_back(extra(sr, hr));
  }
  row.mean_model = detail::mean_of(row.psnr_model);
  row.mean_bicubic = detail::mean_of(row.psnr_bicubic);
  return row;
}

template <typename T>
EvalReport sweep(const Model<T>& model, const std::vector<ImageGray>& test_images,
                 const std::vector<double>& scales, double trained_scale_max = 4.0,
                 int64_t border = 0) {
  EvalReport rep;
  for (double s : scales)
    rep.rows.push_back(eval_scale(model, test_images, s, trained_scale_max, border));
  return rep;
}

// Chains like [6], [2,3], [2,2,1.5]: the product is the net scale; each step
// re-encodes the previous (clipped) output. The final step lands exactly on
// the HR dims.
template <typename T>
MultiStepRow multi_step_synthesis(const Model<T>& model,
                                  const std::vector<ImageGray>& test_images,
                                  const std::vector<double>& chain, int64_t border = 0) {
  if (chain.empty()) throw DataError("multi_step_synthesis: empty chain");
  MultiStepRow row;
  row.chain = chain;
  for (double c : chain) {
    if (c < 1.0) throw DataError("multi_step_synthesis: chain entries must be >= 1");
    row.net_scale *= c;
  }
  std::vector<double> scores;
  for (const ImageGray& hr : test_images) {
    const int64_t lh = static_cast<int64_t>(std::llround(hr.height / row.net_scale));
    const int64_t lw = static_cast<int64_t>(std::llround(hr.width / row.net_scale));
    if (lh < 8 || lw < 8)
      throw DataError("multi_step_synthesis: HR too small for the net scale");
    ImageGray cur = bicubic_resample(hr, lh, lw);
    for (size_t i = 0; i < chain.size(); ++i) {
      const bool last = i + 1 == chain.size();
      const int64_t oh = last ? hr.height : scaled_dim(chain[i], cur.height);
      const int64_t ow = last ? hr.width : scaled_dim(chain[i], cur.width);
      if (oh > 4096 || ow > 4096)
        throw DataError("multi_step_synthesis: intermediate output exceeds 4096^2");
      cur = model.super_resolve(cur, chain[i], oh, ow);  // clipped per step
    }
    scores.push_back(psnr(crop_border(cur, border), crop_border(hr, border)));
  }
  row.psnr_mean = detail::mean_of(scores);
  return row;
}

// ------------------------------------------------------------------ reports

inline std::string chain_label(const std::vector<double>& chain) {
  std::ostringstream o;
  for (size_t i = 0; i < chain.size(); ++i) {
    if (i) o << "x";
    o << chain[i];
  }
  return o.str();
}

// CSV columns: scale,ood,image,psnr_model,psnr_bicubic
inline std::string eval_report_csv(const EvalReport& rep) {
  std::ostringstream o;
  o << "scale,ood,image,psnr_model,psnr_bicubic\n";
  o << std::fixed << std::setprecision(6);
  for (const EvalRow& row : rep.rows)
    for (size_t i = 0; i < row.psnr_model.size(); ++i)
      o << row.scale << "," << (row.ood ? 1 : 0) << "," << i << ","
        << row.psnr_model[i] << "," << row.psnr_bicubic[i] << "\n";
  return o.str();
}

inline std::string multi_step_csv(const std::vector<MultiStepRow>& rows) {
  std::ostringstream o;
  o << "chain,psnr_mean\n";
  o << std::fixed << std::setprecision(6);
  for (const MultiStepRow& r : rows) o << chain_label(r.chain) << "," << r.psnr_mean << "\n";
  return o.str();
}

inline std::string eval_report_table(const EvalReport& rep) {
  std::ostringstream o;
  o << "scale      ood   psnr_model   psnr_bicubic\n";
  o << std::fixed << std::setprecision(4);
  for (const EvalRow& row : rep.rows)
    o << std::setw(7) << row.scale << (row.ood ? "  *  " : "     ") << std::setw(10)
      << row.mean_model << "   " << std::setw(10) << row.mean_bicubic << "\n";
  return o.str();
}

inline std::string multi_step_table(const std::vector<MultiStepRow>& rows) {
  std::ostringstream o;
  o << "synthesis          net_scale   psnr_mean\n";
  o << std::fixed << std::setprecision(4);
  for (const MultiStepRow& r : rows) {
    std::string label = (r.chain.size() == 1 ? "one step  " : "multi-step") +
                        std::string("  ") + chain_label(r.chain);
    o << std::setw(24) << std::left << label << std::right << std::setw(6) << r.net_scale
      << "   " << std::setw(9) << r.psnr_mean << "\n";
  }
  return o.str();
}

}  // namespace anytsr
