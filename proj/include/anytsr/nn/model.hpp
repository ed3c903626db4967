// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

#include "anytsr/imaging/coords.hpp"
#include "anytsr/imaging/image.hpp"
#include "anytsr/imaging/patch.hpp"
#include "anytsr/nn/config.hpp"
#include "anytsr/nn/encoder.hpp"
#include "anytsr/nn/param.hpp"
#include "anytsr/nn/upsampler.hpp"

namespace anytsr {

inline int64_t scaled_dim(double s, int64_t dim) {
  return static_cast<int64_t>(std::llround(s * static_cast<double>(dim)));
}

// Encoder + upsampler with a shared parameter store.
template <typename T>
class Model {
 public:
  explicit Model(const ModelConfig& cfg)
      : cfg_(cfg),
        encoder_(store_, cfg.encoder),
        upsampler_(store_, cfg.upsampler, cfg.encoder.channels) {}

  void init(uint64_t seed) {
    Rng rng(mix_seed(seed, 0x17));
    encoder_.init(store_, rng);
    upsampler_.init(store_, rng);
  }

  const ModelConfig& config() const { return cfg_; }
  ParamStore<T>& params() { return store_; }
  const ParamStore<T>& params() const { return store_; }
  const Encoder<T>& encoder() const { return encoder_; }
  const Upsampler<T>& upsampler() const { return upsampler_; }

  // Table 2 ablation axes; wiring only, parameter layout unchanged.
  void set_ablation(bool ssb_scale_term, bool sam, bool lle, bool orm) {
    cfg_.encoder.use_ssb_scale_term = ssb_scale_term;
    cfg_.encoder.use_sam = sam;
    cfg_.upsampler.use_lle = lle;
    cfg_.upsampler.use_orm = orm;
    encoder_.set_toggles(ssb_scale_term, sam, cfg_.encoder.use_gradient_branch);
    upsampler_.set_toggles(lle, orm);
  }

  // Training graph: encode the LR patch at its scale, decode exactly at the
  // ground-truth coordinates, mean-absolute-error loss (on raw predictions).
  TapeId<T> training_loss(Tape<T>& t, const BoundParams<T>& bp,
                          const PatchPair& pp) const {
    const TapeId<T> e = encoder_.encode(t, bp, pp.lr, pp.scale);
    const TapeId<T> pred = upsampler_.forward(t, bp, e, pp.gt_coords, pp.scale);
    Tensor<T> gt({pp.gt_coords.size(), 1});
    for (int64_t i = 0; i < gt.numel(); ++i)
      gt[i] = static_cast<T>(pp.gt_values[static_cast<size_t>(i)]);
    return l1_loss(t, pred, t.input(std::move(gt)));
  }

  // Raw (unclipped) predictions at an explicit coordinate list; no gradients.
  std::vector<double> predict_at(const ImageGray& lr, double s,
                                 const CoordList& coords) const {
    Tape<T> t;
    t.set_grad_enabled(false);
    const BoundParams<T> bp = bind_params(t, store_);
    const TapeId<T> e = encoder_.encode(t, bp, lr, s);
    const TapeId<T> pred = upsampler_.forward(t, bp, e, coords, s);
    const Tensor<T>& v = t.val(pred);
    std::vector<double> out(static_cast<size_t>(v.numel()));
    for (int64_t i = 0; i < v.numel(); ++i) out[static_cast<size_t>(i)] = v[i];
    return out;
  }

  // Inference: full-grid decode at (out_h, out_w), defaulting to
  // round(s*h) x round(s*w); output clipped to [0,1].
  ImageGray super_resolve(const ImageGray& lr, double s, int64_t out_h = -1,
                          int64_t out_w = -1) const {
    if (s < 1.0) throw DataError("super_resolve: scale must be >= 1");
    if (out_h < 0) out_h = scaled_dim(s, lr.height);
    if (out_w < 0) out_w = scaled_dim(s, lr.width);
    const CoordList coords = flatten_grid(make_coord_grid(out_h, out_w));
    const std::vector<double> vals = predict_at(lr, s, coords);
    ImageGray img(out_h, out_w);
    img.values = vals;
    img.clip01();
    return img;
  }

 private:
  ModelConfig cfg_;
  ParamStore<T> store_;
  Encoder<T> encoder_;
  Upsampler<T> upsampler_;
};

}  // namespace anytsr
