// SPDX-License-Identifier: Apache-2.0
//
// Any-scale upsampler: corner lifting over the four surrounding LR cells,
// Gaussian-RBF learnable local ensemble, offset-refinement attention, and a
// kernel-integral (neural operator) reconstruction head.
#pragma once

#include <array>
#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "anytsr/core/ops.hpp"
#include "anytsr/imaging/coords.hpp"
#include "anytsr/nn/config.hpp"
#include "anytsr/nn/param.hpp"

namespace anytsr {

// TL/TR/BL/BR: floor/ceil of the fractional LR cell index per axis, clamped
// at borders. A query lying exactly on a center degenerates all corners to
// that cell (offsets zero).
enum Corner : int { kTopLeft = 0, kTopRight = 1, kBottomLeft = 2, kBottomRight = 3 };

template <typename T>
struct CornerGeom {
  std::shared_ptr<std::vector<int64_t>> cells;  // LR raster index per query
  Tensor<T> offsets;                            // (n,2): |dy|, |dx|
  Tensor<T> d2;                                 // (n): squared distance
};

template <typename T>
CornerGeom<T> corner_geometry(const CoordList& q, int64_t h, int64_t w, int corner) {
  const int64_t n = q.size();
  CornerGeom<T> g;
  g.cells = std::make_shared<std::vector<int64_t>>(static_cast<size_t>(n));
  g.offsets = Tensor<T>({n, 2});
  g.d2 = Tensor<T>({n});
  const bool ceil_y = corner == kBottomLeft || corner == kBottomRight;
  const bool ceil_x = corner == kTopRight || corner == kBottomRight;
  for (int64_t i = 0; i < n; ++i) {
    const double y = q.ys[static_cast<size_t>(i)];
    const double x = q.xs[static_cast<size_t>(i)];
    const double ty = (y + 1.0) * static_cast<double>(h) / 2.0 - 0.5;
    const double tx = (x + 1.0) * static_cast<double>(w) / 2.0 - 0.5;
    int64_t iy = static_cast<int64_t>(ceil_y ? std::ceil(ty) : std::floor(ty));
    int64_t ix = static_cast<int64_t>(ceil_x ? std::ceil(tx) : std::floor(tx));
    iy = std::min<int64_t>(h - 1, std::max<int64_t>(0, iy));
    ix = std::min<int64_t>(w - 1, std::max<int64_t>(0, ix));
    (*g.cells)[static_cast<size_t>(i)] = iy * w + ix;
    const double dy = std::abs(y - cell_center(iy, h));
    const double dx = std::abs(x - cell_center(ix, w));
    g.offsets.at(i, 0) = static_cast<T>(dy);
    g.offsets.at(i, 1) = static_cast<T>(dx);
    g.d2[i] = static_cast<T>(dy * dy + dx * dx);
  }
  return g;
}

template <typename T>
class Upsampler {
 public:
  Upsampler() = default;

  Upsampler(ParamStore<T>& store, const UpsamplerConfig& cfg, int64_t channels)
      : cfg_(cfg), c_(channels) {
    cfg.validate();
    const int64_t d = cfg.neo_width;
    log_sigma_ = store.add("upsampler.rbf.log_sigma",
                           {cfg.per_corner_sigma ? int64_t(4) : int64_t(1)});
    q_w_ = store.add("upsampler.orm.q.weight", {2, c_});
    q_b_ = store.add("upsampler.orm.q.bias", {c_});
    k_w_ = store.add("upsampler.orm.k.weight", {c_, c_});
    k_b_ = store.add("upsampler.orm.k.bias", {c_});
    v_w_ = store.add("upsampler.orm.v.weight", {c_, c_});
    v_b_ = store.add("upsampler.orm.v.bias", {c_});
    lift_w_ = store.add("upsampler.neo.lift.weight", {8 * c_ + 9, d});
    lift_b_ = store.add("upsampler.neo.lift.bias", {d});
    for (int64_t i = 0; i < cfg.neo_iters; ++i) {
      const std::string p = "upsampler.neo.iter" + std::to_string(i) + ".";
      IterHandles it;
      it.q_w = store.add(p + "q.weight", {d, d});
      it.q_b = store.add(p + "q.bias", {d});
      it.k_w = store.add(p + "k.weight", {d, d});
      it.k_b = store.add(p + "k.bias", {d});
      it.v_w = store.add(p + "v.weight", {d, d});
      it.v_b = store.add(p + "v.bias", {d});
      it.o_w = store.add(p + "out.weight", {d, d});
      it.o_b = store.add(p + "out.bias", {d});
      it.lnk_g = store.add(p + "ln_k.gamma", {d});
      it.lnk_b = store.add(p + "ln_k.beta", {d});
      it.lnv_g = store.add(p + "ln_v.gamma", {d});
      it.lnv_b = store.add(p + "ln_v.beta", {d});
      it.f1_w = store.add(p + "ffn.fc1.weight", {d, d});
      it.f1_b = store.add(p + "ffn.fc1.bias", {d});
      it.f2_w = store.add(p + "ffn.fc2.weight", {d, d});
      it.f2_b = store.add(p + "ffn.fc2.bias", {d});
      iters_.push_back(it);
    }
    proj_w_ = store.add("upsampler.neo.proj.weight", {d, 1});
    proj_b_ = store.add("upsampler.neo.proj.bias", {1});
  }

  void init(ParamStore<T>& store, Rng& rng) const {
    const int64_t d = cfg_.neo_width;
    // sigma ~ one LR cell at training sizes; trainable thereafter
    init_constant(store.tensor(log_sigma_), std::log(0.05));
    init_uniform_fan_in(store.tensor(q_w_), 2, rng);
    init_uniform_fan_in(store.tensor(k_w_), c_, rng);
    init_uniform_fan_in(store.tensor(v_w_), c_, rng);
    init_uniform_fan_in(store.tensor(lift_w_), 8 * c_ + 9, rng);
    for (const auto& it : iters_) {
      init_uniform_fan_in(store.tensor(it.q_w), d, rng);
      init_uniform_fan_in(store.tensor(it.k_w), d, rng);
      init_uniform_fan_in(store.tensor(it.v_w), d, rng);
      init_uniform_fan_in(store.tensor(it.o_w), d, rng);
      init_constant(store.tensor(it.lnk_g), 1.0);
      init_constant(store.tensor(it.lnv_g), 1.0);
      init_uniform_fan_in(store.tensor(it.f1_w), d, rng);
      init_uniform_fan_in(store.tensor(it.f2_w), d, rng);
    }
    init_uniform_fan_in(store.tensor(proj_w_), d, rng);
    // mid-gray start so training does not spend steps on the global offset
    init_constant(store.tensor(proj_b_), 0.5);
  }

  const UpsamplerConfig& config() const { return cfg_; }
  size_t log_sigma_handle() const { return log_sigma_; }

  void set_toggles(bool lle, bool orm) {
    cfg_.use_lle = lle;
    cfg_.use_orm = orm;
  }

  // Full upsampler graph: E_lr (h,w,c) decoded at an arbitrary query list.
  // Returns raw (unclipped) predictions of shape (n,1).
  TapeId<T> forward(Tape<T>& t, const BoundParams<T>& bp, TapeId<T> e_lr,
                    const CoordList& coords, double s) const {
    const Tensor<T>& ev = t.val(e_lr);
    const int64_t h = ev.dim(0), w = ev.dim(1);
    const int64_t n = coords.size();

    std::vector<TapeId<T>> neo_parts;
    std::vector<TapeId<T>> offset_inputs;
    for (int corner = 0; corner < 4; ++corner) {
      CornerGeom<T> geom = corner_geometry<T>(coords, h, w, corner);
      const TapeId<T> dyx = t.input(std::move(geom.offsets));
      offset_inputs.push_back(dyx);
      const TapeId<T> lifted = gather_rows(t, e_lr, geom.cells);
      TapeId<T> weighted = lifted;
      if (cfg_.use_lle) {
        const TapeId<T> d2 = t.input(std::move(geom.d2));
        const TapeId<T> rw =
            rbf_weights(t, d2, bp[log_sigma_], cfg_.per_corner_sigma ? corner : 0);
        weighted = rowwise_scale(t, lifted, rw);
      }
      TapeId<T> refined = weighted;
      if (cfg_.use_orm) {
        const TapeId<T> qv = linear(t, dyx, bp[q_w_], bp[q_b_]);
        const TapeId<T> kv = linear(t, weighted, bp[k_w_], bp[k_b_]);
        const TapeId<T> vv = linear(t, weighted, bp[v_w_], bp[v_b_]);
        refined = cfg_.orm_window > 0
                      ? windowed_attention(t, qv, kv, vv)
                      : attention(t, qv, kv, vv, cfg_.orm_logit_scaling);
        assert_finite(t, refined, "offset refinement output");
      }
      neo_parts.push_back(weighted);
      neo_parts.push_back(refined);
    }
    for (const TapeId<T> o : offset_inputs) neo_parts.push_back(o);
    Tensor<T> sb({n, 1});
    sb.fill(static_cast<T>(s));
    neo_parts.push_back(t.input(std::move(sb)));

    // NEO head: lift -> T kernel-integral iterations -> 1-channel projection
    TapeId<T> x = linear(t, concat_cols(t, neo_parts), bp[lift_w_], bp[lift_b_]);
    const T inv_n = T(1) / static_cast<T>(n);
    for (const auto& it : iters_) {
      const TapeId<T> qv = linear(t, x, bp[it.q_w], bp[it.q_b]);
      const TapeId<T> kv = linear(t, x, bp[it.k_w], bp[it.k_b]);
      const TapeId<T> vv = linear(t, x, bp[it.v_w], bp[it.v_b]);
      const TapeId<T> kn = layer_norm(t, kv, bp[it.lnk_g], bp[it.lnk_b]);
      const TapeId<T> vn = layer_norm(t, vv, bp[it.lnv_g], bp[it.lnv_b]);
      const TapeId<T> kvmat = inner_tn(t, kn, vn);
      const TapeId<T> z = scale(t, linear(t, qv, kvmat), inv_n);
      x = add(t, x, linear(t, z, bp[it.o_w], bp[it.o_b]));
      const TapeId<T> f = linear(t, silu(t, linear(t, x, bp[it.f1_w], bp[it.f1_b])),
                                 bp[it.f2_w], bp[it.f2_b]);
      x = add(t, x, f);
    }
    const TapeId<T> pred = linear(t, x, bp[proj_w_], bp[proj_b_]);
    assert_finite(t, pred, "NEO output");
    return pred;
  }

 private:
  struct IterHandles {
    size_t q_w, q_b, k_w, k_b, v_w, v_b, o_w, o_b;
    size_t lnk_g, lnk_b, lnv_g, lnv_b;
    size_t f1_w, f1_b, f2_w, f2_b;
  };

  TapeId<T> windowed_attention(Tape<T>& t, TapeId<T> qv, TapeId<T> kv,
                               TapeId<T> vv) const {
    const int64_t n = t.val(qv).numel() / c_;
    std::vector<TapeId<T>> outs;
    for (int64_t start = 0; start < n; start += cfg_.orm_window) {
      const int64_t cnt = std::min<int64_t>(cfg_.orm_window, n - start);
      auto idx = std::make_shared<std::vector<int64_t>>();
      idx->reserve(static_cast<size_t>(cnt));
      for (int64_t i = 0; i < cnt; ++i) idx->push_back(start + i);
      outs.push_back(attention(t, gather_rows(t, qv, idx), gather_rows(t, kv, idx),
                               gather_rows(t, vv, idx), cfg_.orm_logit_scaling));
    }
    return concat_rows(t, outs);
  }

  UpsamplerConfig cfg_;
  int64_t c_ = 0;
  size_t log_sigma_ = 0;
  size_t q_w_ = 0, q_b_ = 0, k_w_ = 0, k_b_ = 0, v_w_ = 0, v_b_ = 0;
  size_t lift_w_ = 0, lift_b_ = 0;
  std::vector<IterHandles> iters_;
  size_t proj_w_ = 0, proj_b_ = 0;
};

}  // namespace anytsr
