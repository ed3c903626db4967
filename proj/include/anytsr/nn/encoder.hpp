// SPDX-License-Identifier: Apache-2.0
//
// Scale-specific LR image encoder: shallow 3x3 conv, N scale-specific state
// space layers (M gated SS2D blocks each, plus a scale-adaptive-mapping
// residual and a trailing conv), a final conv, the global shallow residual,
// and a Sobel/Laplacian gradient feature branch.
#pragma once

#include <array>
#include <memory>
#include <string>
#include <vector>

#include "anytsr/core/ops.hpp"
#include "anytsr/imaging/gradients.hpp"
#include "anytsr/imaging/image.hpp"
#include "anytsr/nn/config.hpp"
#include "anytsr/nn/param.hpp"

namespace anytsr {

// Raster index order for the four directional scans: row-major forward and
// backward, column-major forward and backward.
inline std::array<std::shared_ptr<std::vector<int64_t>>, 4> scan_orders(int64_t h,
                                                                        int64_t w) {
  const int64_t L = h * w;
  auto rowf = std::make_shared<std::vector<int64_t>>();
  auto rowb = std::make_shared<std::vector<int64_t>>();
  auto colf = std::make_shared<std::vector<int64_t>>();
  auto colb = std::make_shared<std::vector<int64_t>>();
  rowf->resize(static_cast<size_t>(L));
  rowb->resize(static_cast<size_t>(L));
  colf->resize(static_cast<size_t>(L));
  colb->resize(static_cast<size_t>(L));
  for (int64_t t = 0; t < L; ++t) {
    (*rowf)[static_cast<size_t>(t)] = t;
    (*rowb)[static_cast<size_t>(t)] = L - 1 - t;
  }
  int64_t t = 0;
  for (int64_t x = 0; x < w; ++x)
    for (int64_t y = 0; y < h; ++y, ++t) {
      (*colf)[static_cast<size_t>(t)] = y * w + x;
      (*colb)[static_cast<size_t>(L - 1 - t)] = y * w + x;
    }
  return {rowf, rowb, colf, colb};
}

template <typename T>
class Encoder {
 public:
  struct DirHandles {
    size_t dt_w, dt_b, b_w, c_w, a_log, skip;
  };
  struct BlockHandles {
    size_t ln1_g, ln1_b;
    size_t gate_w, gate_b;      // Eq. 4 linear
    size_t in_w, in_b;          // Eq. 5 linear
    size_t dw_w, dw_b;          // Eq. 5 depthwise conv
    std::array<DirHandles, 4> dirs;
    size_t ln2_g, ln2_b;        // Eq. 5 post-scan LN
    size_t out_w, out_b;        // Eq. 7 linear
    size_t mlp1_w, mlp1_b, mlp2_w, mlp2_b;  // Eq. 6 scale embedding
  };
  struct LayerHandles {
    std::vector<BlockHandles> blocks;
    size_t sam_bank, sam1_w, sam1_b, sam2_w, sam2_b;  // Eqs. 8-9
    size_t conv_w, conv_b;  // trailing per-layer conv
  };

  Encoder() = default;

  Encoder(ParamStore<T>& store, const EncoderConfig& cfg) : cfg_(cfg) {
    cfg.validate();
    const int64_t c = cfg.channels, d = cfg.d_state, n = cfg.sam_bank;
    shallow_w_ = store.add("encoder.shallow.weight", {3, 3, 1, c});
    shallow_b_ = store.add("encoder.shallow.bias", {c});
    grad_w_ = store.add("encoder.grad.weight", {3, 3, 3, c});
    grad_b_ = store.add("encoder.grad.bias", {c});
    for (int64_t li = 0; li < cfg.layers; ++li) {
      LayerHandles layer;
      for (int64_t bi = 0; bi < cfg.blocks; ++bi) {
        const std::string p =
            "encoder.layer" + std::to_string(li) + ".block" + std::to_string(bi) + ".";
        BlockHandles b;
        b.ln1_g = store.add(p + "ln1.gamma", {c});
        b.ln1_b = store.add(p + "ln1.beta", {c});
        b.gate_w = store.add(p + "gate.weight", {c, c});
        b.gate_b = store.add(p + "gate.bias", {c});
        b.in_w = store.add(p + "inproj.weight", {c, c});
        b.in_b = store.add(p + "inproj.bias", {c});
        b.dw_w = store.add(p + "dwconv.weight", {3, 3, c});
        b.dw_b = store.add(p + "dwconv.bias", {c});
        for (int k = 0; k < 4; ++k) {
          const std::string q = p + "scan.dir" + std::to_string(k) + ".";
          b.dirs[static_cast<size_t>(k)] = DirHandles{
              store.add(q + "delta.weight", {c, c}), store.add(q + "delta.bias", {c}),
              store.add(q + "b_proj.weight", {c, d}), store.add(q + "c_proj.weight", {c, d}),
              store.add(q + "a_log", {c, d}), store.add(q + "skip", {c})};
        }
        b.ln2_g = store.add(p + "ln2.gamma", {c});
        b.ln2_b = store.add(p + "ln2.beta", {c});
        b.out_w = store.add(p + "outproj.weight", {c, c});
        b.out_b = store.add(p + "outproj.bias", {c});
        b.mlp1_w = store.add(p + "scale_mlp.fc1.weight", {1, c});
        b.mlp1_b = store.add(p + "scale_mlp.fc1.bias", {c});
        b.mlp2_w = store.add(p + "scale_mlp.fc2.weight", {c, c});
        b.mlp2_b = store.add(p + "scale_mlp.fc2.bias", {c});
        layer.blocks.push_back(b);
      }
      const std::string p = "encoder.layer" + std::to_string(li) + ".";
      layer.sam_bank = store.add(p + "sam.bank", {n, c, c});
      layer.sam1_w = store.add(p + "sam.gen.fc1.weight", {1, 64});
      layer.sam1_b = store.add(p + "sam.gen.fc1.bias", {64});
      layer.sam2_w = store.add(p + "sam.gen.fc2.weight", {64, n});
      layer.sam2_b = store.add(p + "sam.gen.fc2.bias", {n});
      layer.conv_w = store.add(p + "conv.weight", {3, 3, c, c});
      layer.conv_b = store.add(p + "conv.bias", {c});
      layers_.push_back(layer);
    }
    final_w_ = store.add("encoder.final_conv.weight", {3, 3, c, c});
    final_b_ = store.add("encoder.final_conv.bias", {c});
  }

  void init(ParamStore<T>& store, Rng& rng) const {
    const int64_t c = cfg_.channels, d = cfg_.d_state;
    init_uniform_fan_in(store.tensor(shallow_w_), 9 * 1, rng);
    init_uniform_fan_in(store.tensor(grad_w_), 9 * 3, rng);
    init_uniform_fan_in(store.tensor(final_w_), 9 * c, rng);
    for (const auto& layer : layers_) {
      for (const auto& b : layer.blocks) {
        init_constant(store.tensor(b.ln1_g), 1.0);
        init_constant(store.tensor(b.ln2_g), 1.0);
        init_uniform_fan_in(store.tensor(b.gate_w), c, rng);
        init_uniform_fan_in(store.tensor(b.in_w), c, rng);
        init_uniform_fan_in(store.tensor(b.dw_w), 9, rng);
        init_uniform_fan_in(store.tensor(b.out_w), c, rng);
        for (const auto& dir : b.dirs) {
          init_uniform_fan_in(store.tensor(dir.dt_w), c, rng);
          // softplus(bias) log-uniform in [1e-3, 0.1] keeps early steps stable
          Tensor<T>& db = store.tensor(dir.dt_b);
          for (int64_t i = 0; i < db.numel(); ++i) {
            const double u = std::exp(rng.uniform(std::log(1e-3), std::log(0.1)));
            db[i] = static_cast<T>(inv_softplus(u));
          }
          init_uniform_fan_in(store.tensor(dir.b_w), c, rng);
          init_uniform_fan_in(store.tensor(dir.c_w), c, rng);
          // A negative with log-spaced magnitudes in [1, d_state]
          Tensor<T>& al = store.tensor(dir.a_log);
          for (int64_t i = 0; i < c; ++i)
            for (int64_t j = 0; j < d; ++j)
              al[i * d + j] = static_cast<T>(
                  d > 1 ? static_cast<double>(j) * std::log(static_cast<double>(d)) /
                              static_cast<double>(d - 1)
                        : 0.0);
          init_constant(store.tensor(dir.skip), 1.0);
        }
        init_uniform_fan_in(store.tensor(b.mlp1_w), 1, rng);
        // scale term starts near identity * feature: small weights, bias 1
        init_uniform_fan_in(store.tensor(b.mlp2_w), c, rng, 0.1);
        init_constant(store.tensor(b.mlp2_b), 1.0);
      }
      init_uniform_fan_in(store.tensor(layer.sam_bank), c, rng);
      init_uniform_fan_in(store.tensor(layer.sam1_w), 1, rng);
      init_uniform_fan_in(store.tensor(layer.sam2_w), 64, rng);
      init_uniform_fan_in(store.tensor(layer.conv_w), 9 * c, rng);
    }
  }

  const EncoderConfig& config() const { return cfg_; }

  // Ablation toggles act on the forward wiring only; the parameter set is
  // registered unconditionally so checkpoints stay layout-compatible.
  void set_toggles(bool scale_term, bool sam, bool grad_branch) {
    cfg_.use_ssb_scale_term = scale_term;
    cfg_.use_sam = sam;
    cfg_.use_gradient_branch = grad_branch;
  }

  // Four directional selective scans summed back over the raster.
  TapeId<T> ss2d(Tape<T>& t, const BoundParams<T>& bp, TapeId<T> x, int64_t layer,
                 int64_t block,
                 const std::array<std::shared_ptr<std::vector<int64_t>>, 4>& orders)
      const {
    const BlockHandles& B = layers_[static_cast<size_t>(layer)]
                                .blocks[static_cast<size_t>(block)];
    TapeId<T> y = -1;
    for (int k = 0; k < 4; ++k) {
      const DirHandles& D = B.dirs[static_cast<size_t>(k)];
      const TapeId<T> dt = softplus(t, linear(t, x, bp[D.dt_w], bp[D.dt_b]));
      const TapeId<T> bv = linear(t, x, bp[D.b_w]);
      const TapeId<T> cv = linear(t, x, bp[D.c_w]);
      const TapeId<T> a = neg_exp(t, bp[D.a_log]);
      const TapeId<T> yk =
          scan_dir(t, x, dt, bv, cv, a, bp[D.skip], orders[static_cast<size_t>(k)]);
      y = (y < 0) ? yk : add(t, y, yk);
    }
    return y;
  }

  // Eqs. 4-7. fin: (h,w,c); s_id: scalar (1,1) input node.
  TapeId<T> ssb_forward(Tape<T>& t, const BoundParams<T>& bp, TapeId<T> fin,
                        TapeId<T> s_id, int64_t layer, int64_t block,
                        const std::array<std::shared_ptr<std::vector<int64_t>>, 4>& orders)
      const {
    const BlockHandles& B = layers_[static_cast<size_t>(layer)]
                                .blocks[static_cast<size_t>(block)];
    const TapeId<T> fn = layer_norm(t, fin, bp[B.ln1_g], bp[B.ln1_b]);
    // branch 1: gate
    const TapeId<T> f1 = silu(t, linear(t, fn, bp[B.gate_w], bp[B.gate_b]));
    // branch 2: linear -> dwconv -> SiLU -> SS2D -> LN
    TapeId<T> f2 = linear(t, fn, bp[B.in_w], bp[B.in_b]);
    f2 = silu(t, dwconv3x3(t, f2, bp[B.dw_w], bp[B.dw_b]));
    const TapeId<T> y = ss2d(t, bp, f2, layer, block, orders);
    const TapeId<T> f2n = layer_norm(t, y, bp[B.ln2_g], bp[B.ln2_b]);
    const TapeId<T> gated = linear(t, mul(t, f1, f2n), bp[B.out_w], bp[B.out_b]);
    TapeId<T> fscale;
    if (cfg_.use_ssb_scale_term) {
      const TapeId<T> hidden = relu(t, linear(t, s_id, bp[B.mlp1_w], bp[B.mlp1_b]));
      const TapeId<T> emb = linear(t, hidden, bp[B.mlp2_w], bp[B.mlp2_b]);
      fscale = channel_scale(t, fin, emb);
    } else {
      fscale = fin;  // ablated: plain residual, no s dependence
    }
    const TapeId<T> out = add(t, gated, fscale);
    assert_finite(t, out, "S-SSB output");
    return out;
  }

  // Eqs. 8-9 plus the layer's trailing conv.
  TapeId<T> ssl_forward(Tape<T>& t, const BoundParams<T>& bp, TapeId<T> fin,
                        TapeId<T> s_id, int64_t layer,
                        const std::array<std::shared_ptr<std::vector<int64_t>>, 4>& orders)
      const {
    const LayerHandles& L = layers_[static_cast<size_t>(layer)];
    TapeId<T> f = fin;
    for (int64_t bi = 0; bi < cfg_.blocks; ++bi)
      f = ssb_forward(t, bp, f, s_id, layer, bi, orders);
    const TapeId<T> conv_out = conv3x3(t, f, bp[L.conv_w], bp[L.conv_b]);
    if (!cfg_.use_sam) return conv_out;
    const TapeId<T> w = sam_weights(t, bp, s_id, layer);
    const TapeId<T> mixed = mix_bank(t, bp[L.sam_bank], w);
    const TapeId<T> sam_out = linear(t, fin, mixed, TapeId<T>(-1), /*trans_w=*/true);
    const TapeId<T> out = add(t, conv_out, sam_out);
    assert_finite(t, out, "S-SSL output");
    return out;
  }

  // Eq. 8 softmax kernel weights for a given scale.
  TapeId<T> sam_weights(Tape<T>& t, const BoundParams<T>& bp, TapeId<T> s_id,
                        int64_t layer) const {
    const LayerHandles& L = layers_[static_cast<size_t>(layer)];
    const TapeId<T> hidden = relu(t, linear(t, s_id, bp[L.sam1_w], bp[L.sam1_b]));
    return softmax_vec(t, linear(t, hidden, bp[L.sam2_w], bp[L.sam2_b]));
  }

  // Eqs. 1-3: full encoder over an image, preserving spatial dims.
  TapeId<T> encode(Tape<T>& t, const BoundParams<T>& bp, const ImageGray& img,
                   double s) const {
    if (img.height < 3 || img.width < 3)
      throw DataError("encode: image must be at least 3x3");
    const int64_t h = img.height, w = img.width;
    Tensor<T> x({h, w, 1});
    for (int64_t i = 0; i < h * w; ++i) x[i] = static_cast<T>(img.values[static_cast<size_t>(i)]);
    const TapeId<T> img_id = t.input(std::move(x));
    Tensor<T> sv({1, 1});
    sv[0] = static_cast<T>(s);
    const TapeId<T> s_id = t.input(std::move(sv));
    const auto orders = scan_orders(h, w);

    const TapeId<T> fs = conv3x3(t, img_id, bp[shallow_w_], bp[shallow_b_]);
    TapeId<T> f = fs;
    for (int64_t li = 0; li < cfg_.layers; ++li)
      f = ssl_forward(t, bp, f, s_id, li, orders);
    const TapeId<T> fd = conv3x3(t, f, bp[final_w_], bp[final_b_]);
    TapeId<T> e = add(t, fd, fs);
    if (cfg_.use_gradient_branch) {
      const GradientStack gs = gradients(img);
      Tensor<T> gt({h, w, 3});
      for (int64_t i = 0; i < h * w; ++i) {
        gt[i * 3 + 0] = static_cast<T>(gs.gx[static_cast<size_t>(i)]);
        gt[i * 3 + 1] = static_cast<T>(gs.gy[static_cast<size_t>(i)]);
        gt[i * 3 + 2] = static_cast<T>(gs.lap[static_cast<size_t>(i)]);
      }
      const TapeId<T> g_id = t.input(std::move(gt));
      e = add(t, e, conv3x3(t, g_id, bp[grad_w_], bp[grad_b_]));
    }
    assert_finite(t, e, "encoder output");
    return e;
  }

 private:
  EncoderConfig cfg_;
  size_t shallow_w_ = 0, shallow_b_ = 0, grad_w_ = 0, grad_b_ = 0;
  std::vector<LayerHandles> layers_;
  size_t final_w_ = 0, final_b_ = 0;
};

}  // namespace anytsr
