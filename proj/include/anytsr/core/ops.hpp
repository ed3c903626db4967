// SPDX-License-Identifier: Apache-2.0
//
// Tape operations. Elementwise and per-position ops treat the last axis as
// channels and flatten everything before it, so the same op serves (n,c)
// sequences and (h,w,c) feature maps. Spatial ops require rank-3 (h,w,c).
#pragma once

#include <cmath>
#include <cstring>
#include <memory>
#include <string>
#include <vector>

#include "anytsr/core/gemm.hpp"
#include "anytsr/core/graph.hpp"
#include "anytsr/core/math.hpp"
#include "anytsr/core/parallel.hpp"

namespace anytsr {

template <typename T>
using TapeId = typename Tape<T>::Id;

namespace detail {

template <typename T>
inline std::vector<int64_t> with_last(const std::vector<int64_t>& shape, int64_t co) {
  std::vector<int64_t> s = shape;
  s.back() = co;
  return s;
}

}  // namespace detail

template <typename T>
void assert_finite(Tape<T>& t, TapeId<T> id, const char* where) {
  if (!t.val(id).all_finite())
    throw NumericsError(std::string("non-finite values in ") + where);
}

// --------------------------------------------------------------- arithmetic

template <typename T>
TapeId<T> add(Tape<T>& t, TapeId<T> a, TapeId<T> b) {
  const Tensor<T>& va = t.val(a);
  const Tensor<T>& vb = t.val(b);
  Tensor<T> out(va.shape());
  const int64_t n = va.numel();
  for (int64_t i = 0; i < n; ++i) out[i] = va[i] + vb[i];
  const bool ng = t.needs_grad(a) || t.needs_grad(b);
  return t.op_node(std::move(out), ng, [&t, a, b, n](TapeId<T> self) {
    const Tensor<T>& g = t.grad(self);
    if (t.needs_grad(a)) {
      Tensor<T>& da = t.grad(a);
      for (int64_t i = 0; i < n; ++i) da[i] += g[i];
    }
    if (t.needs_grad(b)) {
      Tensor<T>& db = t.grad(b);
      for (int64_t i = 0; i < n; ++i) db[i] += g[i];
    }
  });
}

template <typename T>
TapeId<T> sub(Tape<T>& t, TapeId<T> a, TapeId<T> b) {
  const Tensor<T>& va = t.val(a);
  const Tensor<T>& vb = t.val(b);
  Tensor<T> out(va.shape());
  const int64_t n = va.numel();
  for (int64_t i = 0; i < n; ++i) out[i] = va[i] - vb[i];
  const bool ng = t.needs_grad(a) || t.needs_grad(b);
  return t.op_node(std::move(out), ng, [&t, a, b, n](TapeId<T> self) {
    const Tensor<T>& g = t.grad(self);
    if (t.needs_grad(a)) {
      Tensor<T>& da = t.grad(a);
      for (int64_t i = 0; i < n; ++i) da[i] += g[i];
    }
    if (t.needs_grad(b)) {
      Tensor<T>& db = t.grad(b);
      for (int64_t i = 0; i < n; ++i) db[i] -= g[i];
    }
  });
}

template <typename T>
TapeId<T> mul(Tape<T>& t, TapeId<T> a, TapeId<T> b) {
  const Tensor<T>& va = t.val(a);
  const Tensor<T>& vb = t.val(b);
  Tensor<T> out(va.shape());
  const int64_t n = va.numel();
  for (int64_t i = 0; i < n; ++i) out[i] = va[i] * vb[i];
  const bool ng = t.needs_grad(a) || t.needs_grad(b);
  return t.op_node(std::move(out), ng, [&t, a, b, n](TapeId<T> self) {
    const Tensor<T>& g = t.grad(self);
    const Tensor<T>& va2 = t.val(a);
    const Tensor<T>& vb2 = t.val(b);
    if (t.needs_grad(a)) {
      Tensor<T>& da = t.grad(a);
      for (int64_t i = 0; i < n; ++i) da[i] += g[i] * vb2[i];
    }
    if (t.needs_grad(b)) {
      Tensor<T>& db = t.grad(b);
      for (int64_t i = 0; i < n; ++i) db[i] += g[i] * va2[i];
    }
  });
}

template <typename T>
TapeId<T> scale(Tape<T>& t, TapeId<T> a, T s) {
  const Tensor<T>& va = t.val(a);
  Tensor<T> out(va.shape());
  const int64_t n = va.numel();
  for (int64_t i = 0; i < n; ++i) out[i] = va[i] * s;
  return t.op_node(std::move(out), t.needs_grad(a), [&t, a, s, n](TapeId<T> self) {
    const Tensor<T>& g = t.grad(self);
    Tensor<T>& da = t.grad(a);
    for (int64_t i = 0; i < n; ++i) da[i] += g[i] * s;
  });
}

// out[r,:] = x[r,:] * w[r]  (w has one entry per row)
template <typename T>
TapeId<T> rowwise_scale(Tape<T>& t, TapeId<T> x, TapeId<T> w) {
  const Tensor<T>& vx = t.val(x);
  const Tensor<T>& vw = t.val(w);
  const int64_t rows = vw.numel();
  const int64_t c = vx.numel() / rows;
  Tensor<T> out(vx.shape());
  for (int64_t r = 0; r < rows; ++r) {
    const T wv = vw[r];
    for (int64_t j = 0; j < c; ++j) out[r * c + j] = vx[r * c + j] * wv;
  }
  const bool ng = t.needs_grad(x) || t.needs_grad(w);
  return t.op_node(std::move(out), ng, [&t, x, w, rows, c](TapeId<T> self) {
    const Tensor<T>& g = t.grad(self);
    const Tensor<T>& vx2 = t.val(x);
    const Tensor<T>& vw2 = t.val(w);
    if (t.needs_grad(x)) {
      Tensor<T>& dx = t.grad(x);
      for (int64_t r = 0; r < rows; ++r)
        for (int64_t j = 0; j < c; ++j) dx[r * c + j] += g[r * c + j] * vw2[r];
    }
    if (t.needs_grad(w)) {
      Tensor<T>& dw = t.grad(w);
      for (int64_t r = 0; r < rows; ++r) {
        T acc = 0;
        for (int64_t j = 0; j < c; ++j) acc += g[r * c + j] * vx2[r * c + j];
        dw[r] += acc;
      }
    }
  });
}

// out[r,j] = x[r,j] * v[j]  (per-channel gain broadcast over rows)
template <typename T>
TapeId<T> channel_scale(Tape<T>& t, TapeId<T> x, TapeId<T> v) {
  const Tensor<T>& vx = t.val(x);
  const Tensor<T>& vv = t.val(v);
  const int64_t c = vv.numel();
  const int64_t rows = vx.numel() / c;
  Tensor<T> out(vx.shape());
  for (int64_t r = 0; r < rows; ++r)
    for (int64_t j = 0; j < c; ++j) out[r * c + j] = vx[r * c + j] * vv[j];
  const bool ng = t.needs_grad(x) || t.needs_grad(v);
  return t.op_node(std::move(out), ng, [&t, x, v, rows, c](TapeId<T> self) {
    const Tensor<T>& g = t.grad(self);
    const Tensor<T>& vx2 = t.val(x);
    const Tensor<T>& vv2 = t.val(v);
    if (t.needs_grad(x)) {
      Tensor<T>& dx = t.grad(x);
      for (int64_t r = 0; r < rows; ++r)
        for (int64_t j = 0; j < c; ++j) dx[r * c + j] += g[r * c + j] * vv2[j];
    }
    if (t.needs_grad(v)) {
      Tensor<T>& dv = t.grad(v);
      for (int64_t r = 0; r < rows; ++r)
        for (int64_t j = 0; j < c; ++j) dv[j] += g[r * c + j] * vx2[r * c + j];
    }
  });
}

// ------------------------------------------------------------------- linear

// out = x*W (+ b). With trans_w, W is stored (co, ci) and out = x*W^T; this
// serves dynamically generated kernels applied per position.
template <typename T>
TapeId<T> linear(Tape<T>& t, TapeId<T> x, TapeId<T> W, TapeId<T> b = -1,
                 bool trans_w = false) {
  const Tensor<T>& vx = t.val(x);
  const Tensor<T>& vw = t.val(W);
  const int64_t ci = trans_w ? vw.dim(1) : vw.dim(0);
  const int64_t co = trans_w ? vw.dim(0) : vw.dim(1);
  const int64_t rows = vx.numel() / ci;
  Tensor<T> out(detail::with_last<T>(vx.shape(), co));
  if (trans_w)
    gemm_nt(vx.data(), vw.data(), out.data(), rows, co, ci);
  else
    gemm_nn(vx.data(), vw.data(), out.data(), rows, co, ci);
  if (b >= 0) {
    const Tensor<T>& vb = t.val(b);
    for (int64_t r = 0; r < rows; ++r)
      for (int64_t j = 0; j < co; ++j) out[r * co + j] += vb[j];
  }
  const bool ng =
      t.needs_grad(x) || t.needs_grad(W) || (b >= 0 && t.needs_grad(b));
  return t.op_node(std::move(out), ng,
                   [&t, x, W, b, rows, ci, co, trans_w](TapeId<T> self) {
                     const Tensor<T>& g = t.grad(self);
                     const Tensor<T>& vx2 = t.val(x);
                     const Tensor<T>& vw2 = t.val(W);
                     if (t.needs_grad(x)) {
                       Tensor<T>& dx = t.grad(x);
                       if (trans_w)
                         gemm_nn(g.data(), vw2.data(), dx.data(), rows, ci, co, true);
                       else
                         gemm_nt(g.data(), vw2.data(), dx.data(), rows, ci, co, true);
                     }
                     if (t.needs_grad(W)) {
                       Tensor<T>& dw = t.grad(W);
                       if (trans_w)
                         gemm_tn(g.data(), vx2.data(), dw.data(), co, ci, rows, true);
                       else
                         gemm_tn(vx2.data(), g.data(), dw.data(), ci, co, rows, true);
                     }
                     if (b >= 0 && t.needs_grad(b)) {
                       Tensor<T>& db = t.grad(b);
                       for (int64_t r = 0; r < rows; ++r)
                         for (int64_t j = 0; j < co; ++j) db[j] += g[r * co + j];
                     }
                   });
}

// out = a^T * b, a:(n,d1) b:(n,d2) -> (d1,d2). Kernel-integral contraction.
template <typename T>
TapeId<T> inner_tn(Tape<T>& t, TapeId<T> a, TapeId<T> b) {
  const Tensor<T>& va = t.val(a);
  const Tensor<T>& vb = t.val(b);
  const int64_t d1 = va.shape().back();
  const int64_t d2 = vb.shape().back();
  const int64_t n = va.numel() / d1;
  Tensor<T> out({d1, d2});
  gemm_tn(va.data(), vb.data(), out.data(), d1, d2, n);
  const bool ng = t.needs_grad(a) || t.needs_grad(b);
  return t.op_node(std::move(out), ng, [&t, a, b, d1, d2, n](TapeId<T> self) {
    const Tensor<T>& g = t.grad(self);
    if (t.needs_grad(a))
      gemm_nt(t.val(b).data(), g.data(), t.grad(a).data(), n, d1, d2, true);
    if (t.needs_grad(b))
      gemm_nn(t.val(a).data(), g.data(), t.grad(b).data(), n, d2, d1, true);
  });
}

// ------------------------------------------------------------- convolutions

// 3x3 convolution, zero padding, stride 1. x:(h,w,ci) W:(3,3,ci,co) b:(co).
template <typename T>
TapeId<T> conv3x3(Tape<T>& t, TapeId<T> x, TapeId<T> W, TapeId<T> b) {
  const Tensor<T>& vx = t.val(x);
  const Tensor<T>& vw = t.val(W);
  const Tensor<T>& vb = t.val(b);
  const int64_t h = vx.dim(0), w = vx.dim(1), ci = vx.dim(2);
  const int64_t co = vw.dim(3);
  Tensor<T> out({h, w, co});
  parallel_for(h, [&](int64_t y0, int64_t y1) {
    for (int64_t y = y0; y < y1; ++y) {
      T* orow = out.data() + y * w * co;
      for (int64_t xq = 0; xq < w; ++xq)
        for (int64_t j = 0; j < co; ++j) orow[xq * co + j] = vb[j];
      for (int64_t dy = 0; dy < 3; ++dy) {
        const int64_t sy = y + dy - 1;
        if (sy < 0 || sy >= h) continue;
        for (int64_t dx = 0; dx < 3; ++dx) {
          const int64_t x0 = std::max<int64_t>(0, 1 - dx);
          const int64_t x1 = std::min<int64_t>(w - 1, w - dx);
          const int64_t cnt = x1 - x0 + 1;
          if (cnt <= 0) continue;
          const T* a = vx.data() + (sy * w + (x0 + dx - 1)) * ci;
          const T* wd = vw.data() + (dy * 3 + dx) * ci * co;
          gemm_nn(a, wd, orow + x0 * co, cnt, co, ci, true);
        }
      }
    }
  });
  const bool ng = t.needs_grad(x) || t.needs_grad(W) || t.needs_grad(b);
  return t.op_node(std::move(out), ng, [&t, x, W, b, h, w, ci, co](TapeId<T> self) {
    const Tensor<T>& g = t.grad(self);
    const Tensor<T>& vx2 = t.val(x);
    const Tensor<T>& vw2 = t.val(W);
    if (t.needs_grad(x)) {
      Tensor<T>& dx = t.grad(x);
      parallel_for(h, [&](int64_t u0, int64_t u1) {
        for (int64_t u = u0; u < u1; ++u) {
          for (int64_t dy = 0; dy < 3; ++dy) {
            const int64_t gy = u - dy + 1;
            if (gy < 0 || gy >= h) continue;
            for (int64_t dx_ = 0; dx_ < 3; ++dx_) {
              const int64_t v0 = std::max<int64_t>(0, dx_ - 1);
              const int64_t v1 = std::min<int64_t>(w - 1, w - 2 + dx_);
              const int64_t cnt = v1 - v0 + 1;
              if (cnt <= 0) continue;
              const T* grow = g.data() + (gy * w + (v0 - dx_ + 1)) * co;
              const T* wd = vw2.data() + (dy * 3 + dx_) * ci * co;
              gemm_nt(grow, wd, dx.data() + (u * w + v0) * ci, cnt, ci, co, true);
            }
          }
        }
      });
    }
    if (t.needs_grad(W)) {
      Tensor<T>& dw = t.grad(W);
      for (int64_t dy = 0; dy < 3; ++dy)
        for (int64_t dx_ = 0; dx_ < 3; ++dx_) {
          T* dwd = dw.data() + (dy * 3 + dx_) * ci * co;
          for (int64_t y = 0; y < h; ++y) {
            const int64_t sy = y + dy - 1;
            if (sy < 0 || sy >= h) continue;
            const int64_t x0 = std::max<int64_t>(0, 1 - dx_);
            const int64_t x1 = std::min<int64_t>(w - 1, w - dx_);
            const int64_t cnt = x1 - x0 + 1;
            if (cnt <= 0) continue;
            const T* a = vx2.data() + (sy * w + (x0 + dx_ - 1)) * ci;
            const T* grow = g.data() + (y * w + x0) * co;
            gemm_tn(a, grow, dwd, ci, co, cnt, true);
          }
        }
    }
    if (t.needs_grad(b)) {
      Tensor<T>& db = t.grad(b);
      for (int64_t p = 0; p < h * w; ++p)
        for (int64_t j = 0; j < co; ++j) db[j] += g[p * co + j];
    }
  });
}

// Depthwise 3x3, zero padding. x:(h,w,c) W:(3,3,c) b:(c).
template <typename T>
TapeId<T> dwconv3x3(Tape<T>& t, TapeId<T> x, TapeId<T> W, TapeId<T> b) {
  const Tensor<T>& vx = t.val(x);
  const Tensor<T>& vw = t.val(W);
  const Tensor<T>& vb = t.val(b);
  const int64_t h = vx.dim(0), w = vx.dim(1), c = vx.dim(2);
  Tensor<T> out({h, w, c});
  parallel_for(h, [&](int64_t y0, int64_t y1) {
    for (int64_t y = y0; y < y1; ++y)
      for (int64_t xq = 0; xq < w; ++xq) {
        T* o = out.data() + (y * w + xq) * c;
        for (int64_t j = 0; j < c; ++j) o[j] = vb[j];
        for (int64_t dy = 0; dy < 3; ++dy) {
          const int64_t sy = y + dy - 1;
          if (sy < 0 || sy >= h) continue;
          for (int64_t dx = 0; dx < 3; ++dx) {
            const int64_t sx = xq + dx - 1;
            if (sx < 0 || sx >= w) continue;
            const T* a = vx.data() + (sy * w + sx) * c;
            const T* wd = vw.data() + (dy * 3 + dx) * c;
            for (int64_t j = 0; j < c; ++j) o[j] += a[j] * wd[j];
          }
        }
      }
  });
  const bool ng = t.needs_grad(x) || t.needs_grad(W) || t.needs_grad(b);
  return t.op_node(std::move(out), ng, [&t, x, W, b, h, w, c](TapeId<T> self) {
    const Tensor<T>& g = t.grad(self);
    const Tensor<T>& vx2 = t.val(x);
    const Tensor<T>& vw2 = t.val(W);
    if (t.needs_grad(x)) {
      Tensor<T>& dx = t.grad(x);
      parallel_for(h, [&](int64_t u0, int64_t u1) {
        for (int64_t u = u0; u < u1; ++u)
          for (int64_t v = 0; v < w; ++v) {
            T* d = dx.data() + (u * w + v) * c;
            for (int64_t dy = 0; dy < 3; ++dy) {
              const int64_t gy = u - dy + 1;
              if (gy < 0 || gy >= h) continue;
              for (int64_t dx_ = 0; dx_ < 3; ++dx_) {
                const int64_t gx = v - dx_ + 1;
                if (gx < 0 || gx >= w) continue;
                const T* grow = g.data() + (gy * w + gx) * c;
                const T* wd = vw2.data() + (dy * 3 + dx_) * c;
                for (int64_t j = 0; j < c; ++j) d[j] += grow[j] * wd[j];
              }
            }
          }
      });
    }
    if (t.needs_grad(W)) {
      Tensor<T>& dw = t.grad(W);
      for (int64_t dy = 0; dy < 3; ++dy)
        for (int64_t dx_ = 0; dx_ < 3; ++dx_) {
          T* dwd = dw.data() + (dy * 3 + dx_) * c;
          for (int64_t y = 0; y < h; ++y) {
            const int64_t sy = y + dy - 1;
            if (sy < 0 || sy >= h) continue;
            for (int64_t xq = 0; xq < w; ++xq) {
              const int64_t sx = xq + dx_ - 1;
              if (sx < 0 || sx >= w) continue;
              const T* a = vx2.data() + (sy * w + sx) * c;
              const T* grow = g.data() + (y * w + xq) * c;
              for (int64_t j = 0; j < c; ++j) dwd[j] += a[j] * grow[j];
            }
          }
        }
    }
    if (t.needs_grad(b)) {
      Tensor<T>& db = t.grad(b);
      for (int64_t p = 0; p < h * w; ++p)
        for (int64_t j = 0; j < c; ++j) db[j] += g[p * c + j];
    }
  });
}

// ------------------------------------------------------------ normalization

// LayerNorm over the channel (last) axis per position.
template <typename T>
TapeId<T> layer_norm(Tape<T>& t, TapeId<T> x, TapeId<T> gamma, TapeId<T> beta) {
  constexpr T kEps = T(1e-5);
  const Tensor<T>& vx = t.val(x);
  const Tensor<T>& vg = t.val(gamma);
  const Tensor<T>& vbeta = t.val(beta);
  const int64_t c = vg.numel();
  const int64_t rows = vx.numel() / c;
  Tensor<T> out(vx.shape());
  auto stats = std::make_shared<Tensor<T>>(std::vector<int64_t>{rows, 2});
  for (int64_t r = 0; r < rows; ++r) {
    const T* xr = vx.data() + r * c;
    T m = 0;
    for (int64_t j = 0; j < c; ++j) m += xr[j];
    m /= static_cast<T>(c);
    T var = 0;
    for (int64_t j = 0; j < c; ++j) var += (xr[j] - m) * (xr[j] - m);
    var /= static_cast<T>(c);
    const T istd = T(1) / std::sqrt(var + kEps);
    stats->at(r, 0) = m;
    stats->at(r, 1) = istd;
    T* orow = out.data() + r * c;
    for (int64_t j = 0; j < c; ++j) orow[j] = (xr[j] - m) * istd * vg[j] + vbeta[j];
  }
  const bool ng = t.needs_grad(x) || t.needs_grad(gamma) || t.needs_grad(beta);
  return t.op_node(
      std::move(out), ng, [&t, x, gamma, beta, rows, c, stats](TapeId<T> self) {
        const Tensor<T>& g = t.grad(self);
        const Tensor<T>& vx2 = t.val(x);
        const Tensor<T>& vg2 = t.val(gamma);
        if (t.needs_grad(x)) {
          Tensor<T>& dx = t.grad(x);
          parallel_for(rows, [&](int64_t r0, int64_t r1) {
            for (int64_t r = r0; r < r1; ++r) {
              const T m = stats->at(r, 0), istd = stats->at(r, 1);
              const T* xr = vx2.data() + r * c;
              const T* gr = g.data() + r * c;
              T a = 0, bq = 0;
              for (int64_t j = 0; j < c; ++j) {
                const T xhat = (xr[j] - m) * istd;
                const T dxh = gr[j] * vg2[j];
                a += dxh;
                bq += dxh * xhat;
              }
              a /= static_cast<T>(c);
              bq /= static_cast<T>(c);
              T* dxr = dx.data() + r * c;
              for (int64_t j = 0; j < c; ++j) {
                const T xhat = (xr[j] - m) * istd;
                dxr[j] += istd * (gr[j] * vg2[j] - a - xhat * bq);
              }
            }
          });
        }
        if (t.needs_grad(gamma)) {
          Tensor<T>& dg = t.grad(gamma);
          for (int64_t r = 0; r < rows; ++r) {
            const T m = stats->at(r, 0), istd = stats->at(r, 1);
            const T* xr = vx2.data() + r * c;
            const T* gr = g.data() + r * c;
            for (int64_t j = 0; j < c; ++j) dg[j] += gr[j] * (xr[j] - m) * istd;
          }
        }
        if (t.needs_grad(beta)) {
          Tensor<T>& db = t.grad(beta);
          for (int64_t r = 0; r < rows; ++r)
            for (int64_t j = 0; j < c; ++j) db[j] += g[r * c + j];
        }
      });
}

// -------------------------------------------------------------- activations

template <typename T>
TapeId<T> silu(Tape<T>& t, TapeId<T> x) {
  const Tensor<T>& vx = t.val(x);
  Tensor<T> out(vx.shape());
  const int64_t n = vx.numel();
  for (int64_t i = 0; i < n; ++i) out[i] = vx[i] * sigmoid_v(vx[i]);
  return t.op_node(std::move(out), t.needs_grad(x), [&t, x, n](TapeId<T> self) {
    const Tensor<T>& g = t.grad(self);
    const Tensor<T>& vx2 = t.val(x);
    Tensor<T>& dx = t.grad(x);
    for (int64_t i = 0; i < n; ++i) {
      const T s = sigmoid_v(vx2[i]);
      dx[i] += g[i] * s * (T(1) + vx2[i] * (T(1) - s));
    }
  });
}

template <typename T>
TapeId<T> relu(Tape<T>& t, TapeId<T> x) {
  const Tensor<T>& vx = t.val(x);
  Tensor<T> out(vx.shape());
  const int64_t n = vx.numel();
  for (int64_t i = 0; i < n; ++i) out[i] = vx[i] > T(0) ? vx[i] : T(0);
  return t.op_node(std::move(out), t.needs_grad(x), [&t, x, n](TapeId<T> self) {
    const Tensor<T>& g = t.grad(self);
    const Tensor<T>& vx2 = t.val(x);
    Tensor<T>& dx = t.grad(x);
    for (int64_t i = 0; i < n; ++i)
      if (vx2[i] > T(0)) dx[i] += g[i];
  });
}

template <typename T>
TapeId<T> softplus(Tape<T>& t, TapeId<T> x) {
  const Tensor<T>& vx = t.val(x);
  Tensor<T> out(vx.shape());
  const int64_t n = vx.numel();
  for (int64_t i = 0; i < n; ++i) out[i] = softplus_v(vx[i]);
  return t.op_node(std::move(out), t.needs_grad(x), [&t, x, n](TapeId<T> self) {
    const Tensor<T>& g = t.grad(self);
    const Tensor<T>& vx2 = t.val(x);
    Tensor<T>& dx = t.grad(x);
    for (int64_t i = 0; i < n; ++i) dx[i] += g[i] * sigmoid_v(vx2[i]);
  });
}

// out = -exp(x); the state matrix A is kept negative this way.
template <typename T>
TapeId<T> neg_exp(Tape<T>& t, TapeId<T> x) {
  const Tensor<T>& vx = t.val(x);
  Tensor<T> out(vx.shape());
  const int64_t n = vx.numel();
  for (int64_t i = 0; i < n; ++i) out[i] = -fexp(vx[i]);
  return t.op_node(std::move(out), t.needs_grad(x), [&t, x, n](TapeId<T> self) {
    const Tensor<T>& g = t.grad(self);
    const Tensor<T>& vo = t.val(self);
    Tensor<T>& dx = t.grad(x);
    for (int64_t i = 0; i < n; ++i) dx[i] += g[i] * vo[i];
  });
}

// Softmax over the whole (small) tensor, e.g. kernel-bank weights.
template <typename T>
TapeId<T> softmax_vec(Tape<T>& t, TapeId<T> x) {
  const Tensor<T>& vx = t.val(x);
  const int64_t n = vx.numel();
  Tensor<T> out(vx.shape());
  T mx = vx[0];
  for (int64_t i = 1; i < n; ++i) mx = std::max(mx, vx[i]);
  T sum = 0;
  for (int64_t i = 0; i < n; ++i) {
    out[i] = fexp(vx[i] - mx);
    sum += out[i];
  }
  for (int64_t i = 0; i < n; ++i) out[i] /= sum;
  return t.op_node(std::move(out), t.needs_grad(x), [&t, x, n](TapeId<T> self) {
    const Tensor<T>& g = t.grad(self);
    const Tensor<T>& p = t.val(self);
    Tensor<T>& dx = t.grad(x);
    T dot = 0;
    for (int64_t i = 0; i < n; ++i) dot += g[i] * p[i];
    for (int64_t i = 0; i < n; ++i) dx[i] += p[i] * (g[i] - dot);
  });
}

// -------------------------------------------------------------- restructure

template <typename T>
TapeId<T> concat_cols(Tape<T>& t, const std::vector<TapeId<T>>& parts) {
  int64_t co = 0;
  bool ng = false;
  std::vector<int64_t> widths;
  for (TapeId<T> p : parts) {
    widths.push_back(t.val(p).shape().back());
    co += widths.back();
    ng = ng || t.needs_grad(p);
  }
  const int64_t rows = t.val(parts[0]).numel() / widths[0];
  Tensor<T> out({rows, co});
  int64_t off = 0;
  for (size_t i = 0; i < parts.size(); ++i) {
    const Tensor<T>& v = t.val(parts[i]);
    const int64_t ci = widths[i];
    for (int64_t r = 0; r < rows; ++r)
      std::memcpy(out.data() + r * co + off, v.data() + r * ci,
                  static_cast<size_t>(ci) * sizeof(T));
    off += ci;
  }
  auto parts_copy = std::make_shared<std::vector<TapeId<T>>>(parts);
  auto widths_copy = std::make_shared<std::vector<int64_t>>(widths);
  return t.op_node(std::move(out), ng,
                   [&t, parts_copy, widths_copy, rows, co](TapeId<T> self) {
                     const Tensor<T>& g = t.grad(self);
                     int64_t off2 = 0;
                     for (size_t i = 0; i < parts_copy->size(); ++i) {
                       const int64_t ci = (*widths_copy)[i];
                       const TapeId<T> p = (*parts_copy)[i];
                       if (t.needs_grad(p)) {
                         Tensor<T>& dp = t.grad(p);
                         for (int64_t r = 0; r < rows; ++r)
                           for (int64_t j = 0; j < ci; ++j)
                             dp[r * ci + j] += g[r * co + off2 + j];
                       }
                       off2 += ci;
                     }
                   });
}

// Row-wise concatenation of equally wide blocks.
template <typename T>
TapeId<T> concat_rows(Tape<T>& t, const std::vector<TapeId<T>>& parts) {
  const int64_t c = t.val(parts[0]).shape().back();
  int64_t rows = 0;
  bool ng = false;
  std::vector<int64_t> counts;
  for (TapeId<T> p : parts) {
    counts.push_back(t.val(p).numel() / c);
    rows += counts.back();
    ng = ng || t.needs_grad(p);
  }
  Tensor<T> out({rows, c});
  int64_t off = 0;
  for (size_t i = 0; i < parts.size(); ++i) {
    const Tensor<T>& v = t.val(parts[i]);
    std::memcpy(out.data() + off * c, v.data(),
                static_cast<size_t>(v.numel()) * sizeof(T));
    off += counts[i];
  }
  auto parts_copy = std::make_shared<std::vector<TapeId<T>>>(parts);
  auto counts_copy = std::make_shared<std::vector<int64_t>>(counts);
  return t.op_node(std::move(out), ng, [&t, parts_copy, counts_copy, c](TapeId<T> self) {
    const Tensor<T>& g = t.grad(self);
    int64_t off2 = 0;
    for (size_t i = 0; i < parts_copy->size(); ++i) {
      const int64_t cnt = (*counts_copy)[i];
      const TapeId<T> p = (*parts_copy)[i];
      if (t.needs_grad(p)) {
        Tensor<T>& dp = t.grad(p);
        for (int64_t j = 0; j < cnt * c; ++j) dp[j] += g[off2 * c + j];
      }
      off2 += cnt;
    }
  });
}

// out[i,:] = x[idx[i],:]; scatter-add on the way back.
template <typename T>
TapeId<T> gather_rows(Tape<T>& t, TapeId<T> x,
                      std::shared_ptr<const std::vector<int64_t>> idx) {
  const Tensor<T>& vx = t.val(x);
  const int64_t c = vx.shape().back();
  const int64_t n = static_cast<int64_t>(idx->size());
  Tensor<T> out({n, c});
  for (int64_t i = 0; i < n; ++i)
    std::memcpy(out.data() + i * c, vx.data() + (*idx)[static_cast<size_t>(i)] * c,
                static_cast<size_t>(c) * sizeof(T));
  return t.op_node(std::move(out), t.needs_grad(x), [&t, x, idx, n, c](TapeId<T> self) {
    const Tensor<T>& g = t.grad(self);
    Tensor<T>& dx = t.grad(x);
    for (int64_t i = 0; i < n; ++i) {
      T* d = dx.data() + (*idx)[static_cast<size_t>(i)] * c;
      const T* gr = g.data() + i * c;
      for (int64_t j = 0; j < c; ++j) d[j] += gr[j];
    }
  });
}

// out = sum_i w[i] * bank[i]; bank:(nb,C,C), w: nb entries.
template <typename T>
TapeId<T> mix_bank(Tape<T>& t, TapeId<T> bank, TapeId<T> w) {
  const Tensor<T>& vb = t.val(bank);
  const Tensor<T>& vw = t.val(w);
  const int64_t nb = vb.dim(0);
  const int64_t cc = vb.numel() / nb;
  Tensor<T> out({vb.dim(1), vb.dim(2)});
  for (int64_t i = 0; i < nb; ++i) {
    const T wi = vw[i];
    const T* bi = vb.data() + i * cc;
    for (int64_t j = 0; j < cc; ++j) out[j] += wi * bi[j];
  }
  const bool ng = t.needs_grad(bank) || t.needs_grad(w);
  return t.op_node(std::move(out), ng, [&t, bank, w, nb, cc](TapeId<T> self) {
    const Tensor<T>& g = t.grad(self);
    const Tensor<T>& vb2 = t.val(bank);
    const Tensor<T>& vw2 = t.val(w);
    if (t.needs_grad(bank)) {
      Tensor<T>& db = t.grad(bank);
      for (int64_t i = 0; i < nb; ++i) {
        const T wi = vw2[i];
        T* d = db.data() + i * cc;
        for (int64_t j = 0; j < cc; ++j) d[j] += wi * g[j];
      }
    }
    if (t.needs_grad(w)) {
      Tensor<T>& dw = t.grad(w);
      for (int64_t i = 0; i < nb; ++i) {
        const T* bi = vb2.data() + i * cc;
        T acc = 0;
        for (int64_t j = 0; j < cc; ++j) acc += bi[j] * g[j];
        dw[i] += acc;
      }
    }
  });
}

// Gaussian RBF ensemble weights: w = exp(-d^2 / (2 sigma^2)), sigma = exp(ls).
// d2 is a constant offset tensor; only log-sigma trains.
template <typename T>
TapeId<T> rbf_weights(Tape<T>& t, TapeId<T> d2, TapeId<T> log_sigma, int64_t sidx) {
  const Tensor<T>& vd = t.val(d2);
  const T ls = t.val(log_sigma)[sidx];
  const T inv2s2 = fexp(T(-2) * ls);  // 1 / sigma^2
  const int64_t n = vd.numel();
  Tensor<T> out(vd.shape());
  for (int64_t i = 0; i < n; ++i) out[i] = fexp(T(-0.5) * vd[i] * inv2s2);
  return t.op_node(std::move(out), t.needs_grad(log_sigma),
                   [&t, d2, log_sigma, sidx, inv2s2, n](TapeId<T> self) {
                     const Tensor<T>& g = t.grad(self);
                     const Tensor<T>& vd2 = t.val(d2);
                     const Tensor<T>& w = t.val(self);
                     T acc = 0;
                     for (int64_t i = 0; i < n; ++i)
                       acc += g[i] * w[i] * vd2[i] * inv2s2;
                     t.grad(log_sigma)[sidx] += acc;
                   });
}

// -------------------------------------------------------------- attention

// Softmax(Q K^T [/sqrt(C)]) V over flattened positions. With gradients the
// row-softmax matrix is kept for the backward pass; without, rows stream in
// blocks so the full matrix never materializes.
template <typename T>
TapeId<T> attention(Tape<T>& t, TapeId<T> q, TapeId<T> k, TapeId<T> v, bool scaled) {
  const Tensor<T>& vq = t.val(q);
  const Tensor<T>& vk = t.val(k);
  const Tensor<T>& vv = t.val(v);
  const int64_t C = vq.shape().back();
  const int64_t n = vq.numel() / C;
  const int64_t m = vk.numel() / C;
  const T sc = scaled ? T(1) / std::sqrt(static_cast<T>(C)) : T(1);
  Tensor<T> out({n, C});
  const bool ng =
      t.grad_enabled() && (t.needs_grad(q) || t.needs_grad(k) || t.needs_grad(v));

  std::shared_ptr<Tensor<T>> P;
  if (ng) {
    P = std::make_shared<Tensor<T>>(std::vector<int64_t>{n, m});
    gemm_nt(vq.data(), vk.data(), P->data(), n, m, C);
    parallel_for(n, [&](int64_t r0, int64_t r1) {
      for (int64_t r = r0; r < r1; ++r) {
        T* row = P->data() + r * m;
        T mx = row[0] * sc;
        for (int64_t j = 0; j < m; ++j) mx = std::max(mx, row[j] * sc);
        T sum = 0;
        for (int64_t j = 0; j < m; ++j) {
          row[j] = fexp(row[j] * sc - mx);
          sum += row[j];
        }
        const T inv = T(1) / sum;
        for (int64_t j = 0; j < m; ++j) row[j] *= inv;
      }
    });
    gemm_nn(P->data(), vv.data(), out.data(), n, C, m);
  } else {
    constexpr int64_t kBlock = 128;
    const int64_t nblocks = (n + kBlock - 1) / kBlock;
    parallel_for(nblocks, [&](int64_t b0, int64_t b1) {
      std::vector<T> logits(static_cast<size_t>(kBlock * m));
      for (int64_t bi = b0; bi < b1; ++bi) {
        const int64_t r0 = bi * kBlock;
        const int64_t rc = std::min<int64_t>(kBlock, n - r0);
        gemm_nt(vq.data() + r0 * C, vk.data(), logits.data(), rc, m, C);
        for (int64_t r = 0; r < rc; ++r) {
          T* row = logits.data() + r * m;
          T mx = row[0] * sc;
          for (int64_t j = 0; j < m; ++j) mx = std::max(mx, row[j] * sc);
          T sum = 0;
          for (int64_t j = 0; j < m; ++j) {
            row[j] = fexp(row[j] * sc - mx);
            sum += row[j];
          }
          const T inv = T(1) / sum;
          for (int64_t j = 0; j < m; ++j) row[j] *= inv;
        }
        gemm_nn(logits.data(), vv.data(), out.data() + r0 * C, rc, C, m);
      }
    });
  }
  return t.op_node(std::move(out), ng, [&t, q, k, v, P, n, m, C, sc](TapeId<T> self) {
    const Tensor<T>& g = t.grad(self);
    if (t.needs_grad(v)) gemm_tn(P->data(), g.data(), t.grad(v).data(), m, C, n, true);
    // dlogits = P o (dP - rowsum(dP o P)), then scale
    Tensor<T> dP({n, m});
    gemm_nt(g.data(), t.val(v).data(), dP.data(), n, m, C);
    parallel_for(n, [&](int64_t r0, int64_t r1) {
      for (int64_t r = r0; r < r1; ++r) {
        T* dpr = dP.data() + r * m;
        const T* pr = P->data() + r * m;
        T dot = 0;
        for (int64_t j = 0; j < m; ++j) dot += dpr[j] * pr[j];
        for (int64_t j = 0; j < m; ++j) dpr[j] = pr[j] * (dpr[j] - dot) * sc;
      }
    });
    if (t.needs_grad(q)) gemm_nn(dP.data(), t.val(k).data(), t.grad(q).data(), n, C, m, true);
    if (t.needs_grad(k)) gemm_tn(dP.data(), t.val(q).data(), t.grad(k).data(), m, C, n, true);
  });
}

// ----------------------------------------------------------- selective scan

// One directional selective scan over a flattened 2-D feature map.
//   h_t = exp(dt_t * A) h_{t-1} + dt_t * B_t x_t,   y_t = C_t . h_t + D x_t
// x, dt: (L,c); B, C: (L,d); A: (c,d); D: (c). pos maps scan step -> raster
// index, which realizes the four VMamba scan orders without data movement.
template <typename T>
TapeId<T> scan_dir(Tape<T>& t, TapeId<T> x, TapeId<T> dt, TapeId<T> Bv, TapeId<T> Cv,
                   TapeId<T> A, TapeId<T> D,
                   std::shared_ptr<const std::vector<int64_t>> pos) {
  const Tensor<T>& vx = t.val(x);
  const Tensor<T>& vdt = t.val(dt);
  const Tensor<T>& vB = t.val(Bv);
  const Tensor<T>& vC = t.val(Cv);
  const Tensor<T>& vA = t.val(A);
  const Tensor<T>& vD = t.val(D);
  const int64_t c = vA.dim(0), d = vA.dim(1);
  const int64_t L = static_cast<int64_t>(pos->size());
  Tensor<T> out(vx.shape());
  const bool ng = t.grad_enabled() &&
                  (t.needs_grad(x) || t.needs_grad(dt) || t.needs_grad(Bv) ||
                   t.needs_grad(Cv) || t.needs_grad(A) || t.needs_grad(D));

  std::shared_ptr<Tensor<T>> hs;  // h after each step, (L,c,d), grad mode only
  if (ng) hs = std::make_shared<Tensor<T>>(std::vector<int64_t>{L, c, d});
  std::vector<T> h(static_cast<size_t>(c * d), T(0));
  for (int64_t s = 0; s < L; ++s) {
    const int64_t p = (*pos)[static_cast<size_t>(s)];
    const T* xr = vx.data() + p * c;
    const T* dtr = vdt.data() + p * c;
    const T* Br = vB.data() + p * d;
    const T* Cr = vC.data() + p * d;
    T* orow = out.data() + p * c;
    for (int64_t i = 0; i < c; ++i) {
      const T dti = dtr[i];
      const T xi = xr[i];
      const T* Ai = vA.data() + i * d;
      T* hi = h.data() + i * d;
      T acc = 0;
      for (int64_t j = 0; j < d; ++j) {
        const T a = fexp(dti * Ai[j]);
        hi[j] = a * hi[j] + dti * Br[j] * xi;
        acc += Cr[j] * hi[j];
      }
      orow[i] = acc + vD[i] * xi;
    }
    if (ng) std::memcpy(hs->data() + s * c * d, h.data(), h.size() * sizeof(T));
  }

  return t.op_node(std::move(out), ng,
                   [&t, x, dt, Bv, Cv, A, D, pos, hs, c, d, L](TapeId<T> self) {
                     const Tensor<T>& g = t.grad(self);
                     const Tensor<T>& vx2 = t.val(x);
                     const Tensor<T>& vdt2 = t.val(dt);
                     const Tensor<T>& vB2 = t.val(Bv);
                     const Tensor<T>& vC2 = t.val(Cv);
                     const Tensor<T>& vA2 = t.val(A);
                     const Tensor<T>& vD2 = t.val(D);
                     Tensor<T>& dx = t.grad(x);
                     Tensor<T>& ddt = t.grad(dt);
                     Tensor<T>& dB = t.grad(Bv);
                     Tensor<T>& dC = t.grad(Cv);
                     Tensor<T>& dA = t.grad(A);
                     Tensor<T>& dD = t.grad(D);
                     std::vector<T> gh(static_cast<size_t>(c * d), T(0));
                     for (int64_t s = L - 1; s >= 0; --s) {
                       const int64_t p = (*pos)[static_cast<size_t>(s)];
                       const T* xr = vx2.data() + p * c;
                       const T* dtr = vdt2.data() + p * c;
                       const T* Br = vB2.data() + p * d;
                       const T* Cr = vC2.data() + p * d;
                       const T* gr = g.data() + p * c;
                       const T* hcur = hs->data() + s * c * d;
                       const T* hprev = s > 0 ? hs->data() + (s - 1) * c * d : nullptr;
                       T* dBr = dB.data() + p * d;
                       T* dCr = dC.data() + p * d;
                       for (int64_t i = 0; i < c; ++i) {
                         const T dti = dtr[i];
                         const T xi = xr[i];
                         const T gyi = gr[i];
                         const T* Ai = vA2.data() + i * d;
                         T* ghi = gh.data() + i * d;
                         T* dAi = dA.data() + i * d;
                         T gx_acc = gyi * vD2[i];
                         T gdt_acc = 0;
                         for (int64_t j = 0; j < d; ++j) {
                           dCr[j] += gyi * hcur[i * d + j];
                           const T ghij = ghi[j] + gyi * Cr[j];
                           const T a = fexp(dti * Ai[j]);
                           const T hp = hprev ? hprev[i * d + j] : T(0);
                           const T ga = ghij * hp;
                           dAi[j] += ga * dti * a;
                           gdt_acc += ga * Ai[j] * a + ghij * Br[j] * xi;
                           dBr[j] += ghij * dti * xi;
                           gx_acc += ghij * dti * Br[j];
                           ghi[j] = ghij * a;
                         }
                         dD[i] += gyi * xi;
                         ddt[p * c + i] += gdt_acc;
                         dx[p * c + i] += gx_acc;
                       }
                     }
                   });
}

// -------------------------------------------------------------- reductions

template <typename T>
TapeId<T> sum_all(Tape<T>& t, TapeId<T> x) {
  const Tensor<T>& vx = t.val(x);
  Tensor<T> out({1});
  T acc = 0;
  for (int64_t i = 0; i < vx.numel(); ++i) acc += vx[i];
  out[0] = acc;
  const int64_t n = vx.numel();
  return t.op_node(std::move(out), t.needs_grad(x), [&t, x, n](TapeId<T> self) {
    const T g = t.grad(self)[0];
    Tensor<T>& dx = t.grad(x);
    for (int64_t i = 0; i < n; ++i) dx[i] += g;
  });
}

// Mean absolute error between two equally sized tensors.
template <typename T>
TapeId<T> l1_loss(Tape<T>& t, TapeId<T> a, TapeId<T> b) {
  const Tensor<T>& va = t.val(a);
  const Tensor<T>& vb = t.val(b);
  const int64_t n = va.numel();
  if (n == 0 || n != vb.numel()) throw NumericsError("l1_loss: bad operand sizes");
  Tensor<T> out({1});
  T acc = 0;
  for (int64_t i = 0; i < n; ++i) acc += std::abs(va[i] - vb[i]);
  out[0] = acc / static_cast<T>(n);
  const bool ng = t.needs_grad(a) || t.needs_grad(b);
  return t.op_node(std::move(out), ng, [&t, a, b, n](TapeId<T> self) {
    const T g = t.grad(self)[0] / static_cast<T>(n);
    const Tensor<T>& va2 = t.val(a);
    const Tensor<T>& vb2 = t.val(b);
    for (int64_t i = 0; i < n; ++i) {
      const T diff = va2[i] - vb2[i];
      const T s = diff > T(0) ? g : (diff < T(0) ? -g : T(0));
      if (t.needs_grad(a)) t.grad(a)[i] += s;
      if (t.needs_grad(b)) t.grad(b)[i] -= s;
    }
  });
}

}  // namespace anytsr
