// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "anytsr/core/tensor.hpp"
#include "anytsr/nn/param.hpp"

namespace anytsr {

// Adam with bias correction; beta1=0.9, beta2=0.999, eps=1e-8.
template <typename T>
class Adam {
 public:
  Adam() = default;

  explicit Adam(const ParamStore<T>& store) { reset(store); }

  void reset(const ParamStore<T>& store) {
    m_.clear();
    v_.clear();
    for (size_t i = 0; i < store.size(); ++i) {
      m_.emplace_back(store.tensor(i).shape());
      v_.emplace_back(store.tensor(i).shape());
    }
    step_ = 0;
  }

  int64_t step_count() const { return step_; }
  void set_step_count(int64_t s) { step_ = s; }
  std::vector<Tensor<T>>& moments_m() { return m_; }
  std::vector<Tensor<T>>& moments_v() { return v_; }
  const std::vector<Tensor<T>>& moments_m() const { return m_; }
  const std::vector<Tensor<T>>& moments_v() const { return v_; }

  void apply(ParamStore<T>& store, const std::vector<Tensor<T>>& grads, double lr) {
    constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kEps = 1e-8;
    ++step_;
    const double bc1 = 1.0 - std::pow(kBeta1, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(kBeta2, static_cast<double>(step_));
    for (size_t p = 0; p < m_.size(); ++p) {
      Tensor<T>& w = store.tensor(p);
      const Tensor<T>& g = grads[p];
      Tensor<T>& m = m_[p];
      Tensor<T>& v = v_[p];
      for (int64_t i = 0; i < w.numel(); ++i) {
        const double gi = static_cast<double>(g[i]);
        const double mi = kBeta1 * static_cast<double>(m[i]) + (1.0 - kBeta1) * gi;
        const double vi = kBeta2 * static_cast<double>(v[i]) + (1.0 - kBeta2) * gi * gi;
        m[i] = static_cast<T>(mi);
        v[i] = static_cast<T>(vi);
        const double mhat = mi / bc1;
        const double vhat = vi / bc2;
        w[i] = static_cast<T>(static_cast<double>(w[i]) -
                              lr * mhat / (std::sqrt(vhat) + kEps));
      }
    }
  }

 private:
  std::vector<Tensor<T>> m_, v_;
  int64_t step_ = 0;
};

}  // namespace anytsr
