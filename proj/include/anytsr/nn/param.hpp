// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "anytsr/core/errors.hpp"
#include "anytsr/core/graph.hpp"
#include "anytsr/core/rng.hpp"
#include "anytsr/core/tensor.hpp"

namespace anytsr {

// Ordered registry of named trainable tensors. Registration order is the
// construction order (deterministic from the config), which fixes checkpoint
// layout and optimizer iteration order.
template <typename T>
class ParamStore {
 public:
  size_t add(const std::string& name, std::vector<int64_t> shape) {
    if (index_.count(name)) throw ConfigError("duplicate parameter name: " + name);
    index_[name] = names_.size();
    names_.push_back(name);
    tensors_.emplace_back(std::move(shape));
    return names_.size() - 1;
  }

  size_t size() const { return names_.size(); }
  const std::string& name(size_t i) const { return names_[i]; }
  Tensor<T>& tensor(size_t i) { return tensors_[i]; }
  const Tensor<T>& tensor(size_t i) const { return tensors_[i]; }

  bool has(const std::string& name) const { return index_.count(name) > 0; }
  size_t index_of(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ConfigError("unknown parameter: " + name);
    return it->second;
  }
  Tensor<T>& operator[](const std::string& name) { return tensors_[index_of(name)]; }

  int64_t total_elements() const {
    int64_t n = 0;
    for (const auto& t : tensors_) n += t.numel();
    return n;
  }

 private:
  std::vector<std::string> names_;
  std::vector<Tensor<T>> tensors_;
  std::map<std::string, size_t> index_;
};

// Parameter leaves registered on a tape for one forward pass; ids parallel
// the store's index space.
template <typename T>
struct BoundParams {
  std::vector<typename Tape<T>::Id> ids;
  typename Tape<T>::Id operator[](size_t store_index) const { return ids[store_index]; }
};

template <typename T>
BoundParams<T> bind_params(Tape<T>& tape, const ParamStore<T>& store) {
  BoundParams<T> b;
  b.ids.reserve(store.size());
  for (size_t i = 0; i < store.size(); ++i) b.ids.push_back(tape.param(store.tensor(i)));
  return b;
}

// ------------------------------------------------------------------ init

// Symmetric uniform fan-in scheme for linear/conv weights.
template <typename T>
void init_uniform_fan_in(Tensor<T>& w, int64_t fan_in, Rng& rng, double gain = 1.0) {
  const double k = gain / std::sqrt(static_cast<double>(fan_in));
  for (int64_t i = 0; i < w.numel(); ++i) w[i] = static_cast<T>(rng.uniform(-k, k));
}

template <typename T>
void init_constant(Tensor<T>& w, double v) {
  for (int64_t i = 0; i < w.numel(); ++i) w[i] = static_cast<T>(v);
}

inline double inv_softplus(double y) { return std::log(std::expm1(y)); }

}  // namespace anytsr
