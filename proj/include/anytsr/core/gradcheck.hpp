// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "anytsr/core/tensor.hpp"

namespace anytsr {

struct FdReport {
  std::string tensor;
  double max_rel = 0.0;
  int64_t elements = 0;
};

// Central finite differences at 64-bit precision against supplied analytic
// gradients. `loss` must be a pure function of the tensors behind `params`
// (it is re-evaluated under elementwise perturbation). Relative error uses a
// small denominator floor so gradients below FD noise cannot dominate.
inline std::vector<FdReport> finite_diff_check(
    const std::vector<std::string>& names, std::vector<Tensor<double>*> params,
    const std::vector<Tensor<double>>& analytic,
    const std::function<double()>& loss, double h = 1e-4) {
  std::vector<FdReport> reports;
  for (size_t pi = 0; pi < params.size(); ++pi) {
    Tensor<double>& p = *params[pi];
    FdReport rep;
    rep.tensor = names[pi];
    rep.elements = p.numel();
    for (int64_t i = 0; i < p.numel(); ++i) {
      const double saved = p[i];
      p[i] = saved + h;
      const double fp = loss();
      p[i] = saved - h;
      const double fm = loss();
      p[i] = saved;
      const double gn = (fp - fm) / (2.0 * h);
      const double ga = analytic[pi][i];
      const double denom = std::max({std::abs(ga), std::abs(gn), 1e-3});
      rep.max_rel = std::max(rep.max_rel, std::abs(ga - gn) / denom);
    }
    reports.push_back(rep);
  }
  return reports;
}

}  // namespace anytsr
