// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>

namespace anytsr {

// Linear warm-up from lr_init to lr_max over warmup_steps, then cosine decay
// back to lr_init by total_steps. Continuous at the junction.
inline double lr_schedule(int64_t step, int64_t warmup_steps, int64_t total_steps,
                          double lr_init, double lr_max) {
  if (step < 0) step = 0;
  if (warmup_steps > 0 && step < warmup_steps)
    return lr_init + (lr_max - lr_init) * static_cast<double>(step) /
                         static_cast<double>(warmup_steps);
  if (step >= total_steps) return lr_init;
  const double span = static_cast<double>(total_steps - warmup_steps);
  const double phase = span > 0 ? static_cast<double>(step - warmup_steps) / span : 1.0;
  return lr_init + (lr_max - lr_init) * 0.5 * (1.0 + std::cos(3.14159265358979323846 * phase));
}

}  // namespace anytsr
