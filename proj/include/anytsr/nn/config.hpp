// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>

#include "anytsr/core/errors.hpp"

namespace anytsr {

// Scale-specific encoder: N layers of M state-space blocks plus SAM.
struct EncoderConfig {
  int64_t layers = 4;     // N
  int64_t blocks = 4;     // M per layer
  int64_t channels = 64;  // c
  int64_t sam_bank = 4;   // n kernels
  int64_t d_state = 8;    // SS2D state dimension
  bool use_ssb_scale_term = true;  // Table 2 "S-SSB" axis
  bool use_sam = true;             // Table 2 "SAM" axis

  bool use_gradient_branch = true;

  void validate() const {
    if (layers < 1 || blocks < 1 || channels < 1 || sam_bank < 1 || d_state < 1)
      throw ConfigError("encoder config: N, M, c, n, d_state must all be >= 1");
  }
};

// Any-scale upsampler: RBF local ensemble, offset refinement, NEO head.
struct UpsamplerConfig {
  int64_t neo_width = 64;
  int64_t neo_iters = 2;           // kernel-integral iterations
  bool use_lle = true;             // Table 2 "LLE" axis; off forces w = 1
  bool use_orm = true;             // Table 2 "ORM" axis; off bypasses refinement
  bool orm_logit_scaling = true;   // 1/sqrt(C); off restores the literal form
  int64_t orm_window = 0;          // 0 = global attention, else window size
  bool per_corner_sigma = false;   // one shared RBF width by default

  void validate() const {
    if (neo_width < 1 || neo_iters < 1)
      throw ConfigError("upsampler config: neo_width and neo_iters must be >= 1");
    if (orm_window < 0) throw ConfigError("upsampler config: orm_window must be >= 0");
  }
};

struct ModelConfig {
  EncoderConfig encoder;
  UpsamplerConfig upsampler;

  void validate() const {
    encoder.validate();
    upsampler.validate();
  }
};

inline ModelConfig tiny_model_config() {
  ModelConfig m;
  m.encoder.layers = 2;
  m.encoder.blocks = 2;
  m.encoder.channels = 32;
  m.encoder.sam_bank = 2;
  m.upsampler.neo_width = 32;
  return m;
}

inline ModelConfig full_model_config() { return ModelConfig{}; }

}  // namespace anytsr
