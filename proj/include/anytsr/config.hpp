// SPDX-License-Identifier: Apache-2.0
//
// Run configuration: model + training knobs, parsed from a plain-text
// `key = value` file with `#` comments. Unknown keys are rejected; every
// value is validated before any work starts. The same serialization is the
// checkpoint's config snapshot.
#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "anytsr/core/errors.hpp"
#include "anytsr/nn/config.hpp"

namespace anytsr {

struct TrainConfig {
  int64_t lr_size = 48;
  double scale_min = 1.0;
  double scale_max = 4.0;
  int64_t batch = 16;
  int64_t epochs = 100;
  int64_t repeats_per_image = 20;
  double lr_init = 4e-5;
  double lr_max = 4e-4;
  int64_t warmup_epochs = 20;
  uint64_t seed = 0;
  double grad_clip = 0.0;  // 0 disables clipping
  int64_t checkpoint_every = 10;  // epochs
  int64_t workers = 1;
  bool deterministic = true;

  void validate() const {
    if (lr_size < 3) throw ConfigError("train.lr_size must be >= 3");
    if (scale_min < 1.0) throw ConfigError("train.scale_min must be >= 1");
    if (scale_max < scale_min) throw ConfigError("train.scale_max must be >= scale_min");
    if (batch < 1) throw ConfigError("train.batch must be >= 1");
    if (epochs < 1) throw ConfigError("train.epochs must be >= 1");
    if (repeats_per_image < 1) throw ConfigError("train.repeats_per_image must be >= 1");
    if (lr_init <= 0 || lr_max < lr_init)
      throw ConfigError("train.lr_init/lr_max must satisfy 0 < lr_init <= lr_max");
    if (warmup_epochs < 0 || warmup_epochs >= epochs)
      throw ConfigError("train.warmup_epochs must be in [0, epochs)");
    if (grad_clip < 0) throw ConfigError("train.grad_clip must be >= 0");
    if (checkpoint_every < 1) throw ConfigError("train.checkpoint_every must be >= 1");
    if (workers < 1) throw ConfigError("train.workers must be >= 1");
  }
};

struct RunConfig {
  std::string preset = "full";
  ModelConfig model;
  TrainConfig train;
  // trainer state carried through checkpoints
  int64_t state_next_step = 0;
  int64_t state_epoch = 0;
  int64_t state_adam_step = 0;

  void validate() const {
    model.validate();
    train.validate();
  }
};

inline RunConfig make_preset(const std::string& name) {
  RunConfig rc;
  rc.preset = name;
  if (name == "full") {
    rc.model = full_model_config();
  } else if (name == "tiny") {
    rc.model = tiny_model_config();
    rc.train.lr_size = 32;   // keeps the quadratic ORM cost desk-sized
    rc.train.epochs = 60;
    rc.train.warmup_epochs = 12;
  } else {
    throw ConfigError("unknown preset (use tiny or full): " + name);
  }
  return rc;
}

namespace detail {

inline bool parse_bool(const std::string& v, const std::string& key) {
  if (v == "true" || v == "1" || v == "on") return true;
  if (v == "false" || v == "0" || v == "off") return false;
  throw ConfigError("boolean expected for " + key + ", got '" + v + "'");
}

inline int64_t parse_int(const std::string& v, const std::string& key) {
  try {
    size_t pos = 0;
    const int64_t r = std::stoll(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return r;
  } catch (const std::exception&) {
    throw ConfigError("integer expected for " + key + ", got '" + v + "'");
  }
}

inline double parse_real(const std::string& v, const std::string& key) {
  try {
    size_t pos = 0;
    const double r = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return r;
  } catch (const std::exception&) {
    throw ConfigError("number expected for " + key + ", got '" + v + "'");
  }
}

inline std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

}  // namespace detail

// Applies one key = value pair; throws ConfigError for unknown keys.
inline void apply_kv(RunConfig& rc, const std::string& key, const std::string& value) {
  using detail::parse_bool;
  using detail::parse_int;
  using detail::parse_real;
  EncoderConfig& e = rc.model.encoder;
  UpsamplerConfig& u = rc.model.upsampler;
  TrainConfig& t = rc.train;
  if (key == "preset") {
    const RunConfig p = make_preset(value);
    rc.preset = p.preset;
    rc.model = p.model;
    rc.train = p.train;
  } else if (key == "encoder.layers") e.layers = parse_int(value, key);
  else if (key == "encoder.blocks") e.blocks = parse_int(value, key);
  else if (key == "encoder.channels") e.channels = parse_int(value, key);
  else if (key == "encoder.sam_bank") e.sam_bank = parse_int(value, key);
  else if (key == "encoder.d_state") e.d_state = parse_int(value, key);
  else if (key == "encoder.use_ssb_scale_term") e.use_ssb_scale_term = parse_bool(value, key);
  else if (key == "encoder.use_sam") e.use_sam = parse_bool(value, key);
  else if (key == "encoder.use_gradient_branch") e.use_gradient_branch = parse_bool(value, key);
  else if (key == "upsampler.neo_width") u.neo_width = parse_int(value, key);
  else if (key == "upsampler.neo_iters") u.neo_iters = parse_int(value, key);
  else if (key == "upsampler.use_lle") u.use_lle = parse_bool(value, key);
  else if (key == "upsampler.use_orm") u.use_orm = parse_bool(value, key);
  else if (key == "upsampler.orm_logit_scaling") u.orm_logit_scaling = parse_bool(value, key);
  else if (key == "upsampler.orm_window") u.orm_window = parse_int(value, key);
  else if (key == "upsampler.per_corner_sigma") u.per_corner_sigma = parse_bool(value, key);
  else if (key == "train.lr_size") t.lr_size = parse_int(value, key);
  else if (key == "train.scale_min") t.scale_min = parse_real(value, key);
  else if (key == "train.scale_max") t.scale_max = parse_real(value, key);
  else if (key == "train.batch") t.batch = parse_int(value, key);
  else if (key == "train.epochs") t.epochs = parse_int(value, key);
  else if (key == "train.repeats_per_image") t.repeats_per_image = parse_int(value, key);
  else if (key == "train.lr_init") t.lr_init = parse_real(value, key);
  else if (key == "train.lr_max") t.lr_max = parse_real(value, key);
  else if (key == "train.warmup_epochs") t.warmup_epochs = parse_int(value, key);
  else if (key == "train.seed") t.seed = static_cast<uint64_t>(parse_int(value, key));
  else if (key == "train.grad_clip") t.grad_clip = parse_real(value, key);
  else if (key == "train.checkpoint_every") t.checkpoint_every = parse_int(value, key);
  else if (key == "train.workers") t.workers = parse_int(value, key);
  else if (key == "train.deterministic") t.deterministic = parse_bool(value, key);
  else if (key == "state.next_step") rc.state_next_step = parse_int(value, key);
  else if (key == "state.epoch") rc.state_epoch = parse_int(value, key);
  else if (key == "state.adam_step") rc.state_adam_step = parse_int(value, key);
  else throw ConfigError("unknown config key: " + key);
}

inline RunConfig parse_config_text(const std::string& text) {
  // two passes so `preset` applies before everything else
  std::vector<std::pair<std::string, std::string>> kvs;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    kvs.emplace_back(detail::trim(line.substr(0, eq)), detail::trim(line.substr(eq + 1)));
  }
  RunConfig rc;
  for (const auto& [k, v] : kvs)
    if (k == "preset") apply_kv(rc, k, v);
  for (const auto& [k, v] : kvs)
    if (k != "preset") apply_kv(rc, k, v);
  rc.validate();
  return rc;
}

inline RunConfig load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

inline std::string serialize_config(const RunConfig& rc) {
  std::ostringstream o;
  o.precision(17);
  const EncoderConfig& e = rc.model.encoder;
  const UpsamplerConfig& u = rc.model.upsampler;
  const TrainConfig& t = rc.train;
  o << "preset = " << rc.preset << "\n";
  o << "encoder.layers = " << e.layers << "\n";
  o << "encoder.blocks = " << e.blocks << "\n";
  o << "encoder.channels = " << e.channels << "\n";
  o << "encoder.sam_bank = " << e.sam_bank << "\n";
  o << "encoder.d_state = " << e.d_state << "\n";
  o << "encoder.use_ssb_scale_term = " << (e.use_ssb_scale_term ? "true" : "false") << "\n";
  o << "encoder.use_sam = " << (e.use_sam ? "true" : "false") << "\n";
  o << "encoder.use_gradient_branch = " << (e.use_gradient_branch ? "true" : "false") << "\n";
  o << "upsampler.neo_width = " << u.neo_width << "\n";
  o << "upsampler.neo_iters = " << u.neo_iters << "\n";
  o << "upsampler.use_lle = " << (u.use_lle ? "true" : "false") << "\n";
  o << "upsampler.use_orm = " << (u.use_orm ? "true" : "false") << "\n";
  o << "upsampler.orm_logit_scaling = " << (u.orm_logit_scaling ? "true" : "false") << "\n";
  o << "upsampler.orm_window = " << u.orm_window << "\n";
  o << "upsampler.per_corner_sigma = " << (u.per_corner_sigma ? "true" : "false") << "\n";
  o << "train.lr_size = " << t.lr_size << "\n";
  o << "train.scale_min = " << t.scale_min << "\n";
  o << "train.scale_max = " << t.scale_max << "\n";
  o << "train.batch = " << t.batch << "\n";
  o << "train.epochs = " << t.epochs << "\n";
  o << "train.repeats_per_image = " << t.repeats_per_image << "\n";
  o << "train.lr_init = " << t.lr_init << "\n";
  o << "train.lr_max = " << t.lr_max << "\n";
  o << "train.warmup_epochs = " << t.warmup_epochs << "\n";
  o << "train.seed = " << t.seed << "\n";
  o << "train.grad_clip = " << t.grad_clip << "\n";
  o << "train.checkpoint_every = " << t.checkpoint_every << "\n";
  o << "train.workers = " << t.workers << "\n";
  o << "train.deterministic = " << (t.deterministic ? "true" : "false") << "\n";
  o << "state.next_step = " << rc.state_next_step << "\n";
  o << "state.epoch = " << rc.state_epoch << "\n";
  o << "state.adam_step = " << rc.state_adam_step << "\n";
  return o.str();
}

}  // namespace anytsr
