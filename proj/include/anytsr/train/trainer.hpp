// SPDX-License-Identifier: Apache-2.0
//
// Random-continuous-scale training loop: one scale per batch drawn uniformly
// from the configured range, lr_size^2 ground-truth pixels per sample, L1
// loss, Adam with linear warm-up and cosine decay. All randomness is derived
// statelessly from (seed, step, sample), so runs are bitwise reproducible and
// checkpoints resume exactly regardless of worker count.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

#include "anytsr/config.hpp"
#include "anytsr/core/parallel.hpp"
#include "anytsr/imaging/patch.hpp"
#include "anytsr/nn/model.hpp"
#include "anytsr/train/adam.hpp"
#include "anytsr/train/checkpoint.hpp"
#include "anytsr/train/schedule.hpp"

namespace anytsr {

template <typename T>
class Trainer {
 public:
  Trainer(Model<T>& model, const RunConfig& rc, std::vector<ImageGray> images,
          std::string out_dir)
      : model_(model), rc_(rc), images_(std::move(images)), out_dir_(std::move(out_dir)) {
    rc_.validate();
    if (images_.empty()) throw DataError("training dataset is empty");
    const int64_t crop =
        static_cast<int64_t>(std::llround(rc_.train.scale_max * rc_.train.lr_size));
    for (const auto& img : images_)
      if (crop > img.height || crop > img.width)
        throw DataError("HR image too small for scale_max * lr_size crop (" +
                        std::to_string(crop) + " px)");
    opt_.reset(model_.params());
    opt_.set_step_count(rc_.state_adam_step);
    if (!out_dir_.empty()) std::filesystem::create_directories(out_dir_);
  }

  int64_t steps_per_epoch() const {
    const int64_t samples =
        static_cast<int64_t>(images_.size()) * rc_.train.repeats_per_image;
    return std::max<int64_t>(1, samples / rc_.train.batch);
  }
  int64_t total_steps() const { return rc_.train.epochs * steps_per_epoch(); }
  int64_t warmup_steps() const { return rc_.train.warmup_epochs * steps_per_epoch(); }
  int64_t next_step() const { return rc_.state_next_step; }
  Adam<T>& optimizer() { return opt_; }
  const RunConfig& run_config() const { return rc_; }

  double learning_rate(int64_t step) const {
    return lr_schedule(step, warmup_steps(), total_steps(), rc_.train.lr_init,
                       rc_.train.lr_max);
  }

  double batch_scale(int64_t step) const {
    Rng rng(mix_seed(rc_.train.seed, 0xBA7C5, static_cast<uint64_t>(step)));
    return rng.uniform(rc_.train.scale_min, rc_.train.scale_max);
  }

  // Stateless batch for a given global step: epoch-shuffled image multiset
  // (each image repeated repeats_per_image times), one shared scale.
  std::vector<PatchPair> make_batch(int64_t step) const {
    const int64_t spe = steps_per_epoch();
    const int64_t epoch = step / spe;
    const int64_t slot = (step % spe) * rc_.train.batch;
    std::vector<int64_t> order(images_.size() *
                               static_cast<size_t>(rc_.train.repeats_per_image));
    for (size_t i = 0; i < order.size(); ++i)
      order[i] = static_cast<int64_t>(i % images_.size());
    Rng erng(mix_seed(rc_.train.seed, 0xE60C4, static_cast<uint64_t>(epoch)));
    erng.shuffle(order.begin(), order.end());

    const double s = batch_scale(step);
    std::vector<PatchPair> batch(static_cast<size_t>(rc_.train.batch));
    auto sample_one = [&](int64_t i) {
      const int64_t img_idx =
          order[static_cast<size_t>((slot + i) % static_cast<int64_t>(order.size()))];
      Rng prng(mix_seed(rc_.train.seed, 0x9A7C4, static_cast<uint64_t>(step),
                        static_cast<uint64_t>(i)));
      batch[static_cast<size_t>(i)] = sample_patch_pair(
          images_[static_cast<size_t>(img_idx)], s, rc_.train.lr_size, prng);
    };
    if (rc_.train.workers > 1) {
      parallel_for(rc_.train.batch, [&](int64_t b, int64_t e) {
        for (int64_t i = b; i < e; ++i) sample_one(i);
      });
    } else {
      for (int64_t i = 0; i < rc_.train.batch; ++i) sample_one(i);
    }
    return batch;
  }

  // Forward+backward per sample (parallel), deterministic sequential gradient
  // reduction, one Adam update. Returns the mean batch loss.
  double train_step(const std::vector<PatchPair>& batch, double lr) {
    const size_t np = model_.params().size();
    const int64_t bs = static_cast<int64_t>(batch.size());
    std::vector<std::vector<Tensor<T>>> grads(static_cast<size_t>(bs));
    std::vector<double> losses(static_cast<size_t>(bs), 0.0);

    parallel_for(bs, [&](int64_t b, int64_t e) {
      for (int64_t i = b; i < e; ++i) {
        Tape<T> tape;
        const BoundParams<T> bp = bind_params(tape, model_.params());
        const TapeId<T> loss = model_.training_loss(tape, bp, batch[static_cast<size_t>(i)]);
        losses[static_cast<size_t>(i)] = static_cast<double>(tape.val(loss)[0]);
        tape.backward(loss);
        auto& g = grads[static_cast<size_t>(i)];
        g.reserve(np);
        for (size_t p = 0; p < np; ++p) {
          if (tape.grad_touched(bp.ids[p]))
            g.push_back(tape.grad(bp.ids[p]));
          else
            g.push_back(Tensor<T>(model_.params().tensor(p).shape()));
        }
      }
    });

    double loss_sum = 0.0;
    for (int64_t i = 0; i < bs; ++i) loss_sum += losses[static_cast<size_t>(i)];
    const double loss = loss_sum / static_cast<double>(bs);
    if (!std::isfinite(loss))
      throw NumericsError("non-finite training loss at step " +
                          std::to_string(rc_.state_next_step));

    std::vector<Tensor<T>> total(np);
    for (size_t p = 0; p < np; ++p) {
      total[p] = Tensor<T>(model_.params().tensor(p).shape());
      for (int64_t i = 0; i < bs; ++i) {
        const Tensor<T>& g = grads[static_cast<size_t>(i)][p];
        for (int64_t k = 0; k < g.numel(); ++k) total[p][k] += g[k];
      }
      const T inv = T(1) / static_cast<T>(bs);
      for (int64_t k = 0; k < total[p].numel(); ++k) total[p][k] *= inv;
    }
    if (rc_.train.grad_clip > 0.0) clip_global_norm(total, rc_.train.grad_clip);
    opt_.apply(model_.params(), total, lr);
    return loss;
  }

  // Runs up to `max_steps` optimizer steps (all remaining when -1), appending
  // to the loss log and checkpointing at epoch boundaries.
  void run(int64_t max_steps = -1,
           const std::function<void(int64_t, double)>& on_step = nullptr) {
    const int64_t spe = steps_per_epoch();
    const int64_t stop =
        max_steps < 0 ? total_steps()
                      : std::min<int64_t>(total_steps(), rc_.state_next_step + max_steps);
    std::ofstream log;
    if (!out_dir_.empty()) {
      log.open(out_dir_ + "/loss_log.tsv", std::ios::app);
      if (!log) throw DataError("cannot open loss log in " + out_dir_);
    }
    while (rc_.state_next_step < stop) {
      const int64_t step = rc_.state_next_step;
      const double lr = learning_rate(step);
      const auto batch = make_batch(step);
      const double loss = train_step(batch, lr);
      rc_.state_next_step = step + 1;
      rc_.state_epoch = rc_.state_next_step / spe;
      rc_.state_adam_step = opt_.step_count();
      if (log.is_open()) {
        char line[160];
        std::snprintf(line, sizeof line, "%lld\t%lld\t%.9g\t%.9g\t%.9g\n",
                      static_cast<long long>(step), static_cast<long long>(step / spe),
                      batch[0].scale, lr, loss);
        log << line;
        log.flush();
      }
      if (on_step) on_step(step, loss);
      const bool epoch_end = rc_.state_next_step % spe == 0;
      const int64_t epoch = rc_.state_next_step / spe;
      if (!out_dir_.empty() && epoch_end &&
          (epoch % rc_.train.checkpoint_every == 0 || rc_.state_next_step == stop)) {
        save(out_dir_ + "/ckpt_epoch" + std::to_string(epoch) + ".atsr");
        save(out_dir_ + "/last.atsr");
      }
    }
    if (!out_dir_.empty()) save(out_dir_ + "/last.atsr");
  }

  // Full state: parameters, Adam moments, config snapshot with counters.
  void save(const std::string& path) const {
    CheckpointData ckpt;
    ckpt.config_text = serialize_config(rc_);
    const ParamStore<T>& store = model_.params();
    for (size_t i = 0; i < store.size(); ++i)
      ckpt.tensors.emplace_back(store.name(i), store.tensor(i).template cast<float>());
    for (size_t i = 0; i < store.size(); ++i)
      ckpt.tensors.emplace_back("opt.m." + store.name(i),
                                opt_.moments_m()[i].template cast<float>());
    for (size_t i = 0; i < store.size(); ++i)
      ckpt.tensors.emplace_back("opt.v." + store.name(i),
                                opt_.moments_v()[i].template cast<float>());
    save_checkpoint(path, ckpt);
  }

  void restore_optimizer(const CheckpointData& ckpt) {
    const ParamStore<T>& store = model_.params();
    for (size_t i = 0; i < store.size(); ++i) {
      const Tensor<float>* m = ckpt.find("opt.m." + store.name(i));
      const Tensor<float>* v = ckpt.find("opt.v." + store.name(i));
      if (m) opt_.moments_m()[i] = m->template cast<T>();
      if (v) opt_.moments_v()[i] = v->template cast<T>();
    }
  }

 private:
  static void clip_global_norm(std::vector<Tensor<T>>& grads, double max_norm) {
    double sq = 0;
    for (const auto& g : grads)
      for (int64_t i = 0; i < g.numel(); ++i)
        sq += static_cast<double>(g[i]) * static_cast<double>(g[i]);
    const double norm = std::sqrt(sq);
    if (norm <= max_norm) return;
    const T f = static_cast<T>(max_norm / norm);
    for (auto& g : grads)
      for (int64_t i = 0; i < g.numel(); ++i) g[i] *= f;
  }

  Model<T>& model_;
  RunConfig rc_;
  std::vector<ImageGray> images_;
  std::string out_dir_;
  Adam<T> opt_;
};

// Rebuilds a model's parameters from a checkpoint; every model tensor must be
// present with a matching shape.
template <typename T>
void load_model_params(Model<T>& model, const CheckpointData& ckpt) {
  ParamStore<T>& store = model.params();
  for (size_t i = 0; i < store.size(); ++i) {
    const Tensor<float>* t = ckpt.find(store.name(i));
    if (!t) throw CheckpointError("checkpoint missing tensor: " + store.name(i));
    if (t->shape() != store.tensor(i).shape())
      throw CheckpointError("checkpoint shape mismatch for: " + store.name(i));
    store.tensor(i) = t->template cast<T>();
  }
}

}  // namespace anytsr
