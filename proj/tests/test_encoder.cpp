// SPDX-License-Identifier: Apache-2.0
#include <catch2/catch_amalgamated.hpp>

#include <chrono>
#include <cmath>
#include <vector>

#include "anytsr/nn/encoder.hpp"
#include "anytsr/nn/model.hpp"
#include "test_util.hpp"

using namespace anytsr;
using testutil::max_rel_fd;
using testutil::rand_tensor;
using testutil::weighted_sum;

namespace {

EncoderConfig tiny_cfg() {
  EncoderConfig c;
  c.layers = 1;
  c.blocks = 1;
  c.channels = 4;
  c.sam_bank = 2;
  c.d_state = 2;
  return c;
}

ImageGray random_image(int64_t h, int64_t w, uint64_t seed) {
  Rng rng(seed);
  ImageGray img(h, w);
  for (auto& v : img.values) v = rng.uniform();
  return img;
}

struct EncoderRig {
  ParamStore<double> store;
  Encoder<double> enc;
  EncoderRig(const EncoderConfig& cfg, uint64_t seed) : enc(store, cfg) {
    Rng rng(seed);
    enc.init(store, rng);
  }
  Tensor<double> run(const ImageGray& img, double s) {
    Tape<double> t;
    t.set_grad_enabled(false);
    const BoundParams<double> bp = bind_params(t, store);
    return t.val(enc.encode(t, bp, img, s));
  }
};

}  // namespace

TEST_CASE("shallow features: conv contract") {
  SECTION("zero image with zero bias maps to zero features") {
    EncoderRig rig(tiny_cfg(), 3);
    ImageGray zero(5, 5);
    Tape<double> t;
    t.set_grad_enabled(false);
    const BoundParams<double> bp = bind_params(t, rig.store);
    Tensor<double> x({5, 5, 1});
    const TapeId<double> fs =
        conv3x3(t, t.input(std::move(x)),
                bp[rig.store.index_of("encoder.shallow.weight")],
                bp[rig.store.index_of("encoder.shallow.bias")]);
    for (int64_t i = 0; i < t.val(fs).numel(); ++i) REQUIRE(t.val(fs)[i] == 0.0);
  }

  SECTION("encode output shape is (h, w, c) across sizes, odd included") {
    EncoderConfig cfg = tiny_cfg();
    cfg.channels = 6;
    EncoderRig rig(cfg, 4);
    for (int64_t n : {8, 15, 16, 48}) {
      const Tensor<double> e = rig.run(random_image(n, n, 7), 2.0);
      REQUIRE(e.shape() == std::vector<int64_t>{n, n, 6});
      REQUIRE(e.all_finite());
    }
  }

  SECTION("known 3x3 kernel on a 5x5 input matches the direct sum") {
    // one input channel, one output channel, hand kernel
    ParamStore<double> store;
    const size_t w_h = store.add("w", {3, 3, 1, 1});
    const size_t b_h = store.add("b", {1});
    Tensor<double>& W = store.tensor(w_h);
    for (int64_t i = 0; i < 9; ++i) W[i] = static_cast<double>(i - 4) * 0.25;
    store.tensor(b_h)[0] = 0.1;
    const ImageGray img = random_image(5, 5, 9);
    Tape<double> t;
    const BoundParams<double> bp = bind_params(t, store);
    Tensor<double> x({5, 5, 1});
    for (int64_t i = 0; i < 25; ++i) x[i] = img.values[static_cast<size_t>(i)];
    const TapeId<double> out = conv3x3(t, t.input(std::move(x)), bp[0], bp[1]);
    for (int64_t y = 0; y < 5; ++y)
      for (int64_t xq = 0; xq < 5; ++xq) {
        double acc = 0.1;
        for (int64_t dy = 0; dy < 3; ++dy)
          for (int64_t dx = 0; dx < 3; ++dx) {
            const int64_t sy = y + dy - 1, sx = xq + dx - 1;
            if (sy < 0 || sy >= 5 || sx < 0 || sx >= 5) continue;
            acc += W[dy * 3 + dx] * img.at(sy, sx);
          }
        REQUIRE(t.val(out).at(y, xq, 0) == Catch::Approx(acc).margin(1e-12));
      }
  }
}

TEST_CASE("S-SSB block contracts") {
  EncoderConfig cfg = tiny_cfg();

  SECTION("scale term off: block output independent of s for fixed input") {
    cfg.use_ssb_scale_term = false;
    EncoderRig rig(cfg, 5);
    Rng rng(11);
    const auto fin = rand_tensor({6, 6, 4}, rng);
    auto run_block = [&](double s) {
      Tape<double> t;
      t.set_grad_enabled(false);
      const BoundParams<double> bp = bind_params(t, rig.store);
      Tensor<double> sv({1, 1});
      sv[0] = s;
      return t.val(rig.enc.ssb_forward(t, bp, t.input(fin), t.input(std::move(sv)), 0,
                                       0, scan_orders(6, 6)));
    };
    const Tensor<double> a = run_block(1.5);
    const Tensor<double> b = run_block(3.0);
    for (int64_t i = 0; i < a.numel(); ++i) REQUIRE(a[i] == b[i]);  // bitwise
  }

  SECTION("scale term on: s = 1.5 vs s = 3.0 differ") {
    EncoderRig rig(cfg, 6);
    const ImageGray img = random_image(6, 6, 12);
    const Tensor<double> a = rig.run(img, 1.5);
    const Tensor<double> b = rig.run(img, 3.0);
    double maxdiff = 0;
    for (int64_t i = 0; i < a.numel(); ++i)
      maxdiff = std::max(maxdiff, std::abs(a[i] - b[i]));
    REQUIRE(maxdiff > 0.0);
  }

  SECTION("1x1 spatial input: length-1 scan, finite block output") {
    EncoderRig rig(cfg, 7);
    Tape<double> t;
    t.set_grad_enabled(false);
    const BoundParams<double> bp = bind_params(t, rig.store);
    Tensor<double> fin({1, 1, 4});
    Rng rng(1);
    for (int64_t i = 0; i < 4; ++i) fin[i] = rng.uniform(-1, 1);
    Tensor<double> sv({1, 1});
    sv[0] = 2.0;
    const TapeId<double> out =
        rig.enc.ssb_forward(t, bp, t.input(std::move(fin)), t.input(std::move(sv)), 0, 0,
                            scan_orders(1, 1));
    REQUIRE(t.val(out).all_finite());
    REQUIRE(t.val(out).shape() == std::vector<int64_t>{1, 1, 4});
  }

  SECTION("length-1 scan equals the single-step closed form") {
    // y = C . (dt * B * x) + D x with no history
    Rng rng(8);
    const int64_t c = 3, d = 2;
    auto x = rand_tensor({1, c}, rng);
    auto dt = rand_tensor({1, c}, rng, 0.01, 1.0);
    auto B = rand_tensor({1, d}, rng);
    auto C = rand_tensor({1, d}, rng);
    auto A = rand_tensor({c, d}, rng, -2.0, -0.1);
    auto D = rand_tensor({c}, rng);
    auto pos = std::make_shared<std::vector<int64_t>>(std::vector<int64_t>{0});
    Tape<double> t;
    const TapeId<double> y = scan_dir(t, t.input(x), t.input(dt), t.input(B),
                                      t.input(C), t.input(A), t.input(D), pos);
    for (int64_t i = 0; i < c; ++i) {
      double expect = D[i] * x[i];
      for (int64_t j = 0; j < d; ++j) expect += C[j] * dt[i] * B[j] * x[i];
      REQUIRE(t.val(y)[i] == Catch::Approx(expect).margin(1e-12));
    }
  }
}

TEST_CASE("SS2D directional coverage") {
  // zero three of four directions (C and D projections) -> single 1-D scan
  EncoderConfig cfg = tiny_cfg();
  EncoderRig rig(cfg, 9);
  for (int k = 1; k < 4; ++k) {
    const std::string q = "encoder.layer0.block0.scan.dir" + std::to_string(k) + ".";
    rig.store[q + "c_proj.weight"].fill(0.0);
    rig.store[q + "skip"].fill(0.0);
  }
  Rng rng(10);
  auto x = rand_tensor({3, 4, 4}, rng);  // (h=3, w=4, c=4)
  Tape<double> t;
  t.set_grad_enabled(false);
  const BoundParams<double> bp = bind_params(t, rig.store);
  const auto orders = scan_orders(3, 4);
  const TapeId<double> y = rig.enc.ss2d(t, bp, t.input(x), 0, 0, orders);

  // naive oracle on direction 0 only, with the same input-dependent params
  const Tensor<double>& wd = rig.store["encoder.layer0.block0.scan.dir0.delta.weight"];
  const Tensor<double>& bd = rig.store["encoder.layer0.block0.scan.dir0.delta.bias"];
  const Tensor<double>& wb = rig.store["encoder.layer0.block0.scan.dir0.b_proj.weight"];
  const Tensor<double>& wc = rig.store["encoder.layer0.block0.scan.dir0.c_proj.weight"];
  const Tensor<double>& al = rig.store["encoder.layer0.block0.scan.dir0.a_log"];
  const Tensor<double>& dsk = rig.store["encoder.layer0.block0.scan.dir0.skip"];
  const int64_t L = 12, c = 4, d = 2;
  std::vector<double> h(static_cast<size_t>(c * d), 0.0);
  for (int64_t p = 0; p < L; ++p) {
    for (int64_t i = 0; i < c; ++i) {
      double dt = bd[i];
      for (int64_t kk = 0; kk < c; ++kk) dt += x[p * c + kk] * wd.at(kk, i);
      dt = std::log1p(std::exp(dt));
      double acc = 0;
      for (int64_t j = 0; j < d; ++j) {
        double bv = 0, cv = 0;
        for (int64_t kk = 0; kk < c; ++kk) {
          bv += x[p * c + kk] * wb.at(kk, j);
          cv += x[p * c + kk] * wc.at(kk, j);
        }
        const double a = std::exp(dt * -std::exp(al.at(i, j)));
        h[static_cast<size_t>(i * d + j)] =
            a * h[static_cast<size_t>(i * d + j)] + dt * bv * x[p * c + i];
        acc += cv * h[static_cast<size_t>(i * d + j)];
      }
      REQUIRE(t.val(y)[p * c + i] ==
              Catch::Approx(acc + dsk[i] * x[p * c + i]).margin(1e-9));
    }
  }
}

TEST_CASE("SAM: scale-adaptive mapping") {
  SECTION("weights form a simplex for s in {1, 2.37, 4, 6}") {
    EncoderConfig cfg = tiny_cfg();
    cfg.sam_bank = 3;
    EncoderRig rig(cfg, 11);
    for (double s : {1.0, 2.37, 4.0, 6.0}) {
      Tape<double> t;
      t.set_grad_enabled(false);
      const BoundParams<double> bp = bind_params(t, rig.store);
      Tensor<double> sv({1, 1});
      sv[0] = s;
      const TapeId<double> w = rig.enc.sam_weights(t, bp, t.input(std::move(sv)), 0);
      double sum = 0;
      for (int64_t i = 0; i < 3; ++i) {
        REQUIRE(t.val(w)[i] >= 0.0);
        sum += t.val(w)[i];
      }
      REQUIRE(std::abs(sum - 1.0) <= 1e-6);
    }
  }

  SECTION("bank of one: weight is exactly 1") {
    EncoderConfig cfg = tiny_cfg();
    cfg.sam_bank = 1;
    EncoderRig rig(cfg, 12);
    Tape<double> t;
    t.set_grad_enabled(false);
    const BoundParams<double> bp = bind_params(t, rig.store);
    Tensor<double> sv({1, 1});
    sv[0] = 2.0;
    const TapeId<double> w = rig.enc.sam_weights(t, bp, t.input(std::move(sv)), 0);
    REQUIRE(t.val(w)[0] == 1.0);
  }

  SECTION("sam off equals sam on with a zeroed bank") {
    EncoderConfig cfg = tiny_cfg();
    EncoderRig on(cfg, 13);
    on.store["encoder.layer0.sam.bank"].fill(0.0);
    EncoderRig off(cfg, 13);
    off.enc.set_toggles(true, false, true);
    const ImageGray img = random_image(6, 6, 14);
    const Tensor<double> a = on.run(img, 2.0);
    const Tensor<double> b = off.run(img, 2.0);
    for (int64_t i = 0; i < a.numel(); ++i)
      REQUIRE(a[i] == Catch::Approx(b[i]).margin(1e-12));
  }
}

TEST_CASE("encode assembles residuals and the gradient branch") {
  SECTION("constant image: gradient branch contributes only its conv bias") {
    EncoderConfig cfg = tiny_cfg();
    EncoderRig rig(cfg, 15);
    rig.store["encoder.grad.bias"].fill(0.31);
    ImageGray img(7, 7);
    img.values.assign(49, 0.6);
    const Tensor<double> with_branch = rig.run(img, 2.0);
    rig.enc.set_toggles(true, true, false);
    const Tensor<double> without = rig.run(img, 2.0);
    for (int64_t i = 0; i < with_branch.numel(); ++i)
      REQUIRE(with_branch[i] - without[i] == Catch::Approx(0.31).margin(1e-12));
  }

  SECTION("scale sensitivity: toggles off make encode bitwise scale-blind") {
    EncoderConfig cfg = tiny_cfg();
    cfg.use_ssb_scale_term = false;
    cfg.use_sam = false;
    EncoderRig rig(cfg, 16);
    const ImageGray img = random_image(8, 9, 17);
    const Tensor<double> a = rig.run(img, 1.5);
    const Tensor<double> b = rig.run(img, 3.0);
    for (int64_t i = 0; i < a.numel(); ++i) REQUIRE(a[i] == b[i]);
  }

  SECTION("16x16 smoke: tiny config forward under a second") {
    EncoderConfig cfg = tiny_cfg();
    cfg.channels = 8;
    EncoderRig rig(cfg, 18);
    const auto start = std::chrono::steady_clock::now();
    const Tensor<double> e = rig.run(random_image(16, 16, 19), 2.0);
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    REQUIRE(e.all_finite());
    REQUIRE(secs < 1.0);
  }

  SECTION("too-small image rejected") {
    EncoderRig rig(tiny_cfg(), 20);
    REQUIRE_THROWS_AS(rig.run(random_image(2, 8, 21), 1.5), DataError);
  }
}

TEST_CASE("encoder analytic gradients match finite differences (tiny config)") {
  EncoderConfig cfg = tiny_cfg();  // c=4, d_state=2, N=M=1
  ParamStore<double> store;
  Encoder<double> enc(store, cfg);
  Rng rng(22);
  enc.init(store, rng);
  const ImageGray img = random_image(6, 6, 23);
  const auto r = rand_tensor({6, 6, 4}, rng);

  std::vector<Tensor<double>> params;
  for (size_t i = 0; i < store.size(); ++i) params.push_back(store.tensor(i));
  auto build = [&](Tape<double>& t, std::vector<TapeId<double>>& ids) {
    BoundParams<double> bp{ids};
    return weighted_sum(t, enc.encode(t, bp, img, 1.7), r);
  };
  REQUIRE(max_rel_fd(params, build) < 1e-3);
}
