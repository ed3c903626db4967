// SPDX-License-Identifier: Apache-2.0
#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <vector>

#include "anytsr/nn/model.hpp"
#include "anytsr/nn/upsampler.hpp"
#include "test_util.hpp"

using namespace anytsr;
using testutil::max_rel_fd;
using testutil::rand_tensor;
using testutil::weighted_sum;

namespace {

// Independent corner oracle: scan all LR centers for the nearest one on the
// required side of the query, per axis (no closed-form index arithmetic).
int64_t oracle_corner_cell(double qy, double qx, int64_t h, int64_t w, bool want_below,
                           bool want_right) {
  auto pick = [](double q, int64_t n, bool want_ge) {
    int64_t best = -1;
    double best_d = 1e300;
    for (int64_t i = 0; i < n; ++i) {
      const double c = cell_center(i, n);
      const bool ok = want_ge ? (c >= q) : (c <= q);
      if (ok && std::abs(c - q) < best_d) {
        best_d = std::abs(c - q);
        best = i;
      }
    }
    if (best < 0) best = want_ge ? n - 1 : 0;  // border clamp
    return best;
  };
  return pick(qy, h, want_below) * w + pick(qx, w, want_right);
}

struct UpRig {
  ParamStore<double> store;
  Upsampler<double> up;
  int64_t c;
  UpRig(const UpsamplerConfig& cfg, int64_t channels, uint64_t seed)
      : up(store, cfg, channels), c(channels) {
    Rng rng(seed);
    up.init(store, rng);
  }
  Tensor<double> run(const Tensor<double>& e_lr, const CoordList& coords, double s,
                     bool grads = false) {
    Tape<double> t;
    t.set_grad_enabled(grads);
    const BoundParams<double> bp = bind_params(t, store);
    return t.val(up.forward(t, bp, t.input(e_lr), coords, s));
  }
};

}  // namespace

TEST_CASE("corner lifting") {
  SECTION("s=1: TL lift is the identity mapping with zero offsets") {
    const CoordList q = flatten_grid(make_coord_grid(5, 7));
    const CornerGeom<double> g = corner_geometry<double>(q, 5, 7, kTopLeft);
    for (int64_t i = 0; i < q.size(); ++i) {
      REQUIRE((*g.cells)[static_cast<size_t>(i)] == i);
      REQUIRE(g.offsets.at(i, 0) == 0.0);
      REQUIRE(g.offsets.at(i, 1) == 0.0);
    }
  }

  SECTION("all four corners match the center-scan oracle across scales") {
    for (const double s : {1.3, 2.0, 3.7}) {
      const int64_t h = 4, w = 5;
      const int64_t H = scaled_dim(s, h), W = scaled_dim(s, w);
      const CoordList q = flatten_grid(make_coord_grid(H, W));
      for (int corner = 0; corner < 4; ++corner) {
        const CornerGeom<double> g = corner_geometry<double>(q, h, w, corner);
        const bool below = corner == kBottomLeft || corner == kBottomRight;
        const bool right = corner == kTopRight || corner == kBottomRight;
        for (int64_t i = 0; i < q.size(); ++i)
          REQUIRE((*g.cells)[static_cast<size_t>(i)] ==
                  oracle_corner_cell(q.ys[static_cast<size_t>(i)],
                                     q.xs[static_cast<size_t>(i)], h, w, below, right));
      }
    }
  }

  SECTION("codes are exact copies of the corner cell (2x2 -> 4x4, TL)") {
    Rng rng(2);
    const auto e = rand_tensor({2, 2, 3}, rng);
    const CoordList q = flatten_grid(make_coord_grid(4, 4));
    const CornerGeom<double> g = corner_geometry<double>(q, 2, 2, kTopLeft);
    Tape<double> t;
    const TapeId<double> lifted = gather_rows(t, t.input(e), g.cells);
    for (int64_t i = 0; i < q.size(); ++i) {
      const int64_t cell = (*g.cells)[static_cast<size_t>(i)];
      const int64_t oc = oracle_corner_cell(q.ys[static_cast<size_t>(i)],
                                            q.xs[static_cast<size_t>(i)], 2, 2,
                                            false, false);
      REQUIRE(cell == oc);
      for (int64_t ch = 0; ch < 3; ++ch)
        REQUIRE(t.val(lifted).at(i, ch) == e[cell * 3 + ch]);  // max abs diff 0
    }
  }

  SECTION("border query left of the leftmost center clamps to column 0") {
    CoordList q;
    q.ys = {0.0};
    q.xs = {-0.999};  // far left of the first center of an 8-wide grid
    const CornerGeom<double> g = corner_geometry<double>(q, 8, 8, kTopLeft);
    REQUIRE((*g.cells)[0] % 8 == 0);
  }

  SECTION("offset bound: every component within one LR cell") {
    for (const int64_t h : {7L, 16L})
      for (const double s : {1.3, 2.0, 3.7, 6.0}) {
        const int64_t H = scaled_dim(s, h);
        const CoordList q = flatten_grid(make_coord_grid(H, H));
        for (int corner = 0; corner < 4; ++corner) {
          const CornerGeom<double> g = corner_geometry<double>(q, h, h, corner);
          const double bound = 2.0 / static_cast<double>(h) + 1e-9;
          for (int64_t i = 0; i < q.size(); ++i) {
            REQUIRE(g.offsets.at(i, 0) <= bound);
            REQUIRE(g.offsets.at(i, 1) <= bound);
            REQUIRE(g.d2[i] >= 0.0);
          }
        }
      }
  }
}

TEST_CASE("upsampler toggle semantics") {
  Rng rng(3);
  const auto e = rand_tensor({4, 4, 6}, rng, 0.0, 1.0);
  const CoordList q = flatten_grid(make_coord_grid(7, 7));

  SECTION("LLE off: output invariant to the RBF width") {
    UpsamplerConfig cfg;
    cfg.use_lle = false;
    cfg.neo_width = 8;
    UpRig rig(cfg, 6, 4);
    const Tensor<double> a = rig.run(e, q, 1.75);
    rig.store["upsampler.rbf.log_sigma"][0] = 1.7;  // would change w everywhere
    const Tensor<double> b = rig.run(e, q, 1.75);
    for (int64_t i = 0; i < a.numel(); ++i) REQUIRE(a[i] == b[i]);
  }

  SECTION("LLE on: output responds to the RBF width") {
    UpsamplerConfig cfg;
    cfg.neo_width = 8;
    UpRig rig(cfg, 6, 5);
    const Tensor<double> a = rig.run(e, q, 1.75);
    rig.store["upsampler.rbf.log_sigma"][0] = 1.7;
    const Tensor<double> b = rig.run(e, q, 1.75);
    double md = 0;
    for (int64_t i = 0; i < a.numel(); ++i) md = std::max(md, std::abs(a[i] - b[i]));
    REQUIRE(md > 0.0);
  }

  SECTION("ORM off: output invariant to the attention projections") {
    UpsamplerConfig cfg;
    cfg.use_orm = false;
    cfg.neo_width = 8;
    UpRig rig(cfg, 6, 6);
    const Tensor<double> a = rig.run(e, q, 2.0);
    rig.store["upsampler.orm.q.weight"].fill(0.77);
    rig.store["upsampler.orm.k.weight"].fill(-0.2);
    const Tensor<double> b = rig.run(e, q, 2.0);
    for (int64_t i = 0; i < a.numel(); ++i) REQUIRE(a[i] == b[i]);
  }

  SECTION("windowed ORM runs and differs from global only across windows") {
    UpsamplerConfig cfg;
    cfg.neo_width = 8;
    cfg.orm_window = 16;
    UpRig rig(cfg, 6, 7);
    const Tensor<double> a = rig.run(e, q, 2.0);
    REQUIRE(a.all_finite());
    REQUIRE(a.numel() == q.size());
  }
}

TEST_CASE("NEO reconstruction head") {
  SECTION("zeroed weights with projection bias b give a constant output b") {
    UpsamplerConfig cfg;
    cfg.neo_width = 8;
    UpRig rig(cfg, 6, 8);
    for (size_t i = 0; i < rig.store.size(); ++i) rig.store.tensor(i).fill(0.0);
    rig.store["upsampler.neo.proj.bias"][0] = 0.37;
    Rng rng(9);
    const auto e = rand_tensor({3, 3, 6}, rng);
    const CoordList q = flatten_grid(make_coord_grid(5, 5));
    const Tensor<double> out = rig.run(e, q, 1.7);
    for (int64_t i = 0; i < out.numel(); ++i)
      REQUIRE(out[i] == Catch::Approx(0.37).margin(1e-12));
  }

  SECTION("output shape is (n,1) for fractional scales") {
    UpsamplerConfig cfg;
    cfg.neo_width = 8;
    UpRig rig(cfg, 6, 10);
    Rng rng(11);
    const auto e = rand_tensor({5, 5, 6}, rng);
    const int64_t H = scaled_dim(1.7, 5);
    REQUIRE(H == 9);  // round(8.5) away from zero
    const CoordList q = flatten_grid(make_coord_grid(H, H));
    const Tensor<double> out = rig.run(e, q, 1.7);
    REQUIRE(out.shape() == std::vector<int64_t>{H * H, 1});
  }
}

TEST_CASE("attention convexity at the upsampler level") {
  // E_offset rows lie inside the per-channel min/max of the V projections
  UpsamplerConfig cfg;
  cfg.neo_width = 8;
  ParamStore<double> store;
  Upsampler<double> up(store, cfg, 5);
  Rng rng(12);
  up.init(store, rng);

  const auto e = rand_tensor({4, 4, 5}, rng);
  const CoordList q = flatten_grid(make_coord_grid(6, 6));
  Tape<double> t;
  t.set_grad_enabled(false);
  const BoundParams<double> bp = bind_params(t, store);
  const CornerGeom<double> g = corner_geometry<double>(q, 4, 4, kTopLeft);
  const TapeId<double> lifted = gather_rows(t, t.input(e), g.cells);
  const TapeId<double> d2 = t.input(g.d2);
  const TapeId<double> w =
      rbf_weights(t, d2, bp[store.index_of("upsampler.rbf.log_sigma")], 0);
  const TapeId<double> ew = rowwise_scale(t, lifted, w);
  const TapeId<double> qv = linear(t, t.input(g.offsets),
                                   bp[store.index_of("upsampler.orm.q.weight")],
                                   bp[store.index_of("upsampler.orm.q.bias")]);
  const TapeId<double> kv = linear(t, ew, bp[store.index_of("upsampler.orm.k.weight")],
                                   bp[store.index_of("upsampler.orm.k.bias")]);
  const TapeId<double> vv = linear(t, ew, bp[store.index_of("upsampler.orm.v.weight")],
                                   bp[store.index_of("upsampler.orm.v.bias")]);
  const TapeId<double> att = attention(t, qv, kv, vv, true);

  for (int64_t ch = 0; ch < 5; ++ch) {
    double lo = 1e300, hi = -1e300;
    for (int64_t i = 0; i < q.size(); ++i) {
      lo = std::min(lo, t.val(vv).at(i, ch));
      hi = std::max(hi, t.val(vv).at(i, ch));
    }
    for (int64_t i = 0; i < q.size(); ++i) {
      REQUIRE(t.val(att).at(i, ch) >= lo - 1e-9);
      REQUIRE(t.val(att).at(i, ch) <= hi + 1e-9);
    }
  }

  SECTION("RBF weights stay in (0,1] and approach 1 as d -> 0") {
    for (int64_t i = 0; i < q.size(); ++i) {
      REQUIRE(t.val(w)[i] > 0.0);
      REQUIRE(t.val(w)[i] <= 1.0);
    }
  }
}

TEST_CASE("query-order equivariance") {
  UpsamplerConfig cfg;
  cfg.neo_width = 8;
  UpRig rig(cfg, 6, 13);
  Rng rng(14);
  const auto e = rand_tensor({4, 4, 6}, rng, 0.0, 1.0);
  const CoordList q = flatten_grid(make_coord_grid(5, 5));
  const Tensor<double> base = rig.run(e, q, 2.0);

  // a fixed permutation of the query list
  std::vector<int64_t> perm(static_cast<size_t>(q.size()));
  for (int64_t i = 0; i < q.size(); ++i) perm[static_cast<size_t>(i)] = i;
  Rng prng(15);
  prng.shuffle(perm.begin(), perm.end());
  CoordList qp;
  qp.ys.resize(perm.size());
  qp.xs.resize(perm.size());
  for (size_t i = 0; i < perm.size(); ++i) {
    qp.ys[i] = q.ys[static_cast<size_t>(perm[i])];
    qp.xs[i] = q.xs[static_cast<size_t>(perm[i])];
  }
  const Tensor<double> permuted = rig.run(e, qp, 2.0);
  for (size_t i = 0; i < perm.size(); ++i)
    REQUIRE(permuted[static_cast<int64_t>(i)] ==
            Catch::Approx(base[perm[i]]).margin(1e-12));
}

TEST_CASE("upsampler analytic gradients match finite differences") {
  UpsamplerConfig cfg;
  cfg.neo_width = 6;
  cfg.neo_iters = 2;
  ParamStore<double> store;
  Upsampler<double> up(store, cfg, 4);
  Rng rng(16);
  up.init(store, rng);

  const auto e = rand_tensor({3, 3, 4}, rng, 0.0, 1.0);
  const CoordList q = flatten_grid(make_coord_grid(5, 4));
  const auto r = rand_tensor({q.size(), 1}, rng);

  std::vector<Tensor<double>> params;
  for (size_t i = 0; i < store.size(); ++i) params.push_back(store.tensor(i));
  auto build = [&](Tape<double>& t, std::vector<TapeId<double>>& ids) {
    BoundParams<double> bp{ids};
    return weighted_sum(t, up.forward(t, bp, t.input(e), q, 1.7), r);
  };
  REQUIRE(max_rel_fd(params, build) < 1e-3);
}
