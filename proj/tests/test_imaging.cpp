// SPDX-License-Identifier: Apache-2.0
#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <string>

#include <png.h>

#include "anytsr/core/rng.hpp"
#include "anytsr/imaging/coords.hpp"
#include "anytsr/imaging/gradients.hpp"
#include "anytsr/imaging/image.hpp"
#include "anytsr/imaging/image_io.hpp"
#include "anytsr/imaging/patch.hpp"
#include "anytsr/imaging/resample.hpp"
#include "anytsr/imaging/synth.hpp"

using namespace anytsr;
namespace fs = std::filesystem;

namespace {

fs::path tmp_dir() {
  auto p = fs::temp_directory_path() / "anytsr_imaging_test";
  fs::create_directories(p);
  return p;
}

// Independent bicubic oracle: direct 2-D kernel sum per output pixel (the
// implementation is separable; this one is not).
double bicubic_direct(const ImageGray& img, int64_t oy, int64_t ox, int64_t oh,
                      int64_t ow) {
  const double ry = static_cast<double>(img.height) / static_cast<double>(oh);
  const double rx = static_cast<double>(img.width) / static_cast<double>(ow);
  const double sy = (static_cast<double>(oy) + 0.5) * ry - 0.5;
  const double sx = (static_cast<double>(ox) + 0.5) * rx - 0.5;
  const int64_t by = static_cast<int64_t>(std::floor(sy));
  const int64_t bx = static_cast<int64_t>(std::floor(sx));
  double acc = 0;
  for (int64_t ky = -1; ky <= 2; ++ky)
    for (int64_t kx = -1; kx <= 2; ++kx) {
      const int64_t iy = std::clamp<int64_t>(by + ky, 0, img.height - 1);
      const int64_t ix = std::clamp<int64_t>(bx + kx, 0, img.width - 1);
      acc += cubic_kernel(sy - static_cast<double>(by + ky)) *
             cubic_kernel(sx - static_cast<double>(bx + kx)) * img.at(iy, ix);
    }
  return acc;
}

void write_rgb_png(const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "wb");
  REQUIRE(f != nullptr);
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  REQUIRE(setjmp(png_jmpbuf(png)) == 0);
  png_init_io(png, f);
  png_set_IHDR(png, info, 4, 4, 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  unsigned char row[12] = {255, 0, 0, 0, 255, 0, 0, 0, 255, 10, 20, 30};
  for (int y = 0; y < 4; ++y) png_write_row(png, row);
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  std::fclose(f);
}

}  // namespace

TEST_CASE("load_image normalizes by bit depth") {
  const auto dir = tmp_dir();

  SECTION("8-bit PGM endpoints") {
    ImageGray img(3, 3);
    img.values = {1, 1, 1, 1, 0, 1, 1, 1, 1};
    img.at(0, 0) = 1.0;
    const auto p = (dir / "u8.pgm").string();
    detail::save_pgm(p, img, 8);
    const ImageGray back = load_image(p);
    REQUIRE(back.at(0, 0) == 1.0);   // pixel 255 -> 1.0
    REQUIRE(back.at(1, 1) == 0.0);   // pixel 0 -> 0.0
  }

  SECTION("16-bit PGM mid value") {
    ImageGray img(3, 3);
    img.values.assign(9, 32768.0 / 65535.0);
    const auto p = (dir / "u16.pgm").string();
    detail::save_pgm(p, img, 16);
    const ImageGray back = load_image(p);
    REQUIRE(back.at(1, 1) == Catch::Approx(32768.0 / 65535.0).margin(1e-12));
  }

  SECTION("PNG 8/16-bit round trip") {
    Rng rng(3);
    ImageGray img(5, 7);
    for (auto& v : img.values) v = rng.uniform();
    for (int depth : {8, 16}) {
      const auto p = (dir / ("rt" + std::to_string(depth) + ".png")).string();
      save_image(p, img, depth);
      const ImageGray back = load_image(p);
      REQUIRE(back.height == 5);
      REQUIRE(back.width == 7);
      const double q = depth == 16 ? 65535.0 : 255.0;
      for (int64_t i = 0; i < img.numel(); ++i)
        REQUIRE(std::abs(back.values[i] - img.values[i]) <= 0.5 / q + 1e-12);
    }
  }

  SECTION("multi-channel input rejected") {
    const auto p = (dir / "rgb.png").string();
    write_rgb_png(p);
    REQUIRE_THROWS_AS(load_image(p), DataError);
  }

  SECTION("unreadable file rejected") {
    REQUIRE_THROWS_AS(load_image((dir / "missing.png").string()), DataError);
  }
}

TEST_CASE("bicubic resampling") {
  SECTION("reproduces constants exactly at any size") {
    Rng rng(7);
    for (int trial = 0; trial < 10; ++trial) {
      const int64_t h = 3 + rng.uniform_int(14), w = 3 + rng.uniform_int(14);
      const int64_t oh = 1 + rng.uniform_int(20), ow = 1 + rng.uniform_int(20);
      ImageGray img(h, w);
      img.values.assign(static_cast<size_t>(h * w), 0.7);
      const ImageGray out = bicubic_resample(img, oh, ow);
      for (double v : out.values) REQUIRE(std::abs(v - 0.7) < 1e-12);
    }
  }

  SECTION("identity when dims match") {
    Rng rng(8);
    ImageGray img(6, 9);
    for (auto& v : img.values) v = rng.uniform();
    const ImageGray out = bicubic_resample(img, 6, 9);
    for (int64_t i = 0; i < img.numel(); ++i)
      REQUIRE(std::abs(out.values[i] - img.values[i]) < 1e-12);
  }

  SECTION("8x8 ramp to 4x4 matches the direct kernel-sum oracle") {
    ImageGray img(8, 8);
    for (int64_t y = 0; y < 8; ++y)
      for (int64_t x = 0; x < 8; ++x) img.at(y, x) = static_cast<double>(x) / 7.0;
    const ImageGray out = bicubic_resample_raw(img, 4, 4);
    for (int64_t y = 0; y < 4; ++y)
      for (int64_t x = 0; x < 4; ++x)
        REQUIRE(out.at(y, x) == Catch::Approx(bicubic_direct(img, y, x, 4, 4)).margin(1e-12));
  }

  SECTION("random images match the oracle too") {
    Rng rng(9);
    ImageGray img(7, 5);
    for (auto& v : img.values) v = rng.uniform();
    const ImageGray out = bicubic_resample_raw(img, 11, 6);
    for (int64_t y = 0; y < 11; ++y)
      for (int64_t x = 0; x < 6; ++x)
        REQUIRE(out.at(y, x) ==
                Catch::Approx(bicubic_direct(img, y, x, 11, 6)).margin(1e-12));
  }

  SECTION("commutes with value-axis affine maps before clipping") {
    Rng rng(10);
    ImageGray img(9, 9);
    for (auto& v : img.values) v = rng.uniform();
    const double a = 1.7, b = -0.3;
    ImageGray affine = img;
    for (auto& v : affine.values) v = a * v + b;
    const ImageGray r1 = bicubic_resample_raw(affine, 5, 13);
    const ImageGray r2 = bicubic_resample_raw(img, 5, 13);
    for (int64_t i = 0; i < r1.numel(); ++i)
      REQUIRE(std::abs(r1.values[i] - (a * r2.values[i] + b)) < 1e-9);
  }
}

TEST_CASE("gradient operators") {
  SECTION("constant image gives zero everywhere") {
    ImageGray img(5, 6);
    img.values.assign(30, 0.42);
    const GradientStack gs = gradients(img);
    for (size_t i = 0; i < gs.gx.size(); ++i) {
      REQUIRE(gs.gx[i] == 0.0);
      REQUIRE(gs.gy[i] == 0.0);
      REQUIRE(gs.lap[i] == 0.0);
    }
  }

  SECTION("horizontal ramp: gx = 8c, gy = 0, lap = 0 at interior pixels") {
    const double c = 0.05;
    ImageGray img(6, 8);
    for (int64_t y = 0; y < 6; ++y)
      for (int64_t x = 0; x < 8; ++x) img.at(y, x) = c * static_cast<double>(x);
    const GradientStack gs = gradients(img);
    for (int64_t y = 1; y < 5; ++y)
      for (int64_t x = 1; x < 7; ++x) {
        const size_t i = static_cast<size_t>(y * 8 + x);
        REQUIRE(gs.gx[i] == Catch::Approx(8.0 * c).margin(1e-12));
        REQUIRE(gs.gy[i] == Catch::Approx(0.0).margin(1e-12));
        REQUIRE(gs.lap[i] == Catch::Approx(0.0).margin(1e-12));
      }
  }

  SECTION("linearity in the image") {
    Rng rng(11);
    ImageGray u(5, 5), v(5, 5);
    for (auto& x : u.values) x = rng.uniform();
    for (auto& x : v.values) x = rng.uniform();
    const double a = 0.6, b = -1.2;
    ImageGray comb(5, 5);
    for (int64_t i = 0; i < 25; ++i) comb.values[static_cast<size_t>(i)] =
        a * u.values[static_cast<size_t>(i)] + b * v.values[static_cast<size_t>(i)];
    const GradientStack gu = gradients(u), gv = gradients(v), gc = gradients(comb);
    for (size_t i = 0; i < gu.gx.size(); ++i) {
      REQUIRE(std::abs(gc.gx[i] - (a * gu.gx[i] + b * gv.gx[i])) < 1e-9);
      REQUIRE(std::abs(gc.gy[i] - (a * gu.gy[i] + b * gv.gy[i])) < 1e-9);
      REQUIRE(std::abs(gc.lap[i] - (a * gu.lap[i] + b * gv.lap[i])) < 1e-9);
    }
  }

  SECTION("too-small image rejected") {
    ImageGray img(2, 5);
    img.values.assign(10, 0.5);
    REQUIRE_THROWS_AS(gradients(img), DataError);
  }
}

TEST_CASE("coordinate grids") {
  SECTION("1x1 grid sits at the domain center") {
    const CoordGrid g = make_coord_grid(1, 1);
    REQUIRE(g.ys[0] == 0.0);
    REQUIRE(g.xs[0] == 0.0);
  }

  SECTION("h=2 and h=4 anchor values") {
    const CoordGrid g2 = make_coord_grid(2, 2);
    REQUIRE(g2.ys[0] == Catch::Approx(-0.5).margin(1e-15));
    REQUIRE(g2.ys[1] == Catch::Approx(0.5).margin(1e-15));
    const CoordGrid g4 = make_coord_grid(4, 4);
    const double expect[4] = {-0.75, -0.25, 0.25, 0.75};
    for (int i = 0; i < 4; ++i)
      REQUIRE(g4.ys[static_cast<size_t>(i)] == Catch::Approx(expect[i]).margin(1e-15));
  }

  SECTION("spacing equals 2/n and all centers lie in (-1,1), increasing") {
    for (int64_t n : {1, 2, 3, 7, 16, 48}) {
      const CoordGrid g = make_coord_grid(n, n);
      for (int64_t i = 0; i < n; ++i) {
        REQUIRE(g.ys[static_cast<size_t>(i)] > -1.0);
        REQUIRE(g.ys[static_cast<size_t>(i)] < 1.0);
        if (i > 0) {
          REQUIRE(g.ys[static_cast<size_t>(i)] > g.ys[static_cast<size_t>(i - 1)]);
          REQUIRE(std::abs((g.ys[static_cast<size_t>(i)] - g.ys[static_cast<size_t>(i - 1)]) -
                           2.0 / static_cast<double>(n)) <= 1e-15);
        }
      }
    }
  }
}

TEST_CASE("patch pair sampling") {
  Rng gen(21);
  ImageGray hr(128, 140);
  for (auto& v : hr.values) v = gen.uniform();

  SECTION("s=1: LR equals the crop (bicubic identity)") {
    Rng rng(5);
    const PatchPair pp = sample_patch_pair(hr, 1.0, 16, rng);
    REQUIRE(pp.lr.height == 16);
    // re-derive the crop from gt data: all coords map to distinct cells
    REQUIRE(pp.gt_coords.size() == 256);
    for (double v : pp.lr.values) REQUIRE((v >= 0.0 && v <= 1.0));
  }

  SECTION("lr_size=48 at s=2 crops 96x96 and draws exactly 2304 ground truths") {
    Rng rng(6);
    const PatchPair pp = sample_patch_pair(hr, 2.0, 48, rng);
    REQUIRE(pp.lr.height == 48);
    REQUIRE(pp.lr.width == 48);
    REQUIRE(pp.gt_coords.size() == 48 * 48);
    REQUIRE(pp.gt_values.size() == 2304);
  }

  SECTION("gt coords lie inside the crop's normalized bounds, unique cells") {
    Rng rng(7);
    const PatchPair pp = sample_patch_pair(hr, 2.5, 12, rng);
    const int64_t crop = static_cast<int64_t>(std::llround(2.5 * 12));
    std::vector<int> seen(static_cast<size_t>(crop * crop), 0);
    for (int64_t i = 0; i < pp.gt_coords.size(); ++i) {
      const double y = pp.gt_coords.ys[static_cast<size_t>(i)];
      const double x = pp.gt_coords.xs[static_cast<size_t>(i)];
      REQUIRE((y > -1.0 && y < 1.0));
      REQUIRE((x > -1.0 && x < 1.0));
      const auto iy = static_cast<int64_t>(std::llround(((y + 1.0) * crop - 1.0) / 2.0));
      const auto ix = static_cast<int64_t>(std::llround(((x + 1.0) * crop - 1.0) / 2.0));
      ++seen[static_cast<size_t>(iy * crop + ix)];
    }
    for (int s : seen) REQUIRE(s <= 1);  // without replacement
  }

  SECTION("fixed seed reproduces the pair bitwise") {
    Rng r1(99), r2(99);
    const PatchPair a = sample_patch_pair(hr, 1.7, 20, r1);
    const PatchPair b = sample_patch_pair(hr, 1.7, 20, r2);
    REQUIRE(a.lr.values == b.lr.values);
    REQUIRE(a.gt_coords.ys == b.gt_coords.ys);
    REQUIRE(a.gt_values == b.gt_values);
  }

  SECTION("HR too small for the requested scale") {
    Rng rng(1);
    ImageGray small(40, 40);
    small.values.assign(1600, 0.5);
    REQUIRE_THROWS_AS(sample_patch_pair(small, 4.0, 48, rng), DataError);
  }
}

TEST_CASE("synthetic dataset generator") {
  SECTION("count, range, and non-degenerate contrast") {
    const auto imgs = synth_dataset(8, 64, 1234);
    REQUIRE(imgs.size() == 8);
    for (const auto& img : imgs) {
      REQUIRE(img.in_unit_range());
      REQUIRE(img.stddev() > 0.02);
    }
  }

  SECTION("same seed is bitwise identical, different seed differs") {
    const auto a = synth_dataset(3, 64, 777);
    const auto b = synth_dataset(3, 64, 777);
    const auto c = synth_dataset(3, 64, 778);
    for (size_t i = 0; i < 3; ++i) REQUIRE(a[i].values == b[i].values);
    REQUIRE(a[0].values != c[0].values);
  }

  SECTION("parameter validation") {
    REQUIRE_THROWS_AS(synth_dataset(0, 64, 1), DataError);
    REQUIRE_THROWS_AS(synth_dataset(1, 32, 1), DataError);
  }
}

TEST_CASE("dataset directory layout") {
  const auto root = tmp_dir() / "ds";
  fs::create_directories(root / "train");
  fs::create_directories(root / "test");
  const auto imgs = synth_dataset(3, 64, 5);
  save_image((root / "train" / "a.png").string(), imgs[0]);
  save_image((root / "train" / "b.pgm").string(), imgs[1]);
  save_image((root / "test" / "c.png").string(), imgs[2]);

  const auto train = load_image_dir((root / "train").string());
  REQUIRE(train.size() == 2);
  const auto test = load_image_dir((root / "test").string());
  REQUIRE(test.size() == 1);
  REQUIRE_THROWS_AS(load_image_dir((root / "nope").string()), DataError);
}
