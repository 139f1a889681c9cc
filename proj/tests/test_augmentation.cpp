#include <cmath>
#include <numbers>
#include <random>

#include "doctest.h"
#include "oracles.hpp"
#include "pseg/augmentation.hpp"
#include "pseg/error.hpp"

using namespace pseg;

namespace {

ScalarImage2D random_image(int w, int h, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-100.0, 300.0);
  std::vector<double> v(static_cast<std::size_t>(w) * h);
  for (double& x : v) x = u(rng);
  return ScalarImage2D(w, h, std::move(v));
}

// Nearest-neighbour oracle: invert the forward matrix A = R(theta) * S
// numerically and round each source coordinate half-up.
BinaryMask2D nearest_oracle(const BinaryMask2D& m, double deg, double fx, double fy) {
  const double t = deg * std::numbers::pi / 180.0;
  const double a = std::cos(t) * fx, b = -std::sin(t) * fy;
  const double c = std::sin(t) * fx, d = std::cos(t) * fy;
  const double det = a * d - b * c;
  const double ia = d / det, ib = -b / det, ic = -c / det, id = a / det;
  const double cx = (m.width() - 1) / 2.0, cy = (m.height() - 1) / 2.0;
  std::vector<std::uint8_t> out(m.size(), 0);
  for (int y = 0; y < m.height(); ++y)
    for (int x = 0; x < m.width(); ++x) {
      const double sx = cx + ia * (x - cx) + ib * (y - cy);
      const double sy = cy + ic * (x - cx) + id * (y - cy);
      const long px = static_cast<long>(std::floor(sx + 0.5));
      const long py = static_cast<long>(std::floor(sy + 0.5));
      if (px >= 0 && py >= 0 && px < m.width() && py < m.height())
        out[static_cast<std::size_t>(y) * m.width() + x] = m.at(static_cast<int>(px), static_cast<int>(py));
    }
  return BinaryMask2D(m.width(), m.height(), std::move(out));
}

LabeledSlice sample_slice(std::mt19937_64& rng) {
  return {"p3", 4, random_image(20, 18, rng), oracle::random_mask(20, 18, rng, 0.3)};
}

}  // namespace

TEST_CASE("rotation by zero is the identity") {
  std::mt19937_64 rng(1);
  const auto img = random_image(9, 7, rng);
  CHECK(rotate(img, 0.0) == img);
  const auto m = oracle::random_mask(9, 7, rng);
  CHECK(rotate(m, 0.0) == m);
  CHECK(scale(img, 1.0, 1.0) == img);
  CHECK(scale(m, 1.0, 1.0) == m);
}

TEST_CASE("rotation by 90 degrees moves a pixel about the center") {
  const int n = 9;
  const double c = (n - 1) / 2.0;
  for (auto [x, y] : {std::pair{2, 1}, std::pair{7, 3}, std::pair{4, 4}, std::pair{0, 8}}) {
    std::vector<double> v(n * n, 0.0);
    v[static_cast<std::size_t>(y) * n + x] = 1.0;
    const ScalarImage2D out = rotate(ScalarImage2D(n, n, v), 90.0);
    // (dx, dy) -> (-dy, dx)
    const int rx = static_cast<int>(c - (y - c));
    const int ry = static_cast<int>(c + (x - c));
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < n; ++i) CHECK(std::abs(out.at(i, j) - ((i == rx && j == ry) ? 1.0 : 0.0)) <= 1e-9);

    std::vector<std::uint8_t> l(n * n, 0);
    l[static_cast<std::size_t>(y) * n + x] = 1;
    const BinaryMask2D mo = rotate(BinaryMask2D(n, n, l), 90.0);
    CHECK(mo.foreground_count() == 1);
    CHECK(mo.at(rx, ry) == 1);
  }
  // Even size: center between pixels.
  std::vector<double> v(8 * 8, 0.0);
  v[1 * 8 + 6] = 5.0;  // (6, 1): offset (2.5, -2.5) -> (2.5, 2.5) = (6, 6)
  CHECK(std::abs(rotate(ScalarImage2D(8, 8, v), 90.0).at(6, 6) - 5.0) <= 1e-9);
}

TEST_CASE("rotation by 360 degrees returns the input") {
  std::mt19937_64 rng(2);
  const auto img = random_image(12, 10, rng);
  const auto out = rotate(img, 360.0);
  for (std::size_t i = 0; i < img.size(); ++i) CHECK(std::abs(out.values()[i] - img.values()[i]) <= 1e-9);
}

TEST_CASE("masks reject bilinear interpolation") {
  const BinaryMask2D m(4, 4);
  CHECK_THROWS_AS(rotate(m, 10.0, Interpolation::bilinear), ValidationError);
  CHECK_THROWS_AS(scale(m, 1.1, 1.0, Interpolation::bilinear), ValidationError);
  CHECK_THROWS_AS(scale(ScalarImage2D(4, 4), 0.0, 1.0), ValidationError);
  CHECK_THROWS_AS(scale(ScalarImage2D(4, 4), 1.0, -1.0), ValidationError);
  CHECK_THROWS_AS(rotate(ScalarImage2D(4, 4), std::nan("")), ValidationError);
}

TEST_CASE("x scaling doubles a centered bar") {
  const int n = 16;
  std::vector<std::uint8_t> l(n * n, 0);
  for (int y = 4; y < 12; ++y) l[static_cast<std::size_t>(y) * n + 7] = l[static_cast<std::size_t>(y) * n + 8] = 1;
  const BinaryMask2D bar(n, n, l);
  const BinaryMask2D wide = scale(bar, 2.0, 1.0);
  for (int y = 0; y < n; ++y) {
    int width = 0;
    for (int x = 0; x < n; ++x) width += wide.at(x, y);
    CHECK(width == ((y >= 4 && y < 12) ? 4 : 0));
  }
  CHECK(wide == nearest_oracle(bar, 0.0, 2.0, 1.0));
  for (std::uint8_t v : wide.labels()) CHECK(v <= 1);
}

TEST_CASE("mask transforms match the inverse-map oracle") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> angle(-180.0, 180.0);
  std::uniform_real_distribution<double> factor(0.8, 1.3);
  for (int trial = 0; trial < 200; ++trial) {
    const auto m = oracle::random_mask(11 + trial % 5, 9 + trial % 4, rng, 0.4);
    const double a = angle(rng), fx = factor(rng), fy = factor(rng);
    const BinaryMask2D got = transform(m, a, fx, fy, Interpolation::nearest);
    const BinaryMask2D want = nearest_oracle(m, a, fx, fy);
    CHECK(got.foreground_count() == want.foreground_count());
    CHECK(got == want);
  }
}

TEST_CASE("gaussian noise statistics") {
  const ScalarImage2D zero(256, 256);
  CHECK(add_noise(zero, NoiseKind::gaussian, 0.0, 1) == zero);
  const ScalarImage2D noisy = add_noise(zero, NoiseKind::gaussian, 5.0, 1);
  double mean = 0.0;
  for (double v : noisy.values()) mean += v;
  mean /= static_cast<double>(noisy.size());
  double var = 0.0;
  for (double v : noisy.values()) var += (v - mean) * (v - mean);
  const double sd = std::sqrt(var / static_cast<double>(noisy.size() - 1));
  CHECK(std::abs(mean) <= 0.2);
  CHECK(sd >= 4.8);
  CHECK(sd <= 5.2);
  CHECK(add_noise(zero, NoiseKind::gaussian, 5.0, 1) == noisy);
  CHECK_FALSE(add_noise(zero, NoiseKind::gaussian, 5.0, 2) == noisy);
}

TEST_CASE("uniform noise stays within its amplitude") {
  const ScalarImage2D base(64, 64, std::vector<double>(64 * 64, 10.0));
  const ScalarImage2D noisy = add_noise(base, NoiseKind::uniform, 3.0, 4);
  double lo = 1e9, hi = -1e9;
  for (double v : noisy.values()) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  CHECK(lo >= 7.0);
  CHECK(hi <= 13.0);
  CHECK(hi - lo > 5.9);
}

TEST_CASE("salt and pepper alters exactly the density fraction") {
  std::vector<double> v(100);
  for (int i = 0; i < 100; ++i) v[i] = 1.0 + i * 0.01;  // distinct, with min 1.0 and max 1.99
  const ScalarImage2D img(10, 10, v);
  const ScalarImage2D out = add_noise(img, NoiseKind::salt_pepper, 0.2, 5);
  int altered = 0, salt = 0, pepper = 0;
  for (int i = 0; i < 100; ++i) {
    if (out.values()[i] != v[i]) ++altered;
    if (out.values()[i] == 1.99 && v[i] != 1.99) ++salt;
    if (out.values()[i] == 1.0 && v[i] != 1.0) ++pepper;
    CHECK((out.values()[i] == v[i] || out.values()[i] == 1.0 || out.values()[i] == 1.99));
  }
  // Pixels already at an extreme may be re-set to the same value.
  CHECK(altered <= 20);
  CHECK(altered >= 18);
  CHECK(salt_pepper_count(0.2, 100) == 20);
  CHECK(salt > 0);
  CHECK(pepper > 0);
  CHECK_THROWS_AS(add_noise(img, NoiseKind::salt_pepper, 1.5, 5), ValidationError);
  CHECK(add_noise(img, NoiseKind::none, 3.0, 5) == img);
}

TEST_CASE("noise kind names") {
  for (NoiseKind k : {NoiseKind::gaussian, NoiseKind::uniform, NoiseKind::salt_pepper, NoiseKind::none})
    CHECK(parse_noise_kind(to_string(k)) == k);
  CHECK_THROWS_AS(parse_noise_kind("pink"), ValidationError);
}

TEST_CASE("enumeration examples") {
  AugmentationPlan p;
  p.n_rotations = 1;
  p.n_scales_x = 0;
  p.n_scales_y = 0;
  const auto two = enumerate_plan(p);
  REQUIRE(two.size() == 2);
  CHECK(two[0] == TransformDescriptor{});
  CHECK(two[1].rotation_deg == 45.0);

  AugmentationPlan d;
  CHECK(enumerate_plan(d).size() == 25);
  d.noise_kind = NoiseKind::gaussian;
  const auto fifty = enumerate_plan(d);
  REQUIRE(fifty.size() == 50);
  CHECK(fifty == enumerate_plan(d));
  // Second half repeats the first with noise attached.
  for (std::size_t i = 0; i < 25; ++i) {
    CHECK_FALSE(fifty[i].noise.has_value());
    REQUIRE(fifty[i + 25].noise.has_value());
    CHECK(fifty[i + 25].rotation_deg == fifty[i].rotation_deg);
    CHECK(fifty[i + 25].scale_x == fifty[i].scale_x);
    CHECK(fifty[i + 25].scale_y == fifty[i].scale_y);
    CHECK(fifty[i + 25].noise->kind == NoiseKind::gaussian);
    CHECK(fifty[i + 25].noise->magnitude > 0.0);
    CHECK(fifty[i + 25].noise->magnitude <= 5.0);
  }
  CHECK(fifty[25].noise->magnitude == 1.25);
  CHECK(fifty[28].noise->magnitude == 5.0);
  CHECK(fifty[26].noise->draw_seed != fifty[25].noise->draw_seed);

  // Rotations evenly spaced in (0, max], scalings in (1, 1 + max_scale].
  CHECK(fifty[1].rotation_deg == 11.25);
  CHECK(fifty[4].rotation_deg == 45.0);
  CHECK(fifty[5].scale_x == 1.05);
  CHECK(fifty[6].scale_x == doctest::Approx(1.1).epsilon(1e-15));
  CHECK(fifty[7].scale_y == 1.05);
}

TEST_CASE("plan validation") {
  AugmentationPlan p;
  p.n_rotations = 0;
  CHECK_THROWS_AS(p.validate(), ValidationError);
  p = {};
  p.max_scale = 0.2;
  CHECK_THROWS_AS(enumerate_plan(p), ValidationError);
  p = {};
  p.n_noisy = 0;
  CHECK_NOTHROW(p.validate());  // ignored without noise
  p.noise_kind = NoiseKind::uniform;
  CHECK_THROWS_AS(p.validate(), ValidationError);
  p = {};
  p.saltpepper_max_density = 0.6;
  CHECK_THROWS_AS(p.validate(), ValidationError);
  p = {};
  p.max_rotation_deg = 181;
  CHECK_THROWS_AS(p.validate(), ValidationError);
}

TEST_CASE("enumeration length over the parameter grid") {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> rot(0.0, 180.0), sc(0.05, 0.15);
  for (int r = 1; r <= 10; ++r)
    for (int sx = 0; sx <= 5; ++sx)
      for (int sy = 0; sy <= 5; ++sy)
        for (NoiseKind k : {NoiseKind::none, NoiseKind::gaussian, NoiseKind::uniform, NoiseKind::salt_pepper}) {
          AugmentationPlan p;
          p.n_rotations = r;
          p.n_scales_x = sx;
          p.n_scales_y = sy;
          p.noise_kind = k;
          p.max_rotation_deg = rot(rng);
          p.max_scale = sc(rng);
          const auto list = enumerate_plan(p);
          const std::size_t want = (1 + r + sx + sy + r * (sx + sy)) * (k == NoiseKind::none ? 1 : 2);
          REQUIRE(list.size() == want);
          REQUIRE(plan_length(p) == want);
          for (const auto& d : list) {
            REQUIRE(std::abs(d.rotation_deg) <= p.max_rotation_deg);
            REQUIRE(std::abs(d.scale_x - 1.0) <= p.max_scale + 1e-15);
            REQUIRE(std::abs(d.scale_y - 1.0) <= p.max_scale + 1e-15);
          }
        }
}

TEST_CASE("augment_pair") {
  std::mt19937_64 rng(7);
  const LabeledSlice s = sample_slice(rng);

  const AugmentedSlice id = apply_descriptor(s, TransformDescriptor{}, 0);
  CHECK(id.slice.ct == s.ct);
  CHECK(id.slice.mask == s.mask);

  AugmentationPlan plan;
  plan.noise_kind = NoiseKind::salt_pepper;
  plan.seed = 42;
  const auto out = augment_pair(s, plan, 1);
  REQUIRE(out.size() == 50);
  CHECK(out[0].slice.ct == s.ct);
  for (std::size_t i = 0; i < out.size(); ++i) {
    CHECK(out[i].descriptor_index == i);
    CHECK(out[i].slice.patient_id == "p3");
    CHECK(out[i].slice.slice_index == 4);
    for (std::uint8_t v : out[i].slice.mask.labels()) CHECK(v <= 1);
  }
  // Noise touches CT only: noisy copies share the clean copy's mask.
  for (std::size_t i = 0; i < 25; ++i) {
    CHECK(out[i + 25].slice.mask == out[i].slice.mask);
    CHECK_FALSE(out[i + 25].slice.ct == out[i].slice.ct);
  }
  const auto threaded = augment_pair(s, plan, 4);
  for (std::size_t i = 0; i < out.size(); ++i) {
    CHECK(threaded[i].slice.ct == out[i].slice.ct);
    CHECK(threaded[i].slice.mask == out[i].slice.mask);
  }
  const auto again = augment_pair(s, plan, 1);
  for (std::size_t i = 0; i < out.size(); ++i) CHECK(again[i].slice.ct == out[i].slice.ct);

  // 630 slices x 25 descriptors.
  CHECK(630 * plan_length(AugmentationPlan{}) == 15750);

  LabeledSlice bad = s;
  bad.mask = BinaryMask2D(5, 5);
  CHECK_THROWS_AS(augment_pair(bad, plan), ValidationError);
}
