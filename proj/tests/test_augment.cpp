#include <oct3d/augment.hpp>

#include <gtest/gtest.h>

#include <cmath>

using oct3d::AugmentConfig;
using oct3d::Tensor;

namespace {

Tensor<float> random_volume(std::uint64_t seed, oct3d::Shape shape = {8, 9, 10}) {
  auto rng = oct3d::make_rng({seed});
  Tensor<float> v(shape);
  for (auto& x : v.values()) x = static_cast<float>(oct3d::uniform01(rng));
  return v;
}

// Smooth blob centred in the enface plane, fading towards the borders.
Tensor<float> smooth_phantom() {
  Tensor<float> v({32, 32, 8});
  for (std::size_t d = 0; d < 32; ++d)
    for (std::size_t h = 0; h < 32; ++h)
      for (std::size_t w = 0; w < 8; ++w) {
        const double r2 = std::pow((d - 15.5) / 8.0, 2) + std::pow((h - 15.5) / 8.0, 2);
        v(d, h, w) = static_cast<float>(std::exp(-r2) * (0.5 + 0.05 * static_cast<double>(w)));
      }
  return v;
}

}  // namespace

TEST(Occlude, ZeroFractionIsIdentity) {
  AugmentConfig cfg;
  cfg.occlusion_max_frac = {0, 0, 0};
  const auto v = random_volume(81);
  auto rng = oct3d::make_rng({1});
  EXPECT_EQ(oct3d::occlude(v, cfg, rng), v);
}

TEST(Occlude, FullVolumeBecomesMean) {
  const auto v = random_volume(82);
  const auto y = oct3d::occlude_forced(v, {0, 0, 0}, {8, 9, 10});
  const auto m = static_cast<float>(oct3d::mean(v));
  for (float x : y.values()) EXPECT_EQ(x, m);
}

TEST(Occlude, ChangesOnlyOneCuboid) {
  AugmentConfig cfg;
  cfg.occlusion_max_frac = {0.5, 0.5, 0.5};
  for (std::uint64_t s = 0; s < 20; ++s) {
    const auto v = random_volume(83 + s);
    auto rng = oct3d::make_rng({s});
    const auto y = oct3d::occlude(v, cfg, rng);
    // bounding box of the changed voxels must be completely filled with one value
    std::size_t lo[3] = {99, 99, 99}, hi[3] = {0, 0, 0};
    bool any = false;
    for (std::size_t d = 0; d < 8; ++d)
      for (std::size_t h = 0; h < 9; ++h)
        for (std::size_t w = 0; w < 10; ++w)
          if (v(d, h, w) != y(d, h, w)) {
            any = true;
            const std::size_t p[3] = {d, h, w};
            for (int a = 0; a < 3; ++a) {
              lo[a] = std::min(lo[a], p[a]);
              hi[a] = std::max(hi[a], p[a]);
            }
          }
    if (!any) continue;
    const float fill = static_cast<float>(oct3d::mean(v));
    for (std::size_t d = lo[0]; d <= hi[0]; ++d)
      for (std::size_t h = lo[1]; h <= hi[1]; ++h)
        for (std::size_t w = lo[2]; w <= hi[2]; ++w) EXPECT_EQ(y(d, h, w), fill);
    EXPECT_LE(hi[0] - lo[0] + 1, 4u);
    EXPECT_LE(hi[1] - lo[1] + 1, 4u);
    EXPECT_LE(hi[2] - lo[2] + 1, 5u);
  }
}

TEST(Translate, ZeroShiftAndFill) {
  const auto v = random_volume(84);
  EXPECT_EQ(oct3d::translate_forced(v, {0, 0, 0}), v);
  const auto y = oct3d::translate_forced(v, {1, -2, 3});
  EXPECT_EQ(y.shape(), v.shape());
  EXPECT_EQ(y(3, 4, 5), v(2, 6, 2));
  EXPECT_EQ(y(0, 4, 5), 0.0f);
  EXPECT_EQ(y(3, 8, 5), 0.0f);
  EXPECT_EQ(y(3, 4, 1), 0.0f);
}

TEST(Flip, ReversesEnfaceColumnsAndIsInvolution) {
  const auto v = random_volume(85);
  const auto y = oct3d::flip_lr_forced(v);
  EXPECT_EQ(y(2, 0, 3), v(2, 8, 3));
  EXPECT_EQ(y(5, 3, 7), v(5, 5, 7));
  EXPECT_EQ(oct3d::flip_lr_forced(y), v);
}

TEST(Rotate, ZeroAngleIsIdentity) {
  const auto v = random_volume(86);
  EXPECT_EQ(oct3d::rotate_enface_forced(v, 0.0), v);
}

TEST(Rotate, RightAngleMovesCorners) {
  Tensor<float> v({3, 3, 1}, 0.0f);
  v(0, 1, 0) = 1.0f;
  const auto y = oct3d::rotate_enface_forced(v, 90.0);
  float total = 0;
  for (float x : y.values()) total += x;
  EXPECT_NEAR(total, 1.0f, 1e-5);
  EXPECT_NEAR(y(1, 1, 0), 0.0f, 1e-6);
  // the off-centre voxel lands on another edge midpoint, not the centre
  EXPECT_NEAR(std::max({y(1, 0, 0), y(1, 2, 0), y(2, 1, 0)}), 1.0f, 1e-5);
}

TEST(Rotate, ForwardBackwardErrorIsSmall) {
  const auto v = smooth_phantom();
  const auto y = oct3d::rotate_enface_forced(oct3d::rotate_enface_forced(v, 10.0), -10.0);
  double mad = 0;
  for (std::size_t i = 0; i < v.size(); ++i) mad += std::abs(v[i] - y[i]);
  EXPECT_LT(mad / static_cast<double>(v.size()), 0.05);
}

TEST(Augment, MasterSwitchOffIsIdentity) {
  AugmentConfig cfg;
  cfg.enabled = false;
  const auto v = random_volume(87);
  auto rng = oct3d::make_rng({3});
  EXPECT_EQ(oct3d::augment_volume(v, cfg, rng), v);
}

TEST(Augment, PreservesShapeAndIsSeeded) {
  AugmentConfig cfg;
  cfg.enabled = true;
  cfg.translate_max = {2, 2, 3};
  const auto v = random_volume(88);
  auto r1 = oct3d::make_rng({4}), r2 = oct3d::make_rng({4});
  const auto a = oct3d::augment_volume(v, cfg, r1), b = oct3d::augment_volume(v, cfg, r2);
  EXPECT_EQ(a.shape(), v.shape());
  EXPECT_EQ(a, b);
}

TEST(Mixup, ForcedLambdas) {
  const auto xi = random_volume(89, {2, 2, 2}), xj = random_volume(90, {2, 2, 2});
  const std::vector<float> yi{1, 0}, yj{0, 1};
  const auto one = oct3d::mixup_forced(xi, yi, xj, yj, 1.0);
  EXPECT_EQ(one.x, xi);
  EXPECT_EQ(one.y, yi);
  const auto half = oct3d::mixup_forced(xi, yi, xj, yj, 0.5);
  EXPECT_EQ(half.y, (std::vector<float>{0.5f, 0.5f}));
  for (std::size_t i = 0; i < xi.size(); ++i) EXPECT_FLOAT_EQ(half.x[i], 0.5f * (xi[i] + xj[i]));
  auto rng = oct3d::make_rng({5});
  EXPECT_THROW(oct3d::mixup(xi, yi, xj, yj, 0.0, rng), oct3d::ValueError);
  AugmentConfig bad;
  bad.mixup_alpha = -1;
  EXPECT_THROW(bad.validate(), oct3d::ValueError);
}

TEST(Mixup, LambdaMeanIsHalf) {
  auto rng = oct3d::make_rng({91});
  double s = 0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    const double l = oct3d::sample_beta(rng, 0.2, 0.2);
    ASSERT_GE(l, 0.0);
    ASSERT_LE(l, 1.0);
    s += l;
  }
  EXPECT_NEAR(s / n, 0.5, 0.01);
}

TEST(Mixup, SoftTargetsStayOnSimplex) {
  auto rng = oct3d::make_rng({92});
  const auto xi = random_volume(93, {2, 2, 2}), xj = random_volume(94, {2, 2, 2});
  for (int i = 0; i < 1000; ++i) {
    const auto m = oct3d::mixup(xi, {1, 0}, xj, {0, 1}, 0.2, rng);
    EXPECT_GE(m.y[0], 0.0f);
    EXPECT_LE(m.y[0], 1.0f);
    EXPECT_NEAR(m.y[0] + m.y[1], 1.0f, 1e-6);
  }
}
