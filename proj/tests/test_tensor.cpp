#include <oct3d/random.hpp>
#include <oct3d/tensor.hpp>

#include <gtest/gtest.h>

#include <cmath>

using oct3d::Shape;
using oct3d::Tensor;

TEST(Tensor, Factories) {
  auto z = Tensor<float>::zeros({2, 3});
  EXPECT_EQ(z.size(), 6u);
  for (float v : z.values()) EXPECT_EQ(v, 0.0f);

  auto f = Tensor<float>::full({1}, 2.5f);
  EXPECT_EQ(f.size(), 1u);
  EXPECT_EQ(f[0], 2.5f);

  auto m = Tensor<float>::from_values({2, 2}, {1, 2, 3, 4});
  EXPECT_EQ(m(1, 0), 3.0f);
}

TEST(Tensor, ConstructionErrors) {
  EXPECT_THROW(Tensor<float>::zeros({2, 0}), oct3d::ShapeError);
  EXPECT_THROW(Tensor<float>::zeros({}), oct3d::ShapeError);
  EXPECT_THROW(Tensor<float>::from_values({2, 2}, {1, 2, 3}), oct3d::ShapeError);
  auto t = Tensor<float>::zeros({2, 2});
  EXPECT_THROW(t(2, 0), oct3d::ShapeError);
  EXPECT_THROW(t(0), oct3d::ShapeError);
}

TEST(Tensor, MapZip) {
  auto a = Tensor<float>::from_values({2}, {1, -2});
  auto r = oct3d::map(a, oct3d::relu_scalar<float>);
  EXPECT_EQ(r.storage(), (std::vector<float>{1, 0}));

  auto x = Tensor<float>::from_values({2}, {1, 2});
  auto y = Tensor<float>::from_values({2}, {3, 4});
  auto s = oct3d::zip(x, y, [](float p, float q) { return p + q; });
  EXPECT_EQ(s.storage(), (std::vector<float>{4, 6}));

  auto bad = Tensor<float>::zeros({3});
  try {
    oct3d::zip(x, bad, [](float p, float q) { return p + q; });
    FAIL() << "expected a shape error";
  } catch (const oct3d::ShapeError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("[2]"), std::string::npos) << msg;
    EXPECT_NE(msg.find("[3]"), std::string::npos) << msg;
  }
}

TEST(Tensor, ReduceMean) {
  auto a = Tensor<double>::from_values({2, 2}, {1, 3, 5, 7});
  auto m = oct3d::reduce_mean(a, {0, 1});
  EXPECT_EQ(m.shape(), Shape{1});
  EXPECT_DOUBLE_EQ(m[0], 4.0);

  EXPECT_DOUBLE_EQ(oct3d::reduce_mean(Tensor<double>::ones({4, 4, 4}), {0, 1, 2})[0], 1.0);

  auto cols = oct3d::reduce_mean(a, {0});
  EXPECT_EQ(cols.shape(), Shape{2});
  EXPECT_DOUBLE_EQ(cols[0], 3.0);
  EXPECT_DOUBLE_EQ(cols[1], 5.0);

  EXPECT_THROW(oct3d::reduce_mean(a, {0, 0}), oct3d::ShapeError);
  EXPECT_THROW(oct3d::reduce_mean(a, {2}), oct3d::ShapeError);
}

TEST(Tensor, ReduceMeanMatchesNaiveLoop) {
  auto rng = oct3d::make_rng({11});
  Tensor<double> a({3, 3});
  for (auto& v : a.values()) v = oct3d::uniform(rng, -5, 5);
  double s = 0;
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) s += a(i, j);
  EXPECT_NEAR(oct3d::reduce_mean(a, {0, 1})[0], s / 9.0, 1e-12);

  auto rows = oct3d::reduce_mean(a, {1});
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(rows[i], (a(i, 0) + a(i, 1) + a(i, 2)) / 3.0, 1e-12);
}

TEST(Tensor, PadZero) {
  auto a = Tensor<float>::from_values({2}, {1, 2});
  auto p = oct3d::pad_zero(a, {{1, 1}});
  EXPECT_EQ(p.storage(), (std::vector<float>{0, 1, 2, 0}));
  EXPECT_EQ(oct3d::pad_zero(a, {{0, 0}}), a);

  auto rng = oct3d::make_rng({12});
  Tensor<double> v({3, 4, 2});
  for (auto& x : v.values()) x = oct3d::uniform(rng, -1, 1);
  auto padded = oct3d::pad_zero(v, {{1, 2}, {0, 3}, {2, 1}});
  EXPECT_EQ(padded.shape(), (Shape{6, 7, 5}));
  EXPECT_NEAR(oct3d::sum(padded), oct3d::sum(v), 1e-12);
  EXPECT_EQ(oct3d::crop(padded, {1, 0, 2}, v.shape()), v);
}

TEST(Tensor, ResampleIdentityAndConstant) {
  auto rng = oct3d::make_rng({13});
  Tensor<float> v({4, 5, 6});
  for (auto& x : v.values()) x = static_cast<float>(oct3d::uniform01(rng));
  EXPECT_EQ(oct3d::resample_trilinear(v, {4, 5, 6}), v);

  auto c = Tensor<float>::full({3, 7, 9}, 0.375f);
  for (const Shape& target : {Shape{1, 1, 1}, Shape{8, 2, 5}, Shape{10, 14, 3}}) {
    auto r = oct3d::resample_trilinear(c, target);
    EXPECT_EQ(r.shape(), target);
    for (float x : r.values()) EXPECT_EQ(x, 0.375f);
  }
  EXPECT_THROW(oct3d::resample_trilinear(Tensor<float>::zeros({2, 2}), {2, 2, 2}), oct3d::ShapeError);
}

TEST(Tensor, ResampleLinearRamp) {
  // f(z,y,x) = x on a width of 9, resampled to half width (5): sample i lands on x = 2i.
  Tensor<float> v({3, 4, 9});
  for (std::size_t z = 0; z < 3; ++z)
    for (std::size_t y = 0; y < 4; ++y)
      for (std::size_t x = 0; x < 9; ++x) v(z, y, x) = static_cast<float>(x);
  auto r = oct3d::resample_trilinear(v, {3, 4, 5});
  for (std::size_t z = 0; z < 3; ++z)
    for (std::size_t y = 0; y < 4; ++y)
      for (std::size_t x = 0; x < 5; ++x) EXPECT_NEAR(r(z, y, x), 2.0 * x, 1e-6);

  // even width: 8 -> 4, positions x * 7/3
  Tensor<double> w({2, 2, 8});
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = static_cast<double>(i % 8);
  auto q = oct3d::resample_trilinear(w, {2, 2, 4});
  for (std::size_t x = 0; x < 4; ++x) EXPECT_NEAR(q(1, 1, x), x * 7.0 / 3.0, 1e-6);
}

namespace {

// Eight-corner trilinear interpolation evaluated directly per output voxel.
double trilinear_at(const Tensor<double>& a, double z, double y, double x) {
  auto split = [](double p, std::size_t n, std::size_t& lo, std::size_t& hi) {
    lo = std::min<std::size_t>(static_cast<std::size_t>(std::floor(p)), n - 1);
    hi = std::min(lo + 1, n - 1);
    return p - static_cast<double>(lo);
  };
  std::size_t z0, z1, y0, y1, x0, x1;
  const double fz = split(z, a.dim(0), z0, z1), fy = split(y, a.dim(1), y0, y1), fx = split(x, a.dim(2), x0, x1);
  double s = 0;
  for (int dz = 0; dz < 2; ++dz)
    for (int dy = 0; dy < 2; ++dy)
      for (int dx = 0; dx < 2; ++dx) {
        const double w = (dz ? fz : 1 - fz) * (dy ? fy : 1 - fy) * (dx ? fx : 1 - fx);
        s += w * a(dz ? z1 : z0, dy ? y1 : y0, dx ? x1 : x0);
      }
  return s;
}

double corner_pos(std::size_t i, std::size_t src, std::size_t dst) {
  if (dst == 1) return (static_cast<double>(src) - 1) / 2;
  return static_cast<double>(i) * static_cast<double>(src - 1) / static_cast<double>(dst - 1);
}

}  // namespace

TEST(Tensor, ResampleMatchesDirectTrilinear) {
  auto rng = oct3d::make_rng({14});
  Tensor<double> a({5, 6, 7});
  for (auto& v : a.values()) v = oct3d::uniform(rng, -2, 3);
  const Shape target{3, 11, 4};
  auto r = oct3d::resample_trilinear(a, target);
  const double lo = oct3d::min_value(a), hi = oct3d::max_value(a);
  for (std::size_t z = 0; z < target[0]; ++z)
    for (std::size_t y = 0; y < target[1]; ++y)
      for (std::size_t x = 0; x < target[2]; ++x) {
        const double want = trilinear_at(a, corner_pos(z, 5, 3), corner_pos(y, 6, 11), corner_pos(x, 7, 4));
        EXPECT_NEAR(r(z, y, x), want, 1e-12);
        EXPECT_GE(r(z, y, x), lo);
        EXPECT_LE(r(z, y, x), hi);
      }
}

TEST(Tensor, ResampleStaysInRange) {
  auto rng = oct3d::make_rng({15});
  Tensor<float> a({6, 6, 10});
  for (auto& v : a.values()) v = static_cast<float>(oct3d::uniform01(rng));
  const float lo = oct3d::min_value(a), hi = oct3d::max_value(a);
  for (const Shape& target : {Shape{17, 3, 29}, Shape{1, 9, 2}, Shape{6, 6, 33}}) {
    auto r = oct3d::resample_trilinear(a, target);
    EXPECT_EQ(r.shape(), target);
    EXPECT_GE(oct3d::min_value(r), lo);
    EXPECT_LE(oct3d::max_value(r), hi);
  }
}
