#ifndef OCT3D_AUGMENT_HPP
#define OCT3D_AUGMENT_HPP

#include <oct3d/error.hpp>
#include <oct3d/random.hpp>
#include <oct3d/tensor.hpp>

#include <array>
#include <cmath>
#include <numbers>
#include <string>
#include <utility>

// Training-time augmentations on [D,H,W] volumes. Each has a deterministic
// *_forced form taking explicit parameters and a form that draws them from an
// Rng, so tests can pin the draw and the pipeline stays reproducible.

namespace oct3d {

struct AugmentConfig {
  bool enabled = false;  // master switch; off means the exact identity
  std::array<double, 3> occlusion_max_frac{0.25, 0.25, 0.25};
  std::array<long, 3> translate_max{6, 6, 12};
  bool flip_enabled = true;
  double rotation_max_deg = 10.0;
  bool mixup_enabled = true;
  double mixup_alpha = 0.2;

  void validate() const {
    for (double f : occlusion_max_frac)
      if (!(f >= 0 && f <= 1)) throw ValueError("occlusion_max_frac must be in [0,1]");
    for (long t : translate_max)
      if (t < 0) throw ValueError("translate_max must be >= 0");
    if (!(rotation_max_deg >= 0)) throw ValueError("rotation_max_deg must be >= 0");
    if (mixup_enabled && !(mixup_alpha > 0)) throw ValueError("mixup_alpha must be > 0 when mixup is enabled");
  }
};

namespace detail {
inline void check_volume(const Tensor<float>& x, const char* op) {
  if (x.rank() != 3) throw ShapeError(std::string(op) + " expects a [D,H,W] volume, got " + shape_str(x.shape()));
}
}  // namespace detail

/// Replaces the cuboid [origin, origin + extent) with the volume mean.
inline Tensor<float> occlude_forced(const Tensor<float>& x, std::array<std::size_t, 3> origin,
                                    std::array<std::size_t, 3> extent) {
  detail::check_volume(x, "occlude");
  for (int a = 0; a < 3; ++a)
    if (origin[a] + extent[a] > x.dim(a)) throw ShapeError("occlusion cuboid exceeds the volume");
  Tensor<float> y = x;
  const float fill = static_cast<float>(mean(x));
  const std::size_t H = x.dim(1), W = x.dim(2);
  for (std::size_t d = origin[0]; d < origin[0] + extent[0]; ++d)
    for (std::size_t h = origin[1]; h < origin[1] + extent[1]; ++h)
      for (std::size_t w = origin[2]; w < origin[2] + extent[2]; ++w) y[(d * H + h) * W + w] = fill;
  return y;
}

/// One cuboid, each extent uniform in [0, max_frac * axis], placed uniformly.
inline Tensor<float> occlude(const Tensor<float>& x, const AugmentConfig& cfg, Rng& rng) {
  detail::check_volume(x, "occlude");
  std::array<std::size_t, 3> origin{}, extent{};
  for (int a = 0; a < 3; ++a) {
    const auto n = static_cast<long>(x.dim(a));
    const auto hi = static_cast<long>(std::floor(cfg.occlusion_max_frac[a] * static_cast<double>(n)));
    extent[a] = static_cast<std::size_t>(uniform_int(rng, 0, hi));
    origin[a] = static_cast<std::size_t>(uniform_int(rng, 0, n - static_cast<long>(extent[a])));
  }
  return occlude_forced(x, origin, extent);
}

/// Integer shift per axis; vacated voxels are zero.
inline Tensor<float> translate_forced(const Tensor<float>& x, std::array<long, 3> shift) {
  detail::check_volume(x, "translate");
  const long D = static_cast<long>(x.dim(0)), H = static_cast<long>(x.dim(1)), W = static_cast<long>(x.dim(2));
  Tensor<float> y(x.shape(), 0.0f);
  for (long d = 0; d < D; ++d) {
    const long sd = d - shift[0];
    if (sd < 0 || sd >= D) continue;
    for (long h = 0; h < H; ++h) {
      const long sh = h - shift[1];
      if (sh < 0 || sh >= H) continue;
      for (long w = 0; w < W; ++w) {
        const long sw = w - shift[2];
        if (sw < 0 || sw >= W) continue;
        y[static_cast<std::size_t>((d * H + h) * W + w)] = x[static_cast<std::size_t>((sd * H + sh) * W + sw)];
      }
    }
  }
  return y;
}

inline Tensor<float> translate(const Tensor<float>& x, const AugmentConfig& cfg, Rng& rng) {
  std::array<long, 3> s{};
  for (int a = 0; a < 3; ++a) s[a] = uniform_int(rng, -cfg.translate_max[a], cfg.translate_max[a]);
  return translate_forced(x, s);
}

/// Reverses the enface-column axis (axis 1), swapping eye laterality.
inline Tensor<float> flip_lr_forced(const Tensor<float>& x) {
  detail::check_volume(x, "flip_lr");
  const std::size_t D = x.dim(0), H = x.dim(1), W = x.dim(2);
  Tensor<float> y(x.shape());
  for (std::size_t d = 0; d < D; ++d)
    for (std::size_t h = 0; h < H; ++h)
      std::copy_n(x.data() + (d * H + (H - 1 - h)) * W, W, y.data() + (d * H + h) * W);
  return y;
}

/// Flips with probability 0.5.
inline Tensor<float> flip_lr(const Tensor<float>& x, Rng& rng) {
  return uniform01(rng) < 0.5 ? flip_lr_forced(x) : x;
}

/// Rotates every enface plane (axes 0,1) about its centre by `degrees` with
/// bilinear interpolation; samples outside the plane read as zero.
inline Tensor<float> rotate_enface_forced(const Tensor<float>& x, double degrees) {
  detail::check_volume(x, "rotate_enface");
  if (degrees == 0.0) return x;
  const long D = static_cast<long>(x.dim(0)), H = static_cast<long>(x.dim(1));
  const std::size_t W = x.dim(2);
  const double th = degrees * std::numbers::pi / 180.0, c = std::cos(th), s = std::sin(th);
  const double cd = (static_cast<double>(D) - 1) / 2, ch = (static_cast<double>(H) - 1) / 2;
  Tensor<float> y(x.shape(), 0.0f);
  for (long d = 0; d < D; ++d)
    for (long h = 0; h < H; ++h) {
      // inverse map: source = R(-theta) (p - centre) + centre
      const double pd = static_cast<double>(d) - cd, ph = static_cast<double>(h) - ch;
      const double sd = c * pd + s * ph + cd, sh = -s * pd + c * ph + ch;
      const long d0 = static_cast<long>(std::floor(sd)), h0 = static_cast<long>(std::floor(sh));
      const double fd = sd - static_cast<double>(d0), fh = sh - static_cast<double>(h0);
      float* dst = y.data() + static_cast<std::size_t>(d * H + h) * W;
      for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b) {
          const long qd = d0 + a, qh = h0 + b;
          if (qd < 0 || qd >= D || qh < 0 || qh >= H) continue;
          const auto wt = static_cast<float>((a ? fd : 1 - fd) * (b ? fh : 1 - fh));
          if (wt == 0.0f) continue;
          const float* src = x.data() + static_cast<std::size_t>(qd * H + qh) * W;
          for (std::size_t k = 0; k < W; ++k) dst[k] += wt * src[k];
        }
    }
  return y;
}

inline Tensor<float> rotate_enface(const Tensor<float>& x, const AugmentConfig& cfg, Rng& rng) {
  return rotate_enface_forced(x, uniform(rng, -cfg.rotation_max_deg, cfg.rotation_max_deg));
}

/// Per-volume augmentations in a fixed order: occlusion, translation, flip,
/// rotation. Identity when the master switch is off.
inline Tensor<float> augment_volume(const Tensor<float>& x, const AugmentConfig& cfg, Rng& rng) {
  if (!cfg.enabled) return x;
  Tensor<float> y = occlude(x, cfg, rng);
  y = translate(y, cfg, rng);
  if (cfg.flip_enabled) y = flip_lr(y, rng);
  if (cfg.rotation_max_deg > 0) y = rotate_enface(y, cfg, rng);
  return y;
}

struct Mixed {
  Tensor<float> x;
  std::vector<float> y;
  double lambda;
};

/// x = lam x_i + (1-lam) x_j, y = lam y_i + (1-lam) y_j.
inline Mixed mixup_forced(const Tensor<float>& xi, const std::vector<float>& yi, const Tensor<float>& xj,
                          const std::vector<float>& yj, double lambda) {
  if (xi.shape() != xj.shape() || yi.size() != yj.size())
    throw ShapeError("mixup operands differ in shape: " + shape_str(xi.shape()) + " vs " + shape_str(xj.shape()));
  if (!(lambda >= 0 && lambda <= 1)) throw ValueError("mixup lambda must be in [0,1]");
  if (lambda == 1.0) return {xi, yi, 1.0};
  const auto l = static_cast<float>(lambda), r = static_cast<float>(1.0 - lambda);
  Mixed m{Tensor<float>(xi.shape()), std::vector<float>(yi.size()), lambda};
  for (std::size_t i = 0; i < xi.size(); ++i) m.x[i] = l * xi[i] + r * xj[i];
  for (std::size_t k = 0; k < yi.size(); ++k) m.y[k] = l * yi[k] + r * yj[k];
  return m;
}

/// lambda ~ Beta(alpha, alpha).
inline Mixed mixup(const Tensor<float>& xi, const std::vector<float>& yi, const Tensor<float>& xj,
                   const std::vector<float>& yj, double alpha, Rng& rng) {
  if (!(alpha > 0)) throw ValueError("mixup alpha must be > 0");
  return mixup_forced(xi, yi, xj, yj, sample_beta(rng, alpha, alpha));
}

}  // namespace oct3d

#endif  // OCT3D_AUGMENT_HPP
