#ifndef OCT3D_TENSOR_HPP
#define OCT3D_TENSOR_HPP

#include <oct3d/error.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace oct3d {

using Shape = std::vector<std::size_t>;

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ']';
  return os.str();
}

inline std::size_t shape_numel(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

inline void check_shape(const Shape& s) {
  if (s.empty()) throw ShapeError("tensor shape must have at least one axis");
  for (auto e : s)
    if (e == 0) throw ShapeError("tensor extent of 0 in shape " + shape_str(s));
}

/// Dense row-major n-dimensional array; the last axis varies fastest.
///
/// A default-constructed tensor is empty (rank 0, no data) and only serves as
/// a placeholder; every factory validates that extents are >= 1.
template <typename T = float>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;

  explicit Tensor(Shape shape, T fill = T{}) : shape_(std::move(shape)) {
    check_shape(shape_);
    data_.assign(shape_numel(shape_), fill);
  }

  Tensor(Shape shape, std::vector<T> values) : shape_(std::move(shape)), data_(std::move(values)) {
    check_shape(shape_);
    if (data_.size() != shape_numel(shape_))
      throw ShapeError("value count " + std::to_string(data_.size()) + " does not match shape " +
                       shape_str(shape_));
  }

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape), T{0}); }
  static Tensor ones(Shape shape) { return Tensor(std::move(shape), T{1}); }
  static Tensor full(Shape shape, T value) { return Tensor(std::move(shape), value); }
  static Tensor from_values(Shape shape, std::vector<T> values) {
    return Tensor(std::move(shape), std::move(values));
  }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }

  T* data() noexcept { return data_.data(); }
  const T* data() const noexcept { return data_.data(); }
  std::span<T> values() noexcept { return data_; }
  std::span<const T> values() const noexcept { return data_; }
  std::vector<T>& storage() noexcept { return data_; }
  const std::vector<T>& storage() const noexcept { return data_; }

  T& operator[](std::size_t flat) noexcept { return data_[flat]; }
  const T& operator[](std::size_t flat) const noexcept { return data_[flat]; }

  /// Flat offset of a multi-index; throws on rank mismatch or out-of-range.
  std::size_t offset(std::span<const std::size_t> idx) const {
    if (idx.size() != shape_.size())
      throw ShapeError("index rank " + std::to_string(idx.size()) + " for tensor of shape " +
                       shape_str(shape_));
    std::size_t off = 0;
    for (std::size_t a = 0; a < idx.size(); ++a) {
      if (idx[a] >= shape_[a])
        throw ShapeError("index " + std::to_string(idx[a]) + " out of range on axis " +
                         std::to_string(a) + " of shape " + shape_str(shape_));
      off = off * shape_[a] + idx[a];
    }
    return off;
  }

  template <typename... I>
  T& operator()(I... idx) {
    const std::array<std::size_t, sizeof...(I)> a{static_cast<std::size_t>(idx)...};
    return data_[offset(a)];
  }
  template <typename... I>
  const T& operator()(I... idx) const {
    const std::array<std::size_t, sizeof...(I)> a{static_cast<std::size_t>(idx)...};
    return data_[offset(a)];
  }

  Tensor reshaped(Shape shape) const {
    check_shape(shape);
    if (shape_numel(shape) != size())
      throw ShapeError("cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
    return Tensor(std::move(shape), data_);
  }

  template <typename U>
  Tensor<U> cast() const {
    std::vector<U> v(data_.begin(), data_.end());
    return Tensor<U>(shape_, std::move(v));
  }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  Shape shape_;
  std::vector<T> data_;
};

template <typename T, typename Fn>
Tensor<T> map(const Tensor<T>& a, Fn fn) {
  Tensor<T> out = a;
  for (auto& v : out.values()) v = fn(v);
  return out;
}

template <typename T, typename Fn>
Tensor<T> zip(const Tensor<T>& a, const Tensor<T>& b, Fn fn) {
  if (a.shape() != b.shape())
    throw ShapeError("shape mismatch: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  Tensor<T> out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fn(a[i], b[i]);
  return out;
}

template <typename T>
T relu_scalar(T v) {
  return v > T{0} ? v : T{0};
}

template <typename T>
double sum(const Tensor<T>& a) {
  double s = 0;
  for (auto v : a.values()) s += static_cast<double>(v);
  return s;
}

template <typename T>
T min_value(const Tensor<T>& a) {
  return *std::min_element(a.values().begin(), a.values().end());
}

template <typename T>
T max_value(const Tensor<T>& a) {
  return *std::max_element(a.values().begin(), a.values().end());
}

template <typename T>
double mean(const Tensor<T>& a) {
  return sum(a) / static_cast<double>(a.size());
}

/// Mean over the given axes; reduced axes are removed. Reducing every axis
/// yields a shape-[1] tensor.
template <typename T>
Tensor<T> reduce_mean(const Tensor<T>& a, std::vector<std::size_t> axes) {
  std::vector<bool> reduced(a.rank(), false);
  for (auto ax : axes) {
    if (ax >= a.rank())
      throw ShapeError("axis " + std::to_string(ax) + " out of range for shape " +
                       shape_str(a.shape()));
    if (reduced[ax]) throw ShapeError("duplicate axis " + std::to_string(ax));
    reduced[ax] = true;
  }
  Shape out_shape;
  std::size_t count = 1;
  for (std::size_t d = 0; d < a.rank(); ++d) {
    if (reduced[d])
      count *= a.dim(d);
    else
      out_shape.push_back(a.dim(d));
  }
  if (out_shape.empty()) out_shape.push_back(1);

  std::vector<double> acc(shape_numel(out_shape), 0.0);
  std::vector<std::size_t> idx(a.rank(), 0);
  for (std::size_t flat = 0; flat < a.size(); ++flat) {
    std::size_t o = 0;
    for (std::size_t d = 0; d < a.rank(); ++d)
      if (!reduced[d]) o = o * a.dim(d) + idx[d];
    acc[o] += static_cast<double>(a[flat]);
    for (std::size_t d = a.rank(); d-- > 0;) {
      if (++idx[d] < a.dim(d)) break;
      idx[d] = 0;
    }
  }
  Tensor<T> out(out_shape);
  for (std::size_t i = 0; i < acc.size(); ++i) out[i] = static_cast<T>(acc[i] / count);
  return out;
}

/// Per-axis zero padding: `pads[a] = {before, after}`.
template <typename T>
Tensor<T> pad_zero(const Tensor<T>& a, const std::vector<std::pair<std::size_t, std::size_t>>& pads) {
  if (pads.size() != a.rank())
    throw ShapeError("pad spec rank " + std::to_string(pads.size()) + " for shape " +
                     shape_str(a.shape()));
  Shape out_shape(a.rank());
  for (std::size_t d = 0; d < a.rank(); ++d) out_shape[d] = a.dim(d) + pads[d].first + pads[d].second;
  Tensor<T> out(out_shape);
  std::vector<std::size_t> idx(a.rank(), 0);
  for (std::size_t flat = 0; flat < a.size(); ++flat) {
    std::size_t o = 0;
    for (std::size_t d = 0; d < a.rank(); ++d) o = o * out_shape[d] + idx[d] + pads[d].first;
    out[o] = a[flat];
    for (std::size_t d = a.rank(); d-- > 0;) {
      if (++idx[d] < a.dim(d)) break;
      idx[d] = 0;
    }
  }
  return out;
}

/// Extracts the window starting at `origin` with the given extents.
template <typename T>
Tensor<T> crop(const Tensor<T>& a, const std::vector<std::size_t>& origin, const Shape& extents) {
  if (origin.size() != a.rank() || extents.size() != a.rank())
    throw ShapeError("crop rank mismatch for shape " + shape_str(a.shape()));
  for (std::size_t d = 0; d < a.rank(); ++d)
    if (origin[d] + extents[d] > a.dim(d))
      throw ShapeError("crop window exceeds shape " + shape_str(a.shape()));
  Tensor<T> out(extents);
  std::vector<std::size_t> idx(a.rank(), 0);
  for (std::size_t flat = 0; flat < out.size(); ++flat) {
    std::size_t s = 0;
    for (std::size_t d = 0; d < a.rank(); ++d) s = s * a.dim(d) + idx[d] + origin[d];
    out[flat] = a[s];
    for (std::size_t d = a.rank(); d-- > 0;) {
      if (++idx[d] < extents[d]) break;
      idx[d] = 0;
    }
  }
  return out;
}

namespace detail {

struct LerpTap {
  std::size_t lo, hi;
  double w;  // weight of `hi`
};

// Corner-aligned sample positions: i * (S-1)/(T-1); a single target sample
// sits at the source centre.
inline std::vector<LerpTap> lerp_taps(std::size_t src, std::size_t dst) {
  std::vector<LerpTap> taps(dst);
  for (std::size_t i = 0; i < dst; ++i) {
    double pos = dst == 1 ? (static_cast<double>(src) - 1.0) / 2.0
                          : static_cast<double>(i) * static_cast<double>(src - 1) /
                                static_cast<double>(dst - 1);
    auto lo = static_cast<std::size_t>(std::floor(pos));
    if (lo >= src - 1) lo = src - 1;
    double w = pos - static_cast<double>(lo);
    std::size_t hi = std::min(lo + 1, src - 1);
    if (hi == lo) w = 0.0;
    taps[i] = {lo, hi, w};
  }
  return taps;
}

// Linear resampling of one axis of a [outer, n, inner] block.
template <typename T>
std::vector<T> resample_axis(const std::vector<T>& in, std::size_t outer, std::size_t n,
                             std::size_t inner, std::size_t m) {
  std::vector<T> out(outer * m * inner);
  const auto taps = lerp_taps(n, m);
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t i = 0; i < m; ++i) {
      const auto& t = taps[i];
      const T* lo = in.data() + (o * n + t.lo) * inner;
      const T* hi = in.data() + (o * n + t.hi) * inner;
      T* dst = out.data() + (o * m + i) * inner;
      if (t.w == 0.0) {
        std::copy(lo, lo + inner, dst);
      } else {
        const T w = static_cast<T>(t.w);
        for (std::size_t k = 0; k < inner; ++k) {
          const T v = lo[k] + w * (hi[k] - lo[k]);
          // rounding must not leave the [lo, hi] hull
          dst[k] = std::clamp(v, std::min(lo[k], hi[k]), std::max(lo[k], hi[k]));
        }
      }
    }
  }
  return out;
}

}  // namespace detail

/// Trilinear resampling of a [D,H,W] volume with corner-aligned sample
/// coordinates. Implemented as three separable linear passes.
template <typename T>
Tensor<T> resample_trilinear(const Tensor<T>& a, const Shape& target) {
  if (a.rank() != 3) throw ShapeError("resample_trilinear needs a 3D tensor, got " + shape_str(a.shape()));
  if (target.size() != 3) throw ShapeError("resample target must be 3D, got " + shape_str(target));
  check_shape(target);
  if (a.shape() == target) return a;
  const std::size_t D = a.dim(0), H = a.dim(1), W = a.dim(2);
  std::vector<T> buf = a.storage();
  // Shrink the innermost axis first; it is the largest in OCT volumes.
  if (W != target[2]) buf = detail::resample_axis(buf, D * H, W, 1, target[2]);
  if (H != target[1]) buf = detail::resample_axis(buf, D, H, target[2], target[1]);
  if (D != target[0]) buf = detail::resample_axis(buf, 1, D, target[1] * target[2], target[0]);
  return Tensor<T>(target, std::move(buf));
}

}  // namespace oct3d

#endif  // OCT3D_TENSOR_HPP
