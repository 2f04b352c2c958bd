#ifndef OCT3D_NN_CONV3D_HPP
#define OCT3D_NN_CONV3D_HPP

#include <oct3d/error.hpp>
#include <oct3d/parallel.hpp>
#include <oct3d/tensor.hpp>

#include <Eigen/Core>

#include <algorithm>
#include <array>
#include <cstring>
#include <string>
#include <vector>

namespace oct3d::nn {

/// Output extent of a 'same'-padded convolution: ceil(in / stride).
constexpr std::size_t same_extent(std::size_t in, std::size_t stride) { return (in + stride - 1) / stride; }

/// Leading zero padding of a 'same' convolution; the odd voxel of an uneven
/// total goes to the trailing side.
constexpr std::size_t same_pad_before(std::size_t in, std::size_t kernel, std::size_t stride) {
  const std::size_t out = same_extent(in, stride);
  const std::size_t need = (out - 1) * stride + kernel;
  return need > in ? (need - in) / 2 : 0;
}

struct ConvGeometry {
  std::size_t channels = 0, filters = 0, kernel = 0, stride = 1;
  std::array<std::size_t, 3> in{}, out{}, pad{};

  std::size_t in_volume() const { return in[0] * in[1] * in[2]; }
  std::size_t out_volume() const { return out[0] * out[1] * out[2]; }
  std::size_t patch() const { return channels * kernel * kernel * kernel; }
};

template <typename T>
struct Conv3dTrace {
  Tensor<T> input;
  std::size_t stride = 1;
};

template <typename T>
struct ConvGrads {
  Tensor<T> grad_x, grad_w, grad_b;
};

namespace detail {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using StridedMap = Eigen::Map<RowMat<T>, 0, Eigen::OuterStride<>>;
template <typename T>
using ConstStridedMap = Eigen::Map<const RowMat<T>, 0, Eigen::OuterStride<>>;

inline ConvGeometry make_geometry(const Shape& x, const Shape& w, std::size_t stride) {
  if (x.size() != 5) throw ShapeError("conv3d input must be [N,C,D,H,W], got " + shape_str(x));
  if (w.size() != 5 || w[2] != w[3] || w[2] != w[4])
    throw ShapeError("conv3d weights must be [F,C,k,k,k], got " + shape_str(w));
  if (w[2] % 2 == 0) throw ShapeError("conv3d kernel size must be odd, got " + std::to_string(w[2]));
  if (stride == 0) throw ValueError("conv3d stride must be >= 1");
  if (x[1] != w[1])
    throw ShapeError("conv3d channel mismatch: input " + shape_str(x) + " vs weights " + shape_str(w));
  ConvGeometry g;
  g.channels = w[1];
  g.filters = w[0];
  g.kernel = w[2];
  g.stride = stride;
  for (int a = 0; a < 3; ++a) {
    g.in[a] = x[2 + a];
    g.out[a] = same_extent(g.in[a], stride);
    g.pad[a] = same_pad_before(g.in[a], g.kernel, stride);
  }
  return g;
}

inline long floor_div(long a, long b) { return a >= 0 ? a / b : -((-a + b - 1) / b); }

// Number of output (d,h) rows per GEMM chunk; keeps the patch matrix near L2 size.
inline std::size_t rows_per_chunk(const ConvGeometry& g) {
  constexpr std::size_t target_positions = 256;
  return std::clamp<std::size_t>(target_positions / g.out[2], 1, g.out[0] * g.out[1]);
}

// Patch matrix for output rows [row0, row0 + nrows) of one sample:
// col[r][q] with r = ((c*k + kd)*k + kh)*k + kw and q the chunk position.
template <typename T>
void im2col(const T* x, const ConvGeometry& g, std::size_t row0, std::size_t nrows, T* col) {
  const long k = static_cast<long>(g.kernel), s = static_cast<long>(g.stride);
  const long D = static_cast<long>(g.in[0]), H = static_cast<long>(g.in[1]), W = static_cast<long>(g.in[2]);
  const long Ho = static_cast<long>(g.out[1]), Wo = static_cast<long>(g.out[2]);
  const long pd = static_cast<long>(g.pad[0]), ph = static_cast<long>(g.pad[1]), pw = static_cast<long>(g.pad[2]);
  const std::size_t nq = nrows * g.out[2];
  std::size_t r = 0;
  for (long c = 0; c < static_cast<long>(g.channels); ++c)
    for (long kd = 0; kd < k; ++kd)
      for (long kh = 0; kh < k; ++kh)
        for (long kw = 0; kw < k; ++kw, ++r) {
          T* dst = col + r * nq;
          // valid ow range: 0 <= ow*s - pw + kw < W
          const long ow_lo = std::max(0L, -floor_div(kw - pw, s));
          const long ow_hi = std::min(Wo, floor_div(W - 1 + pw - kw, s) + 1);
          for (std::size_t row = row0; row < row0 + nrows; ++row, dst += Wo) {
            const long od = static_cast<long>(row) / Ho, oh = static_cast<long>(row) % Ho;
            const long id = od * s - pd + kd, ih = oh * s - ph + kh;
            if (id < 0 || id >= D || ih < 0 || ih >= H || ow_lo >= ow_hi) {
              std::fill(dst, dst + Wo, T{0});
              continue;
            }
            const T* src = x + ((c * D + id) * H + ih) * W;
            std::fill(dst, dst + ow_lo, T{0});
            if (s == 1) {
              std::memcpy(dst + ow_lo, src + ow_lo - pw + kw, sizeof(T) * static_cast<std::size_t>(ow_hi - ow_lo));
            } else {
              for (long ow = ow_lo; ow < ow_hi; ++ow) dst[ow] = src[ow * s - pw + kw];
            }
            std::fill(dst + ow_hi, dst + Wo, T{0});
          }
        }
}

// Adjoint of im2col: scatters-adds col back into x.
template <typename T>
void col2im_add(const T* col, const ConvGeometry& g, std::size_t row0, std::size_t nrows, T* x) {
  const long k = static_cast<long>(g.kernel), s = static_cast<long>(g.stride);
  const long D = static_cast<long>(g.in[0]), H = static_cast<long>(g.in[1]), W = static_cast<long>(g.in[2]);
  const long Ho = static_cast<long>(g.out[1]), Wo = static_cast<long>(g.out[2]);
  const long pd = static_cast<long>(g.pad[0]), ph = static_cast<long>(g.pad[1]), pw = static_cast<long>(g.pad[2]);
  const std::size_t nq = nrows * g.out[2];
  std::size_t r = 0;
  for (long c = 0; c < static_cast<long>(g.channels); ++c)
    for (long kd = 0; kd < k; ++kd)
      for (long kh = 0; kh < k; ++kh)
        for (long kw = 0; kw < k; ++kw, ++r) {
          const T* src = col + r * nq;
          const long ow_lo = std::max(0L, -floor_div(kw - pw, s));
          const long ow_hi = std::min(Wo, floor_div(W - 1 + pw - kw, s) + 1);
          for (std::size_t row = row0; row < row0 + nrows; ++row, src += Wo) {
            const long od = static_cast<long>(row) / Ho, oh = static_cast<long>(row) % Ho;
            const long id = od * s - pd + kd, ih = oh * s - ph + kh;
            if (id < 0 || id >= D || ih < 0 || ih >= H) continue;
            T* dst = x + ((c * D + id) * H + ih) * W;
            for (long ow = ow_lo; ow < ow_hi; ++ow) dst[ow * s - pw + kw] += src[ow];
          }
        }
}

// Swaps filter/channel axes and reverses the spatial taps.
template <typename T>
Tensor<T> flip_transpose(const Tensor<T>& w) {
  const std::size_t F = w.dim(0), C = w.dim(1), k = w.dim(2), k3 = k * k * k;
  Tensor<T> out({C, F, k, k, k});
  for (std::size_t f = 0; f < F; ++f)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t t = 0; t < k3; ++t) out[(c * F + f) * k3 + (k3 - 1 - t)] = w[(f * C + c) * k3 + t];
  return out;
}

}  // namespace detail

/// 3D cross-correlation with zero 'same' padding.
/// x: [N,C,D,H,W], w: [F,C,k,k,k] (k odd), b: [F]. Output [N,F,D',H',W'] with
/// each extent ceil(extent / stride). When `trace` is given the input is
/// retained for conv3d_backward.
template <typename T>
Tensor<T> conv3d_forward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b, std::size_t stride,
                         Conv3dTrace<T>* trace = nullptr) {
  const ConvGeometry g = detail::make_geometry(x.shape(), w.shape(), stride);
  if (b.rank() != 1 || b.dim(0) != g.filters)
    throw ShapeError("conv3d bias must be [" + std::to_string(g.filters) + "], got " + shape_str(b.shape()));
  const std::size_t N = x.dim(0), P = g.out_volume(), CK = g.patch();
  Tensor<T> y({N, g.filters, g.out[0], g.out[1], g.out[2]});

  const std::size_t workers = std::min(worker_count(), N);
  if (trace) {
    trace->input = x;
    trace->stride = stride;
  }
  const std::size_t rows = detail::rows_per_chunk(g), total_rows = g.out[0] * g.out[1];
  std::vector<std::vector<T>> cols(workers, std::vector<T>(CK * rows * g.out[2]));
  Eigen::Map<const detail::RowMat<T>> wm(w.data(), static_cast<Eigen::Index>(g.filters), static_cast<Eigen::Index>(CK));
  Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>> bv(b.data(), static_cast<Eigen::Index>(g.filters));

  parallel_for(N, workers, [&](std::size_t worker, std::size_t n) {
    const T* xs = x.data() + n * g.channels * g.in_volume();
    T* ys = y.data() + n * g.filters * P;
    T* col = cols[worker].data();
    for (std::size_t row0 = 0; row0 < total_rows; row0 += rows) {
      const std::size_t nr = std::min(rows, total_rows - row0), nq = nr * g.out[2];
      detail::im2col(xs, g, row0, nr, col);
      Eigen::Map<const detail::RowMat<T>> cm(col, static_cast<Eigen::Index>(CK), static_cast<Eigen::Index>(nq));
      detail::StridedMap<T> yc(ys + row0 * g.out[2], static_cast<Eigen::Index>(g.filters),
                               static_cast<Eigen::Index>(nq), Eigen::OuterStride<>(static_cast<Eigen::Index>(P)));
      yc.noalias() = wm * cm;
      yc.colwise() += bv;
    }
  });
  return y;
}

/// Gradients of a scalar loss through conv3d_forward. `want_grad_x = false`
/// skips the input gradient (first layer).
template <typename T>
ConvGrads<T> conv3d_backward(const Conv3dTrace<T>& trace, const Tensor<T>& w, const Tensor<T>& grad_out,
                             bool want_grad_x = true) {
  if (trace.input.empty()) throw Error("conv3d_backward called without a forward trace");
  const Tensor<T>& x = trace.input;
  const ConvGeometry g = detail::make_geometry(x.shape(), w.shape(), trace.stride);
  const std::size_t N = x.dim(0), P = g.out_volume(), CK = g.patch();
  const Shape expect{N, g.filters, g.out[0], g.out[1], g.out[2]};
  if (grad_out.shape() != expect)
    throw ShapeError("conv3d grad_out shape " + shape_str(grad_out.shape()) + ", expected " + shape_str(expect));

  ConvGrads<T> out;
  out.grad_w = Tensor<T>::zeros(w.shape());
  out.grad_b = Tensor<T>::zeros({g.filters});

  const std::size_t rows = detail::rows_per_chunk(g), total_rows = g.out[0] * g.out[1];
  const std::size_t workers = std::min(worker_count(), N);
  const bool general_grad_x = want_grad_x && g.stride != 1;
  // per-sample partial sums, reduced in sample order so results do not depend on the worker count
  std::vector<std::vector<T>> dw(N, std::vector<T>(g.filters * CK, T{0}));
  std::vector<std::vector<double>> db(N, std::vector<double>(g.filters, 0.0));
  if (general_grad_x) out.grad_x = Tensor<T>::zeros(x.shape());
  for (std::size_t n = 0; n < N; ++n) {
    const T* gs = grad_out.data() + n * g.filters * P;
    for (std::size_t f = 0; f < g.filters; ++f) {
      double acc = 0;
      for (std::size_t p = 0; p < P; ++p) acc += gs[f * P + p];
      db[n][f] = acc;
    }
  }

  {
    std::vector<std::vector<T>> cols(workers, std::vector<T>(CK * rows * g.out[2]));
    std::vector<std::vector<T>> dcols(general_grad_x ? workers : 0, std::vector<T>(CK * rows * g.out[2]));
    Eigen::Map<const detail::RowMat<T>> wm(w.data(), static_cast<Eigen::Index>(g.filters),
                                           static_cast<Eigen::Index>(CK));
    parallel_for(N, workers, [&](std::size_t worker, std::size_t n) {
      const T* xs = x.data() + n * g.channels * g.in_volume();
      const T* gs = grad_out.data() + n * g.filters * P;
      T* col = cols[worker].data();
      Eigen::Map<detail::RowMat<T>> dwn(dw[n].data(), static_cast<Eigen::Index>(g.filters),
                                        static_cast<Eigen::Index>(CK));
      for (std::size_t row0 = 0; row0 < total_rows; row0 += rows) {
        const std::size_t nr = std::min(rows, total_rows - row0), nq = nr * g.out[2];
        detail::im2col(xs, g, row0, nr, col);
        Eigen::Map<const detail::RowMat<T>> cm(col, static_cast<Eigen::Index>(CK), static_cast<Eigen::Index>(nq));
        detail::ConstStridedMap<T> gc(gs + row0 * g.out[2], static_cast<Eigen::Index>(g.filters),
                                      static_cast<Eigen::Index>(nq), Eigen::OuterStride<>(static_cast<Eigen::Index>(P)));
        dwn.noalias() += gc * cm.transpose();
        if (general_grad_x) {
          T* dcol = dcols[worker].data();
          Eigen::Map<detail::RowMat<T>> dm(dcol, static_cast<Eigen::Index>(CK), static_cast<Eigen::Index>(nq));
          dm.noalias() = wm.transpose() * gc;
          detail::col2im_add(dcol, g, row0, nr, out.grad_x.data() + n * g.channels * g.in_volume());
        }
      }
    });
  }

  for (std::size_t n = 0; n < N; ++n) {
    for (std::size_t i = 0; i < dw[n].size(); ++i) out.grad_w[i] += dw[n][i];
    for (std::size_t f = 0; f < g.filters; ++f) out.grad_b[f] += static_cast<T>(db[n][f]);
  }

  if (want_grad_x && g.stride == 1) {
    // stride 1 with symmetric padding: the input gradient is a 'same'
    // correlation of grad_out with the flipped, transposed kernel
    const Tensor<T> wf = detail::flip_transpose(w);
    out.grad_x = conv3d_forward(grad_out, wf, Tensor<T>::zeros({g.channels}), 1);
  }
  return out;
}

}  // namespace oct3d::nn

#endif  // OCT3D_NN_CONV3D_HPP
