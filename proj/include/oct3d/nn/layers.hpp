#ifndef OCT3D_NN_LAYERS_HPP
#define OCT3D_NN_LAYERS_HPP

#include <oct3d/error.hpp>
#include <oct3d/tensor.hpp>

#include <cmath>
#include <string>
#include <vector>

namespace oct3d::nn {

enum class Mode { train, eval };

// ---------------------------------------------------------------- batchnorm

template <typename T>
struct BatchNormParams {
  Tensor<T> gamma, beta, running_mean, running_var;

  static BatchNormParams init(std::size_t channels) {
    return {Tensor<T>::ones({channels}), Tensor<T>::zeros({channels}), Tensor<T>::zeros({channels}),
            Tensor<T>::ones({channels})};
  }
};

struct BatchNormOptions {
  double momentum = 0.9;  // running = momentum * running + (1 - momentum) * batch
  double eps = 1e-5;
};

template <typename T>
struct BatchNormTrace {
  Tensor<T> xhat;                // normalized input
  std::vector<double> inv_std;   // per channel
  bool valid = false;
};

namespace detail {
inline void check_bn(const Shape& x, std::size_t channels) {
  if (x.size() < 2) throw ShapeError("batchnorm input must be [N,C,...], got " + shape_str(x));
  if (x[1] != channels)
    throw ShapeError("batchnorm expects " + std::to_string(channels) + " channels, got " + shape_str(x));
}
}  // namespace detail

/// Eval-mode batchnorm: normalizes with the running statistics.
template <typename T>
Tensor<T> batchnorm_eval(const Tensor<T>& x, const BatchNormParams<T>& p, const BatchNormOptions& opt = {}) {
  const std::size_t C = p.gamma.size();
  detail::check_bn(x.shape(), C);
  const std::size_t N = x.dim(0), S = x.size() / (N * C);
  Tensor<T> y(x.shape());
  for (std::size_t c = 0; c < C; ++c) {
    const double inv = 1.0 / std::sqrt(static_cast<double>(p.running_var[c]) + opt.eps);
    const T scale = static_cast<T>(p.gamma[c] * inv);
    const T shift = static_cast<T>(p.beta[c] - p.running_mean[c] * p.gamma[c] * inv);
    for (std::size_t n = 0; n < N; ++n) {
      const T* src = x.data() + (n * C + c) * S;
      T* dst = y.data() + (n * C + c) * S;
      for (std::size_t i = 0; i < S; ++i) dst[i] = src[i] * scale + shift;
    }
  }
  return y;
}

/// Per-channel normalization over (N, spatial). Train mode uses batch
/// statistics and updates the running estimates in `p`; eval mode uses the
/// running estimates.
template <typename T>
Tensor<T> batchnorm_forward(const Tensor<T>& x, BatchNormParams<T>& p, Mode mode, const BatchNormOptions& opt = {},
                            BatchNormTrace<T>* trace = nullptr) {
  if (mode == Mode::eval) return batchnorm_eval(x, p, opt);
  const std::size_t C = p.gamma.size();
  detail::check_bn(x.shape(), C);
  const std::size_t N = x.dim(0), S = x.size() / (N * C);
  Tensor<T> y(x.shape());

  if (N < 2) throw ValueError("batchnorm in train mode needs a batch of at least 2 samples");
  const double M = static_cast<double>(N * S);
  if (trace) {
    trace->xhat = Tensor<T>(x.shape());
    trace->inv_std.assign(C, 0.0);
    trace->valid = true;
  }
  for (std::size_t c = 0; c < C; ++c) {
    double s = 0;
    for (std::size_t n = 0; n < N; ++n) {
      const T* src = x.data() + (n * C + c) * S;
      for (std::size_t i = 0; i < S; ++i) s += src[i];
    }
    const double mu = s / M;
    double ss = 0;
    for (std::size_t n = 0; n < N; ++n) {
      const T* src = x.data() + (n * C + c) * S;
      for (std::size_t i = 0; i < S; ++i) {
        const double d = src[i] - mu;
        ss += d * d;
      }
    }
    const double var = ss / M;
    const double inv = 1.0 / std::sqrt(var + opt.eps);
    for (std::size_t n = 0; n < N; ++n) {
      const T* src = x.data() + (n * C + c) * S;
      T* dst = y.data() + (n * C + c) * S;
      T* xh = trace ? trace->xhat.data() + (n * C + c) * S : nullptr;
      for (std::size_t i = 0; i < S; ++i) {
        const T h = static_cast<T>((src[i] - mu) * inv);
        if (xh) xh[i] = h;
        dst[i] = h * p.gamma[c] + p.beta[c];
      }
    }
    if (trace) trace->inv_std[c] = inv;
    p.running_mean[c] = static_cast<T>(opt.momentum * p.running_mean[c] + (1 - opt.momentum) * mu);
    p.running_var[c] = static_cast<T>(opt.momentum * p.running_var[c] + (1 - opt.momentum) * var);
  }
  return y;
}

template <typename T>
struct BatchNormGrads {
  Tensor<T> grad_x, grad_gamma, grad_beta;
};

template <typename T>
BatchNormGrads<T> batchnorm_backward(const BatchNormTrace<T>& tr, const BatchNormParams<T>& p, const Tensor<T>& grad_out) {
  if (!tr.valid) throw Error("batchnorm_backward called without a train-mode forward trace");
  if (grad_out.shape() != tr.xhat.shape())
    throw ShapeError("batchnorm grad_out shape " + shape_str(grad_out.shape()) + " vs " + shape_str(tr.xhat.shape()));
  const std::size_t C = p.gamma.size(), N = grad_out.dim(0), S = grad_out.size() / (N * C);
  const double M = static_cast<double>(N * S);
  BatchNormGrads<T> g{Tensor<T>(grad_out.shape()), Tensor<T>::zeros({C}), Tensor<T>::zeros({C})};
  for (std::size_t c = 0; c < C; ++c) {
    double sdy = 0, sdyx = 0;
    for (std::size_t n = 0; n < N; ++n) {
      const T* dy = grad_out.data() + (n * C + c) * S;
      const T* xh = tr.xhat.data() + (n * C + c) * S;
      for (std::size_t i = 0; i < S; ++i) {
        sdy += dy[i];
        sdyx += static_cast<double>(dy[i]) * xh[i];
      }
    }
    g.grad_beta[c] = static_cast<T>(sdy);
    g.grad_gamma[c] = static_cast<T>(sdyx);
    const double k = p.gamma[c] * tr.inv_std[c] / M;
    const double mdy = sdy, mdyx = sdyx;
    for (std::size_t n = 0; n < N; ++n) {
      const T* dy = grad_out.data() + (n * C + c) * S;
      const T* xh = tr.xhat.data() + (n * C + c) * S;
      T* dx = g.grad_x.data() + (n * C + c) * S;
      for (std::size_t i = 0; i < S; ++i) dx[i] = static_cast<T>(k * (M * dy[i] - mdy - xh[i] * mdyx));
    }
  }
  return g;
}

// --------------------------------------------------------------------- relu

template <typename T>
Tensor<T> relu_forward(const Tensor<T>& x) {
  return map(x, relu_scalar<T>);
}

/// `y` is the relu output; the gradient passes where y > 0.
template <typename T>
Tensor<T> relu_backward(const Tensor<T>& y, const Tensor<T>& grad_out) {
  return zip(y, grad_out, [](T v, T g) { return v > T{0} ? g : T{0}; });
}

// ---------------------------------------------------------------------- gap

/// Global average pooling [N,C,...] -> [N,C].
template <typename T>
Tensor<T> gap_forward(const Tensor<T>& x) {
  if (x.rank() < 3) throw ShapeError("gap input must be [N,C,spatial...], got " + shape_str(x.shape()));
  const std::size_t N = x.dim(0), C = x.dim(1), S = x.size() / (N * C);
  Tensor<T> y({N, C});
  for (std::size_t i = 0; i < N * C; ++i) {
    double s = 0;
    const T* src = x.data() + i * S;
    for (std::size_t k = 0; k < S; ++k) s += src[k];
    y[i] = static_cast<T>(s / static_cast<double>(S));
  }
  return y;
}

template <typename T>
Tensor<T> gap_backward(const Shape& input_shape, const Tensor<T>& grad_out) {
  const std::size_t N = input_shape[0], C = input_shape[1], S = shape_numel(input_shape) / (N * C);
  if (grad_out.shape() != Shape{N, C}) throw ShapeError("gap grad_out must be [N,C], got " + shape_str(grad_out.shape()));
  Tensor<T> g(input_shape);
  for (std::size_t i = 0; i < N * C; ++i) {
    const T v = static_cast<T>(grad_out[i] / static_cast<double>(S));
    std::fill(g.data() + i * S, g.data() + (i + 1) * S, v);
  }
  return g;
}

// -------------------------------------------------------------------- dense

template <typename T>
struct DenseParams {
  Tensor<T> weight;  // [classes, features]; row c holds the CAM weights of class c
  Tensor<T> bias;    // [classes]
};

template <typename T>
Tensor<T> dense_forward(const Tensor<T>& x, const DenseParams<T>& p) {
  const std::size_t K = p.weight.dim(0), F = p.weight.dim(1);
  if (x.rank() != 2 || x.dim(1) != F)
    throw ShapeError("dense input must be [N," + std::to_string(F) + "], got " + shape_str(x.shape()));
  const std::size_t N = x.dim(0);
  Tensor<T> y({N, K});
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t k = 0; k < K; ++k) {
      double s = p.bias[k];
      for (std::size_t f = 0; f < F; ++f) s += static_cast<double>(p.weight[k * F + f]) * x[n * F + f];
      y[n * K + k] = static_cast<T>(s);
    }
  return y;
}

template <typename T>
struct DenseGrads {
  Tensor<T> grad_x, grad_w, grad_b;
};

template <typename T>
DenseGrads<T> dense_backward(const Tensor<T>& x, const DenseParams<T>& p, const Tensor<T>& grad_out) {
  const std::size_t K = p.weight.dim(0), F = p.weight.dim(1), N = x.dim(0);
  if (grad_out.shape() != Shape{N, K}) throw ShapeError("dense grad_out shape " + shape_str(grad_out.shape()));
  DenseGrads<T> g{Tensor<T>::zeros({N, F}), Tensor<T>::zeros({K, F}), Tensor<T>::zeros({K})};
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t k = 0; k < K; ++k) {
      const T go = grad_out[n * K + k];
      g.grad_b[k] += go;
      for (std::size_t f = 0; f < F; ++f) {
        g.grad_w[k * F + f] += go * x[n * F + f];
        g.grad_x[n * F + f] += go * p.weight[k * F + f];
      }
    }
  return g;
}

// ----------------------------------------------------------- softmax / loss

template <typename T>
Tensor<T> softmax(const Tensor<T>& logits) {
  if (logits.rank() != 2) throw ShapeError("softmax expects [N,K], got " + shape_str(logits.shape()));
  const std::size_t N = logits.dim(0), K = logits.dim(1);
  Tensor<T> p(logits.shape());
  for (std::size_t n = 0; n < N; ++n) {
    double mx = logits[n * K];
    for (std::size_t k = 1; k < K; ++k) mx = std::max<double>(mx, logits[n * K + k]);
    double z = 0;
    for (std::size_t k = 0; k < K; ++k) z += std::exp(logits[n * K + k] - mx);
    for (std::size_t k = 0; k < K; ++k) p[n * K + k] = static_cast<T>(std::exp(logits[n * K + k] - mx) / z);
  }
  return p;
}

template <typename T>
struct LossResult {
  double loss = 0;
  Tensor<T> grad_logits;
};

/// Mean over the batch of -sum_c t_c log softmax(z)_c. Targets may be soft
/// (mixup) but every row must be a probability vector.
template <typename T>
LossResult<T> softmax_xent(const Tensor<T>& logits, const Tensor<T>& targets) {
  if (logits.shape() != targets.shape())
    throw ShapeError("targets " + shape_str(targets.shape()) + " do not match logits " + shape_str(logits.shape()));
  const std::size_t N = logits.dim(0), K = logits.dim(1);
  for (std::size_t n = 0; n < N; ++n) {
    double s = 0;
    for (std::size_t k = 0; k < K; ++k) {
      if (targets[n * K + k] < 0) throw ValueError("target row " + std::to_string(n) + " has a negative entry");
      s += targets[n * K + k];
    }
    if (std::abs(s - 1.0) > 1e-6) throw ValueError("target row " + std::to_string(n) + " does not sum to 1");
  }
  LossResult<T> r;
  r.grad_logits = Tensor<T>(logits.shape());
  double total = 0;
  for (std::size_t n = 0; n < N; ++n) {
    double mx = logits[n * K];
    for (std::size_t k = 1; k < K; ++k) mx = std::max<double>(mx, logits[n * K + k]);
    double z = 0;
    for (std::size_t k = 0; k < K; ++k) z += std::exp(logits[n * K + k] - mx);
    const double lse = mx + std::log(z);
    for (std::size_t k = 0; k < K; ++k) {
      const double t = targets[n * K + k];
      if (t > 0) total -= t * (logits[n * K + k] - lse);
      const double pk = std::exp(logits[n * K + k] - lse);
      r.grad_logits[n * K + k] = static_cast<T>((pk - t) / static_cast<double>(N));
    }
  }
  r.loss = total / static_cast<double>(N);
  return r;
}

}  // namespace oct3d::nn

#endif  // OCT3D_NN_LAYERS_HPP
