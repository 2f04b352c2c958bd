#ifndef OCT3D_NN_MODEL_HPP
#define OCT3D_NN_MODEL_HPP

#include <oct3d/error.hpp>
#include <oct3d/nn/conv3d.hpp>
#include <oct3d/nn/layers.hpp>
#include <oct3d/random.hpp>
#include <oct3d/tensor.hpp>

#include <array>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

namespace oct3d::nn {

struct ConvLayerSpec {
  std::size_t filters = 32;
  std::size_t kernel = 3;
  std::size_t stride = 1;

  friend bool operator==(const ConvLayerSpec&, const ConvLayerSpec&) = default;
};

/// Declarative architecture: conv -> batchnorm -> relu per layer, then global
/// average pooling, a dense layer and softmax.
struct ModelSpec {
  std::vector<ConvLayerSpec> conv_layers;
  bool use_batchnorm = true;
  std::size_t num_classes = 2;
  std::size_t in_channels = 1;

  /// Five layers, 32 filters each, kernels 7-5-3-3-3, strides 2-1-1-1-1.
  static ModelSpec standard() {
    return ModelSpec{{{32, 7, 2}, {32, 5, 1}, {32, 3, 1}, {32, 3, 1}, {32, 3, 1}}, true, 2, 1};
  }

  void validate() const {
    if (conv_layers.empty()) throw ValueError("model needs at least one conv layer");
    for (const auto& l : conv_layers) {
      if (l.filters == 0 || l.stride == 0) throw ValueError("conv layer filters and stride must be >= 1");
      if (l.kernel % 2 == 0) throw ValueError("conv kernel sizes must be odd");
    }
    if (num_classes < 2) throw ValueError("num_classes must be >= 2");
    if (in_channels == 0) throw ValueError("in_channels must be >= 1");
  }

  std::size_t feature_channels() const { return conv_layers.back().filters; }

  /// Spatial extents of the final feature maps for a given input volume.
  std::array<std::size_t, 3> feature_dims(std::array<std::size_t, 3> in) const {
    for (const auto& l : conv_layers)
      for (auto& e : in) e = same_extent(e, l.stride);
    return in;
  }

  friend bool operator==(const ModelSpec&, const ModelSpec&) = default;
};

template <typename T>
struct ConvParams {
  Tensor<T> weight;  // [F, C, k, k, k]
  Tensor<T> bias;    // [F]
};

/// Learnable parameters (and batchnorm running statistics) of a model.
template <typename T>
struct ModelParams {
  std::vector<ConvParams<T>> conv;
  std::vector<BatchNormParams<T>> bn;  // empty without batchnorm
  DenseParams<T> dense;

  template <typename U>
  ModelParams<U> cast() const {
    ModelParams<U> out;
    for (const auto& c : conv) out.conv.push_back({c.weight.template cast<U>(), c.bias.template cast<U>()});
    for (const auto& b : bn)
      out.bn.push_back({b.gamma.template cast<U>(), b.beta.template cast<U>(), b.running_mean.template cast<U>(),
                        b.running_var.template cast<U>()});
    out.dense = {dense.weight.template cast<U>(), dense.bias.template cast<U>()};
    return out;
  }
};

template <typename T>
struct NamedTensor {
  std::string name;
  Tensor<T>* tensor;
};

template <typename T>
struct ConstNamedTensor {
  std::string name;
  const Tensor<T>* tensor;
};

inline std::string conv_group(std::size_t i) { return "conv" + std::to_string(i); }
inline std::string bn_group(std::size_t i) { return "bn" + std::to_string(i); }

/// Parameters updated by the optimizer, in a fixed order.
template <typename T>
std::vector<NamedTensor<T>> trainable(ModelParams<T>& p) {
  std::vector<NamedTensor<T>> out;
  for (std::size_t i = 0; i < p.conv.size(); ++i) {
    out.push_back({conv_group(i) + "/weight", &p.conv[i].weight});
    out.push_back({conv_group(i) + "/bias", &p.conv[i].bias});
    if (i < p.bn.size()) {
      out.push_back({bn_group(i) + "/gamma", &p.bn[i].gamma});
      out.push_back({bn_group(i) + "/beta", &p.bn[i].beta});
    }
  }
  out.push_back({"dense/weight", &p.dense.weight});
  out.push_back({"dense/bias", &p.dense.bias});
  return out;
}

template <typename T>
std::vector<std::string> trainable_names(const ModelParams<T>& p) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < p.conv.size(); ++i) {
    out.push_back(conv_group(i) + "/weight");
    out.push_back(conv_group(i) + "/bias");
    if (i < p.bn.size()) {
      out.push_back(bn_group(i) + "/gamma");
      out.push_back(bn_group(i) + "/beta");
    }
  }
  out.push_back("dense/weight");
  out.push_back("dense/bias");
  return out;
}

/// Every persisted tensor: trainable parameters plus running statistics.
template <typename T>
std::vector<ConstNamedTensor<T>> all_tensors(const ModelParams<T>& p) {
  std::vector<ConstNamedTensor<T>> out;
  for (std::size_t i = 0; i < p.conv.size(); ++i) {
    out.push_back({conv_group(i) + "/weight", &p.conv[i].weight});
    out.push_back({conv_group(i) + "/bias", &p.conv[i].bias});
  }
  for (std::size_t i = 0; i < p.bn.size(); ++i) {
    out.push_back({bn_group(i) + "/gamma", &p.bn[i].gamma});
    out.push_back({bn_group(i) + "/beta", &p.bn[i].beta});
    out.push_back({bn_group(i) + "/running_mean", &p.bn[i].running_mean});
    out.push_back({bn_group(i) + "/running_var", &p.bn[i].running_var});
  }
  out.push_back({"dense/weight", &p.dense.weight});
  out.push_back({"dense/bias", &p.dense.bias});
  return out;
}

/// Glorot-uniform weights in +-sqrt(6 / (fan_in + fan_out)), zero biases,
/// unit gamma, zero beta.
template <typename T>
ModelParams<T> init_params(const ModelSpec& spec, Rng& rng) {
  spec.validate();
  ModelParams<T> p;
  std::size_t in = spec.in_channels;
  for (const auto& l : spec.conv_layers) {
    const std::size_t k3 = l.kernel * l.kernel * l.kernel;
    const double limit = std::sqrt(6.0 / static_cast<double>(in * k3 + l.filters * k3));
    Tensor<T> w({l.filters, in, l.kernel, l.kernel, l.kernel});
    for (auto& v : w.values()) v = static_cast<T>(uniform(rng, -limit, limit));
    p.conv.push_back({std::move(w), Tensor<T>::zeros({l.filters})});
    if (spec.use_batchnorm) p.bn.push_back(BatchNormParams<T>::init(l.filters));
    in = l.filters;
  }
  const double limit = std::sqrt(6.0 / static_cast<double>(in + spec.num_classes));
  Tensor<T> w({spec.num_classes, in});
  for (auto& v : w.values()) v = static_cast<T>(uniform(rng, -limit, limit));
  p.dense = {std::move(w), Tensor<T>::zeros({spec.num_classes})};
  return p;
}

/// Checks parameter shapes against a spec.
template <typename T>
void check_params(const ModelSpec& spec, const ModelParams<T>& p) {
  spec.validate();
  if (p.conv.size() != spec.conv_layers.size())
    throw ShapeError("parameter set has " + std::to_string(p.conv.size()) + " conv layers, spec has " +
                     std::to_string(spec.conv_layers.size()));
  if (p.bn.size() != (spec.use_batchnorm ? spec.conv_layers.size() : 0))
    throw ShapeError("batchnorm parameter count does not match spec");
  std::size_t in = spec.in_channels;
  for (std::size_t i = 0; i < p.conv.size(); ++i) {
    const auto& l = spec.conv_layers[i];
    const Shape ws{l.filters, in, l.kernel, l.kernel, l.kernel};
    if (p.conv[i].weight.shape() != ws || p.conv[i].bias.shape() != Shape{l.filters})
      throw ShapeError(conv_group(i) + " shape " + shape_str(p.conv[i].weight.shape()) + ", spec wants " + shape_str(ws));
    if (spec.use_batchnorm) {
      const auto& b = p.bn[i];
      for (const auto* t : {&b.gamma, &b.beta, &b.running_mean, &b.running_var})
        if (t->shape() != Shape{l.filters}) throw ShapeError(bn_group(i) + " shape mismatch");
    }
    in = l.filters;
  }
  if (p.dense.weight.shape() != Shape{spec.num_classes, in} || p.dense.bias.shape() != Shape{spec.num_classes})
    throw ShapeError("dense shape " + shape_str(p.dense.weight.shape()) + " does not match spec");
}

/// Intermediates retained by a forward pass for backward and CAM.
template <typename T>
struct ForwardTrace {
  struct Layer {
    Conv3dTrace<T> conv;
    BatchNormTrace<T> bn;
    Tensor<T> activation;  // relu output
  };
  std::vector<Layer> layers;
  Tensor<T> pooled;  // GAP output [N, C]
  Tensor<T> logits;
  Mode mode = Mode::eval;

  /// Final conv feature maps f_k, [N, C, D', H', W'].
  const Tensor<T>& feature_maps() const {
    if (layers.empty()) throw Error("forward trace is empty");
    return layers.back().activation;
  }
};

template <typename T>
struct ModelOutput {
  Tensor<T> logits;         // [N, classes]
  Tensor<T> probabilities;  // softmax(logits)
};

namespace detail {

template <typename T, typename BatchNormFn>
ModelOutput<T> forward_impl(const ModelSpec& spec, const ModelParams<T>& params, const Tensor<T>& x, Mode mode,
                            ForwardTrace<T>* trace, BatchNormFn&& bn) {
  if (x.rank() != 5 || x.dim(1) != spec.in_channels)
    throw ShapeError("model input must be [N," + std::to_string(spec.in_channels) + ",D,H,W], got " +
                     shape_str(x.shape()));
  if (params.conv.size() != spec.conv_layers.size()) throw ShapeError("parameters do not match model spec");
  if (trace) {
    trace->layers.assign(spec.conv_layers.size(), {});
    trace->mode = mode;
  }
  Tensor<T> h = x;
  for (std::size_t i = 0; i < spec.conv_layers.size(); ++i) {
    auto* lt = trace ? &trace->layers[i] : nullptr;
    h = conv3d_forward(h, params.conv[i].weight, params.conv[i].bias, spec.conv_layers[i].stride,
                       lt ? &lt->conv : nullptr);
    if (spec.use_batchnorm) h = bn(i, h, lt ? &lt->bn : nullptr);
    h = relu_forward(h);
    if (lt) lt->activation = h;
  }
  Tensor<T> pooled = gap_forward(h);
  ModelOutput<T> out;
  out.logits = dense_forward(pooled, params.dense);
  out.probabilities = softmax(out.logits);
  if (trace) {
    trace->pooled = std::move(pooled);
    trace->logits = out.logits;
  }
  return out;
}

}  // namespace detail

/// Full forward pass. Train mode uses batch statistics and updates the
/// running statistics held in `params`.
template <typename T>
ModelOutput<T> model_forward(const ModelSpec& spec, ModelParams<T>& params, const Tensor<T>& x, Mode mode,
                             ForwardTrace<T>* trace = nullptr, const BatchNormOptions& bn_opt = {}) {
  return detail::forward_impl(spec, params, x, mode, trace,
                              [&](std::size_t i, const Tensor<T>& h, BatchNormTrace<T>* bt) {
                                return batchnorm_forward(h, params.bn[i], mode, bn_opt, bt);
                              });
}

/// Eval-mode forward on read-only parameters; safe for concurrent callers.
template <typename T>
ModelOutput<T> model_predict(const ModelSpec& spec, const ModelParams<T>& params, const Tensor<T>& x,
                             ForwardTrace<T>* trace = nullptr, const BatchNormOptions& bn_opt = {}) {
  return detail::forward_impl(spec, params, x, Mode::eval, trace,
                              [&](std::size_t i, const Tensor<T>& h, BatchNormTrace<T>*) {
                                return batchnorm_eval(h, params.bn[i], bn_opt);
                              });
}

/// Gradients with the same layout as ModelParams (running stats unused).
template <typename T>
struct ModelGrads {
  std::vector<ConvParams<T>> conv;
  std::vector<std::pair<Tensor<T>, Tensor<T>>> bn;  // (gamma, beta)
  DenseParams<T> dense;

  /// Same order as trainable().
  std::vector<const Tensor<T>*> list() const {
    std::vector<const Tensor<T>*> out;
    for (std::size_t i = 0; i < conv.size(); ++i) {
      out.push_back(&conv[i].weight);
      out.push_back(&conv[i].bias);
      if (i < bn.size()) {
        out.push_back(&bn[i].first);
        out.push_back(&bn[i].second);
      }
    }
    out.push_back(&dense.weight);
    out.push_back(&dense.bias);
    return out;
  }
};

template <typename T>
ModelGrads<T> model_backward(const ModelSpec& spec, const ModelParams<T>& params, const ForwardTrace<T>& trace,
                             const Tensor<T>& grad_logits) {
  if (trace.layers.size() != spec.conv_layers.size() || trace.pooled.empty())
    throw Error("model_backward needs a forward trace of the same model");
  if (trace.mode != Mode::train && spec.use_batchnorm)
    throw Error("model_backward needs a train-mode forward trace");
  ModelGrads<T> g;
  const std::size_t L = spec.conv_layers.size();
  g.conv.resize(L);
  if (spec.use_batchnorm) g.bn.resize(L);

  auto dg = dense_backward(trace.pooled, params.dense, grad_logits);
  g.dense = {std::move(dg.grad_w), std::move(dg.grad_b)};
  Tensor<T> grad = gap_backward(trace.layers.back().activation.shape(), dg.grad_x);
  for (std::size_t i = L; i-- > 0;) {
    const auto& lt = trace.layers[i];
    grad = relu_backward(lt.activation, grad);
    if (spec.use_batchnorm) {
      auto bg = batchnorm_backward(lt.bn, params.bn[i], grad);
      g.bn[i] = {std::move(bg.grad_gamma), std::move(bg.grad_beta)};
      grad = std::move(bg.grad_x);
    }
    auto cg = conv3d_backward(lt.conv, params.conv[i].weight, grad, /*want_grad_x=*/i > 0);
    g.conv[i] = {std::move(cg.grad_w), std::move(cg.grad_b)};
    grad = std::move(cg.grad_x);
  }
  return g;
}

}  // namespace oct3d::nn

#endif  // OCT3D_NN_MODEL_HPP
