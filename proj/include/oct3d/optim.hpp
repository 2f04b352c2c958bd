#ifndef OCT3D_OPTIM_HPP
#define OCT3D_OPTIM_HPP

#include <oct3d/error.hpp>
#include <oct3d/tensor.hpp>

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace oct3d {

enum class OptimizerKind { sgd, rmsprop, adam, nadam };

inline std::string to_string(OptimizerKind k) {
  switch (k) {
    case OptimizerKind::sgd: return "sgd";
    case OptimizerKind::rmsprop: return "rmsprop";
    case OptimizerKind::adam: return "adam";
    case OptimizerKind::nadam: return "nadam";
  }
  return "?";
}

inline OptimizerKind parse_optimizer_kind(const std::string& s) {
  if (s == "sgd") return OptimizerKind::sgd;
  if (s == "rmsprop") return OptimizerKind::rmsprop;
  if (s == "adam") return OptimizerKind::adam;
  if (s == "nadam") return OptimizerKind::nadam;
  throw ValueError("unknown optimizer '" + s + "' (expected sgd, rmsprop, adam or nadam)");
}

/// Hyperparameters of an update rule. RMSProp uses `beta2` as its squared
/// gradient decay; `for_kind` picks 0.9 there and 0.999 elsewhere.
struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::nadam;
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  static OptimizerConfig for_kind(OptimizerKind kind, double lr) {
    OptimizerConfig c;
    c.kind = kind;
    c.lr = lr;
    if (kind == OptimizerKind::rmsprop) c.beta2 = 0.9;
    return c;
  }
};

template <typename T>
struct OptimizerState {
  OptimizerConfig config;
  std::uint64_t t = 0;
  std::vector<Tensor<T>> m;  // first moment (adam, nadam)
  std::vector<Tensor<T>> v;  // second moment (rmsprop, adam, nadam)
  bool initialized = false;
};

/// Zeroed moment slots mirroring the parameter shapes.
template <typename T>
OptimizerState<T> make_optimizer_state(const OptimizerConfig& cfg, std::span<const Tensor<T>* const> params) {
  if (!(cfg.lr > 0)) throw ValueError("learning rate must be > 0");
  OptimizerState<T> s;
  s.config = cfg;
  for (const auto* p : params) {
    s.m.push_back(Tensor<T>::zeros(p->shape()));
    s.v.push_back(Tensor<T>::zeros(p->shape()));
  }
  s.initialized = true;
  return s;
}

/// One update of every parameter in place; increments `state.t`.
///
/// NAdam (bias-corrected Nesterov momentum, no schedule decay):
///   m <- b1 m + (1-b1) g,  v <- b2 v + (1-b2) g^2
///   theta <- theta - lr (b1 m/(1-b1^t) + (1-b1) g/(1-b1^t)) / (sqrt(v/(1-b2^t)) + eps)
/// Adam drops the Nesterov term, RMSProp keeps only v (no bias correction),
/// SGD is theta <- theta - lr g.
template <typename T>
void optimizer_step(OptimizerState<T>& state, std::span<Tensor<T>* const> params,
                    std::span<const Tensor<T>* const> grads) {
  if (!state.initialized) throw Error("optimizer state is not initialized");
  if (params.size() != grads.size() || params.size() != state.m.size())
    throw ShapeError("optimizer got " + std::to_string(params.size()) + " parameters and " +
                     std::to_string(grads.size()) + " gradients for " + std::to_string(state.m.size()) + " slots");
  for (std::size_t i = 0; i < params.size(); ++i)
    if (params[i]->shape() != grads[i]->shape() || params[i]->shape() != state.m[i].shape())
      throw ShapeError("gradient " + std::to_string(i) + " shape " + shape_str(grads[i]->shape()) +
                       " does not match parameter " + shape_str(params[i]->shape()));

  const auto& c = state.config;
  state.t += 1;
  const double t = static_cast<double>(state.t);
  const double bc1 = 1.0 - std::pow(c.beta1, t);
  const double bc2 = 1.0 - std::pow(c.beta2, t);

  for (std::size_t i = 0; i < params.size(); ++i) {
    T* theta = params[i]->data();
    const T* g = grads[i]->data();
    T* m = state.m[i].data();
    T* v = state.v[i].data();
    const std::size_t n = params[i]->size();
    switch (c.kind) {
      case OptimizerKind::sgd:
        for (std::size_t k = 0; k < n; ++k) theta[k] = static_cast<T>(theta[k] - c.lr * g[k]);
        break;
      case OptimizerKind::rmsprop:
        for (std::size_t k = 0; k < n; ++k) {
          const double vk = c.beta2 * v[k] + (1 - c.beta2) * static_cast<double>(g[k]) * g[k];
          v[k] = static_cast<T>(vk);
          theta[k] = static_cast<T>(theta[k] - c.lr * g[k] / (std::sqrt(vk) + c.eps));
        }
        break;
      case OptimizerKind::adam:
        for (std::size_t k = 0; k < n; ++k) {
          const double mk = c.beta1 * m[k] + (1 - c.beta1) * g[k];
          const double vk = c.beta2 * v[k] + (1 - c.beta2) * static_cast<double>(g[k]) * g[k];
          m[k] = static_cast<T>(mk);
          v[k] = static_cast<T>(vk);
          theta[k] = static_cast<T>(theta[k] - c.lr * (mk / bc1) / (std::sqrt(vk / bc2) + c.eps));
        }
        break;
      case OptimizerKind::nadam:
        for (std::size_t k = 0; k < n; ++k) {
          const double mk = c.beta1 * m[k] + (1 - c.beta1) * g[k];
          const double vk = c.beta2 * v[k] + (1 - c.beta2) * static_cast<double>(g[k]) * g[k];
          m[k] = static_cast<T>(mk);
          v[k] = static_cast<T>(vk);
          const double nesterov = c.beta1 * (mk / bc1) + (1 - c.beta1) * g[k] / bc1;
          theta[k] = static_cast<T>(theta[k] - c.lr * nesterov / (std::sqrt(vk / bc2) + c.eps));
        }
        break;
    }
  }
}

}  // namespace oct3d

#endif  // OCT3D_OPTIM_HPP
