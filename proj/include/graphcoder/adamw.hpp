// AdamW with decoupled weight decay over the model's named tensors.
#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "graphcoder/common.hpp"
#include "graphcoder/model.hpp"

namespace graphcoder {

struct AdamWConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

template <class S>
struct AdamWState {
  long step = 0;
  std::vector<std::vector<S>> m1, m2;  // first/second moments, tensor order

  void init(const std::vector<TensorRef<S>>& tensors) {
    step = 0;
    m1.clear();
    m2.clear();
    for (const auto& t : tensors) {
      m1.emplace_back(static_cast<std::size_t>(t.size()), S(0));
      m2.emplace_back(static_cast<std::size_t>(t.size()), S(0));
    }
  }
};

template <class S>
double grad_global_norm(const std::vector<TensorRef<S>>& grads) {
  double sq = 0.0;
  for (const auto& g : grads) {
    const S* d = g.data();
    for (long i = 0; i < g.size(); ++i) sq += static_cast<double>(d[i]) * static_cast<double>(d[i]);
  }
  return std::sqrt(sq);
}

template <class S>
void scale_grads(std::vector<TensorRef<S>>& grads, S factor) {
  for (auto& g : grads) {
    S* d = g.data();
    for (long i = 0; i < g.size(); ++i) d[i] *= factor;
  }
}

// One decoupled-decay step:
//   theta <- theta - lr * (m_hat / (sqrt(v_hat) + eps) + wd * theta).
// Rejects non-finite gradients, naming the offending tensor.
template <class S>
void adamw_step(std::vector<TensorRef<S>>& params, const std::vector<TensorRef<S>>& grads,
                AdamWState<S>& state, const AdamWConfig& cfg) {
  if (params.size() != grads.size() || params.size() != state.m1.size()) {
    throw ShapeError("adamw_step: tensor list mismatch");
  }
  for (std::size_t t = 0; t < grads.size(); ++t) {
    const S* g = grads[t].data();
    for (long i = 0; i < grads[t].size(); ++i) {
      if (!std::isfinite(static_cast<double>(g[i]))) {
        throw NonFiniteGradientError("non-finite gradient in " + grads[t].name);
      }
    }
  }

  state.step += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (std::size_t t = 0; t < params.size(); ++t) {
    S* p = params[t].data();
    const S* g = grads[t].data();
    S* m1 = state.m1[t].data();
    S* m2 = state.m2[t].data();
    if (params[t].size() != grads[t].size()) throw ShapeError("adamw_step: shape mismatch");
    for (long i = 0; i < params[t].size(); ++i) {
      m1[i] = static_cast<S>(cfg.beta1) * m1[i] + static_cast<S>(1.0 - cfg.beta1) * g[i];
      m2[i] = static_cast<S>(cfg.beta2) * m2[i] + static_cast<S>(1.0 - cfg.beta2) * g[i] * g[i];
      const double m_hat = static_cast<double>(m1[i]) / bc1;
      const double v_hat = static_cast<double>(m2[i]) / bc2;
      const double update = m_hat / (std::sqrt(v_hat) + cfg.eps) +
                            cfg.weight_decay * static_cast<double>(p[i]);
      p[i] = static_cast<S>(static_cast<double>(p[i]) - cfg.lr * update);
    }
  }
}

}  // namespace graphcoder
