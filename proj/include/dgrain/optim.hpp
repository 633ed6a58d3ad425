// Copyright 2026 The dgrain Authors.
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "dgrain/model.hpp"

namespace dgrain {

struct SgdConfig {
  double lr = 5e-4;
  double momentum = 0.9;
  double dampening = 0.1;
};

/// One velocity tensor per learnable tensor, in ModelParams declaration order.
struct OptimState {
  std::vector<Tensor> velocity;

  static OptimState zeros_like(const ModelParams &m) {
    OptimState s;
    for (const auto &[name, t] : m.named_tensors())
      s.velocity.emplace_back(t->rows(), t->cols());
    return s;
  }
};

/// SGD with momentum and dampening over parallel lists of parameters:
///   v <- momentum * v + (1 - dampening) * g
///   p <- p - lr * v
/// Velocities start at zero, so the first step moves p by -lr (1 - d) g.
inline void sgd_step(std::span<Tensor *const> params, std::span<const std::span<const double>> grads,
                     OptimState &state, const SgdConfig &cfg, std::size_t step = 0) {
  if (params.size() != grads.size() || params.size() != state.velocity.size())
    throw DimensionError("sgd_step: parameter/gradient/state counts differ");
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (grads[k].size() != params[k]->size() || state.velocity[k].size() != params[k]->size())
      throw DimensionError("sgd_step: shape mismatch at tensor " + std::to_string(k));
    if (!all_finite(grads[k]))
      throw DivergenceError("non-finite gradient at step " + std::to_string(step));
  }
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto p = params[k]->data();
    auto v = state.velocity[k].data();
    const auto g = grads[k];
    for (std::size_t i = 0; i < p.size(); ++i) {
      v[i] = cfg.momentum * v[i] + (1.0 - cfg.dampening) * g[i];
      p[i] -= cfg.lr * v[i];
    }
  }
}

/// Applies sgd_step to every tensor of `m` using the gradients held in its
/// grad slots. Tensors without a grad slot contribute a zero gradient.
inline void sgd_step(ModelParams &m, OptimState &state, const SgdConfig &cfg,
                     std::size_t step = 0) {
  auto named = m.named_tensors();
  std::vector<Tensor *> params;
  std::vector<std::vector<double>> zeros;
  std::vector<std::span<const double>> grads;
  zeros.reserve(named.size());
  for (auto &[name, t] : named) {
    params.push_back(t);
    if (t->requires_grad()) {
      grads.emplace_back(t->grad());
    } else {
      zeros.emplace_back(t->size(), 0.0);
      grads.emplace_back(zeros.back());
    }
  }
  sgd_step(params, grads, state, cfg, step);
}

} // namespace dgrain
