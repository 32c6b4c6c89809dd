#pragma once

#include <cmath>
#include <vector>

#include "pointagg/core/layers.hpp"
#include "pointagg/core/tensor.hpp"

namespace pointagg {

// Per-parameter velocity buffers, aligned with the trainable entries of a
// ParamStore in registration order.
struct SgdState {
  std::vector<Tensor> velocity;

  explicit SgdState(const ParamStore& params) {
    for (const auto& e : params.entries())
      if (e.trainable) velocity.emplace_back(e.tensor->rows(), e.tensor->cols());
  }
};

// v <- momentum*v + g + weight_decay*theta;  theta <- theta - lr*v
// Entries flagged decay = false (batch-norm affine parameters) skip the
// weight-decay term. Non-finite gradients abort before any mutation.
inline void sgd_step(ParamStore& params, SgdState& state, Scalar lr, Scalar momentum,
                     Scalar weight_decay) {
  if (!(lr > 0)) throw ValidationError("sgd_step: lr must be positive");
  if (!(momentum >= 0 && momentum < 1)) throw ValidationError("sgd_step: momentum must lie in [0, 1)");
  if (weight_decay < 0) throw ValidationError("sgd_step: weight_decay must be non-negative");

  for (auto& e : params.entries()) {
    if (!e.trainable) continue;
    Tensor& theta = *e.tensor;
    theta.ensure_grad();
    for (Index i = 0; i < theta.size(); ++i)
      if (!std::isfinite(theta.grad_at(i)))
        throw NumericError("sgd_step: non-finite gradient in " + e.name);
  }

  std::size_t vi = 0;
  for (auto& e : params.entries()) {
    if (!e.trainable) continue;
    Tensor& v = state.velocity[vi++];
    Tensor& theta = *e.tensor;
    const Scalar wd = e.decay ? weight_decay : Scalar(0);
    for (Index i = 0; i < theta.size(); ++i) {
      v[i] = momentum * v[i] + theta.grad_at(i) + wd * theta[i];
      theta[i] -= lr * v[i];
    }
  }
}

}  // namespace pointagg
