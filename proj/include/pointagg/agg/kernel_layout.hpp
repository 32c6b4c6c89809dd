#pragma once

#include <cmath>

#include "pointagg/core/random.hpp"
#include "pointagg/core/tensor.hpp"

namespace pointagg {

struct KernelLayout {
  Tensor points;  // [M x 3], |p| <= r_kernel, points[0] = origin
  Scalar sigma = 0;
};

// Disperses M points in the ball of radius r_kernel: point 0 pinned at the
// origin, the rest repelled by the gradient of sum 1/|p_i - p_j| and
// projected back into the ball after each of a fixed number of steps.
// Deterministic for fixed (M, r_kernel, seed).
inline KernelLayout kernel_point_layout(Index M, Scalar r_kernel, std::uint64_t seed) {
  if (M < 1) throw ValidationError("kernel_point_layout: M must be at least 1");
  if (!(r_kernel > 0)) throw ValidationError("kernel_point_layout: r_kernel must be positive");

  KernelLayout layout;
  layout.points = Tensor(M, 3);
  if (M == 1) return layout;

  Rng rng(seed);
  for (Index i = 1; i < M; ++i) {
    // uniform in the ball via normalized gaussian and cube-root radius
    Scalar v[3];
    Scalar norm = 0;
    do {
      norm = 0;
      for (int k = 0; k < 3; ++k) {
        v[k] = static_cast<Scalar>(rng.normal());
        norm += v[k] * v[k];
      }
    } while (norm < Scalar(1e-12));
    norm = std::sqrt(norm);
    const Scalar radius = r_kernel * static_cast<Scalar>(std::cbrt(rng.uniform()));
    for (int k = 0; k < 3; ++k) layout.points(i, k) = v[k] / norm * radius;
  }

  const int steps = 300;
  const Scalar step = Scalar(0.05) * r_kernel * r_kernel * r_kernel;
  Tensor grad(M, 3);
  for (int it = 0; it < steps; ++it) {
    grad.set_zero();
    for (Index i = 0; i < M; ++i)
      for (Index j = i + 1; j < M; ++j) {
        Scalar diff[3];
        Scalar d2 = 0;
        for (int k = 0; k < 3; ++k) {
          diff[k] = layout.points(i, k) - layout.points(j, k);
          d2 += diff[k] * diff[k];
        }
        const Scalar d = std::max(std::sqrt(d2), Scalar(1e-9));
        const Scalar coef = Scalar(1) / (d * d * d);
        for (int k = 0; k < 3; ++k) {
          grad(i, k) -= diff[k] * coef;
          grad(j, k) += diff[k] * coef;
        }
      }
    for (Index i = 1; i < M; ++i) {  // origin point stays pinned
      Scalar norm2 = 0;
      for (int k = 0; k < 3; ++k) {
        layout.points(i, k) -= step * grad(i, k);
        norm2 += layout.points(i, k) * layout.points(i, k);
      }
      if (norm2 > r_kernel * r_kernel) {
        const Scalar scale = r_kernel / std::sqrt(norm2);
        for (int k = 0; k < 3; ++k) layout.points(i, k) *= scale;
      }
    }
  }
  return layout;
}

}  // namespace pointagg
