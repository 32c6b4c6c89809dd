#pragma once

#include <functional>
#include <vector>

#include "pointagg/core/autodiff.hpp"
#include "pointagg/core/tensor.hpp"

namespace pointagg {

// Central finite differences against the tape gradient. The closure must
// rebuild the forward pass from scratch on every call; it receives a context
// whose tape is set only for the analytic pass.
inline double grad_check(const std::function<TensorPtr(Context&)>& op_closure,
                         const std::vector<TensorPtr>& inputs, double eps) {
  if (!(eps >= 1e-7 && eps <= 1e-3))
    throw ValidationError("grad_check: eps must lie in [1e-7, 1e-3]");

  for (const auto& t : inputs) {
    t->ensure_grad();
    t->zero_grad();
  }
  Tape tape;
  Context rec{&tape, false};
  auto loss = op_closure(rec);
  if (loss->size() != 1) throw DimensionError("grad_check: closure must return a scalar");
  tape.backward(loss);

  std::vector<std::vector<Scalar>> analytic;
  analytic.reserve(inputs.size());
  for (const auto& t : inputs) analytic.emplace_back(t->grad(), t->grad() + t->size());

  Context plain{nullptr, false};
  double max_rel = 0.0;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    Tensor& t = *inputs[k];
    for (Index i = 0; i < t.size(); ++i) {
      const Scalar saved = t[i];
      t[i] = saved + static_cast<Scalar>(eps);
      const double up = (*op_closure(plain))[0];
      t[i] = saved - static_cast<Scalar>(eps);
      const double down = (*op_closure(plain))[0];
      t[i] = saved;
      const double fd = (up - down) / (2.0 * eps);
      const double an = analytic[k][static_cast<std::size_t>(i)];
      const double rel = std::abs(fd - an) / std::max({1.0, std::abs(fd), std::abs(an)});
      if (rel > max_rel) max_rel = rel;
    }
  }
  return max_rel;
}

}  // namespace pointagg
