#pragma once

#include <functional>
#include <utility>
#include <vector>

#include "pointagg/core/tensor.hpp"

namespace pointagg {

// Reverse-mode tape over a fixed op set. Each op that runs under a recording
// context pushes one closure; backward() replays them in reverse. This is
// deliberately minimal: no graph pruning, no higher-order derivatives.
class Tape {
 public:
  void push(std::function<void()> fn) { steps_.push_back(std::move(fn)); }

  std::size_t size() const { return steps_.size(); }

  void backward(const TensorPtr& root) {
    if (root->size() != 1) throw DimensionError("backward root must be a scalar");
    root->ensure_grad();
    root->grad()[0] = Scalar(1);
    for (auto it = steps_.rbegin(); it != steps_.rend(); ++it) (*it)();
  }

  void clear() { steps_.clear(); }

 private:
  std::vector<std::function<void()>> steps_;
};

// Shared state threaded through every differentiable op. A null tape means
// inference: ops skip closure capture entirely.
struct Context {
  Tape* tape = nullptr;
  bool training = false;

  bool recording() const { return tape != nullptr; }
};

}  // namespace pointagg
