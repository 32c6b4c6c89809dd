#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "pointagg/core/random.hpp"
#include "pointagg/core/tensor.hpp"

namespace pointagg {

struct LinearLayer {
  TensorPtr weight;  // [out, in]
  TensorPtr bias;    // [out], null when the layer has no bias

  LinearLayer() = default;

  LinearLayer(Index in, Index out, bool use_bias) {
    weight = make_tensor(out, in);
    if (use_bias) bias = make_tensor(out);
  }

  Index in_features() const { return weight->cols(); }
  Index out_features() const { return weight->rows(); }

  void he_init(Rng& rng) {
    const double std = std::sqrt(2.0 / static_cast<double>(in_features()));
    for (Index i = 0; i < weight->size(); ++i) (*weight)[i] = static_cast<Scalar>(rng.normal(0.0, std));
    if (bias) bias->set_zero();
  }
};

struct BatchNormLayer {
  TensorPtr scale;  // [c], init 1
  TensorPtr shift;  // [c], init 0
  TensorPtr running_mean;
  TensorPtr running_var;
  Scalar eps = Scalar(1e-5);
  Scalar momentum = Scalar(0.1);  // weight of the newest batch statistic

  BatchNormLayer() = default;

  explicit BatchNormLayer(Index channels) {
    scale = make_tensor(channels);
    shift = make_tensor(channels);
    scale->fill(Scalar(1));
    running_mean = make_tensor(channels);
    running_var = make_tensor(channels);
    running_var->fill(Scalar(1));
  }

  Index channels() const { return scale->size(); }
};

// Ordered, named parameter registry. Order is the serialization order, so it
// must be construction order and nothing else.
class ParamStore {
 public:
  struct Entry {
    std::string name;
    TensorPtr tensor;
    bool trainable;
    bool decay;  // weight decay applies; off for norm affine parameters
  };

  void add(const std::string& name, TensorPtr t, bool trainable = true, bool decay = true) {
    entries_.push_back({name, std::move(t), trainable, trainable && decay});
  }

  void add(const std::string& prefix, LinearLayer& layer) {
    add(prefix + ".weight", layer.weight);
    if (layer.bias) add(prefix + ".bias", layer.bias);
  }

  void add(const std::string& prefix, BatchNormLayer& bn) {
    add(prefix + ".scale", bn.scale, true, false);
    add(prefix + ".shift", bn.shift, true, false);
    add(prefix + ".running_mean", bn.running_mean, false);
    add(prefix + ".running_var", bn.running_var, false);
  }

  const std::vector<Entry>& entries() const { return entries_; }
  std::vector<Entry>& entries() { return entries_; }

  std::size_t trainable_count() const {
    std::size_t n = 0;
    for (const auto& e : entries_)
      if (e.trainable) ++n;
    return n;
  }

  void zero_grad() {
    for (auto& e : entries_)
      if (e.trainable) {
        e.tensor->ensure_grad();
        e.tensor->zero_grad();
      }
  }

 private:
  std::vector<Entry> entries_;
};

}  // namespace pointagg
