#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <memory>
#include <vector>

#include <Eigen/Dense>

#include "pointagg/core/errors.hpp"

namespace pointagg {

#ifdef POINTAGG_SINGLE_PRECISION
using Scalar = float;
#else
using Scalar = double;
#endif

using Index = std::int64_t;

using EigenMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<EigenMatrix>;
using ConstMatMap = Eigen::Map<const EigenMatrix>;

// Dense rank-1/rank-2 array with an optional gradient buffer of the same
// shape. Gradients are allocated lazily by the autodiff tape.
class Tensor {
 public:
  Tensor() = default;

  Tensor(Index rows, Index cols) : shape_{rows, cols} {
    if (rows < 0 || cols < 0) throw DimensionError("tensor extents must be non-negative");
    data_.assign(static_cast<std::size_t>(rows * cols), Scalar(0));
  }

  explicit Tensor(Index n) : shape_{n} {
    if (n < 0) throw DimensionError("tensor extent must be non-negative");
    data_.assign(static_cast<std::size_t>(n), Scalar(0));
  }

  static Tensor scalar(Scalar v) {
    Tensor t(Index(1));
    t.data_[0] = v;
    return t;
  }

  static Tensor from_rows(Index rows, Index cols, std::initializer_list<Scalar> values) {
    Tensor t(rows, cols);
    if (static_cast<Index>(values.size()) != rows * cols)
      throw DimensionError("initializer size does not match extents");
    std::size_t i = 0;
    for (Scalar v : values) t.data_[i++] = v;
    return t;
  }

  Index rank() const { return static_cast<Index>(shape_.size()); }
  const std::vector<Index>& shape() const { return shape_; }
  Index rows() const { return shape_.empty() ? 0 : shape_[0]; }
  Index cols() const { return shape_.size() > 1 ? shape_[1] : 1; }
  Index size() const { return static_cast<Index>(data_.size()); }

  Scalar* data() { return data_.data(); }
  const Scalar* data() const { return data_.data(); }

  Scalar& operator[](Index i) { return data_[static_cast<std::size_t>(i)]; }
  Scalar operator[](Index i) const { return data_[static_cast<std::size_t>(i)]; }
  Scalar& operator()(Index r, Index c) { return data_[static_cast<std::size_t>(r * cols() + c)]; }
  Scalar operator()(Index r, Index c) const { return data_[static_cast<std::size_t>(r * cols() + c)]; }

  MatMap mat() { return MatMap(data_.data(), rows(), cols()); }
  ConstMatMap mat() const { return ConstMatMap(data_.data(), rows(), cols()); }

  void fill(Scalar v) { std::fill(data_.begin(), data_.end(), v); }

  void set_zero() { fill(Scalar(0)); }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  bool all_finite() const {
    for (Scalar v : data_)
      if (!std::isfinite(v)) return false;
    return true;
  }

  // --- gradient buffer ---

  bool has_grad() const { return !grad_.empty(); }

  void ensure_grad() {
    if (grad_.empty()) grad_.assign(data_.size(), Scalar(0));
  }

  void zero_grad() {
    if (!grad_.empty()) std::fill(grad_.begin(), grad_.end(), Scalar(0));
  }

  void drop_grad() { grad_.clear(); }

  Scalar* grad() { return grad_.data(); }
  const Scalar* grad() const { return grad_.data(); }
  Scalar grad_at(Index i) const { return grad_[static_cast<std::size_t>(i)]; }

  MatMap grad_mat() {
    ensure_grad();
    return MatMap(grad_.data(), rows(), cols());
  }

  // --- multiply-accumulate instrumentation ---
  //
  // Tallied by linear transforms and by aggregation elementwise multiplies;
  // bias adds, normalization, activations and reductions are free by
  // convention so measured counts line up with the closed-form cost models.
  static std::uint64_t mac_counter() { return mac_counter_; }
  static void reset_mac_counter() { mac_counter_ = 0; }
  static void add_macs(std::uint64_t n) { mac_counter_ += n; }

 private:
  std::vector<Index> shape_;
  std::vector<Scalar> data_;
  std::vector<Scalar> grad_;

  inline static thread_local std::uint64_t mac_counter_ = 0;
};

using TensorPtr = std::shared_ptr<Tensor>;

inline TensorPtr make_tensor(Index rows, Index cols) { return std::make_shared<Tensor>(rows, cols); }
inline TensorPtr make_tensor(Index n) { return std::make_shared<Tensor>(n); }

}  // namespace pointagg
