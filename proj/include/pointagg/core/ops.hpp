#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "pointagg/core/autodiff.hpp"
#include "pointagg/core/layers.hpp"
#include "pointagg/core/tensor.hpp"

namespace pointagg {

enum class Reduction { MAX, SUM, AVG };

inline const char* reduction_name(Reduction r) {
  switch (r) {
    case Reduction::MAX: return "max";
    case Reduction::SUM: return "sum";
    case Reduction::AVG: return "avg";
  }
  return "?";
}

// y = x W^T + b, tallying n*in*out multiply-accumulates.
inline TensorPtr linear_forward(Context& ctx, const TensorPtr& x, LinearLayer& layer) {
  if (x->cols() != layer.in_features())
    throw DimensionError("linear_forward: input has " + std::to_string(x->cols()) +
                         " features, layer expects " + std::to_string(layer.in_features()));
  const Index n = x->rows();
  const Index out = layer.out_features();
  auto y = make_tensor(n, out);
  y->mat().noalias() = x->mat() * layer.weight->mat().transpose();
  if (layer.bias) {
    Eigen::Map<const Eigen::Matrix<Scalar, 1, Eigen::Dynamic>> b(layer.bias->data(), out);
    y->mat().rowwise() += b;
  }
  Tensor::add_macs(static_cast<std::uint64_t>(n) * static_cast<std::uint64_t>(layer.in_features()) *
                   static_cast<std::uint64_t>(out));

  if (ctx.recording()) {
    TensorPtr w = layer.weight, b = layer.bias;
    ctx.tape->push([x, w, b, y]() {
      if (!y->has_grad()) return;
      MatMap dy = y->grad_mat();
      x->grad_mat().noalias() += dy * w->mat();
      w->grad_mat().noalias() += dy.transpose() * x->mat();
      if (b) {
        b->ensure_grad();
        Eigen::Map<Eigen::Matrix<Scalar, 1, Eigen::Dynamic>> db(b->grad(), b->size());
        db += dy.colwise().sum();
      }
    });
  }
  return y;
}

// Normalizes each channel over all rows of the batch. Training mode uses
// batch statistics (biased variance) and folds them into the running
// buffers; eval mode uses the running buffers only.
inline TensorPtr batchnorm_forward(Context& ctx, const TensorPtr& x, BatchNormLayer& bn) {
  const Index n = x->rows();
  const Index c = x->cols();
  if (c != bn.channels()) throw DimensionError("batchnorm_forward: channel mismatch");

  auto y = make_tensor(n, c);

  if (ctx.training) {
    if (n < 2) throw DegenerateInputError("batchnorm_forward: training mode needs at least 2 rows");
    auto xc = make_tensor(n, c);     // x - mean
    auto invstd = make_tensor(c);
    Eigen::Matrix<Scalar, 1, Eigen::Dynamic> mean = x->mat().colwise().mean();
    xc->mat() = x->mat().rowwise() - mean;
    Eigen::Matrix<Scalar, 1, Eigen::Dynamic> var =
        xc->mat().array().square().colwise().sum() / static_cast<Scalar>(n);
    for (Index j = 0; j < c; ++j) {
      (*invstd)[j] = Scalar(1) / std::sqrt(var(j) + bn.eps);
      (*bn.running_mean)[j] = (Scalar(1) - bn.momentum) * (*bn.running_mean)[j] + bn.momentum * mean(j);
      (*bn.running_var)[j] = (Scalar(1) - bn.momentum) * (*bn.running_var)[j] + bn.momentum * var(j);
    }
    for (Index i = 0; i < n; ++i)
      for (Index j = 0; j < c; ++j)
        (*y)(i, j) = (*bn.scale)[j] * (*xc)(i, j) * (*invstd)[j] + (*bn.shift)[j];

    if (ctx.recording()) {
      TensorPtr scale = bn.scale, shift = bn.shift;
      ctx.tape->push([x, y, xc, invstd, scale, shift, n, c]() {
        if (!y->has_grad()) return;
        x->ensure_grad();
        scale->ensure_grad();
        shift->ensure_grad();
        const Scalar inv_n = Scalar(1) / static_cast<Scalar>(n);
        for (Index j = 0; j < c; ++j) {
          const Scalar is = (*invstd)[j];
          const Scalar g = (*scale)[j];
          Scalar sum_dxhat = 0, sum_dxhat_xhat = 0, sum_dy = 0;
          for (Index i = 0; i < n; ++i) {
            const Scalar dy = y->grad_at(i * c + j);
            const Scalar xhat = (*xc)(i, j) * is;
            sum_dy += dy;
            sum_dxhat += dy * g;
            sum_dxhat_xhat += dy * g * xhat;
            scale->grad()[j] += dy * xhat;
          }
          shift->grad()[j] += sum_dy;
          for (Index i = 0; i < n; ++i) {
            const Scalar dxhat = y->grad_at(i * c + j) * g;
            const Scalar xhat = (*xc)(i, j) * is;
            x->grad()[i * c + j] += is * (dxhat - inv_n * sum_dxhat - xhat * inv_n * sum_dxhat_xhat);
          }
        }
      });
    }
  } else {
    auto invstd = make_tensor(c);
    for (Index j = 0; j < c; ++j) (*invstd)[j] = Scalar(1) / std::sqrt((*bn.running_var)[j] + bn.eps);
    for (Index i = 0; i < n; ++i)
      for (Index j = 0; j < c; ++j)
        (*y)(i, j) = (*bn.scale)[j] * ((*x)(i, j) - (*bn.running_mean)[j]) * (*invstd)[j] + (*bn.shift)[j];

    if (ctx.recording()) {
      TensorPtr scale = bn.scale, shift = bn.shift, rm = bn.running_mean;
      ctx.tape->push([x, y, invstd, scale, shift, rm, n, c]() {
        if (!y->has_grad()) return;
        x->ensure_grad();
        scale->ensure_grad();
        shift->ensure_grad();
        for (Index i = 0; i < n; ++i)
          for (Index j = 0; j < c; ++j) {
            const Scalar dy = y->grad_at(i * c + j);
            const Scalar xhat = ((*x)(i, j) - (*rm)[j]) * (*invstd)[j];
            x->grad()[i * c + j] += dy * (*scale)[j] * (*invstd)[j];
            scale->grad()[j] += dy * xhat;
            shift->grad()[j] += dy;
          }
      });
    }
  }
  return y;
}

inline TensorPtr relu(Context& ctx, const TensorPtr& x) {
  auto y = std::make_shared<Tensor>(*x);
  y->drop_grad();
  for (Index i = 0; i < y->size(); ++i)
    if ((*y)[i] < Scalar(0)) (*y)[i] = Scalar(0);
  if (ctx.recording()) {
    ctx.tape->push([x, y]() {
      if (!y->has_grad()) return;
      x->ensure_grad();
      for (Index i = 0; i < x->size(); ++i)
        if ((*x)[i] > Scalar(0)) x->grad()[i] += y->grad_at(i);
    });
  }
  return y;
}

// Reduces contiguous edge slices to one row per query. offsets has
// n_query+1 entries; slice i is rows [offsets[i], offsets[i+1]).
// MAX ties route the gradient to the lowest edge index. An empty slice is an
// error for MAX/AVG and a zero row for SUM.
inline TensorPtr reduce_neighbors(Context& ctx, const TensorPtr& edges,
                                  const std::vector<Index>& offsets, Reduction red) {
  const Index nq = static_cast<Index>(offsets.size()) - 1;
  if (nq < 0) throw DimensionError("reduce_neighbors: offsets must have at least one entry");
  if (offsets.back() != edges->rows())
    throw DimensionError("reduce_neighbors: offsets do not cover the edge rows");
  const Index d = edges->cols();
  auto y = make_tensor(nq, d);
  auto argmax = (red == Reduction::MAX && ctx.recording())
                    ? std::make_shared<std::vector<Index>>(static_cast<std::size_t>(nq * d))
                    : nullptr;

  for (Index q = 0; q < nq; ++q) {
    const Index lo = offsets[q], hi = offsets[q + 1];
    if (lo == hi) {
      if (red == Reduction::SUM) continue;
      throw DegenerateInputError("reduce_neighbors: empty slice at query " + std::to_string(q));
    }
    if (red == Reduction::MAX) {
      for (Index c = 0; c < d; ++c) {
        Scalar best = (*edges)(lo, c);
        Index best_e = lo;
        for (Index e = lo + 1; e < hi; ++e)
          if ((*edges)(e, c) > best) {
            best = (*edges)(e, c);
            best_e = e;
          }
        (*y)(q, c) = best;
        if (argmax) (*argmax)[static_cast<std::size_t>(q * d + c)] = best_e;
      }
    } else {
      for (Index e = lo; e < hi; ++e)
        for (Index c = 0; c < d; ++c) (*y)(q, c) += (*edges)(e, c);
      if (red == Reduction::AVG) {
        const Scalar inv = Scalar(1) / static_cast<Scalar>(hi - lo);
        for (Index c = 0; c < d; ++c) (*y)(q, c) *= inv;
      }
    }
  }

  if (ctx.recording()) {
    std::vector<Index> offs = offsets;
    ctx.tape->push([edges, y, offs = std::move(offs), red, argmax, nq, d]() {
      if (!y->has_grad()) return;
      edges->ensure_grad();
      for (Index q = 0; q < nq; ++q) {
        const Index lo = offs[q], hi = offs[q + 1];
        if (lo == hi) continue;
        if (red == Reduction::MAX) {
          for (Index c = 0; c < d; ++c)
            edges->grad()[(*argmax)[static_cast<std::size_t>(q * d + c)] * d + c] += y->grad_at(q * d + c);
        } else {
          const Scalar w = red == Reduction::AVG ? Scalar(1) / static_cast<Scalar>(hi - lo) : Scalar(1);
          for (Index e = lo; e < hi; ++e)
            for (Index c = 0; c < d; ++c) edges->grad()[e * d + c] += w * y->grad_at(q * d + c);
        }
      }
    });
  }
  return y;
}

inline TensorPtr gather_rows(Context& ctx, const TensorPtr& x, const std::vector<Index>& rows) {
  const Index d = x->cols();
  auto y = make_tensor(static_cast<Index>(rows.size()), d);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r] < 0 || rows[r] >= x->rows()) throw DimensionError("gather_rows: index out of range");
    std::copy_n(x->data() + rows[r] * d, d, y->data() + static_cast<Index>(r) * d);
  }
  if (ctx.recording()) {
    std::vector<Index> idx = rows;
    ctx.tape->push([x, y, idx = std::move(idx), d]() {
      if (!y->has_grad()) return;
      x->ensure_grad();
      for (std::size_t r = 0; r < idx.size(); ++r)
        for (Index c = 0; c < d; ++c)
          x->grad()[idx[r] * d + c] += y->grad_at(static_cast<Index>(r) * d + c);
    });
  }
  return y;
}

inline TensorPtr concat_cols(Context& ctx, const std::vector<TensorPtr>& parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no inputs");
  const Index n = parts[0]->rows();
  Index total = 0;
  for (const auto& p : parts) {
    if (p->rows() != n) throw DimensionError("concat_cols: row mismatch");
    total += p->cols();
  }
  auto y = make_tensor(n, total);
  Index at = 0;
  for (const auto& p : parts) {
    for (Index i = 0; i < n; ++i)
      std::copy_n(p->data() + i * p->cols(), p->cols(), y->data() + i * total + at);
    at += p->cols();
  }
  if (ctx.recording()) {
    std::vector<TensorPtr> ins = parts;
    ctx.tape->push([ins, y, n, total]() {
      if (!y->has_grad()) return;
      Index at = 0;
      for (const auto& p : ins) {
        p->ensure_grad();
        for (Index i = 0; i < n; ++i)
          for (Index c = 0; c < p->cols(); ++c) p->grad()[i * p->cols() + c] += y->grad_at(i * total + at + c);
        at += p->cols();
      }
    });
  }
  return y;
}

inline TensorPtr concat_rows(Context& ctx, const std::vector<TensorPtr>& parts) {
  if (parts.empty()) throw DimensionError("concat_rows: no inputs");
  const Index cols = parts[0]->cols();
  Index total = 0;
  for (const auto& p : parts) {
    if (p->cols() != cols) throw DimensionError("concat_rows: column mismatch");
    total += p->rows();
  }
  auto y = make_tensor(total, cols);
  Index at = 0;
  for (const auto& p : parts) {
    std::copy_n(p->data(), p->size(), y->data() + at * cols);
    at += p->rows();
  }
  if (ctx.recording()) {
    std::vector<TensorPtr> ins = parts;
    ctx.tape->push([ins, y, cols]() {
      if (!y->has_grad()) return;
      Index at = 0;
      for (const auto& p : ins) {
        p->ensure_grad();
        for (Index i = 0; i < p->size(); ++i) p->grad()[i] += y->grad_at(at * cols + i);
        at += p->rows();
      }
    });
  }
  return y;
}

inline TensorPtr add(Context& ctx, const TensorPtr& a, const TensorPtr& b) {
  if (!a->same_shape(*b)) throw DimensionError("add: shape mismatch");
  auto y = std::make_shared<Tensor>(*a);
  y->drop_grad();
  for (Index i = 0; i < y->size(); ++i) (*y)[i] += (*b)[i];
  if (ctx.recording()) {
    ctx.tape->push([a, b, y]() {
      if (!y->has_grad()) return;
      a->ensure_grad();
      b->ensure_grad();
      for (Index i = 0; i < y->size(); ++i) {
        a->grad()[i] += y->grad_at(i);
        b->grad()[i] += y->grad_at(i);
      }
    });
  }
  return y;
}

inline TensorPtr sub(Context& ctx, const TensorPtr& a, const TensorPtr& b) {
  if (!a->same_shape(*b)) throw DimensionError("sub: shape mismatch");
  auto y = std::make_shared<Tensor>(*a);
  y->drop_grad();
  for (Index i = 0; i < y->size(); ++i) (*y)[i] -= (*b)[i];
  if (ctx.recording()) {
    ctx.tape->push([a, b, y]() {
      if (!y->has_grad()) return;
      a->ensure_grad();
      b->ensure_grad();
      for (Index i = 0; i < y->size(); ++i) {
        a->grad()[i] += y->grad_at(i);
        b->grad()[i] -= y->grad_at(i);
      }
    });
  }
  return y;
}

// Elementwise product. This is the aggregation-style multiply, so it counts
// one MAC per element.
inline TensorPtr mul_elem(Context& ctx, const TensorPtr& a, const TensorPtr& b) {
  if (!a->same_shape(*b)) throw DimensionError("mul_elem: shape mismatch");
  auto y = std::make_shared<Tensor>(*a);
  y->drop_grad();
  for (Index i = 0; i < y->size(); ++i) (*y)[i] *= (*b)[i];
  Tensor::add_macs(static_cast<std::uint64_t>(y->size()));
  if (ctx.recording()) {
    ctx.tape->push([a, b, y]() {
      if (!y->has_grad()) return;
      a->ensure_grad();
      b->ensure_grad();
      for (Index i = 0; i < y->size(); ++i) {
        a->grad()[i] += y->grad_at(i) * (*b)[i];
        b->grad()[i] += y->grad_at(i) * (*a)[i];
      }
    });
  }
  return y;
}

// Softmax over each (query slice, channel) pair, the normalizer used by the
// adaptive-weight family.
inline TensorPtr neighbor_softmax(Context& ctx, const TensorPtr& h, const std::vector<Index>& offsets) {
  const Index nq = static_cast<Index>(offsets.size()) - 1;
  if (offsets.back() != h->rows()) throw DimensionError("neighbor_softmax: offsets do not cover the rows");
  const Index d = h->cols();
  auto s = make_tensor(h->rows(), d);
  for (Index q = 0; q < nq; ++q) {
    const Index lo = offsets[q], hi = offsets[q + 1];
    if (lo == hi) throw DegenerateInputError("neighbor_softmax: empty slice at query " + std::to_string(q));
    for (Index c = 0; c < d; ++c) {
      Scalar m = (*h)(lo, c);
      for (Index e = lo + 1; e < hi; ++e) m = std::max(m, (*h)(e, c));
      Scalar z = 0;
      for (Index e = lo; e < hi; ++e) {
        const Scalar v = std::exp((*h)(e, c) - m);
        (*s)(e, c) = v;
        z += v;
      }
      const Scalar inv = Scalar(1) / z;
      for (Index e = lo; e < hi; ++e) (*s)(e, c) *= inv;
    }
  }
  if (ctx.recording()) {
    std::vector<Index> offs = offsets;
    ctx.tape->push([h, s, offs = std::move(offs), nq, d]() {
      if (!s->has_grad()) return;
      h->ensure_grad();
      for (Index q = 0; q < nq; ++q) {
        const Index lo = offs[q], hi = offs[q + 1];
        for (Index c = 0; c < d; ++c) {
          Scalar dot = 0;
          for (Index e = lo; e < hi; ++e) dot += s->grad_at(e * d + c) * (*s)(e, c);
          for (Index e = lo; e < hi; ++e)
            h->grad()[e * d + c] += (*s)(e, c) * (s->grad_at(e * d + c) - dot);
        }
      }
    });
  }
  return s;
}

// Mean cross-entropy between row-wise softmax(logits) and integer labels.
// Rows whose label is negative or equals ignore_label are excluded.
inline TensorPtr softmax_cross_entropy_mean(Context& ctx, const TensorPtr& logits,
                                            const std::vector<int>& labels, int ignore_label = -1) {
  const Index n = logits->rows();
  const Index c = logits->cols();
  if (static_cast<Index>(labels.size()) != n)
    throw DimensionError("softmax_cross_entropy_mean: label count mismatch");
  if (!logits->all_finite()) throw NumericError("softmax_cross_entropy_mean: non-finite logits");

  auto probs = make_tensor(n, c);
  Index n_valid = 0;
  Scalar total = 0;
  for (Index i = 0; i < n; ++i) {
    const int lab = labels[i];
    if (lab < 0 || lab == ignore_label) continue;
    if (lab >= c) throw ValidationError("softmax_cross_entropy_mean: label out of range");
    ++n_valid;
    Scalar m = (*logits)(i, 0);
    for (Index j = 1; j < c; ++j) m = std::max(m, (*logits)(i, j));
    Scalar z = 0;
    for (Index j = 0; j < c; ++j) {
      const Scalar v = std::exp((*logits)(i, j) - m);
      (*probs)(i, j) = v;
      z += v;
    }
    const Scalar inv = Scalar(1) / z;
    for (Index j = 0; j < c; ++j) (*probs)(i, j) *= inv;
    total += std::log(z) - ((*logits)(i, lab) - m);
  }
  if (n_valid == 0) throw DegenerateInputError("softmax_cross_entropy_mean: no labeled rows");

  auto loss = std::make_shared<Tensor>(Tensor::scalar(total / static_cast<Scalar>(n_valid)));
  if (ctx.recording()) {
    std::vector<int> labs = labels;
    ctx.tape->push([logits, probs, loss, labs = std::move(labs), ignore_label, n, c, n_valid]() {
      if (!loss->has_grad()) return;
      logits->ensure_grad();
      const Scalar w = loss->grad_at(0) / static_cast<Scalar>(n_valid);
      for (Index i = 0; i < n; ++i) {
        const int lab = labs[i];
        if (lab < 0 || lab == ignore_label) continue;
        for (Index j = 0; j < c; ++j)
          logits->grad()[i * c + j] += w * ((*probs)(i, j) - (j == lab ? Scalar(1) : Scalar(0)));
      }
    });
  }
  return loss;
}

inline TensorPtr sum_all(Context& ctx, const TensorPtr& x) {
  Scalar total = 0;
  for (Index i = 0; i < x->size(); ++i) total += (*x)[i];
  auto y = std::make_shared<Tensor>(Tensor::scalar(total));
  if (ctx.recording()) {
    ctx.tape->push([x, y]() {
      if (!y->has_grad()) return;
      x->ensure_grad();
      const Scalar g = y->grad_at(0);
      for (Index i = 0; i < x->size(); ++i) x->grad()[i] += g;
    });
  }
  return y;
}

// Column means of x as a single row, the global pooling used ahead of the
// classifier head.
inline TensorPtr global_avg_pool(Context& ctx, const TensorPtr& x) {
  const Index n = x->rows();
  if (n == 0) throw DegenerateInputError("global_avg_pool: empty input");
  const std::vector<Index> offsets = {0, n};
  return reduce_neighbors(ctx, x, offsets, Reduction::AVG);
}

}  // namespace pointagg
