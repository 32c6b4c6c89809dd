#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "pointagg/agg/operators.hpp"

namespace pointagg {

struct CostEstimate {
  std::int64_t space = 0;  // parameter count, weights only
  std::int64_t time = 0;   // multiply-accumulates per forward
};

// Closed-form per-operator cost model. Counts multiplies in linear layers and
// elementwise weight applications; bias adds, reductions, BN and ReLU are
// free. `fast_path` selects the factored single-fc evaluation of the
// point-wise MLP (n*d^2 + 3*d*n*K instead of (d+3)*d*n*K).
inline CostEstimate predict_cost(Family family, Index h, Index d, Index n, Index K, Index M = 1,
                                 bool fast_path = false) {
  if (h < 1 || d < 1 || n < 1 || K < 1) throw ConfigError("predict_cost: arguments must be >= 1");
  if (fast_path && !(family == Family::PointwiseMLP && h == 1))
    throw ConfigError("predict_cost: the fast path only exists for the single-fc point-wise mlp");

  const auto i64 = [](Index v) { return static_cast<std::int64_t>(v); };
  const std::int64_t D = i64(d), N = i64(n), Kk = i64(K), E = N * Kk;

  switch (family) {
    case Family::Identity:
    case Family::Pool:
      if (h != 1) throw ConfigError("predict_cost: h has no meaning for parameter-free baselines");
      return {0, 0};
    case Family::PointwiseMLP: {
      if (h == 1) {
        const std::int64_t space = (D + 3) * D;
        return {space, fast_path ? N * D * D + 3 * D * E : (D + 3) * D * E};
      }
      if (d % 2 != 0) throw ConfigError("predict_cost: h >= 2 needs even d");
      const std::int64_t per_edge = ((2 * D + 3) + (i64(h) - 2) * D / 2) * (D / 2);
      return {per_edge, per_edge * E};
    }
    case Family::PseudoGrid:
      if (h != 1) throw ConfigError("predict_cost: h has no meaning for the pseudo-grid family");
      if (M < 1) throw ConfigError("predict_cost: pseudo_grid needs M >= 1");
      return {D * i64(M), E * D * i64(M)};
    case Family::AdaptiveWeight: {
      if (h == 1) return {3 * D, 5 * D * E};
      if (d % 2 != 0) throw ConfigError("predict_cost: h >= 2 needs even d");
      const std::int64_t half = D / 2;
      return {((i64(h) - 2) * half + D + 3) * half, ((i64(h) - 2) * half + D + 5) * half * E};
    }
    case Family::PosPool:
    case Family::PosPoolEmbed:
    case Family::PosPoolVariant:
      if (h != 1) throw ConfigError("predict_cost: h has no meaning for position-pooling");
      return {0, D * E};
  }
  throw ConfigError("predict_cost: unknown family");
}

// Self-supported graph where every query has exactly K neighbors, starting
// with itself and continuing round-robin (indices repeat when K > n, which a
// physical ball can't produce but the cost model doesn't care about).
inline NeighborGraph uniform_neighbor_graph(Index n, Index K) {
  if (n < 1 || K < 1) throw ValidationError("uniform_neighbor_graph: n and K must be >= 1");
  NeighborGraph g;
  g.n_query = g.n_support = n;
  g.self_support = true;
  g.offsets.reserve(n + 1);
  g.offsets.push_back(0);
  for (Index q = 0; q < n; ++q) {
    for (Index j = 0; j < K; ++j) g.neighbor_index.push_back((q + j) % n);
    g.offsets.push_back(static_cast<Index>(g.neighbor_index.size()));
  }
  g.validate();
  return g;
}

// One instrumented forward pass with the MAC counter zeroed first. The graph
// must be uniform: the closed forms assume every query owns exactly K edges.
inline std::int64_t measure_cost(const AggregatorConfig& cfg, const NeighborGraph& graph,
                                 std::uint64_t seed = 0x5eed) {
  const Index K = graph.slice_size(0);
  for (Index q = 1; q < graph.n_query; ++q)
    if (graph.slice_size(q) != K)
      throw ValidationError("measure_cost: graph must have a uniform neighbor count");

  Rng rng(seed);
  const Index d = cfg.channels;
  Tensor dp(graph.edge_count(), 3);
  for (Index i = 0; i < dp.size(); ++i) dp[i] = static_cast<Scalar>(rng.uniform(-0.5, 0.5));
  auto f = make_tensor(graph.n_support, d);
  for (Index i = 0; i < f->size(); ++i) (*f)[i] = static_cast<Scalar>(rng.normal());

  auto params = make_aggregator_params(cfg, Scalar(1), seed, rng);
  Context ctx{nullptr, false};
  Tensor::reset_mac_counter();
  aggregate(ctx, cfg, graph, dp, f, f, params);
  return static_cast<std::int64_t>(Tensor::mac_counter());
}

inline std::int64_t measure_cost(const AggregatorConfig& cfg, Index n, Index K,
                                 std::uint64_t seed = 0x5eed) {
  return measure_cost(cfg, uniform_neighbor_graph(n, K), seed);
}

struct ComplexityQuery {
  Family family = Family::PosPool;
  Index h = 1;
  Index d = 6;
  Index n = 4;
  Index K = 2;
  Index M = 1;
  bool fast_path = false;
};

struct ComplexityReport {
  Family family = Family::PosPool;
  Index h = 1, d = 0, n = 0, K = 0, M = 1;
  bool fast_path = false;
  std::int64_t predicted_space = 0;
  std::int64_t predicted_time = 0;
  std::int64_t measured_time = 0;
  bool match = false;  // predicted_time == measured_time
};

// The aggregator configuration the closed forms describe: DP inputs for both
// MLP families, no softmax, reductions at the family defaults.
inline AggregatorConfig query_config(const ComplexityQuery& q) {
  auto cfg = AggregatorConfig::defaults(q.family);
  cfg.channels = q.d;
  cfg.fc_count = q.h;
  cfg.kernel_points = q.M;
  cfg.softmax_normalize = false;
  if (q.family == Family::PointwiseMLP) {
    cfg.input_mode = InputMode::DP;
    cfg.mlp_fast_path = q.fast_path;
  }
  if (q.family == Family::AdaptiveWeight) cfg.input_mode = InputMode::DP;
  if (q.family == Family::PosPoolVariant) cfg.variant_kind = VariantKind::DistOnly;
  return cfg;
}

inline std::vector<ComplexityReport> verify_complexity(const std::vector<ComplexityQuery>& sweep) {
  std::vector<ComplexityReport> out;
  out.reserve(sweep.size());
  for (const auto& q : sweep) {
    ComplexityReport r;
    r.family = q.family;
    r.h = q.h;
    r.d = q.d;
    r.n = q.n;
    r.K = q.K;
    r.M = q.M;
    r.fast_path = q.fast_path;
    const auto est = predict_cost(q.family, q.h, q.d, q.n, q.K, q.M, q.fast_path);
    r.predicted_space = est.space;
    r.predicted_time = est.time;
    r.measured_time = measure_cost(query_config(q), q.n, q.K);
    r.match = r.predicted_time == r.measured_time;
    out.push_back(r);
  }
  return out;
}

// Every family over h x d x n x K (x M for the pseudo grid), one row each.
inline std::vector<ComplexityQuery> full_complexity_sweep(const std::vector<Index>& hs = {1, 2, 3},
                                                          const std::vector<Index>& ds = {6, 12, 24},
                                                          const std::vector<Index>& ns = {4, 16},
                                                          const std::vector<Index>& Ks = {2, 8},
                                                          const std::vector<Index>& Ms = {5, 15}) {
  std::vector<ComplexityQuery> sweep;
  const auto cell = [&](Family fam, Index h, Index M, bool fast) {
    for (Index d : ds)
      for (Index n : ns)
        for (Index K : Ks) sweep.push_back({fam, h, d, n, K, M, fast});
  };
  cell(Family::Identity, 1, 1, false);
  cell(Family::Pool, 1, 1, false);
  for (Index h : hs) cell(Family::PointwiseMLP, h, 1, false);
  cell(Family::PointwiseMLP, 1, 1, true);
  for (Index M : Ms) cell(Family::PseudoGrid, 1, M, false);
  for (Index h : hs) cell(Family::AdaptiveWeight, h, 1, false);
  cell(Family::PosPool, 1, 1, false);
  cell(Family::PosPoolEmbed, 1, 1, false);
  cell(Family::PosPoolVariant, 1, 1, false);
  return sweep;
}

inline std::string complexity_row_name(const ComplexityReport& r) {
  std::string name = family_name(r.family);
  if (r.fast_path) name += "_fast";
  return name;
}

inline void write_complexity_csv(std::ostream& os, const std::vector<ComplexityReport>& reports) {
  os << "family,h,d,n,K,M,space,pred_time,meas_time,match\n";
  for (const auto& r : reports)
    os << complexity_row_name(r) << ',' << r.h << ',' << r.d << ',' << r.n << ',' << r.K << ','
       << r.M << ',' << r.predicted_space << ',' << r.predicted_time << ',' << r.measured_time
       << ',' << (r.match ? 1 : 0) << '\n';
}

}  // namespace pointagg
