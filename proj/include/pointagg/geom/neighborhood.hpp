#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <unordered_map>
#include <vector>

#include "pointagg/geom/subsample.hpp"

namespace pointagg {

// Edges grouped per query: slice i is neighbor_index[offsets[i]..offsets[i+1]).
// Slices are sorted by ascending distance (ties by support index) and never
// empty: a query whose ball is empty gets its single nearest support point.
struct NeighborGraph {
  std::vector<Index> offsets;
  std::vector<Index> neighbor_index;
  Index n_query = 0;
  Index n_support = 0;
  bool self_support = false;

  Index edge_count() const { return static_cast<Index>(neighbor_index.size()); }

  Index slice_size(Index q) const { return offsets[q + 1] - offsets[q]; }

  // owner(e) for every edge, materialized for gather ops
  std::vector<Index> owners() const {
    std::vector<Index> out(neighbor_index.size());
    for (Index q = 0; q < n_query; ++q)
      for (Index e = offsets[q]; e < offsets[q + 1]; ++e) out[e] = q;
    return out;
  }

  void validate() const {
    if (static_cast<Index>(offsets.size()) != n_query + 1) throw DimensionError("graph offsets size");
    if (offsets.front() != 0 || offsets.back() != edge_count())
      throw DimensionError("graph offsets must cover the edge list");
    for (Index q = 0; q < n_query; ++q) {
      if (offsets[q + 1] < offsets[q]) throw DimensionError("graph offsets must be non-decreasing");
      if (offsets[q + 1] == offsets[q]) throw DegenerateInputError("graph has an empty slice");
    }
    for (Index e : neighbor_index)
      if (e < 0 || e >= n_support) throw DimensionError("neighbor index out of range");
  }
};

// All support points within `radius` of each query, nearest first, truncated
// to k_max. Uses a uniform spatial hash with cells of edge `radius`.
inline NeighborGraph build_ball_neighborhoods(const PointCloud& query, const PointCloud& support,
                                              Scalar radius, Index k_max) {
  query.validate();
  if (support.size() < 1) throw ValidationError("build_ball_neighborhoods: empty support cloud");
  support.validate();
  if (!(radius > 0)) throw ValidationError("build_ball_neighborhoods: radius must be positive");
  if (k_max < 1) throw ValidationError("build_ball_neighborhoods: k_max must be at least 1");

  std::unordered_map<detail::CellKey, std::vector<Index>, detail::CellKeyHash> hash;
  for (Index i = 0; i < support.size(); ++i) {
    detail::CellKey key{detail::cell_coord(support.positions(i, 0), radius),
                        detail::cell_coord(support.positions(i, 1), radius),
                        detail::cell_coord(support.positions(i, 2), radius)};
    hash[key].push_back(i);
  }

  NeighborGraph g;
  g.n_query = query.size();
  g.n_support = support.size();
  g.offsets.reserve(query.size() + 1);
  g.offsets.push_back(0);

  const Scalar r2 = radius * radius;
  std::vector<std::pair<Scalar, Index>> found;
  for (Index q = 0; q < query.size(); ++q) {
    found.clear();
    const Scalar qx = query.positions(q, 0), qy = query.positions(q, 1), qz = query.positions(q, 2);
    const std::int64_t cx = detail::cell_coord(qx, radius);
    const std::int64_t cy = detail::cell_coord(qy, radius);
    const std::int64_t cz = detail::cell_coord(qz, radius);
    for (std::int64_t dz = -1; dz <= 1; ++dz)
      for (std::int64_t dy = -1; dy <= 1; ++dy)
        for (std::int64_t dx = -1; dx <= 1; ++dx) {
          const auto it = hash.find(detail::CellKey{cx + dx, cy + dy, cz + dz});
          if (it == hash.end()) continue;
          for (Index s : it->second) {
            const Scalar ex = support.positions(s, 0) - qx;
            const Scalar ey = support.positions(s, 1) - qy;
            const Scalar ez = support.positions(s, 2) - qz;
            const Scalar d2 = ex * ex + ey * ey + ez * ez;
            if (d2 <= r2) found.emplace_back(d2, s);
          }
        }
    if (found.empty()) {
      Scalar best = std::numeric_limits<Scalar>::infinity();
      Index best_s = 0;
      for (Index s = 0; s < support.size(); ++s) {
        const Scalar ex = support.positions(s, 0) - qx;
        const Scalar ey = support.positions(s, 1) - qy;
        const Scalar ez = support.positions(s, 2) - qz;
        const Scalar d2 = ex * ex + ey * ey + ez * ez;
        if (d2 < best) {
          best = d2;
          best_s = s;
        }
      }
      found.emplace_back(best, best_s);
    }
    std::sort(found.begin(), found.end());
    const Index keep = std::min<Index>(k_max, static_cast<Index>(found.size()));
    for (Index k = 0; k < keep; ++k) g.neighbor_index.push_back(found[k].second);
    g.offsets.push_back(static_cast<Index>(g.neighbor_index.size()));
  }
  return g;
}

// Row e = support[neighbor_index[e]] - query[owner(e)].
inline Tensor relative_positions(const NeighborGraph& graph, const PointCloud& query,
                                 const PointCloud& support) {
  if (graph.n_query != query.size() || graph.n_support != support.size())
    throw DimensionError("relative_positions: graph does not match the clouds");
  Tensor dp(graph.edge_count(), 3);
  for (Index q = 0; q < graph.n_query; ++q)
    for (Index e = graph.offsets[q]; e < graph.offsets[q + 1]; ++e) {
      const Index s = graph.neighbor_index[e];
      for (int k = 0; k < 3; ++k) dp(e, k) = support.positions(s, k) - query.positions(q, k);
    }
  return dp;
}

}  // namespace pointagg
