#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <unordered_map>
#include <vector>

#include "pointagg/core/random.hpp"
#include "pointagg/geom/point_cloud.hpp"

namespace pointagg {

enum class SubsampleMode { Random, Centroid };

namespace detail {

struct CellKey {
  std::int64_t x, y, z;
  bool operator==(const CellKey&) const = default;
};

struct CellKeyHash {
  std::size_t operator()(const CellKey& k) const {
    return static_cast<std::size_t>(hash_mix(static_cast<std::uint64_t>(k.x),
                                             static_cast<std::uint64_t>(k.y),
                                             static_cast<std::uint64_t>(k.z)));
  }
};

inline std::int64_t cell_coord(Scalar v, Scalar grid) {
  return static_cast<std::int64_t>(std::floor(v / grid));
}

}  // namespace detail

struct SubsampleResult {
  PointCloud cloud;
  std::vector<Index> kept_index;  // output row -> input row
};

// One representative per occupied grid cell. Cells are cubes of edge
// grid_size anchored at the origin; output rows are sorted by cell
// (z, y, x). The random pick is keyed on the cell's members rather than its
// coordinates so a translated cloud keeps the same representatives.
inline SubsampleResult grid_subsample(const PointCloud& in, Scalar grid_size, std::uint64_t seed,
                                      SubsampleMode mode = SubsampleMode::Random) {
  in.validate();
  if (!(grid_size > 0)) throw ValidationError("grid_subsample: grid_size must be positive");

  std::unordered_map<detail::CellKey, std::vector<Index>, detail::CellKeyHash> cells;
  for (Index i = 0; i < in.size(); ++i) {
    detail::CellKey key{detail::cell_coord(in.positions(i, 0), grid_size),
                        detail::cell_coord(in.positions(i, 1), grid_size),
                        detail::cell_coord(in.positions(i, 2), grid_size)};
    cells[key].push_back(i);
  }

  std::vector<std::pair<detail::CellKey, const std::vector<Index>*>> order;
  order.reserve(cells.size());
  for (const auto& kv : cells) order.emplace_back(kv.first, &kv.second);
  std::sort(order.begin(), order.end(), [](const auto& a, const auto& b) {
    if (a.first.z != b.first.z) return a.first.z < b.first.z;
    if (a.first.y != b.first.y) return a.first.y < b.first.y;
    return a.first.x < b.first.x;
  });

  SubsampleResult out;
  out.kept_index.reserve(order.size());
  for (const auto& [key, members] : order) {
    Index pick;
    if (mode == SubsampleMode::Random) {
      const std::uint64_t draw =
          hash_mix(seed, static_cast<std::uint64_t>((*members)[0]), members->size());
      pick = (*members)[draw % members->size()];
    } else {
      // canonical member order: summation order and near-tie resolution
      // must not depend on how the input rows happened to be arranged
      std::vector<Index> canon(*members);
      std::sort(canon.begin(), canon.end(), [&](Index a, Index b) {
        for (int k = 2; k >= 0; --k)
          if (in.positions(a, k) != in.positions(b, k)) return in.positions(a, k) < in.positions(b, k);
        return a < b;
      });
      Scalar cx = 0, cy = 0, cz = 0;
      for (Index m : canon) {
        cx += in.positions(m, 0);
        cy += in.positions(m, 1);
        cz += in.positions(m, 2);
      }
      const Scalar inv = Scalar(1) / static_cast<Scalar>(canon.size());
      cx *= inv;
      cy *= inv;
      cz *= inv;
      pick = canon[0];
      Scalar best = std::numeric_limits<Scalar>::infinity();
      for (Index m : canon) {
        const Scalar dx = in.positions(m, 0) - cx;
        const Scalar dy = in.positions(m, 1) - cy;
        const Scalar dz = in.positions(m, 2) - cz;
        const Scalar d2 = dx * dx + dy * dy + dz * dz;
        if (d2 < best) {
          best = d2;
          pick = m;
        }
      }
    }
    out.kept_index.push_back(pick);
  }

  const Index m = static_cast<Index>(out.kept_index.size());
  out.cloud.positions = Tensor(m, 3);
  out.cloud.features = Tensor(m, in.feature_width());
  for (Index r = 0; r < m; ++r) {
    const Index src = out.kept_index[r];
    for (int k = 0; k < 3; ++k) out.cloud.positions(r, k) = in.positions(src, k);
    for (Index k = 0; k < in.feature_width(); ++k) out.cloud.features(r, k) = in.features(src, k);
  }
  if (in.has_point_labels()) {
    out.cloud.labels.reserve(m);
    for (Index r = 0; r < m; ++r) out.cloud.labels.push_back(in.labels[out.kept_index[r]]);
  } else {
    out.cloud.labels = in.labels;
  }
  return out;
}

}  // namespace pointagg
