#pragma once

#include <array>
#include <string>

#include "pointagg/geom/neighborhood.hpp"

namespace pointagg {

inline constexpr int kStages = 5;

// Five resolutions of one cloud plus every graph the encoder needs. Grid
// size doubles per stage and the ball radius is 2.5x the grid size.
// Relative positions and edge owners are precomputed once per graph since
// every forward pass reuses them.
struct StagePyramid {
  std::array<PointCloud, kStages> clouds;
  std::array<NeighborGraph, kStages> intra_graphs;
  std::array<NeighborGraph, kStages - 1> down_graphs;  // queries at s+1, support at s
  std::array<std::vector<Index>, kStages - 1> up_links;  // stage-s point -> nearest stage-(s+1) point
  std::array<Scalar, kStages> grid_sizes{};
  std::array<Scalar, kStages> radii{};

  std::vector<Index> input_kept;                             // Res1 row -> input row
  std::array<std::vector<Index>, kStages - 1> kept_indices;  // stage-(s+1) row -> stage-s row
  std::array<Tensor, kStages> intra_dp;
  std::array<Tensor, kStages - 1> down_dp;
  std::array<std::vector<Index>, kStages> intra_owners;
  std::array<std::vector<Index>, kStages - 1> down_owners;
};

inline StagePyramid build_pyramid(const PointCloud& cloud, Scalar base_grid, std::uint64_t seed,
                                  Index k_max = 64, SubsampleMode mode = SubsampleMode::Random) {
  cloud.validate();
  if (!(base_grid > 0)) throw ValidationError("build_pyramid: base_grid must be positive");
  if (k_max < 1) throw ValidationError("build_pyramid: k_max must be at least 1");

  StagePyramid p;
  for (int s = 0; s < kStages; ++s) {
    p.grid_sizes[s] = base_grid * static_cast<Scalar>(std::int64_t(1) << s);
    p.radii[s] = Scalar(2.5) * p.grid_sizes[s];
  }

  auto res1 = grid_subsample(cloud, p.grid_sizes[0], seed, mode);
  p.clouds[0] = std::move(res1.cloud);
  p.input_kept = std::move(res1.kept_index);
  for (int s = 1; s < kStages; ++s) {
    auto next = grid_subsample(p.clouds[s - 1], p.grid_sizes[s], seed + static_cast<std::uint64_t>(s), mode);
    if (next.cloud.size() < 1)
      throw DegenerateInputError("build_pyramid: stage " + std::to_string(s + 1) + " is empty");
    p.clouds[s] = std::move(next.cloud);
    p.kept_indices[s - 1] = std::move(next.kept_index);
  }

  for (int s = 0; s < kStages; ++s) {
    p.intra_graphs[s] = build_ball_neighborhoods(p.clouds[s], p.clouds[s], p.radii[s], k_max);
    p.intra_graphs[s].self_support = true;
    p.intra_dp[s] = relative_positions(p.intra_graphs[s], p.clouds[s], p.clouds[s]);
    p.intra_owners[s] = p.intra_graphs[s].owners();
  }
  for (int s = 0; s < kStages - 1; ++s) {
    p.down_graphs[s] = build_ball_neighborhoods(p.clouds[s + 1], p.clouds[s], p.radii[s], k_max);
    p.down_dp[s] = relative_positions(p.down_graphs[s], p.clouds[s + 1], p.clouds[s]);
    p.down_owners[s] = p.down_graphs[s].owners();

    // nearest coarse point for each fine point: if any coarse point lies in
    // the ball, the nearest-first slice head is the global nearest; otherwise
    // the fallback already returned it
    NeighborGraph up = build_ball_neighborhoods(p.clouds[s], p.clouds[s + 1], p.radii[s + 1], 1);
    p.up_links[s].resize(up.n_query);
    for (Index q = 0; q < up.n_query; ++q) p.up_links[s][q] = up.neighbor_index[up.offsets[q]];
  }
  return p;
}

}  // namespace pointagg
