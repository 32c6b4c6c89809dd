// Walk through the five-resolution geometry pipeline for a single cloud:
// grid subsampling, ball neighborhoods within and across stages, and the
// upsampling links the segmentation decoder follows back to full resolution.
#include <cstdio>

#include "pointagg/geom/pyramid.hpp"
#include "pointagg/harness/shapes.hpp"

using namespace pointagg;

int main() {
  SyntheticShapeSpec spec;
  spec.classes = {ShapeKind::Torus, ShapeKind::Cube};
  spec.points = 512;
  spec.samples_per_class = 1;
  spec.seed = 3;
  const PointCloud cloud = synth_classification_dataset(spec)[0];

  const StagePyramid pyr = build_pyramid(cloud, Scalar(0.15), 11, 24, SubsampleMode::Centroid);

  std::printf("input: %lld points on a torus, unit-normalized\n\n",
              static_cast<long long>(cloud.size()));
  std::printf("%-6s %8s %10s %10s %12s %12s\n", "stage", "points", "grid", "radius", "intra_edges",
              "avg_degree");
  for (int s = 0; s < kStages; ++s) {
    const Index pts = pyr.clouds[s].size();
    const Index edges = pyr.intra_graphs[s].edge_count();
    std::printf("%-6d %8lld %10.3f %10.3f %12lld %12.1f\n", s + 1, static_cast<long long>(pts),
                pyr.grid_sizes[s], pyr.radii[s], static_cast<long long>(edges),
                pts ? double(edges) / double(pts) : 0.0);
  }

  std::printf("\ndownsampling links (coarse queries over finer supports):\n");
  for (int s = 0; s + 1 < kStages; ++s)
    std::printf("  stage %d -> %d: %lld edges\n", s + 1, s + 2,
                static_cast<long long>(pyr.down_graphs[s].edge_count()));

  std::printf("\nupsampling links (one nearest coarse point per fine point):\n");
  for (int s = 0; s + 1 < kStages; ++s)
    std::printf("  stage %d <- %d: %zu links\n", s + 1, s + 2, pyr.up_links[s].size());

  std::printf("\nthe finest stage keeps %lld of the input points (first kept index %lld)\n",
              static_cast<long long>(pyr.clouds[0].size()),
              pyr.input_kept.empty() ? -1LL : static_cast<long long>(pyr.input_kept[0]));
  return 0;
}
