#pragma once

#include <vector>

#include "pointagg/geom/point_cloud.hpp"
#include "pointagg/core/random.hpp"

namespace pointagg {

namespace detail {

inline PointCloud keep_rows(const PointCloud& in, const std::vector<Index>& rows) {
  Tensor pos(static_cast<Index>(rows.size()), 3);
  Tensor feat(static_cast<Index>(rows.size()), in.feature_width());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (Index a = 0; a < 3; ++a) pos(static_cast<Index>(i), a) = in.positions(rows[i], a);
    for (Index c = 0; c < in.feature_width(); ++c)
      feat(static_cast<Index>(i), c) = in.features(rows[i], c);
  }
  PointCloud out(std::move(pos), std::move(feat));
  if (in.has_point_labels()) {
    out.labels.reserve(rows.size());
    for (Index r : rows) out.labels.push_back(in.labels[r]);
  } else {
    out.labels = in.labels;
  }
  return out;
}

}  // namespace detail

// Seeded removal of floor(ratio * n) random points; survivor order is
// preserved so ratio 0 is the identity.
inline PointCloud perturb_missing(const PointCloud& cloud, Scalar ratio, std::uint64_t seed) {
  cloud.validate();
  if (!(ratio >= 0 && ratio < 1)) throw ValidationError("perturb_missing: ratio must be in [0, 1)");
  const Index n = cloud.size();
  const Index n_drop = static_cast<Index>(ratio * static_cast<Scalar>(n));
  if (n - n_drop < 1) throw ValidationError("perturb_missing: would remove every point");
  if (n_drop == 0) return cloud;

  std::vector<Index> order(n);
  for (Index i = 0; i < n; ++i) order[i] = i;
  Rng rng(hash_mix(seed, 0x9155, static_cast<std::uint64_t>(n)));
  for (Index i = 0; i < n_drop; ++i) {
    const Index j = i + static_cast<Index>(rng.uniform_index(static_cast<std::uint64_t>(n - i)));
    std::swap(order[i], order[j]);
  }
  std::vector<bool> dropped(n, false);
  for (Index i = 0; i < n_drop; ++i) dropped[order[i]] = true;
  std::vector<Index> kept;
  kept.reserve(n - n_drop);
  for (Index i = 0; i < n; ++i)
    if (!dropped[i]) kept.push_back(i);
  return detail::keep_rows(cloud, kept);
}

// Appends ceil(ratio * n) points drawn uniformly from the bounding box, each
// borrowing the features of a random existing point. Per-point labels get -1
// so segmentation losses skip them.
inline PointCloud perturb_outliers(const PointCloud& cloud, Scalar ratio, std::uint64_t seed) {
  cloud.validate();
  if (!(ratio >= 0)) throw ValidationError("perturb_outliers: ratio must be non-negative");
  const Index n = cloud.size();
  const Index n_add = static_cast<Index>(std::ceil(ratio * static_cast<Scalar>(n)));
  if (n_add == 0) return cloud;

  Scalar lo[3], hi[3];
  for (Index a = 0; a < 3; ++a) lo[a] = hi[a] = cloud.positions(0, a);
  for (Index i = 1; i < n; ++i)
    for (Index a = 0; a < 3; ++a) {
      lo[a] = std::min(lo[a], cloud.positions(i, a));
      hi[a] = std::max(hi[a], cloud.positions(i, a));
    }

  Rng rng(hash_mix(seed, 0x0071, static_cast<std::uint64_t>(n)));
  Tensor pos(n + n_add, 3);
  Tensor feat(n + n_add, cloud.feature_width());
  for (Index i = 0; i < n; ++i) {
    for (Index a = 0; a < 3; ++a) pos(i, a) = cloud.positions(i, a);
    for (Index c = 0; c < cloud.feature_width(); ++c) feat(i, c) = cloud.features(i, c);
  }
  for (Index i = 0; i < n_add; ++i) {
    for (Index a = 0; a < 3; ++a)
      pos(n + i, a) = static_cast<Scalar>(rng.uniform(lo[a], hi[a]));
    const Index src = static_cast<Index>(rng.uniform_index(static_cast<std::uint64_t>(n)));
    for (Index c = 0; c < cloud.feature_width(); ++c) feat(n + i, c) = cloud.features(src, c);
  }
  PointCloud out(std::move(pos), std::move(feat));
  if (cloud.has_point_labels()) {
    out.labels = cloud.labels;
    out.labels.resize(static_cast<std::size_t>(n + n_add), -1);
  } else {
    out.labels = cloud.labels;
  }
  return out;
}

// Anisotropic scaling (one factor per axis) plus gaussian position noise.
inline PointCloud augment(const PointCloud& cloud, Scalar scale_lo, Scalar scale_hi,
                          Scalar noise_std, std::uint64_t seed) {
  cloud.validate();
  if (!(scale_lo > 0) || !(scale_hi >= scale_lo))
    throw ValidationError("augment: need 0 < scale_lo <= scale_hi");
  if (!(noise_std >= 0)) throw ValidationError("augment: noise_std must be non-negative");

  Rng rng(hash_mix(seed, 0xA06, static_cast<std::uint64_t>(cloud.size())));
  Scalar scale[3];
  for (Index a = 0; a < 3; ++a) scale[a] = static_cast<Scalar>(rng.uniform(scale_lo, scale_hi));

  PointCloud out = cloud;
  for (Index i = 0; i < out.size(); ++i)
    for (Index a = 0; a < 3; ++a) out.positions(i, a) *= scale[a];
  if (noise_std > 0)
    for (Index i = 0; i < out.positions.size(); ++i)
      out.positions[i] += static_cast<Scalar>(rng.normal(0.0, noise_std));
  return out;
}

}  // namespace pointagg
