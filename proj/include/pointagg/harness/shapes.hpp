#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "pointagg/geom/point_cloud.hpp"
#include "pointagg/core/random.hpp"

namespace pointagg {

enum class ShapeKind { Sphere, Cube, Cylinder, Torus };

inline const char* shape_name(ShapeKind k) {
  switch (k) {
    case ShapeKind::Sphere: return "sphere";
    case ShapeKind::Cube: return "cube";
    case ShapeKind::Cylinder: return "cylinder";
    case ShapeKind::Torus: return "torus";
  }
  return "?";
}

inline ShapeKind shape_from_name(const std::string& s) {
  for (ShapeKind k : {ShapeKind::Sphere, ShapeKind::Cube, ShapeKind::Cylinder, ShapeKind::Torus})
    if (s == shape_name(k)) return k;
  throw ValidationError("unknown shape: " + s);
}

struct SyntheticShapeSpec {
  std::vector<ShapeKind> classes{ShapeKind::Sphere, ShapeKind::Cube, ShapeKind::Cylinder,
                                 ShapeKind::Torus};
  Index points = 512;
  Index samples_per_class = 50;
  Scalar jitter = 0.01;
  std::uint64_t seed = 1;

  void validate(bool for_classification = true) const {
    if (for_classification && classes.size() < 2)
      throw ValidationError("classification needs at least 2 shape classes");
    if (classes.empty()) throw ValidationError("shape class list is empty");
    if (points < 128) throw ValidationError("clouds need at least 128 points");
    if (samples_per_class < 1) throw ValidationError("samples_per_class must be at least 1");
    if (!(jitter >= 0)) throw ValidationError("jitter must be non-negative");
  }
};

namespace detail {

inline void sample_surface_point(ShapeKind kind, Rng& rng, Scalar* p) {
  switch (kind) {
    case ShapeKind::Sphere: {
      double x = rng.normal(), y = rng.normal(), z = rng.normal();
      double n = std::sqrt(x * x + y * y + z * z);
      while (n < 1e-9) {
        x = rng.normal(), y = rng.normal(), z = rng.normal();
        n = std::sqrt(x * x + y * y + z * z);
      }
      p[0] = static_cast<Scalar>(x / n);
      p[1] = static_cast<Scalar>(y / n);
      p[2] = static_cast<Scalar>(z / n);
      return;
    }
    case ShapeKind::Cube: {
      const std::uint64_t face = rng.uniform_index(6);
      const Scalar u = static_cast<Scalar>(rng.uniform(-1.0, 1.0));
      const Scalar v = static_cast<Scalar>(rng.uniform(-1.0, 1.0));
      const Scalar s = face % 2 == 0 ? Scalar(-1) : Scalar(1);
      switch (face / 2) {
        case 0: p[0] = s, p[1] = u, p[2] = v; break;
        case 1: p[0] = u, p[1] = s, p[2] = v; break;
        default: p[0] = u, p[1] = v, p[2] = s; break;
      }
      return;
    }
    case ShapeKind::Cylinder: {
      // radius 0.6, height 2; pick side vs caps by surface area
      const double r = 0.6, kPi = 3.14159265358979323846;
      const double side = 2.0 * kPi * r * 2.0, caps = 2.0 * kPi * r * r;
      if (rng.uniform() * (side + caps) < side) {
        const double t = rng.uniform() * 2.0 * kPi;
        p[0] = static_cast<Scalar>(r * std::cos(t));
        p[1] = static_cast<Scalar>(r * std::sin(t));
        p[2] = static_cast<Scalar>(rng.uniform(-1.0, 1.0));
      } else {
        const double t = rng.uniform() * 2.0 * kPi;
        const double rho = r * std::sqrt(rng.uniform());
        p[0] = static_cast<Scalar>(rho * std::cos(t));
        p[1] = static_cast<Scalar>(rho * std::sin(t));
        p[2] = rng.uniform() < 0.5 ? Scalar(-1) : Scalar(1);
      }
      return;
    }
    case ShapeKind::Torus: {
      // major radius 0.75, tube radius 0.3; the tube angle needs density
      // proportional to (R + r cos phi), done by rejection
      const double R = 0.75, r = 0.3, kPi = 3.14159265358979323846;
      const double theta = rng.uniform() * 2.0 * kPi;
      double phi = rng.uniform() * 2.0 * kPi;
      while (rng.uniform() > (R + r * std::cos(phi)) / (R + r)) phi = rng.uniform() * 2.0 * kPi;
      const double ring = R + r * std::cos(phi);
      p[0] = static_cast<Scalar>(ring * std::cos(theta));
      p[1] = static_cast<Scalar>(ring * std::sin(theta));
      p[2] = static_cast<Scalar>(r * std::sin(phi));
      return;
    }
  }
  throw ValidationError("unknown shape kind");
}

}  // namespace detail

// Center on the centroid, then scale the farthest point onto the unit sphere.
inline void unit_normalize(Tensor& pos) {
  const Index n = pos.rows();
  if (n < 1) throw DegenerateInputError("unit_normalize: empty positions");
  Scalar cx = 0, cy = 0, cz = 0;
  for (Index i = 0; i < n; ++i) cx += pos(i, 0), cy += pos(i, 1), cz += pos(i, 2);
  cx /= static_cast<Scalar>(n), cy /= static_cast<Scalar>(n), cz /= static_cast<Scalar>(n);
  Scalar max2 = 0;
  for (Index i = 0; i < n; ++i) {
    pos(i, 0) -= cx, pos(i, 1) -= cy, pos(i, 2) -= cz;
    max2 = std::max(max2, pos(i, 0) * pos(i, 0) + pos(i, 1) * pos(i, 1) + pos(i, 2) * pos(i, 2));
  }
  if (max2 <= 0) return;  // all points coincide; nothing to scale
  const Scalar inv = Scalar(1) / std::sqrt(max2);
  for (Index i = 0; i < n * 3; ++i) pos[i] *= inv;
}

inline Tensor sample_shape_surface(ShapeKind kind, Index n, Rng& rng, Scalar jitter = 0) {
  Tensor pos(n, 3);
  for (Index i = 0; i < n; ++i) detail::sample_surface_point(kind, rng, &pos[i * 3]);
  if (jitter > 0)
    for (Index i = 0; i < pos.size(); ++i) pos[i] += static_cast<Scalar>(rng.normal(0.0, jitter));
  return pos;
}

// One cloud per (class, sample) pair in class-major order, each labeled with
// its class index and normalized into the unit ball. The normalized
// coordinates double as the input features: batch statistics need per-point
// variation, and a constant input column starves every batchnorm ahead of
// the first aggregation layer.
inline std::vector<PointCloud> synth_classification_dataset(const SyntheticShapeSpec& spec) {
  spec.validate(true);
  std::vector<PointCloud> out;
  out.reserve(spec.classes.size() * static_cast<std::size_t>(spec.samples_per_class));
  for (std::size_t c = 0; c < spec.classes.size(); ++c) {
    for (Index s = 0; s < spec.samples_per_class; ++s) {
      Rng rng(hash_mix(spec.seed, c, static_cast<std::uint64_t>(s)));
      Tensor pos = sample_shape_surface(spec.classes[c], spec.points, rng, spec.jitter);
      unit_normalize(pos);
      PointCloud cloud(std::move(pos));
      cloud.features = cloud.positions;
      cloud.labels = {static_cast<int>(c)};
      out.push_back(std::move(cloud));
    }
  }
  return out;
}

// Two shapes side by side per scene; every point is labeled by the slot of
// the shape it was sampled from.
inline std::vector<PointCloud> synth_segmentation_dataset(const SyntheticShapeSpec& spec) {
  spec.validate(false);
  std::vector<PointCloud> out;
  out.reserve(spec.samples_per_class);
  const std::size_t k = spec.classes.size();
  for (Index s = 0; s < spec.samples_per_class; ++s) {
    Rng rng(hash_mix(spec.seed, 0xC0DE, static_cast<std::uint64_t>(s)));
    const ShapeKind left = spec.classes[s % k];
    const ShapeKind right = spec.classes[(s + 1) % k];
    const Index n_left = spec.points / 2;
    const Index n_right = spec.points - n_left;
    Tensor pos(spec.points, 3);
    std::vector<int> labels(spec.points);
    for (Index i = 0; i < spec.points; ++i) {
      const bool first = i < n_left;
      detail::sample_surface_point(first ? left : right, rng, &pos[i * 3]);
      for (int a = 0; a < 3; ++a) pos[i * 3 + a] *= Scalar(0.5);
      pos[i * 3] += first ? Scalar(-0.6) : Scalar(0.6);
      labels[i] = first ? 0 : 1;
    }
    if (spec.jitter > 0)
      for (Index i = 0; i < pos.size(); ++i) pos[i] += static_cast<Scalar>(rng.normal(0.0, spec.jitter));
    unit_normalize(pos);
    PointCloud cloud(std::move(pos));
    cloud.features = cloud.positions;
    cloud.labels = std::move(labels);
    out.push_back(std::move(cloud));
  }
  return out;
}

}  // namespace pointagg
