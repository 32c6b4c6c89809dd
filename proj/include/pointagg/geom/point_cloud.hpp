#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "pointagg/core/errors.hpp"
#include "pointagg/core/tensor.hpp"

namespace pointagg {

// Points with row-aligned features. Features always have at least one
// column; clouds without measured attributes carry a constant-1 column.
// labels is empty, one entry (whole-cloud label) or one entry per point.
struct PointCloud {
  Tensor positions;  // [n x 3]
  Tensor features;   // [n x c]
  std::vector<int> labels;

  PointCloud() = default;

  explicit PointCloud(Tensor pos) : positions(std::move(pos)) {
    features = Tensor(positions.rows(), 1);
    features.fill(Scalar(1));
  }

  PointCloud(Tensor pos, Tensor feat) : positions(std::move(pos)), features(std::move(feat)) {}

  Index size() const { return positions.rows(); }
  Index feature_width() const { return features.cols(); }

  bool has_point_labels() const { return static_cast<Index>(labels.size()) == size() && size() > 0; }

  int cloud_label() const {
    if (labels.empty()) throw ValidationError("cloud has no label");
    return labels[0];
  }

  void validate() const {
    if (size() < 1) throw DegenerateInputError("point cloud is empty");
    if (positions.cols() != 3) throw DimensionError("positions must have 3 columns");
    if (features.rows() != size()) throw DimensionError("features not row-aligned with positions");
    if (feature_width() < 1) throw DimensionError("feature width must be at least 1");
    if (!positions.all_finite() || !features.all_finite())
      throw NumericError("point cloud contains non-finite values");
    if (!labels.empty() && static_cast<Index>(labels.size()) != 1 &&
        static_cast<Index>(labels.size()) != size())
      throw DimensionError("labels must be empty, scalar, or per-point");
  }
};

// Text format: one point per line, `x y z [f1 ... fc] [label]`, columns
// fixed per file, `#` starts a comment.
inline PointCloud load_cloud_text(const std::string& path, Index feature_width, bool has_labels) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path);
  std::vector<Scalar> pos, feat;
  std::vector<int> labels;
  const Index want = 3 + feature_width + (has_labels ? 1 : 0);
  std::string line;
  Index lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    std::vector<double> vals;
    double v;
    while (ls >> v) vals.push_back(v);
    if (vals.empty()) continue;
    if (static_cast<Index>(vals.size()) != want)
      throw ValidationError(path + ":" + std::to_string(lineno) + ": expected " + std::to_string(want) +
                            " columns, got " + std::to_string(vals.size()));
    for (double x : vals)
      if (!std::isfinite(x))
        throw ValidationError(path + ":" + std::to_string(lineno) + ": non-finite value");
    for (int k = 0; k < 3; ++k) pos.push_back(static_cast<Scalar>(vals[k]));
    for (Index k = 0; k < feature_width; ++k) feat.push_back(static_cast<Scalar>(vals[3 + k]));
    if (has_labels) {
      const double lab = vals[want - 1];
      if (lab != std::floor(lab)) throw ValidationError(path + ": label must be integral");
      labels.push_back(static_cast<int>(lab));
    }
  }
  const Index n = static_cast<Index>(pos.size()) / 3;
  if (n == 0) throw DegenerateInputError(path + ": no points");
  PointCloud cloud;
  cloud.positions = Tensor(n, 3);
  std::copy(pos.begin(), pos.end(), cloud.positions.data());
  if (feature_width > 0) {
    cloud.features = Tensor(n, feature_width);
    std::copy(feat.begin(), feat.end(), cloud.features.data());
  } else {
    cloud.features = Tensor(n, 1);
    cloud.features.fill(Scalar(1));
  }
  cloud.labels = std::move(labels);
  cloud.validate();
  return cloud;
}

inline void save_cloud_text(const PointCloud& cloud, const std::string& path, bool write_features = true) {
  cloud.validate();
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write " + path);
  char buf[64];
  for (Index i = 0; i < cloud.size(); ++i) {
    std::string line;
    for (Index k = 0; k < 3; ++k) {
      std::snprintf(buf, sizeof buf, "%.9g", static_cast<double>(cloud.positions(i, k)));
      line += buf;
      line += ' ';
    }
    if (write_features)
      for (Index k = 0; k < cloud.feature_width(); ++k) {
        std::snprintf(buf, sizeof buf, "%.9g", static_cast<double>(cloud.features(i, k)));
        line += buf;
        line += ' ';
      }
    if (cloud.has_point_labels()) {
      line += std::to_string(cloud.labels[i]);
      line += ' ';
    }
    line.pop_back();
    out << line << '\n';
  }
}

// Binary format: magic "PCB1", u32 n, u32 c, u8 has_labels, then n rows of
// (3 + c + has_labels) little-endian f32 values; labels stored as f32.
inline void save_cloud_binary(const PointCloud& cloud, const std::string& path) {
  cloud.validate();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write " + path);
  out.write("PCB1", 4);
  const std::uint32_t n = static_cast<std::uint32_t>(cloud.size());
  const std::uint32_t c = static_cast<std::uint32_t>(cloud.feature_width());
  const std::uint8_t has_labels = cloud.has_point_labels() ? 1 : 0;
  out.write(reinterpret_cast<const char*>(&n), 4);
  out.write(reinterpret_cast<const char*>(&c), 4);
  out.write(reinterpret_cast<const char*>(&has_labels), 1);
  for (Index i = 0; i < cloud.size(); ++i) {
    float row[3];
    for (int k = 0; k < 3; ++k) row[k] = static_cast<float>(cloud.positions(i, k));
    out.write(reinterpret_cast<const char*>(row), 12);
    for (Index k = 0; k < cloud.feature_width(); ++k) {
      const float f = static_cast<float>(cloud.features(i, k));
      out.write(reinterpret_cast<const char*>(&f), 4);
    }
    if (has_labels) {
      const float lab = static_cast<float>(cloud.labels[i]);
      out.write(reinterpret_cast<const char*>(&lab), 4);
    }
  }
}

inline PointCloud load_cloud_binary(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "PCB1", 4) != 0) throw ValidationError(path + ": bad magic");
  std::uint32_t n = 0, c = 0;
  std::uint8_t has_labels = 0;
  in.read(reinterpret_cast<char*>(&n), 4);
  in.read(reinterpret_cast<char*>(&c), 4);
  in.read(reinterpret_cast<char*>(&has_labels), 1);
  if (!in || n == 0) throw ValidationError(path + ": bad header");
  PointCloud cloud;
  cloud.positions = Tensor(static_cast<Index>(n), 3);
  cloud.features = Tensor(static_cast<Index>(n), std::max<Index>(1, static_cast<Index>(c)));
  if (c == 0) cloud.features.fill(Scalar(1));
  for (std::uint32_t i = 0; i < n; ++i) {
    float row[3];
    in.read(reinterpret_cast<char*>(row), 12);
    for (int k = 0; k < 3; ++k) cloud.positions(i, k) = static_cast<Scalar>(row[k]);
    for (std::uint32_t k = 0; k < c; ++k) {
      float f;
      in.read(reinterpret_cast<char*>(&f), 4);
      cloud.features(i, static_cast<Index>(k)) = static_cast<Scalar>(f);
    }
    if (has_labels) {
      float lab;
      in.read(reinterpret_cast<char*>(&lab), 4);
      if (lab != std::floor(lab)) throw ValidationError(path + ": label must be integral");
      cloud.labels.push_back(static_cast<int>(lab));
    }
  }
  if (!in) throw ValidationError(path + ": truncated file");
  cloud.validate();
  return cloud;
}

}  // namespace pointagg
