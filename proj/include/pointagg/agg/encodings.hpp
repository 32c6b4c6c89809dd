#pragma once

#include <cmath>

#include "pointagg/agg/config.hpp"
#include "pointagg/core/tensor.hpp"

namespace pointagg {

// Interleaved sin/cos of the three coordinates at d/6 wavelengths:
// group m = [sin(100x/L), cos(100x/L), sin(100y/L), cos(100y/L),
//            sin(100z/L), cos(100z/L)] with L = 1000^(6m/d).
inline Tensor sinusoidal_embedding(const Tensor& dp, Index d) {
  if (d % 6 != 0) throw ConfigError("sinusoidal_embedding needs d divisible by 6");
  if (dp.cols() != 3) throw DimensionError("sinusoidal_embedding expects [E x 3] input");
  const Index E = dp.rows();
  const Index groups = d / 6;
  Tensor out(E, d);
  for (Index m = 0; m < groups; ++m) {
    const double lambda = std::pow(1000.0, 6.0 * static_cast<double>(m) / static_cast<double>(d));
    const Scalar scale = static_cast<Scalar>(100.0 / lambda);
    for (Index e = 0; e < E; ++e)
      for (int k = 0; k < 3; ++k) {
        const Scalar a = scale * dp(e, k);
        out(e, m * 6 + 2 * k) = std::sin(a);
        out(e, m * 6 + 2 * k + 1) = std::cos(a);
      }
  }
  return out;
}

// The scalar encoding lists of the position-pooling variants, in declaration
// order. Angle components are zero on zero-length offsets.
inline std::pair<Tensor, Index> encoding_variants(const Tensor& dp, VariantKind kind) {
  if (dp.cols() != 3) throw DimensionError("encoding_variants expects [E x 3] input");
  const Index g = variant_group_count(kind);
  const Index E = dp.rows();
  Tensor enc(E, g);
  for (Index e = 0; e < E; ++e) {
    const Scalar x = dp(e, 0), y = dp(e, 1), z = dp(e, 2);
    const Scalar d2 = x * x + y * y + z * z;
    const Scalar d = std::sqrt(d2);
    Scalar* row = enc.data() + e * g;
    switch (kind) {
      case VariantKind::ThirdOrder:
        row[9] = x * y * y;
        row[10] = x * z * z;
        row[11] = y * z * z;
        row[12] = x * x * y;
        row[13] = x * x * z;
        row[14] = y * y * z;
        row[15] = x * x * x;
        row[16] = y * y * y;
        row[17] = z * z * z;
        [[fallthrough]];
      case VariantKind::SecondOrder:
        row[0] = x;
        row[1] = y;
        row[2] = z;
        row[3] = x * x;
        row[4] = y * y;
        row[5] = z * z;
        row[6] = x * y;
        row[7] = x * z;
        row[8] = y * z;
        break;
      case VariantKind::AngleDistance:
        row[0] = d;
        row[1] = d > 0 ? x / d : Scalar(0);
        row[2] = d > 0 ? y / d : Scalar(0);
        row[3] = d > 0 ? z / d : Scalar(0);
        break;
      case VariantKind::AngleGauss:
        row[0] = std::exp(-d2);
        row[1] = d > 0 ? x / d : Scalar(0);
        row[2] = d > 0 ? y / d : Scalar(0);
        row[3] = d > 0 ? z / d : Scalar(0);
        break;
      case VariantKind::AngleOnly:
        row[0] = d > 0 ? x / d : Scalar(0);
        row[1] = d > 0 ? y / d : Scalar(0);
        row[2] = d > 0 ? z / d : Scalar(0);
        break;
      case VariantKind::DistOnly:
        row[0] = d;
        break;
      case VariantKind::GaussDistOnly:
        row[0] = std::exp(-d2);
        break;
    }
  }
  return {std::move(enc), g};
}

}  // namespace pointagg
