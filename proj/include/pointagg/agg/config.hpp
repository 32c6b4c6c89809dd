#pragma once

#include <string>

#include "pointagg/core/errors.hpp"
#include "pointagg/core/ops.hpp"

namespace pointagg {

enum class Family {
  Identity,
  Pool,
  PointwiseMLP,
  PseudoGrid,
  AdaptiveWeight,
  PosPool,
  PosPoolEmbed,
  PosPoolVariant,
};

// Per-edge input assembled for the pointwise MLP (and the weight MLP of the
// adaptive family). DP_STAR is the 9-vector [dp, p_i, p_j].
enum class InputMode { DP, DF, DP_DF, DP_F_DF, DP_STAR };

enum class VariantKind {
  SecondOrder,
  ThirdOrder,
  AngleDistance,
  AngleGauss,
  AngleOnly,
  DistOnly,
  GaussDistOnly,
};

inline Index variant_group_count(VariantKind kind) {
  switch (kind) {
    case VariantKind::SecondOrder: return 9;
    case VariantKind::ThirdOrder: return 18;
    case VariantKind::AngleDistance: return 4;
    case VariantKind::AngleGauss: return 4;
    case VariantKind::AngleOnly: return 3;
    case VariantKind::DistOnly: return 1;
    case VariantKind::GaussDistOnly: return 1;
  }
  throw ConfigError("unknown variant kind");
}

// Width of the per-edge vector fed to the family's MLP. The pointwise MLP
// transforms features, so DP mode includes f_j; the adaptive-weight branch
// predicts weights from geometry alone, so its DP input is just the offset.
inline Index input_mode_width(Family family, InputMode mode, Index d) {
  switch (mode) {
    case InputMode::DP: return family == Family::PointwiseMLP ? d + 3 : 3;
    case InputMode::DF: return 2 * d;
    case InputMode::DP_DF: return 2 * d + 3;
    case InputMode::DP_F_DF: return 3 * d + 3;
    case InputMode::DP_STAR: return 9;
  }
  throw ConfigError("unknown input mode");
}

inline const char* family_name(Family f) {
  switch (f) {
    case Family::Identity: return "identity";
    case Family::Pool: return "pool";
    case Family::PointwiseMLP: return "pointwise_mlp";
    case Family::PseudoGrid: return "pseudo_grid";
    case Family::AdaptiveWeight: return "adaptive_weight";
    case Family::PosPool: return "pospool";
    case Family::PosPoolEmbed: return "pospool_embed";
    case Family::PosPoolVariant: return "pospool_variant";
  }
  return "?";
}

struct AggregatorConfig {
  Family family = Family::PosPool;
  Reduction reduction = Reduction::AVG;
  Index fc_count = 1;  // h
  InputMode input_mode = InputMode::DP_DF;
  bool softmax_normalize = false;
  VariantKind variant_kind = VariantKind::SecondOrder;
  Index kernel_points = 15;  // M
  Scalar sigma = 0;          // <= 0 resolves to 0.3 x ball radius
  Index channels = 0;        // d, filled in by the owner of the layer
  bool mlp_fast_path = true; // h == 1, DP only; numerically equal either way

  // Sweet-spot defaults per family, everything else left to the caller.
  static AggregatorConfig defaults(Family f) {
    AggregatorConfig c;
    c.family = f;
    switch (f) {
      case Family::Identity:
      case Family::Pool:
        c.reduction = Reduction::MAX;
        break;
      case Family::PointwiseMLP:
        c.reduction = Reduction::MAX;
        c.input_mode = InputMode::DP_DF;
        c.fc_count = 1;
        break;
      case Family::PseudoGrid:
        c.reduction = Reduction::SUM;
        c.kernel_points = 15;
        break;
      case Family::AdaptiveWeight:
        c.reduction = Reduction::AVG;
        c.input_mode = InputMode::DP;
        c.fc_count = 1;
        break;
      case Family::PosPool:
      case Family::PosPoolEmbed:
      case Family::PosPoolVariant:
        c.reduction = Reduction::AVG;
        break;
    }
    return c;
  }

  void validate() const {
    if (channels < 1) throw ConfigError("aggregator channels must be at least 1");
    switch (family) {
      case Family::Identity:
      case Family::Pool:
        break;
      case Family::PointwiseMLP:
        if (fc_count < 1) throw ConfigError("pointwise_mlp needs fc_count >= 1");
        if (fc_count >= 2 && channels % 2 != 0)
          throw ConfigError("pointwise_mlp with fc_count >= 2 needs even channels");
        break;
      case Family::PseudoGrid:
        if (kernel_points < 1) throw ConfigError("pseudo_grid needs kernel_points >= 1");
        if (reduction != Reduction::SUM)
          throw ConfigError("pseudo_grid aggregates by summation; set reduction = sum");
        break;
      case Family::AdaptiveWeight:
        if (fc_count < 1) throw ConfigError("adaptive_weight needs fc_count >= 1");
        if (fc_count >= 2 && channels % 2 != 0)
          throw ConfigError("adaptive_weight with fc_count >= 2 needs even channels");
        if (input_mode == InputMode::DP_F_DF)
          throw ConfigError("adaptive_weight does not accept the dp_f_df input mode");
        break;
      case Family::PosPool:
        if (channels % 3 != 0) throw ConfigError("pospool needs channels divisible by 3");
        break;
      case Family::PosPoolEmbed:
        if (channels % 6 != 0) throw ConfigError("pospool_embed needs channels divisible by 6");
        break;
      case Family::PosPoolVariant: {
        const Index g = variant_group_count(variant_kind);
        if (channels % g != 0)
          throw ConfigError("pospool_variant needs channels divisible by g = " + std::to_string(g));
        break;
      }
    }
  }
};

}  // namespace pointagg
