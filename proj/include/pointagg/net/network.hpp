#pragma once

#include <array>
#include <string>
#include <vector>

#include "pointagg/agg/operators.hpp"
#include "pointagg/geom/pyramid.hpp"

namespace pointagg {

enum class Head { Classification, Segmentation };

struct NetworkConfig {
  Index base_width = 36;       // C, the stage-1 feature width
  Index bottleneck_ratio = 2;  // gamma
  Index block_repeat = 0;      // N_r; every stage stacks N_r + 1 bottlenecks
  Index num_classes = 2;
  Head head = Head::Classification;
  AggregatorConfig aggregator;      // template; channels filled per block
  Index input_feature_width = 1;
  Scalar base_radius = 0;           // stage-1 ball radius, doubles per stage

  Index stage_width(int s) const { return base_width << s; }
  Scalar stage_radius(int s) const {
    return base_radius * static_cast<Scalar>(std::int64_t(1) << s);
  }

  void validate() const {
    if (base_width < 1) throw ConfigError("base_width must be at least 1");
    if (bottleneck_ratio < 1) throw ConfigError("bottleneck_ratio must be at least 1");
    if (block_repeat < 0) throw ConfigError("block_repeat must be non-negative");
    if (num_classes < 2) throw ConfigError("num_classes must be at least 2");
    if (input_feature_width < 1) throw ConfigError("input_feature_width must be at least 1");
    if (aggregator.family == Family::PseudoGrid && !(base_radius > 0))
      throw ConfigError("pseudo_grid networks need a positive base_radius");
    for (int s = 0; s < kStages; ++s) {
      const Index w = stage_width(s);
      if (w % bottleneck_ratio != 0)
        throw ConfigError("stage width " + std::to_string(w) +
                          " is not divisible by the bottleneck ratio");
      AggregatorConfig trial = aggregator;
      trial.channels = w / bottleneck_ratio;
      trial.validate();  // group divisibility at the width the aggregator sees
    }
  }
};

// reduce 1x1 -> BN -> ReLU -> aggregate -> BN -> ReLU -> expand 1x1,
// plus the residual shortcut (projected when widths differ).
struct BottleneckBlock {
  LinearLayer reduce, expand;
  BatchNormLayer bn1, bn2;
  AggregatorConfig agg_cfg;
  AggregatorParams agg;
  LinearLayer project;  // weight null unless in/out widths differ
};

// Same composition, but the aggregation runs over the down graph so queries
// live one stage coarser; the shortcut average-pools over that graph.
struct StridedBlock {
  LinearLayer reduce, expand, shortcut;
  BatchNormLayer bn1, bn2;
  AggregatorConfig agg_cfg;
  AggregatorParams agg;
};

struct DecoderUnit {
  LinearLayer fc;  // concat(upsampled, skip) -> stage width
  BatchNormLayer bn;
};

struct Network {
  NetworkConfig cfg;
  LinearLayer stem;
  BatchNormLayer stem_bn;
  std::array<std::vector<BottleneckBlock>, kStages> stage_blocks;
  std::array<StridedBlock, kStages - 1> strided;
  std::vector<LinearLayer> head_fcs;       // classification head
  std::vector<BatchNormLayer> head_bns;
  std::array<DecoderUnit, kStages - 1> decoder;  // segmentation path
  LinearLayer seg_out;
  ParamStore params;
};

namespace detail {

inline BottleneckBlock make_bottleneck(const NetworkConfig& cfg, int stage, Rng& rng) {
  BottleneckBlock b;
  const Index d = cfg.stage_width(stage);
  const Index mid = d / cfg.bottleneck_ratio;
  b.reduce = LinearLayer(d, mid, true);
  b.reduce.he_init(rng);
  b.expand = LinearLayer(mid, d, true);
  b.expand.he_init(rng);
  b.bn1 = BatchNormLayer(mid);
  b.bn2 = BatchNormLayer(mid);
  b.agg_cfg = cfg.aggregator;
  b.agg_cfg.channels = mid;
  b.agg = make_aggregator_params(b.agg_cfg, cfg.stage_radius(stage), rng.next_u64(), rng);
  return b;
}

inline StridedBlock make_strided(const NetworkConfig& cfg, int fine_stage, Rng& rng) {
  StridedBlock b;
  const Index d_in = cfg.stage_width(fine_stage);
  const Index d_out = cfg.stage_width(fine_stage + 1);
  const Index mid = d_out / cfg.bottleneck_ratio;
  b.reduce = LinearLayer(d_in, mid, true);
  b.reduce.he_init(rng);
  b.expand = LinearLayer(mid, d_out, true);
  b.expand.he_init(rng);
  b.shortcut = LinearLayer(d_in, d_out, true);
  b.shortcut.he_init(rng);
  b.bn1 = BatchNormLayer(mid);
  b.bn2 = BatchNormLayer(mid);
  b.agg_cfg = cfg.aggregator;
  b.agg_cfg.channels = mid;
  b.agg = make_aggregator_params(b.agg_cfg, cfg.stage_radius(fine_stage + 1), rng.next_u64(), rng);
  return b;
}

inline void register_bottleneck(ParamStore& store, const std::string& prefix, BottleneckBlock& b) {
  store.add(prefix + ".reduce", b.reduce);
  store.add(prefix + ".bn1", b.bn1);
  register_aggregator_params(store, prefix + ".agg", b.agg);
  store.add(prefix + ".bn2", b.bn2);
  store.add(prefix + ".expand", b.expand);
  if (b.project.weight) store.add(prefix + ".project", b.project);
}

inline void register_strided(ParamStore& store, const std::string& prefix, StridedBlock& b) {
  store.add(prefix + ".reduce", b.reduce);
  store.add(prefix + ".bn1", b.bn1);
  register_aggregator_params(store, prefix + ".agg", b.agg);
  store.add(prefix + ".bn2", b.bn2);
  store.add(prefix + ".expand", b.expand);
  store.add(prefix + ".shortcut", b.shortcut);
}

}  // namespace detail

inline Network build_network(const NetworkConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Network net;
  net.cfg = cfg;
  Rng rng(seed);

  net.stem = LinearLayer(cfg.input_feature_width, cfg.base_width, true);
  net.stem.he_init(rng);
  net.stem_bn = BatchNormLayer(cfg.base_width);
  net.params.add("stem", net.stem);
  net.params.add("stem_bn", net.stem_bn);

  for (int s = 0; s < kStages; ++s) {
    const std::string sp = "s" + std::to_string(s + 1);
    if (s > 0) {
      net.strided[s - 1] = detail::make_strided(cfg, s - 1, rng);
      detail::register_strided(net.params, sp + ".strided", net.strided[s - 1]);
    }
    for (Index r = 0; r <= cfg.block_repeat; ++r) {
      net.stage_blocks[s].push_back(detail::make_bottleneck(cfg, s, rng));
      detail::register_bottleneck(net.params, sp + ".b" + std::to_string(r),
                                  net.stage_blocks[s].back());
    }
  }

  const Index top = cfg.stage_width(kStages - 1);  // 16C
  const std::array<Index, 4> head_out{top, top / 2, top / 4, cfg.num_classes};
  Index in = top;
  for (int i = 0; i < 4; ++i) {
    net.head_fcs.emplace_back(in, head_out[i], true);
    net.head_fcs.back().he_init(rng);
    net.params.add("head.fc" + std::to_string(i), net.head_fcs.back());
    if (i < 3) {
      net.head_bns.emplace_back(head_out[i]);
      net.params.add("head.bn" + std::to_string(i), net.head_bns.back());
    }
    in = head_out[i];
  }

  for (int s = kStages - 2; s >= 0; --s) {
    const Index coarse = cfg.stage_width(s + 1);
    const Index fine = cfg.stage_width(s);
    net.decoder[s].fc = LinearLayer(coarse + fine, fine, true);
    net.decoder[s].fc.he_init(rng);
    net.decoder[s].bn = BatchNormLayer(fine);
    const std::string dp = "dec.s" + std::to_string(s + 1);
    net.params.add(dp + ".fc", net.decoder[s].fc);
    net.params.add(dp + ".bn", net.decoder[s].bn);
  }
  net.seg_out = LinearLayer(cfg.base_width, cfg.num_classes, true);
  net.seg_out.he_init(rng);
  net.params.add("dec.out", net.seg_out);
  return net;
}

inline TensorPtr bottleneck_forward(Context& ctx, BottleneckBlock& block, const NeighborGraph& graph,
                                    const Tensor& dp, const TensorPtr& x,
                                    const Tensor* positions = nullptr) {
  if (x->cols() != block.reduce.in_features())
    throw ConfigError("bottleneck_forward: input width mismatch");
  auto r = linear_forward(ctx, x, block.reduce);
  r = batchnorm_forward(ctx, r, block.bn1);
  r = relu(ctx, r);
  auto a = aggregate(ctx, block.agg_cfg, graph, dp, r, r, block.agg, positions, positions);
  a = batchnorm_forward(ctx, a, block.bn2);
  a = relu(ctx, a);
  auto e = linear_forward(ctx, a, block.expand);
  auto shortcut = block.project.weight ? linear_forward(ctx, x, block.project) : x;
  return relu(ctx, add(ctx, e, shortcut));
}

inline TensorPtr strided_block_forward(Context& ctx, StridedBlock& block,
                                       const NeighborGraph& down_graph, const Tensor& dp,
                                       const TensorPtr& x_fine, const Tensor* query_pos = nullptr,
                                       const Tensor* support_pos = nullptr) {
  if (x_fine->rows() != down_graph.n_support)
    throw ConfigError("strided_block_forward: features are not at the graph's support stage");
  auto r = linear_forward(ctx, x_fine, block.reduce);
  r = batchnorm_forward(ctx, r, block.bn1);
  r = relu(ctx, r);
  // identity has no cross-resolution meaning; average pooling is its strided stand-in
  auto a = block.agg_cfg.family == Family::Identity
               ? baseline_pool(ctx, down_graph, r, Reduction::AVG)
               : aggregate(ctx, block.agg_cfg, down_graph, dp, r, r, block.agg, query_pos,
                           support_pos);
  a = batchnorm_forward(ctx, a, block.bn2);
  a = relu(ctx, a);
  auto e = linear_forward(ctx, a, block.expand);
  auto pooled = baseline_pool(ctx, down_graph, x_fine, Reduction::AVG);
  auto shortcut = linear_forward(ctx, pooled, block.shortcut);
  return relu(ctx, add(ctx, e, shortcut));
}

inline std::array<TensorPtr, kStages> encoder_forward(Context& ctx, Network& net,
                                                      const StagePyramid& pyr,
                                                      const TensorPtr& input_features) {
  if (input_features->rows() != pyr.clouds[0].size())
    throw ConfigError("encoder_forward: features must live at the finest stage");
  std::array<TensorPtr, kStages> out;
  auto x = linear_forward(ctx, input_features, net.stem);
  x = batchnorm_forward(ctx, x, net.stem_bn);
  x = relu(ctx, x);
  for (int s = 0; s < kStages; ++s) {
    if (s > 0)
      x = strided_block_forward(ctx, net.strided[s - 1], pyr.down_graphs[s - 1], pyr.down_dp[s - 1],
                                x, &pyr.clouds[s].positions, &pyr.clouds[s - 1].positions);
    for (auto& block : net.stage_blocks[s])
      x = bottleneck_forward(ctx, block, pyr.intra_graphs[s], pyr.intra_dp[s], x,
                             &pyr.clouds[s].positions);
    out[s] = x;
  }
  return out;
}

// pooled: [batch x 16C] rows of globally averaged stage-5 features
inline TensorPtr head_forward(Context& ctx, Network& net, const TensorPtr& pooled) {
  auto x = pooled;
  for (std::size_t i = 0; i < net.head_fcs.size(); ++i) {
    x = linear_forward(ctx, x, net.head_fcs[i]);
    if (i + 1 < net.head_fcs.size()) {
      x = batchnorm_forward(ctx, x, net.head_bns[i]);
      x = relu(ctx, x);
    }
  }
  return x;
}

inline TensorPtr classifier_head(Context& ctx, Network& net, const TensorPtr& stage5) {
  return head_forward(ctx, net, global_avg_pool(ctx, stage5));
}

inline TensorPtr classify_forward(Context& ctx, Network& net, const StagePyramid& pyr,
                                  const TensorPtr& input_features) {
  auto stages = encoder_forward(ctx, net, pyr, input_features);
  return classifier_head(ctx, net, stages[kStages - 1]);
}

// stage-by-stage upsampling with skip connections, back to the finest stage;
// returns the fused per-point features ahead of the class projection
inline TensorPtr decoder_features(Context& ctx, Network& net,
                                  const std::array<TensorPtr, kStages>& stage_features,
                                  const StagePyramid& pyr) {
  auto x = stage_features[kStages - 1];
  for (int s = kStages - 2; s >= 0; --s) {
    if (pyr.up_links[s].size() != static_cast<std::size_t>(pyr.clouds[s].size()))
      throw ValidationError("decoder_features: pyramid has no usable up links");
    auto up = gather_rows(ctx, x, pyr.up_links[s]);
    auto cat = concat_cols(ctx, {up, stage_features[s]});
    x = linear_forward(ctx, cat, net.decoder[s].fc);
    x = batchnorm_forward(ctx, x, net.decoder[s].bn);
    x = relu(ctx, x);
  }
  return x;
}

inline TensorPtr segmentation_decoder(Context& ctx, Network& net,
                                      const std::array<TensorPtr, kStages>& stage_features,
                                      const StagePyramid& pyr) {
  return linear_forward(ctx, decoder_features(ctx, net, stage_features, pyr), net.seg_out);
}

inline TensorPtr segment_forward(Context& ctx, Network& net, const StagePyramid& pyr,
                                 const TensorPtr& input_features) {
  auto stages = encoder_forward(ctx, net, pyr, input_features);
  return segmentation_decoder(ctx, net, stages, pyr);
}

}  // namespace pointagg
