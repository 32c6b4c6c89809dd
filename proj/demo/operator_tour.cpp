// Run every aggregation family over the same neighborhood and compare what
// they produce and what they cost. All eight share one call signature, so a
// network can swap its local operator by changing a single config field.
#include <cmath>
#include <cstdio>

#include "pointagg/agg/operators.hpp"
#include "pointagg/geom/neighborhood.hpp"
#include "pointagg/prof/complexity.hpp"

using namespace pointagg;

int main() {
  // a noisy spherical blob, 48 points, ball neighborhoods of radius 0.45
  Rng rng(7);
  const Index n = 48, d = 12;
  Tensor pos(n, 3);
  for (Index i = 0; i < n; ++i) {
    double v[3], n2 = 0;
    for (double& x : v) {
      x = rng.normal();
      n2 += x * x;
    }
    for (int k = 0; k < 3; ++k)
      pos(i, k) = static_cast<Scalar>(v[k] / std::sqrt(n2) + 0.05 * rng.normal());
  }
  PointCloud cloud(std::move(pos));
  const NeighborGraph graph = build_ball_neighborhoods(cloud, cloud, Scalar(0.45), 16);
  const Tensor dp = relative_positions(graph, cloud, cloud);

  auto features = make_tensor(n, d);
  for (Index i = 0; i < features->size(); ++i) (*features)[i] = static_cast<Scalar>(rng.normal());

  std::printf("%-16s %10s %12s %12s\n", "family", "params", "macs", "output_norm");
  for (Family fam : {Family::Identity, Family::Pool, Family::PointwiseMLP, Family::PseudoGrid,
                     Family::AdaptiveWeight, Family::PosPool, Family::PosPoolEmbed,
                     Family::PosPoolVariant}) {
    AggregatorConfig cfg = AggregatorConfig::defaults(fam);
    cfg.channels = d;
    if (fam == Family::PosPoolVariant) cfg.variant_kind = VariantKind::DistOnly;

    Rng param_rng(21);
    AggregatorParams params = make_aggregator_params(cfg, Scalar(0.45), 5, param_rng);
    Index param_count = 0;
    for (const auto& fc : params.fcs) {
      param_count += fc.weight->size();
      if (fc.bias) param_count += fc.bias->size();
    }
    if (params.kernel_weights) param_count += params.kernel_weights->size();

    Context ctx{nullptr, false};
    Tensor::reset_mac_counter();
    const TensorPtr out = aggregate(ctx, cfg, graph, dp, features, features, params);
    const std::uint64_t macs = Tensor::mac_counter();

    double norm = 0;
    for (Index i = 0; i < out->size(); ++i) norm += double((*out)[i]) * double((*out)[i]);
    std::printf("%-16s %10lld %12llu %12.4f\n", family_name(fam),
                static_cast<long long>(param_count), static_cast<unsigned long long>(macs),
                std::sqrt(norm));
  }
  std::printf("\n(%lld points, %lld edges, %lld channels)\n", static_cast<long long>(n),
              static_cast<long long>(graph.edge_count()), static_cast<long long>(d));
  return 0;
}
