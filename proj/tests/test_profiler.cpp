#include <catch2/catch_amalgamated.hpp>

#include <sstream>

#include "pointagg/prof/complexity.hpp"

using namespace pointagg;

namespace {

std::int64_t weight_elements(const AggregatorConfig& cfg) {
  Rng rng(7);
  auto params = make_aggregator_params(cfg, Scalar(1), 7, rng);
  std::int64_t total = 0;
  for (const auto& fc : params.fcs) total += fc.weight->size();
  if (params.kernel_weights) total += params.kernel_weights->size();
  return total;
}

}  // namespace

TEST_CASE("predicted costs match hand-counted cases") {
  SECTION("position pooling is one multiply per edge channel") {
    // 8 queries x 4 neighbors x 6 channels = 192, no parameters
    const auto est = predict_cost(Family::PosPool, 1, 6, 8, 4);
    CHECK(est.time == 192);
    CHECK(est.space == 0);
  }
  SECTION("single-fc adaptive weighting") {
    // per edge: 3*6 fc + 6 apply + 6 normalization share = 30; 32 edges
    const auto est = predict_cost(Family::AdaptiveWeight, 1, 6, 8, 4);
    CHECK(est.time == 960);
    CHECK(est.space == 18);
  }
  SECTION("three-layer point-wise mlp, one edge") {
    // (11 -> 4) 44 + (4 -> 4) 16 + (4 -> 8) 32 = 92
    const auto est = predict_cost(Family::PointwiseMLP, 3, 8, 1, 1);
    CHECK(est.time == 92);
    CHECK(est.space == 92);
  }
  SECTION("baselines are free") {
    CHECK(predict_cost(Family::Identity, 1, 24, 16, 8).time == 0);
    CHECK(predict_cost(Family::Pool, 1, 24, 16, 8).time == 0);
    CHECK(predict_cost(Family::Pool, 1, 24, 16, 8).space == 0);
  }
}

TEST_CASE("predict_cost rejects meaningless queries") {
  CHECK_THROWS_AS(predict_cost(Family::PosPool, 2, 6, 4, 2), ConfigError);
  CHECK_THROWS_AS(predict_cost(Family::Pool, 3, 6, 4, 2), ConfigError);
  CHECK_THROWS_AS(predict_cost(Family::PseudoGrid, 1, 6, 4, 2, 0), ConfigError);
  CHECK_THROWS_AS(predict_cost(Family::PointwiseMLP, 2, 7, 4, 2), ConfigError);
  CHECK_THROWS_AS(predict_cost(Family::AdaptiveWeight, 3, 9, 4, 2), ConfigError);
  CHECK_THROWS_AS(predict_cost(Family::PointwiseMLP, 0, 6, 4, 2), ConfigError);
  CHECK_THROWS_AS(predict_cost(Family::PosPool, 1, 6, 0, 2), ConfigError);
  // the factored path is a single-fc point-wise mlp trick only
  CHECK_THROWS_AS(predict_cost(Family::PointwiseMLP, 2, 6, 4, 2, 1, true), ConfigError);
  CHECK_THROWS_AS(predict_cost(Family::AdaptiveWeight, 1, 6, 4, 2, 1, true), ConfigError);
}

TEST_CASE("instrumented forwards reproduce the pinned counts") {
  SECTION("pseudo grid: every edge correlates with every kernel point") {
    ComplexityQuery q{Family::PseudoGrid, 1, 6, 8, 4, 15, false};
    CHECK(measure_cost(query_config(q), q.n, q.K) == 2880);
  }
  SECTION("factored single-fc mlp: one transform per point plus 3d per edge") {
    ComplexityQuery q{Family::PointwiseMLP, 1, 6, 8, 4, 1, true};
    CHECK(measure_cost(query_config(q), q.n, q.K) == 864);
  }
  SECTION("identity costs nothing") {
    ComplexityQuery q{Family::Identity, 1, 6, 8, 4, 1, false};
    CHECK(measure_cost(query_config(q), q.n, q.K) == 0);
  }
}

TEST_CASE("measure_cost insists on a uniform neighbor count") {
  NeighborGraph g;
  g.n_query = 2;
  g.n_support = 3;
  g.offsets = {0, 1, 3};
  g.neighbor_index = {0, 1, 2};
  g.self_support = false;
  g.validate();
  auto cfg = AggregatorConfig::defaults(Family::PosPool);
  cfg.channels = 6;
  CHECK_THROWS_AS(measure_cost(cfg, g), ValidationError);
}

TEST_CASE("uniform graph construction") {
  auto g = uniform_neighbor_graph(4, 8);
  REQUIRE(g.edge_count() == 32);
  for (Index q = 0; q < 4; ++q) CHECK(g.slice_size(q) == 8);
  CHECK(g.neighbor_index[0] == 0);  // self first
  CHECK(g.neighbor_index[5] == 1);  // wraps modulo n
  CHECK_THROWS_AS(uniform_neighbor_graph(0, 3), ValidationError);
}

TEST_CASE("every sweep row matches prediction exactly") {
  const auto sweep = full_complexity_sweep();
  const auto reports = verify_complexity(sweep);
  REQUIRE(reports.size() == sweep.size());
  REQUIRE(reports.size() == 168);
  for (const auto& r : reports) {
    INFO(complexity_row_name(r) << " h=" << r.h << " d=" << r.d << " n=" << r.n << " K=" << r.K
                                << " M=" << r.M << " pred=" << r.predicted_time
                                << " meas=" << r.measured_time);
    CHECK(r.match);
    CHECK(r.predicted_time == r.measured_time);
  }
}

TEST_CASE("verify_complexity trivia") {
  CHECK(verify_complexity({}).empty());
  auto reports = verify_complexity({{Family::PosPool, 1, 6, 8, 4, 1, false}});
  REQUIRE(reports.size() == 1);
  CHECK(reports[0].match);
  CHECK(reports[0].measured_time == 192);
}

TEST_CASE("predicted space equals allocated weight elements") {
  const std::vector<ComplexityQuery> qs = {
      {Family::PointwiseMLP, 1, 12, 4, 2, 1, false}, {Family::PointwiseMLP, 3, 12, 4, 2, 1, false},
      {Family::AdaptiveWeight, 1, 12, 4, 2, 1, false}, {Family::AdaptiveWeight, 2, 12, 4, 2, 1, false},
      {Family::PseudoGrid, 1, 12, 4, 2, 15, false},  {Family::PosPoolEmbed, 1, 12, 4, 2, 1, false},
  };
  for (const auto& q : qs) {
    INFO(family_name(q.family) << " h=" << q.h);
    const auto est = predict_cost(q.family, q.h, q.d, q.n, q.K, q.M, q.fast_path);
    CHECK(est.space == weight_elements(query_config(q)));
  }
}

TEST_CASE("costs are linear in n, and in K except the factored term") {
  const std::vector<ComplexityQuery> qs = {
      {Family::Pool, 1, 12, 4, 4, 1, false},          {Family::PointwiseMLP, 1, 12, 4, 4, 1, false},
      {Family::PointwiseMLP, 3, 12, 4, 4, 1, false},  {Family::PointwiseMLP, 1, 12, 4, 4, 1, true},
      {Family::PseudoGrid, 1, 12, 4, 4, 15, false},   {Family::AdaptiveWeight, 1, 12, 4, 4, 1, false},
      {Family::AdaptiveWeight, 3, 12, 4, 4, 1, false}, {Family::PosPool, 1, 12, 4, 4, 1, false},
      {Family::PosPoolEmbed, 1, 12, 4, 4, 1, false},  {Family::PosPoolVariant, 1, 12, 4, 4, 1, false},
  };
  for (const auto& q : qs) {
    INFO(family_name(q.family) << " h=" << q.h << (q.fast_path ? " fast" : ""));
    const auto base = predict_cost(q.family, q.h, q.d, q.n, q.K, q.M, q.fast_path);
    const auto twice_n = predict_cost(q.family, q.h, q.d, 2 * q.n, q.K, q.M, q.fast_path);
    CHECK(twice_n.time == 2 * base.time);
    const auto twice_k = predict_cost(q.family, q.h, q.d, q.n, 2 * q.K, q.M, q.fast_path);
    if (q.fast_path) {
      // n*d^2 is K-free; only the 3*d*n*K half doubles
      const std::int64_t edge_half = 3 * static_cast<std::int64_t>(q.d) * q.n * q.K;
      CHECK(twice_k.time == base.time + edge_half);
    } else {
      CHECK(twice_k.time == 2 * base.time);
    }
  }
}

TEST_CASE("complexity csv layout") {
  auto reports = verify_complexity({{Family::PointwiseMLP, 1, 6, 8, 4, 1, true},
                                    {Family::PosPool, 1, 6, 8, 4, 1, false}});
  std::ostringstream os;
  write_complexity_csv(os, reports);
  CHECK(os.str() ==
        "family,h,d,n,K,M,space,pred_time,meas_time,match\n"
        "pointwise_mlp_fast,1,6,8,4,1,54,864,864,1\n"
        "pospool,1,6,8,4,1,0,192,192,1\n");
}
