#pragma once

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <ostream>
#include <string>
#include <vector>

#include "pointagg/prof/complexity.hpp"

namespace pointagg {

struct BenchRow {
  std::string name;
  Index n = 0, K = 0, d = 0;
  std::uint64_t macs = 0;
  double median_us = 0;
  double medges_per_s = 0;  // edges visited per microsecond-scale wall time
};

struct BenchPoint {
  Index n = 0, K = 0, d = 0;
};

// Wall-clock medians for one operator over a sweep of synthetic uniform-K
// graphs. Repeats are timed individually so a single scheduler hiccup cannot
// skew the row.
inline std::vector<BenchRow> bench_op(const AggregatorConfig& base,
                                      const std::vector<BenchPoint>& sweep, Index repeats,
                                      std::uint64_t seed) {
  if (repeats < 1) throw ValidationError("bench_op: repeats must be at least 1");
  std::vector<BenchRow> rows;
  rows.reserve(sweep.size());
  for (const auto& pt : sweep) {
    if (pt.n < 1 || pt.K < 1 || pt.d < 1)
      throw ValidationError("bench_op: sweep points need positive n, K and d");
    AggregatorConfig cfg = base;
    cfg.channels = pt.d;
    cfg.validate();

    const NeighborGraph graph = uniform_neighbor_graph(pt.n, pt.K);
    Rng rng(hash_mix(seed, static_cast<std::uint64_t>(pt.n), static_cast<std::uint64_t>(pt.K)));
    Tensor dp(graph.edge_count(), 3);
    for (Index i = 0; i < dp.size(); ++i) dp[i] = static_cast<Scalar>(rng.uniform(-0.5, 0.5));
    auto f = make_tensor(pt.n, pt.d);
    for (Index i = 0; i < f->size(); ++i) (*f)[i] = static_cast<Scalar>(rng.normal());
    auto params = make_aggregator_params(cfg, Scalar(1), rng.next_u64(), rng);

    Context ctx{nullptr, false};
    aggregate(ctx, cfg, graph, dp, f, f, params);  // warm-up: touch every page once

    Tensor::reset_mac_counter();
    aggregate(ctx, cfg, graph, dp, f, f, params);
    const std::uint64_t macs = Tensor::mac_counter();

    std::vector<double> us(static_cast<std::size_t>(repeats));
    for (Index r = 0; r < repeats; ++r) {
      const auto t0 = std::chrono::steady_clock::now();
      auto out = aggregate(ctx, cfg, graph, dp, f, f, params);
      const auto t1 = std::chrono::steady_clock::now();
      if (!out->all_finite()) throw NumericError("bench_op: non-finite aggregate output");
      us[static_cast<std::size_t>(r)] =
          std::chrono::duration<double, std::micro>(t1 - t0).count();
    }
    auto mid = us.begin() + static_cast<std::ptrdiff_t>(us.size() / 2);
    std::nth_element(us.begin(), mid, us.end());
    const double median = *mid;

    BenchRow row;
    row.name = family_name(cfg.family);
    row.n = pt.n;
    row.K = pt.K;
    row.d = pt.d;
    row.macs = macs;
    row.median_us = median;
    row.medges_per_s =
        median > 0 ? static_cast<double>(graph.edge_count()) / median : 0;
    rows.push_back(std::move(row));
  }
  return rows;
}

inline void write_bench_csv(std::ostream& os, const std::vector<BenchRow>& rows) {
  os << "family,n,K,d,macs,median_us,medges_per_s\n";
  char buf[64];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%.3f,%.3f", r.median_us, r.medges_per_s);
    os << r.name << ',' << r.n << ',' << r.K << ',' << r.d << ',' << r.macs << ',' << buf << '\n';
  }
}

}  // namespace pointagg
