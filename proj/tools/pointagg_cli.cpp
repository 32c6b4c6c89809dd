// Command-line front end: train/eval loops, gradient checks, the complexity
// sweep, operator benchmarks, robustness curves, and activation exports.
// Exit codes: 0 success, 2 invalid configuration or arguments, 3 numeric
// failure (divergence, mismatched cost model, failed gradient check).
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "pointagg/harness/bench.hpp"
#include "pointagg/harness/experiment.hpp"
#include "pointagg/prof/complexity.hpp"

namespace fs = std::filesystem;
using namespace pointagg;

namespace {

constexpr std::array<Family, 8> kAllFamilies = {
    Family::Identity,      Family::Pool,    Family::PointwiseMLP, Family::PseudoGrid,
    Family::AdaptiveWeight, Family::PosPool, Family::PosPoolEmbed, Family::PosPoolVariant};

struct CommonOpts {
  std::string config_path;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::string out_dir;
};

void add_common(CLI::App* cmd, CommonOpts& o) {
  cmd->add_option("--config", o.config_path, "run configuration file ([section] key = value)")
      ->check(CLI::ExistingFile);
  cmd->add_option("--seed", o.seed, "override the configured seed")
      ->each([&o](const std::string&) { o.seed_set = true; });
  cmd->add_option("--out-dir", o.out_dir, "override the configured output directory");
}

RunConfig load_config(const CommonOpts& o) {
  RunConfig cfg;
  if (!o.config_path.empty()) cfg = load_run_config(o.config_path);
  if (o.seed_set) cfg.seed = o.seed;
  if (!o.out_dir.empty()) cfg.out_dir = o.out_dir;
  return cfg;
}

Network restore_network(const RunConfig& cfg, const std::string& checkpoint) {
  Network net = build_network(cfg.resolved_network(), detail::init_seed(cfg.seed));
  load_checkpoint(checkpoint, net.params);
  return net;
}

std::string default_checkpoint(const RunConfig& cfg) { return cfg.out_dir + "/model.ckpt"; }

void print_epoch(const EpochRow& row) {
  std::printf("epoch %3lld  loss %.4f  train_acc %.4f  test_acc %.4f\n",
              static_cast<long long>(row.epoch), row.train_loss, row.train_acc, row.test_acc);
  std::fflush(stdout);
}

int cmd_train(const CommonOpts& common) {
  RunConfig cfg = load_config(common);
  if (cfg.task != TaskKind::Classify && cfg.task != TaskKind::Segment)
    throw ValidationError("train needs task = classify or segment in the config");
  const ExperimentResult res = run_experiment(cfg, print_epoch);
  std::cout << "metrics:    " << res.metrics_path << '\n'
            << "checkpoint: " << res.checkpoint_path << '\n'
            << "manifest:   " << res.manifest_path << '\n';
  if (!res.rows.empty()) std::cout << "final test accuracy: " << res.final_test_acc << '\n';
  return 0;
}

int cmd_eval(const CommonOpts& common, std::string checkpoint) {
  RunConfig cfg = load_config(common);
  if (checkpoint.empty()) checkpoint = default_checkpoint(cfg);
  Network net = restore_network(cfg, checkpoint);

  SyntheticShapeSpec test_spec = cfg.dataset;
  test_spec.samples_per_class = cfg.test_per_class;
  test_spec.seed = detail::test_data_seed(cfg.seed);

  if (cfg.task == TaskKind::Segment) {
    const auto test = synth_segmentation_dataset(test_spec);
    Index correct = 0, counted = 0;
    for (std::size_t i = 0; i < test.size(); ++i) {
      const StagePyramid pyr =
          build_pyramid(test[i], cfg.base_grid, detail::test_pyramid_seed(cfg.seed, static_cast<Index>(i)),
                        cfg.k_max, cfg.subsample);
      Context ctx{nullptr, false};
      auto feats = std::make_shared<Tensor>(pyr.clouds[0].features);
      auto logits = segment_forward(ctx, net, pyr, feats);
      for (Index r = 0; r < logits->rows(); ++r) {
        const int lab = test[i].labels[pyr.input_kept[r]];
        if (lab < 0) continue;
        ++counted;
        if (detail::argmax_row(*logits, r) == lab) ++correct;
      }
    }
    std::printf("point accuracy: %.6f  (%lld points, %zu scenes)\n",
                counted ? static_cast<double>(correct) / static_cast<double>(counted) : 0.0,
                static_cast<long long>(counted), test.size());
    return 0;
  }

  const auto test = synth_classification_dataset(test_spec);
  Index correct = 0;
  for (std::size_t i = 0; i < test.size(); ++i) {
    const Tensor logits =
        vote_predict(net, test[i], cfg.votes, cfg.scale_lo, cfg.scale_hi, cfg.noise_std,
                     cfg.base_grid, cfg.k_max, cfg.subsample,
                     detail::test_pyramid_seed(cfg.seed, static_cast<Index>(i)),
                     hash_mix(cfg.seed, 0xE0, static_cast<std::uint64_t>(i)));
    if (detail::argmax_row(logits, 0) == test[i].cloud_label()) ++correct;
  }
  std::printf("test accuracy: %.6f  (%zu clouds, %lld votes)\n",
              static_cast<double>(correct) / static_cast<double>(test.size()), test.size(),
              static_cast<long long>(cfg.votes));
  return 0;
}

int cmd_gradcheck(const CommonOpts& common, const std::string& family_arg, bool with_network) {
  RunConfig cfg = load_config(common);
  std::vector<Family> families;
  if (family_arg == "all")
    families.assign(kAllFamilies.begin(), kAllFamilies.end());
  else
    families.push_back(family_from_name(family_arg));

  bool ok = true;
  for (Family fam : families) {
    AggregatorConfig agg = AggregatorConfig::defaults(fam);
    agg.channels = 12;
    if (fam == Family::PosPoolVariant) agg.variant_kind = VariantKind::DistOnly;
    const double err = aggregator_gradcheck(agg, cfg.seed + 1);
    const bool pass = err < 1e-5;
    ok = ok && pass;
    std::printf("operator %-15s max rel err %.3e  %s\n", family_name(fam), err,
                pass ? "pass" : "FAIL");
    if (with_network) {
      const double nerr = network_gradcheck(agg, cfg.seed + 2);
      const bool npass = nerr < 1e-4;
      ok = ok && npass;
      std::printf("network  %-15s max rel err %.3e  %s\n", family_name(fam), nerr,
                  npass ? "pass" : "FAIL");
    }
    std::fflush(stdout);
  }
  if (!ok) throw NumericError("gradient check failed");
  return 0;
}

int cmd_complexity(const CommonOpts& common) {
  RunConfig cfg = load_config(common);
  const auto reports = verify_complexity(full_complexity_sweep());
  std::size_t matched = 0;
  std::int64_t total_macs = 0;
  for (const auto& r : reports) {
    if (r.match)
      ++matched;
    else
      std::printf("MISMATCH %-18s h=%lld d=%lld n=%lld K=%lld M=%lld predicted %lld measured %lld\n",
                  complexity_row_name(r).c_str(), static_cast<long long>(r.h),
                  static_cast<long long>(r.d), static_cast<long long>(r.n),
                  static_cast<long long>(r.K), static_cast<long long>(r.M),
                  static_cast<long long>(r.predicted_time), static_cast<long long>(r.measured_time));
    total_macs += r.measured_time;
  }

  fs::create_directories(cfg.out_dir);
  const std::string path = cfg.out_dir + "/complexity.csv";
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write " + path);
  write_complexity_csv(out, reports);

  std::printf("%zu/%zu rows match the closed-form cost model\n", matched, reports.size());
  std::printf("sweep total: %lld MACs = %lld FLOPs (FLOPs counted as 2 x MACs)\n",
              static_cast<long long>(total_macs), static_cast<long long>(2 * total_macs));
  std::cout << "csv: " << path << '\n';
  if (matched != reports.size()) throw NumericError("cost model disagrees with measured MACs");
  return 0;
}

int cmd_bench(const CommonOpts& common, std::vector<std::string> family_args, std::vector<Index> ns,
              std::vector<Index> Ks, std::vector<Index> ds, Index repeats) {
  RunConfig cfg = load_config(common);
  if (family_args.empty()) family_args = {"pospool"};
  if (ns.empty()) ns = {512, 2048};
  if (Ks.empty()) Ks = {16, 32};
  if (ds.empty()) ds = {36, 72};

  std::vector<BenchPoint> sweep;
  for (Index n : ns)
    for (Index K : Ks)
      for (Index d : ds) sweep.push_back({n, K, d});

  std::vector<BenchRow> rows;
  for (const std::string& name : family_args) {
    AggregatorConfig agg = AggregatorConfig::defaults(family_from_name(name));
    if (agg.family == Family::PosPoolVariant) agg.variant_kind = VariantKind::DistOnly;
    const auto part = bench_op(agg, sweep, repeats, cfg.seed + 17);
    rows.insert(rows.end(), part.begin(), part.end());
  }

  fs::create_directories(cfg.out_dir);
  const std::string path = cfg.out_dir + "/bench.csv";
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write " + path);
  write_bench_csv(out, rows);
  write_bench_csv(std::cout, rows);
  std::cout << "csv: " << path << '\n';
  return 0;
}

int cmd_robustness(const CommonOpts& common, std::string checkpoint, std::vector<Scalar> missing,
                   std::vector<Scalar> outliers) {
  RunConfig cfg = load_config(common);
  if (cfg.task != TaskKind::Classify && cfg.task != TaskKind::Robustness)
    throw ValidationError("robustness curves need a classification config");
  cfg.task = TaskKind::Classify;
  if (checkpoint.empty()) checkpoint = default_checkpoint(cfg);
  if (missing.empty()) missing = {0, Scalar(0.25), Scalar(0.5)};
  if (outliers.empty()) outliers = {0, Scalar(0.01), Scalar(0.05)};

  Network net = restore_network(cfg, checkpoint);
  const auto rows = robustness_curves(net, cfg, missing, outliers);

  fs::create_directories(cfg.out_dir);
  const std::string path = cfg.out_dir + "/robustness.csv";
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write " + path);
  write_robustness_csv(out, rows);
  write_robustness_csv(std::cout, rows);
  std::cout << "csv: " << path << '\n';
  return 0;
}

int cmd_export_activations(const CommonOpts& common, std::string checkpoint, Index cloud_index) {
  RunConfig cfg = load_config(common);
  if (checkpoint.empty()) checkpoint = default_checkpoint(cfg);
  Network net = restore_network(cfg, checkpoint);

  SyntheticShapeSpec test_spec = cfg.dataset;
  test_spec.samples_per_class = cfg.test_per_class;
  test_spec.seed = detail::test_data_seed(cfg.seed);
  const auto test = cfg.task == TaskKind::Segment ? synth_segmentation_dataset(test_spec)
                                                  : synth_classification_dataset(test_spec);
  if (cloud_index < 0 || cloud_index >= static_cast<Index>(test.size()))
    throw ValidationError("cloud index out of range (test set has " + std::to_string(test.size()) +
                          " clouds)");
  const StagePyramid pyr =
      build_pyramid(test[cloud_index], cfg.base_grid,
                    detail::test_pyramid_seed(cfg.seed, cloud_index), cfg.k_max, cfg.subsample);

  fs::create_directories(cfg.out_dir);
  const std::string path = cfg.out_dir + "/activations.csv";
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write " + path);
  export_activation_norms(out, net, pyr);
  std::cout << "csv: " << path << " (" << pyr.clouds[0].size() << " points)" << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"point-cloud aggregation workbench"};
  app.require_subcommand(1);

  CommonOpts common;

  CLI::App* train = app.add_subcommand("train", "train a model and write metrics/checkpoint/manifest");
  add_common(train, common);

  CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint on the configured test set");
  add_common(eval, common);
  std::string eval_ckpt;
  eval->add_option("--checkpoint", eval_ckpt, "checkpoint file (default <out-dir>/model.ckpt)");

  CLI::App* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient verification");
  add_common(gradcheck, common);
  std::string gc_family = "all";
  bool gc_network = false;
  gradcheck->add_option("--family", gc_family, "aggregator family name or 'all'");
  gradcheck->add_flag("--network", gc_network, "also check a full micro-network per family");

  CLI::App* complexity = app.add_subcommand("complexity", "closed-form vs instrumented MAC counts");
  add_common(complexity, common);

  CLI::App* bench = app.add_subcommand("bench", "wall-clock microbenchmarks of aggregate()");
  add_common(bench, common);
  std::vector<std::string> bench_families;
  std::vector<Index> bench_n, bench_k, bench_d;
  Index bench_repeats = 5;
  bench->add_option("--family", bench_families, "families to bench (default pospool)");
  bench->add_option("--n", bench_n, "point counts (default 512 2048)");
  bench->add_option("--k", bench_k, "neighbors per point (default 16 32)");
  bench->add_option("--d", bench_d, "channel widths (default 36 72)");
  bench->add_option("--repeats", bench_repeats, "timed repetitions per point (default 5)");

  CLI::App* robustness = app.add_subcommand("robustness", "accuracy under test-time perturbations");
  add_common(robustness, common);
  std::string rob_ckpt;
  std::vector<Scalar> rob_missing, rob_outliers;
  robustness->add_option("--checkpoint", rob_ckpt, "checkpoint file (default <out-dir>/model.ckpt)");
  robustness->add_option("--missing", rob_missing, "missing-point ratios (default 0 0.25 0.5)");
  robustness->add_option("--outliers", rob_outliers, "outlier ratios (default 0 0.01 0.05)");

  CLI::App* exporta = app.add_subcommand("export-activations",
                                         "per-point feature norms at the finest resolution");
  add_common(exporta, common);
  std::string exp_ckpt;
  Index exp_index = 0;
  exporta->add_option("--checkpoint", exp_ckpt, "checkpoint file (default <out-dir>/model.ckpt)");
  exporta->add_option("--index", exp_index, "test cloud index (default 0)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (train->parsed()) return cmd_train(common);
    if (eval->parsed()) return cmd_eval(common, eval_ckpt);
    if (gradcheck->parsed()) return cmd_gradcheck(common, gc_family, gc_network);
    if (complexity->parsed()) return cmd_complexity(common);
    if (bench->parsed())
      return cmd_bench(common, bench_families, bench_n, bench_k, bench_d, bench_repeats);
    if (robustness->parsed()) return cmd_robustness(common, rob_ckpt, rob_missing, rob_outliers);
    if (exporta->parsed()) return cmd_export_activations(common, exp_ckpt, exp_index);
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return 3;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 2;
}
