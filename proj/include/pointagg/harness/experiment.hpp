#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

#include "pointagg/core/gradcheck.hpp"
#include "pointagg/geom/pyramid.hpp"
#include "pointagg/harness/config.hpp"
#include "pointagg/harness/perturb.hpp"
#include "pointagg/net/checkpoint.hpp"
#include "pointagg/net/sgd.hpp"

namespace pointagg {

namespace detail {

// Seed streams: one fixed lane per purpose so adding a consumer never shifts
// the draws of another.
inline std::uint64_t train_data_seed(std::uint64_t s) { return hash_mix(s, 0xD0, 1); }
inline std::uint64_t test_data_seed(std::uint64_t s) { return hash_mix(s, 0xD0, 2); }
inline std::uint64_t init_seed(std::uint64_t s) { return hash_mix(s, 0xD0, 3); }
inline std::uint64_t train_pyramid_seed(std::uint64_t s, Index i) {
  return hash_mix(s, 0xF1, static_cast<std::uint64_t>(i));
}
inline std::uint64_t test_pyramid_seed(std::uint64_t s, Index i) {
  return hash_mix(s, 0xF2, static_cast<std::uint64_t>(i));
}
inline std::uint64_t shuffle_seed(std::uint64_t s, Index epoch) {
  return hash_mix(s, 0x5F, static_cast<std::uint64_t>(epoch));
}
inline std::uint64_t augment_seed(std::uint64_t s, Index epoch, Index i) {
  return hash_mix(hash_mix(s, 0xA6, static_cast<std::uint64_t>(epoch)),
                  static_cast<std::uint64_t>(i));
}

inline Index argmax_row(const Tensor& t, Index row) {
  Index best = 0;
  for (Index j = 1; j < t.cols(); ++j)
    if (t(row, j) > t(row, best)) best = j;
  return best;
}

inline std::string fmt_metric(Scalar v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6f", static_cast<double>(v));
  return buf;
}

}  // namespace detail

struct EpochRow {
  Index epoch = 0;
  Scalar train_loss = 0;
  Scalar train_acc = 0;
  Scalar test_acc = 0;
};

struct ExperimentResult {
  std::vector<EpochRow> rows;
  Scalar final_test_acc = 0;
  std::string metrics_path, checkpoint_path, manifest_path;
};

// Mean of per-augmentation logits. Sums accumulate in extended precision so
// identical votes average back to the single-pass logits bit for bit.
inline Tensor vote_predict(Network& net, const PointCloud& cloud, Index votes, Scalar scale_lo,
                           Scalar scale_hi, Scalar noise_std, Scalar base_grid, Index k_max,
                           SubsampleMode mode, std::uint64_t pyramid_seed,
                           std::uint64_t vote_seed) {
  if (votes < 1) throw ValidationError("vote_predict: votes must be at least 1");
  std::vector<long double> acc;
  Index cols = 0;
  for (Index v = 0; v < votes; ++v) {
    const PointCloud aug_cloud =
        augment(cloud, scale_lo, scale_hi, noise_std, hash_mix(vote_seed, static_cast<std::uint64_t>(v)));
    const StagePyramid pyr = build_pyramid(aug_cloud, base_grid, pyramid_seed, k_max, mode);
    Context ctx{nullptr, false};
    auto feats = std::make_shared<Tensor>(pyr.clouds[0].features);
    auto logits = classify_forward(ctx, net, pyr, feats);
    if (v == 0) {
      cols = logits->cols();
      acc.assign(static_cast<std::size_t>(cols), 0.0L);
    }
    for (Index j = 0; j < cols; ++j) acc[j] += static_cast<long double>((*logits)(0, j));
  }
  Tensor out(1, cols);
  for (Index j = 0; j < cols; ++j)
    out(0, j) = static_cast<Scalar>(acc[j] / static_cast<long double>(votes));
  return out;
}

namespace detail {

// Disjoint union of per-cloud pyramids. One forward pass then covers the
// whole batch, which matters for training-mode batchnorm: the coarse stages
// of a single cloud can hold one or two points, far too few for usable batch
// statistics.
struct MergedBatch {
  StagePyramid pyr;
  std::array<std::vector<Index>, kStages> row_base;  // per stage, size batch+1
};

inline Tensor concat_tensor_rows(const std::vector<const Tensor*>& parts) {
  const Index cols = parts.front()->cols();
  Index rows = 0;
  for (const Tensor* t : parts) rows += t->rows();
  Tensor out(rows, cols);
  Index at = 0;
  for (const Tensor* t : parts) {
    if (t->cols() != cols) throw DimensionError("concat_tensor_rows: column mismatch");
    std::copy_n(t->data(), t->size(), out.data() + at * cols);
    at += t->rows();
  }
  return out;
}

inline void append_graph(NeighborGraph& into, const NeighborGraph& g, Index support_base) {
  for (Index q = 0; q < g.n_query; ++q) {
    for (Index e = g.offsets[q]; e < g.offsets[q + 1]; ++e)
      into.neighbor_index.push_back(g.neighbor_index[e] + support_base);
    into.offsets.push_back(static_cast<Index>(into.neighbor_index.size()));
  }
  into.n_query += g.n_query;
  into.n_support += g.n_support;
}

inline MergedBatch merge_pyramids(const std::vector<const StagePyramid*>& parts) {
  if (parts.empty()) throw ValidationError("merge_pyramids: empty batch");
  MergedBatch mb;
  mb.pyr.grid_sizes = parts.front()->grid_sizes;
  mb.pyr.radii = parts.front()->radii;

  for (int s = 0; s < kStages; ++s) {
    mb.row_base[s].push_back(0);
    for (const StagePyramid* p : parts)
      mb.row_base[s].push_back(mb.row_base[s].back() + p->clouds[s].size());
  }

  // input_kept stays empty: rows of the original input clouds have no single
  // numbering here, so anything keyed on input rows (segmentation labels) is
  // resolved against the per-cloud pyramids before the merge.

  for (int s = 0; s < kStages; ++s) {
    std::vector<const Tensor*> pos, feat, dp;
    for (const StagePyramid* p : parts) {
      pos.push_back(&p->clouds[s].positions);
      feat.push_back(&p->clouds[s].features);
      dp.push_back(&p->intra_dp[s]);
    }
    mb.pyr.clouds[s].positions = concat_tensor_rows(pos);
    mb.pyr.clouds[s].features = concat_tensor_rows(feat);
    mb.pyr.intra_dp[s] = concat_tensor_rows(dp);

    mb.pyr.intra_graphs[s].offsets.push_back(0);
    mb.pyr.intra_graphs[s].self_support = true;
    for (std::size_t c = 0; c < parts.size(); ++c)
      append_graph(mb.pyr.intra_graphs[s], parts[c]->intra_graphs[s], mb.row_base[s][c]);
    mb.pyr.intra_owners[s] = mb.pyr.intra_graphs[s].owners();
  }

  for (int s = 0; s < kStages - 1; ++s) {
    std::vector<const Tensor*> dp;
    for (const StagePyramid* p : parts) dp.push_back(&p->down_dp[s]);
    mb.pyr.down_dp[s] = concat_tensor_rows(dp);

    mb.pyr.down_graphs[s].offsets.push_back(0);
    for (std::size_t c = 0; c < parts.size(); ++c) {
      append_graph(mb.pyr.down_graphs[s], parts[c]->down_graphs[s], mb.row_base[s][c]);
      for (Index i : parts[c]->up_links[s])
        mb.pyr.up_links[s].push_back(i + mb.row_base[s + 1][c]);
      for (Index i : parts[c]->kept_indices[s])
        mb.pyr.kept_indices[s].push_back(i + mb.row_base[s][c]);
    }
    mb.pyr.down_owners[s] = mb.pyr.down_graphs[s].owners();
  }
  return mb;
}

// Batch boundaries over n clouds. A trailing singleton is folded into the
// batch before it: training-mode batchnorm cannot take a one-row stage.
inline std::vector<Index> batch_starts(Index n, Index batch_size) {
  std::vector<Index> starts;
  for (Index at = 0; at < n; at += batch_size) starts.push_back(at);
  if (starts.size() > 1 && n - starts.back() == 1) starts.pop_back();
  starts.push_back(n);
  return starts;
}

struct ClassifySets {
  std::vector<PointCloud> train, test;
  std::vector<StagePyramid> test_pyramids;
  std::vector<StagePyramid> train_pyramids;  // only when augmentation is off
};

inline ClassifySets prepare_classification(const RunConfig& cfg) {
  ClassifySets sets;
  SyntheticShapeSpec train_spec = cfg.dataset;
  train_spec.seed = train_data_seed(cfg.seed);
  SyntheticShapeSpec test_spec = cfg.dataset;
  test_spec.samples_per_class = cfg.test_per_class;
  test_spec.seed = test_data_seed(cfg.seed);
  sets.train = synth_classification_dataset(train_spec);
  sets.test = synth_classification_dataset(test_spec);

  sets.test_pyramids.reserve(sets.test.size());
  for (std::size_t i = 0; i < sets.test.size(); ++i)
    sets.test_pyramids.push_back(build_pyramid(sets.test[i], cfg.base_grid,
                                               test_pyramid_seed(cfg.seed, static_cast<Index>(i)),
                                               cfg.k_max, cfg.subsample));
  const bool identity_augment = cfg.scale_lo == 1 && cfg.scale_hi == 1 && cfg.noise_std == 0;
  if (identity_augment) {
    sets.train_pyramids.reserve(sets.train.size());
    for (std::size_t i = 0; i < sets.train.size(); ++i)
      sets.train_pyramids.push_back(
          build_pyramid(sets.train[i], cfg.base_grid,
                        train_pyramid_seed(cfg.seed, static_cast<Index>(i)), cfg.k_max,
                        cfg.subsample));
  }
  return sets;
}

inline Scalar classification_accuracy(Network& net, const std::vector<PointCloud>& clouds,
                                      const std::vector<StagePyramid>& pyramids) {
  Index correct = 0;
  for (std::size_t i = 0; i < clouds.size(); ++i) {
    Context ctx{nullptr, false};
    auto feats = std::make_shared<Tensor>(pyramids[i].clouds[0].features);
    auto logits = classify_forward(ctx, net, pyramids[i], feats);
    if (argmax_row(*logits, 0) == clouds[i].cloud_label()) ++correct;
  }
  return static_cast<Scalar>(correct) / static_cast<Scalar>(clouds.size());
}

inline std::vector<Index> epoch_order(std::size_t n, std::uint64_t seed) {
  std::vector<Index> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = static_cast<Index>(i);
  Rng rng(seed);
  for (std::size_t i = n; i > 1; --i)
    std::swap(order[i - 1], order[rng.uniform_index(i)]);
  return order;
}

}  // namespace detail

// Full training run: per-epoch metrics CSV, final checkpoint, and a manifest
// that reproduces the run. Aborts with the epoch index if the loss stops
// being finite.
inline ExperimentResult run_experiment(const RunConfig& cfg,
                                       const std::function<void(const EpochRow&)>& on_epoch = {}) {
  cfg.validate();
  if (cfg.task != TaskKind::Classify && cfg.task != TaskKind::Segment)
    throw ValidationError("run_experiment handles the classify and segment tasks");
  std::filesystem::create_directories(cfg.out_dir);

  const NetworkConfig net_cfg = cfg.resolved_network();
  net_cfg.validate();
  Network net = build_network(net_cfg, detail::init_seed(cfg.seed));
  SgdState opt(net.params);

  ExperimentResult result;
  result.metrics_path = cfg.out_dir + "/metrics.csv";
  result.checkpoint_path = cfg.out_dir + "/model.ckpt";
  result.manifest_path = cfg.out_dir + "/manifest.txt";

  std::ofstream csv(result.metrics_path);
  if (!csv) throw ValidationError("cannot write " + result.metrics_path);
  csv << "epoch,train_loss,train_acc,test_acc\n";

  if (cfg.task == TaskKind::Classify) {
    auto sets = detail::prepare_classification(cfg);
    const bool cached = !sets.train_pyramids.empty();
    const Index n_train = static_cast<Index>(sets.train.size());

    for (Index epoch = 0; epoch < cfg.epochs; ++epoch) {
      const Scalar lr_e =
          cfg.lr * static_cast<Scalar>(std::pow(static_cast<double>(cfg.lr_decay), epoch));
      const auto order = detail::epoch_order(sets.train.size(), detail::shuffle_seed(cfg.seed, epoch));
      Scalar loss_sum = 0;
      Index correct = 0;

      const auto starts = detail::batch_starts(n_train, cfg.batch_size);
      for (std::size_t bi = 0; bi + 1 < starts.size(); ++bi) {
        const Index start = starts[bi], stop = starts[bi + 1];
        Tape tape;
        Context ctx{&tape, true};
        net.params.zero_grad();

        std::vector<StagePyramid> fresh;
        fresh.reserve(static_cast<std::size_t>(stop - start));  // batch holds pointers into it
        std::vector<const StagePyramid*> batch;
        std::vector<int> labels;
        for (Index b = start; b < stop; ++b) {
          const Index ci = order[b];
          if (cached) {
            batch.push_back(&sets.train_pyramids[ci]);
          } else {
            const PointCloud aug_cloud =
                augment(sets.train[ci], cfg.scale_lo, cfg.scale_hi, cfg.noise_std,
                        detail::augment_seed(cfg.seed, epoch, ci));
            fresh.push_back(build_pyramid(aug_cloud, cfg.base_grid,
                                          detail::train_pyramid_seed(cfg.seed, ci), cfg.k_max,
                                          cfg.subsample));
            batch.push_back(&fresh.back());
          }
          labels.push_back(sets.train[ci].cloud_label());
        }

        const detail::MergedBatch mb = detail::merge_pyramids(batch);
        auto feats = std::make_shared<Tensor>(mb.pyr.clouds[0].features);
        auto stages = encoder_forward(ctx, net, mb.pyr, feats);
        const auto& base = mb.row_base[kStages - 1];
        std::vector<TensorPtr> pooled;
        for (std::size_t c = 0; c + 1 < base.size(); ++c) {
          std::vector<Index> rows;
          for (Index r = base[c]; r < base[c + 1]; ++r) rows.push_back(r);
          pooled.push_back(global_avg_pool(ctx, gather_rows(ctx, stages[kStages - 1], rows)));
        }

        auto logits = head_forward(ctx, net, concat_rows(ctx, pooled));
        auto loss = softmax_cross_entropy_mean(ctx, logits, labels);
        const Scalar loss_v = (*loss)[0];
        if (!std::isfinite(loss_v))
          throw NumericError("training diverged at epoch " + std::to_string(epoch));
        loss_sum += loss_v * static_cast<Scalar>(stop - start);
        for (Index r = 0; r < logits->rows(); ++r)
          if (detail::argmax_row(*logits, r) == labels[r]) ++correct;

        tape.backward(loss);
        try {
          sgd_step(net.params, opt, lr_e, cfg.momentum, cfg.weight_decay);
        } catch (const NumericError& e) {
          throw NumericError("epoch " + std::to_string(epoch) + ": " + e.what());
        }
      }

      EpochRow row;
      row.epoch = epoch;
      row.train_loss = loss_sum / static_cast<Scalar>(n_train);
      row.train_acc = static_cast<Scalar>(correct) / static_cast<Scalar>(n_train);
      row.test_acc = detail::classification_accuracy(net, sets.test, sets.test_pyramids);
      result.rows.push_back(row);
      csv << row.epoch << ',' << detail::fmt_metric(row.train_loss) << ','
          << detail::fmt_metric(row.train_acc) << ',' << detail::fmt_metric(row.test_acc) << '\n';
      if (on_epoch) on_epoch(row);
    }
  } else {
    SyntheticShapeSpec train_spec = cfg.dataset;
    train_spec.seed = detail::train_data_seed(cfg.seed);
    SyntheticShapeSpec test_spec = cfg.dataset;
    test_spec.samples_per_class = cfg.test_per_class;
    test_spec.seed = detail::test_data_seed(cfg.seed);
    auto train = synth_segmentation_dataset(train_spec);
    auto test = synth_segmentation_dataset(test_spec);

    std::vector<StagePyramid> train_pyrs, test_pyrs;
    std::vector<std::vector<int>> train_labels, test_labels;
    const bool identity_augment = cfg.scale_lo == 1 && cfg.scale_hi == 1 && cfg.noise_std == 0;
    auto res1_labels = [](const PointCloud& cloud, const StagePyramid& pyr) {
      std::vector<int> labs(pyr.clouds[0].size());
      for (Index i = 0; i < pyr.clouds[0].size(); ++i) labs[i] = cloud.labels[pyr.input_kept[i]];
      return labs;
    };
    for (std::size_t i = 0; i < test.size(); ++i) {
      test_pyrs.push_back(build_pyramid(test[i], cfg.base_grid,
                                        detail::test_pyramid_seed(cfg.seed, static_cast<Index>(i)),
                                        cfg.k_max, cfg.subsample));
      test_labels.push_back(res1_labels(test[i], test_pyrs.back()));
    }
    if (identity_augment)
      for (std::size_t i = 0; i < train.size(); ++i) {
        train_pyrs.push_back(
            build_pyramid(train[i], cfg.base_grid,
                          detail::train_pyramid_seed(cfg.seed, static_cast<Index>(i)), cfg.k_max,
                          cfg.subsample));
        train_labels.push_back(res1_labels(train[i], train_pyrs.back()));
      }

    auto point_accuracy = [&](const TensorPtr& logits, const std::vector<int>& labs, Index& correct,
                              Index& counted) {
      for (Index r = 0; r < logits->rows(); ++r) {
        if (labs[r] < 0) continue;
        ++counted;
        if (detail::argmax_row(*logits, r) == labs[r]) ++correct;
      }
    };

    for (Index epoch = 0; epoch < cfg.epochs; ++epoch) {
      const Scalar lr_e =
          cfg.lr * static_cast<Scalar>(std::pow(static_cast<double>(cfg.lr_decay), epoch));
      const auto order = detail::epoch_order(train.size(), detail::shuffle_seed(cfg.seed, epoch));
      Scalar loss_sum = 0;
      Index correct = 0, counted = 0;

      const auto starts = detail::batch_starts(static_cast<Index>(train.size()), cfg.batch_size);
      for (std::size_t bi = 0; bi + 1 < starts.size(); ++bi) {
        const Index start = starts[bi], stop = starts[bi + 1];
        Tape tape;
        Context ctx{&tape, true};
        net.params.zero_grad();

        std::vector<StagePyramid> fresh;
        fresh.reserve(static_cast<std::size_t>(stop - start));  // batch holds pointers into it
        std::vector<const StagePyramid*> batch;
        std::vector<int> labs;
        for (Index b = start; b < stop; ++b) {
          const Index ci = order[b];
          if (identity_augment) {
            batch.push_back(&train_pyrs[ci]);
            labs.insert(labs.end(), train_labels[ci].begin(), train_labels[ci].end());
          } else {
            const PointCloud aug_cloud =
                augment(train[ci], cfg.scale_lo, cfg.scale_hi, cfg.noise_std,
                        detail::augment_seed(cfg.seed, epoch, ci));
            fresh.push_back(build_pyramid(aug_cloud, cfg.base_grid,
                                          detail::train_pyramid_seed(cfg.seed, ci), cfg.k_max,
                                          cfg.subsample));
            const auto cloud_labs = res1_labels(train[ci], fresh.back());
            labs.insert(labs.end(), cloud_labs.begin(), cloud_labs.end());
            batch.push_back(&fresh.back());
          }
        }

        const detail::MergedBatch mb = detail::merge_pyramids(batch);
        auto feats = std::make_shared<Tensor>(mb.pyr.clouds[0].features);
        auto logits = segment_forward(ctx, net, mb.pyr, feats);
        auto loss = softmax_cross_entropy_mean(ctx, logits, labs);
        const Scalar loss_v = (*loss)[0];
        if (!std::isfinite(loss_v))
          throw NumericError("training diverged at epoch " + std::to_string(epoch));
        loss_sum += loss_v * static_cast<Scalar>(stop - start);
        point_accuracy(logits, labs, correct, counted);
        tape.backward(loss);
        try {
          sgd_step(net.params, opt, lr_e, cfg.momentum, cfg.weight_decay);
        } catch (const NumericError& e) {
          throw NumericError("epoch " + std::to_string(epoch) + ": " + e.what());
        }
      }

      Index t_correct = 0, t_counted = 0;
      for (std::size_t i = 0; i < test.size(); ++i) {
        Context ctx{nullptr, false};
        auto feats = std::make_shared<Tensor>(test_pyrs[i].clouds[0].features);
        auto logits = segment_forward(ctx, net, test_pyrs[i], feats);
        point_accuracy(logits, test_labels[i], t_correct, t_counted);
      }

      EpochRow row;
      row.epoch = epoch;
      row.train_loss = loss_sum / static_cast<Scalar>(train.size());
      row.train_acc = counted ? static_cast<Scalar>(correct) / static_cast<Scalar>(counted) : 0;
      row.test_acc = t_counted ? static_cast<Scalar>(t_correct) / static_cast<Scalar>(t_counted) : 0;
      result.rows.push_back(row);
      csv << row.epoch << ',' << detail::fmt_metric(row.train_loss) << ','
          << detail::fmt_metric(row.train_acc) << ',' << detail::fmt_metric(row.test_acc) << '\n';
      if (on_epoch) on_epoch(row);
    }
  }

  csv.close();
  save_checkpoint(result.checkpoint_path, net.params);
  std::ofstream manifest(result.manifest_path);
  write_run_config(manifest, cfg);
  if (!result.rows.empty()) result.final_test_acc = result.rows.back().test_acc;
  return result;
}

struct RobustnessRow {
  std::string kind;  // "missing" or "outliers"
  Scalar ratio = 0;
  Scalar accuracy = 0;
};

// A4 protocol: the model saw clean training data; perturbations hit the test
// clouds only, at inference time.
inline std::vector<RobustnessRow> robustness_curves(Network& net, const RunConfig& cfg,
                                                    const std::vector<Scalar>& missing_ratios,
                                                    const std::vector<Scalar>& outlier_ratios) {
  SyntheticShapeSpec test_spec = cfg.dataset;
  test_spec.samples_per_class = cfg.test_per_class;
  test_spec.seed = detail::test_data_seed(cfg.seed);
  const auto test = synth_classification_dataset(test_spec);

  std::vector<RobustnessRow> rows;
  auto eval_ratio = [&](const std::string& kind, Scalar ratio) {
    Index correct = 0;
    for (std::size_t i = 0; i < test.size(); ++i) {
      const std::uint64_t pseed = hash_mix(cfg.seed, 0x9B, static_cast<std::uint64_t>(i));
      const PointCloud perturbed = kind == "missing" ? perturb_missing(test[i], ratio, pseed)
                                                     : perturb_outliers(test[i], ratio, pseed);
      const StagePyramid pyr =
          build_pyramid(perturbed, cfg.base_grid,
                        detail::test_pyramid_seed(cfg.seed, static_cast<Index>(i)), cfg.k_max,
                        cfg.subsample);
      Context ctx{nullptr, false};
      auto feats = std::make_shared<Tensor>(pyr.clouds[0].features);
      auto logits = classify_forward(ctx, net, pyr, feats);
      if (!logits->all_finite()) throw NumericError("robustness evaluation produced non-finite logits");
      if (detail::argmax_row(*logits, 0) == test[i].cloud_label()) ++correct;
    }
    rows.push_back({kind, ratio, static_cast<Scalar>(correct) / static_cast<Scalar>(test.size())});
  };
  for (Scalar r : missing_ratios) eval_ratio("missing", r);
  for (Scalar r : outlier_ratios) eval_ratio("outliers", r);
  return rows;
}

inline void write_robustness_csv(std::ostream& os, const std::vector<RobustnessRow>& rows) {
  os << "perturbation,ratio,accuracy\n";
  for (const auto& r : rows)
    os << r.kind << ',' << detail::fmt_scalar(r.ratio) << ',' << detail::fmt_metric(r.accuracy)
       << '\n';
}

// Per-point feature norms at the finest resolution: the decoder output for
// segmentation networks, the stage-1 encoder features otherwise.
inline void export_activation_norms(std::ostream& os, Network& net, const StagePyramid& pyr) {
  Context ctx{nullptr, false};
  auto feats = std::make_shared<Tensor>(pyr.clouds[0].features);
  auto stages = encoder_forward(ctx, net, pyr, feats);
  const TensorPtr at_res1 = net.cfg.head == Head::Segmentation
                                ? decoder_features(ctx, net, stages, pyr)
                                : stages[0];
  os << "x,y,z,norm\n";
  for (Index i = 0; i < at_res1->rows(); ++i) {
    Scalar sq = 0;
    for (Index j = 0; j < at_res1->cols(); ++j) sq += (*at_res1)(i, j) * (*at_res1)(i, j);
    os << detail::fmt_scalar(pyr.clouds[0].positions(i, 0)) << ','
       << detail::fmt_scalar(pyr.clouds[0].positions(i, 1)) << ','
       << detail::fmt_scalar(pyr.clouds[0].positions(i, 2)) << ','
       << detail::fmt_metric(std::sqrt(sq)) << '\n';
  }
}

// Finite-difference check of one aggregator family on a small random graph;
// returns the max relative error across features, geometry products and
// every parameter tensor.
inline double aggregator_gradcheck(const AggregatorConfig& base, std::uint64_t seed) {
  AggregatorConfig cfg = base;
  if (cfg.channels < 1) cfg.channels = 12;
  cfg.validate();
  Rng rng(seed);
  const Index n = 6, K = 3, d = cfg.channels;
  NeighborGraph g;
  g.n_query = g.n_support = n;
  g.self_support = true;
  g.offsets.push_back(0);
  for (Index q = 0; q < n; ++q) {
    for (Index j = 0; j < K; ++j) g.neighbor_index.push_back((q + j) % n);
    g.offsets.push_back(static_cast<Index>(g.neighbor_index.size()));
  }
  Tensor pos(n, 3);
  for (Index i = 0; i < pos.size(); ++i) pos[i] = static_cast<Scalar>(rng.uniform(-0.6, 0.6));
  Tensor dp(g.edge_count(), 3);
  for (Index q = 0; q < n; ++q)
    for (Index e = g.offsets[q]; e < g.offsets[q + 1]; ++e)
      for (Index k = 0; k < 3; ++k) dp(e, k) = pos(g.neighbor_index[e], k) - pos(q, k);
  auto f = make_tensor(n, d);
  for (Index i = 0; i < f->size(); ++i) (*f)[i] = static_cast<Scalar>(rng.normal());
  auto params = make_aggregator_params(cfg, Scalar(1), seed, rng);

  std::vector<TensorPtr> inputs{f};
  for (auto& fc : params.fcs) {
    inputs.push_back(fc.weight);
    if (fc.bias) inputs.push_back(fc.bias);
  }
  if (params.kernel_weights) inputs.push_back(params.kernel_weights);

  return grad_check(
      [&](Context& ctx) {
        return sum_all(ctx, aggregate(ctx, cfg, g, dp, f, f, params, &pos, &pos));
      },
      inputs, 1e-5);
}

// Finite-difference check of a whole small network (classification head, BN
// in eval mode) against every trainable parameter. The default step is finer
// than the per-operator checks use: five stages of relus leave some
// pre-activation within 1e-5 of a fold on most seeds, and the stencil must
// stay on one side of it.
inline double network_gradcheck(const AggregatorConfig& agg, std::uint64_t seed, Index base_width = 6,
                                Index points = 32, double eps = 1e-6) {
  NetworkConfig net_cfg;
  net_cfg.base_width = base_width;
  net_cfg.bottleneck_ratio = 1;
  net_cfg.block_repeat = 0;
  net_cfg.num_classes = 2;
  net_cfg.aggregator = agg;
  net_cfg.base_radius = Scalar(2.5) * Scalar(0.3);
  net_cfg.validate();

  Rng rng(seed);
  Tensor pos(points, 3);
  for (Index i = 0; i < pos.size(); ++i) pos[i] = static_cast<Scalar>(rng.uniform(-1.0, 1.0));
  const PointCloud cloud{std::move(pos)};
  const StagePyramid pyr = build_pyramid(cloud, Scalar(0.3), seed, 8, SubsampleMode::Centroid);

  Network net = build_network(net_cfg, hash_mix(seed, 0x6E7));
  // park no relu on its kink: aggregate entries can be exactly zero, and a
  // zero BN shift would put the following relu right at the fold
  for (auto& e : net.params.entries())
    if (e.name.size() > 6 && e.name.substr(e.name.size() - 6) == ".shift")
      for (Index i = 0; i < e.tensor->size(); ++i)
        (*e.tensor)[i] = static_cast<Scalar>(rng.uniform(0.05, 0.25));

  std::vector<TensorPtr> inputs;
  for (auto& e : net.params.entries())
    if (e.trainable) inputs.push_back(e.tensor);

  const std::vector<int> label{1};
  return grad_check(
      [&](Context& ctx) {
        auto feats = std::make_shared<Tensor>(pyr.clouds[0].features);
        auto logits = classify_forward(ctx, net, pyr, feats);
        return softmax_cross_entropy_mean(ctx, logits, label);
      },
      inputs, eps);
}

}  // namespace pointagg
