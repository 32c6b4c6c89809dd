#pragma once

#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "pointagg/harness/shapes.hpp"
#include "pointagg/net/network.hpp"

namespace pointagg {

enum class TaskKind { Classify, Segment, GradCheck, Complexity, Bench, Robustness };

inline const char* task_name(TaskKind t) {
  switch (t) {
    case TaskKind::Classify: return "classify";
    case TaskKind::Segment: return "segment";
    case TaskKind::GradCheck: return "grad_check";
    case TaskKind::Complexity: return "complexity";
    case TaskKind::Bench: return "bench";
    case TaskKind::Robustness: return "robustness";
  }
  return "?";
}

inline TaskKind task_from_name(const std::string& s) {
  for (TaskKind t : {TaskKind::Classify, TaskKind::Segment, TaskKind::GradCheck,
                     TaskKind::Complexity, TaskKind::Bench, TaskKind::Robustness})
    if (s == task_name(t)) return t;
  throw ValidationError("unknown task: " + s);
}

inline Family family_from_name(const std::string& s) {
  for (Family f : {Family::Identity, Family::Pool, Family::PointwiseMLP, Family::PseudoGrid,
                   Family::AdaptiveWeight, Family::PosPool, Family::PosPoolEmbed,
                   Family::PosPoolVariant})
    if (s == family_name(f)) return f;
  throw ValidationError("unknown aggregator family: " + s);
}

inline Reduction reduction_from_name(const std::string& s) {
  for (Reduction r : {Reduction::MAX, Reduction::SUM, Reduction::AVG})
    if (s == reduction_name(r)) return r;
  throw ValidationError("unknown reduction: " + s);
}

inline const char* input_mode_name(InputMode m) {
  switch (m) {
    case InputMode::DP: return "dp";
    case InputMode::DF: return "df";
    case InputMode::DP_DF: return "dp_df";
    case InputMode::DP_F_DF: return "dp_f_df";
    case InputMode::DP_STAR: return "dp_star";
  }
  return "?";
}

inline InputMode input_mode_from_name(const std::string& s) {
  for (InputMode m :
       {InputMode::DP, InputMode::DF, InputMode::DP_DF, InputMode::DP_F_DF, InputMode::DP_STAR})
    if (s == input_mode_name(m)) return m;
  throw ValidationError("unknown input mode: " + s);
}

inline const char* variant_name(VariantKind v) {
  switch (v) {
    case VariantKind::SecondOrder: return "second_order";
    case VariantKind::ThirdOrder: return "third_order";
    case VariantKind::AngleDistance: return "angle_distance";
    case VariantKind::AngleGauss: return "angle_gauss";
    case VariantKind::AngleOnly: return "angle_only";
    case VariantKind::DistOnly: return "dist_only";
    case VariantKind::GaussDistOnly: return "gauss_dist_only";
  }
  return "?";
}

inline VariantKind variant_from_name(const std::string& s) {
  for (VariantKind v : {VariantKind::SecondOrder, VariantKind::ThirdOrder,
                        VariantKind::AngleDistance, VariantKind::AngleGauss, VariantKind::AngleOnly,
                        VariantKind::DistOnly, VariantKind::GaussDistOnly})
    if (s == variant_name(v)) return v;
  throw ValidationError("unknown variant: " + s);
}

inline const char* head_name(Head h) {
  return h == Head::Classification ? "classification" : "segmentation";
}

inline Head head_from_name(const std::string& s) {
  if (s == "classification") return Head::Classification;
  if (s == "segmentation") return Head::Segmentation;
  throw ValidationError("unknown head: " + s);
}

inline const char* subsample_name(SubsampleMode m) {
  return m == SubsampleMode::Random ? "random" : "centroid";
}

inline SubsampleMode subsample_from_name(const std::string& s) {
  if (s == "random") return SubsampleMode::Random;
  if (s == "centroid") return SubsampleMode::Centroid;
  throw ValidationError("unknown subsample mode: " + s);
}

// Everything one run needs, fully seeded. Derived geometry (ball radii, the
// per-stage grids) comes from base_grid alone.
struct RunConfig {
  TaskKind task = TaskKind::Classify;
  NetworkConfig network;
  std::uint64_t seed = 1;
  Index epochs = 10;
  Scalar lr = Scalar(0.002);
  Scalar lr_decay = static_cast<Scalar>(std::pow(0.1, 1.0 / 200.0));
  Scalar momentum = Scalar(0.98);
  Scalar weight_decay = Scalar(0.001);
  Index batch_size = 8;
  Index votes = 1;
  Scalar scale_lo = 1, scale_hi = 1;  // anisotropic scaling range; [1,1] = off
  Scalar noise_std = 0;
  SyntheticShapeSpec dataset;  // samples_per_class = training clouds per class
  Index test_per_class = 20;
  Scalar base_grid = Scalar(0.18);
  Index k_max = 16;
  SubsampleMode subsample = SubsampleMode::Centroid;
  std::string out_dir = "out";

  void validate() const {
    if (epochs < 0) throw ValidationError("epochs must be non-negative");
    if (!(lr > 0)) throw ValidationError("lr must be positive");
    if (!(lr_decay > 0 && lr_decay <= 1)) throw ValidationError("lr_decay must lie in (0, 1]");
    if (!(momentum >= 0 && momentum < 1)) throw ValidationError("momentum must lie in [0, 1)");
    if (weight_decay < 0) throw ValidationError("weight_decay must be non-negative");
    if (batch_size < 1) throw ValidationError("batch_size must be at least 1");
    if (votes < 1) throw ValidationError("votes must be at least 1");
    if (!(scale_lo > 0) || !(scale_hi >= scale_lo))
      throw ValidationError("scale range needs 0 < scale_lo <= scale_hi");
    if (!(noise_std >= 0)) throw ValidationError("noise_std must be non-negative");
    if (test_per_class < 1) throw ValidationError("test_per_class must be at least 1");
    if (!(base_grid > 0)) throw ValidationError("base_grid must be positive");
    if (k_max < 1) throw ValidationError("k_max must be at least 1");
    dataset.validate(task == TaskKind::Classify);
  }

  // The network as actually built: radii follow the geometry, the class count
  // follows the dataset, and the head follows the task.
  NetworkConfig resolved_network() const {
    NetworkConfig n = network;
    n.base_radius = Scalar(2.5) * base_grid;
    n.input_feature_width = 3;  // synthetic clouds carry coordinate features
    if (task == TaskKind::Segment) {
      n.head = Head::Segmentation;
      n.num_classes = 2;
    } else {
      n.head = Head::Classification;
      n.num_classes = static_cast<Index>(dataset.classes.size());
    }
    return n;
  }
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

inline double parse_number(const std::string& v, const std::string& where) {
  try {
    std::size_t used = 0;
    const double x = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw ValidationError(where + ": not a number: " + v);
  }
}

inline std::int64_t parse_int(const std::string& v, const std::string& where) {
  try {
    std::size_t used = 0;
    const long long x = std::stoll(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw ValidationError(where + ": not an integer: " + v);
  }
}

inline bool parse_flag(const std::string& v, const std::string& where) {
  if (v == "1" || v == "true" || v == "on") return true;
  if (v == "0" || v == "false" || v == "off") return false;
  throw ValidationError(where + ": not a flag: " + v);
}

inline std::vector<ShapeKind> parse_shape_list(const std::string& v, const std::string& where) {
  std::vector<ShapeKind> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) throw ValidationError(where + ": empty shape name");
    out.push_back(shape_from_name(item));
  }
  if (out.empty()) throw ValidationError(where + ": empty shape list");
  return out;
}

}  // namespace detail

// Line-based `[section] key = value` format; `#` starts a comment. Unknown
// sections or keys are errors so a typo can't silently fall back to defaults.
inline RunConfig parse_run_config(std::istream& in) {
  RunConfig cfg;
  std::string section;
  std::string line;
  Index lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const std::string where = "config line " + std::to_string(lineno);

    if (line.front() == '[') {
      if (line.back() != ']') throw ValidationError(where + ": unterminated section header");
      section = detail::trim(line.substr(1, line.size() - 2));
      if (section != "run" && section != "network" && section != "aggregator" &&
          section != "dataset" && section != "augment" && section != "geometry")
        throw ValidationError(where + ": unknown section [" + section + "]");
      continue;
    }

    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ValidationError(where + ": expected key = value");
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string value = detail::trim(line.substr(eq + 1));
    if (key.empty() || value.empty()) throw ValidationError(where + ": expected key = value");
    if (section.empty()) throw ValidationError(where + ": key outside any section");

    if (section == "run") {
      if (key == "task") cfg.task = task_from_name(value);
      else if (key == "seed") cfg.seed = static_cast<std::uint64_t>(detail::parse_int(value, where));
      else if (key == "epochs") cfg.epochs = static_cast<Index>(detail::parse_int(value, where));
      else if (key == "lr") cfg.lr = static_cast<Scalar>(detail::parse_number(value, where));
      else if (key == "lr_decay") cfg.lr_decay = static_cast<Scalar>(detail::parse_number(value, where));
      else if (key == "momentum") cfg.momentum = static_cast<Scalar>(detail::parse_number(value, where));
      else if (key == "weight_decay") cfg.weight_decay = static_cast<Scalar>(detail::parse_number(value, where));
      else if (key == "batch_size") cfg.batch_size = static_cast<Index>(detail::parse_int(value, where));
      else if (key == "votes") cfg.votes = static_cast<Index>(detail::parse_int(value, where));
      else if (key == "out_dir") cfg.out_dir = value;
      else throw ValidationError(where + ": unknown run key " + key);
    } else if (section == "network") {
      if (key == "base_width") cfg.network.base_width = static_cast<Index>(detail::parse_int(value, where));
      else if (key == "bottleneck_ratio") cfg.network.bottleneck_ratio = static_cast<Index>(detail::parse_int(value, where));
      else if (key == "block_repeat") cfg.network.block_repeat = static_cast<Index>(detail::parse_int(value, where));
      else throw ValidationError(where + ": unknown network key " + key);
    } else if (section == "aggregator") {
      auto& agg = cfg.network.aggregator;
      if (key == "family") agg = AggregatorConfig::defaults(family_from_name(value));
      else if (key == "reduction") agg.reduction = reduction_from_name(value);
      else if (key == "fc_count") agg.fc_count = static_cast<Index>(detail::parse_int(value, where));
      else if (key == "input_mode") agg.input_mode = input_mode_from_name(value);
      else if (key == "softmax_normalize") agg.softmax_normalize = detail::parse_flag(value, where);
      else if (key == "variant") agg.variant_kind = variant_from_name(value);
      else if (key == "kernel_points") agg.kernel_points = static_cast<Index>(detail::parse_int(value, where));
      else if (key == "sigma") agg.sigma = static_cast<Scalar>(detail::parse_number(value, where));
      else if (key == "fast_path") agg.mlp_fast_path = detail::parse_flag(value, where);
      else throw ValidationError(where + ": unknown aggregator key " + key);
    } else if (section == "dataset") {
      if (key == "classes") cfg.dataset.classes = detail::parse_shape_list(value, where);
      else if (key == "points") cfg.dataset.points = static_cast<Index>(detail::parse_int(value, where));
      else if (key == "train_per_class") cfg.dataset.samples_per_class = static_cast<Index>(detail::parse_int(value, where));
      else if (key == "test_per_class") cfg.test_per_class = static_cast<Index>(detail::parse_int(value, where));
      else if (key == "jitter") cfg.dataset.jitter = static_cast<Scalar>(detail::parse_number(value, where));
      else throw ValidationError(where + ": unknown dataset key " + key);
    } else if (section == "augment") {
      if (key == "scale_lo") cfg.scale_lo = static_cast<Scalar>(detail::parse_number(value, where));
      else if (key == "scale_hi") cfg.scale_hi = static_cast<Scalar>(detail::parse_number(value, where));
      else if (key == "noise_std") cfg.noise_std = static_cast<Scalar>(detail::parse_number(value, where));
      else throw ValidationError(where + ": unknown augment key " + key);
    } else {  // geometry
      if (key == "base_grid") cfg.base_grid = static_cast<Scalar>(detail::parse_number(value, where));
      else if (key == "k_max") cfg.k_max = static_cast<Index>(detail::parse_int(value, where));
      else if (key == "subsample") cfg.subsample = subsample_from_name(value);
      else throw ValidationError(where + ": unknown geometry key " + key);
    }
  }
  return cfg;
}

inline RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open config " + path);
  return parse_run_config(in);
}

namespace detail {

inline std::string fmt_scalar(Scalar v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.17g", static_cast<double>(v));
  return buf;
}

}  // namespace detail

// Round-trippable dump of the full configuration, written next to every
// run's outputs so the result can be reproduced from the manifest alone.
inline void write_run_config(std::ostream& os, const RunConfig& cfg) {
  os << "[run]\n";
  os << "task = " << task_name(cfg.task) << '\n';
  os << "seed = " << cfg.seed << '\n';
  os << "epochs = " << cfg.epochs << '\n';
  os << "lr = " << detail::fmt_scalar(cfg.lr) << '\n';
  os << "lr_decay = " << detail::fmt_scalar(cfg.lr_decay) << '\n';
  os << "momentum = " << detail::fmt_scalar(cfg.momentum) << '\n';
  os << "weight_decay = " << detail::fmt_scalar(cfg.weight_decay) << '\n';
  os << "batch_size = " << cfg.batch_size << '\n';
  os << "votes = " << cfg.votes << '\n';
  os << "out_dir = " << cfg.out_dir << '\n';
  os << "\n[network]\n";
  os << "base_width = " << cfg.network.base_width << '\n';
  os << "bottleneck_ratio = " << cfg.network.bottleneck_ratio << '\n';
  os << "block_repeat = " << cfg.network.block_repeat << '\n';
  const auto& agg = cfg.network.aggregator;
  os << "\n[aggregator]\n";
  os << "family = " << family_name(agg.family) << '\n';
  os << "reduction = " << reduction_name(agg.reduction) << '\n';
  os << "fc_count = " << agg.fc_count << '\n';
  os << "input_mode = " << input_mode_name(agg.input_mode) << '\n';
  os << "softmax_normalize = " << (agg.softmax_normalize ? 1 : 0) << '\n';
  os << "variant = " << variant_name(agg.variant_kind) << '\n';
  os << "kernel_points = " << agg.kernel_points << '\n';
  os << "sigma = " << detail::fmt_scalar(agg.sigma) << '\n';
  os << "fast_path = " << (agg.mlp_fast_path ? 1 : 0) << '\n';
  os << "\n[dataset]\n";
  os << "classes = ";
  for (std::size_t i = 0; i < cfg.dataset.classes.size(); ++i)
    os << (i ? "," : "") << shape_name(cfg.dataset.classes[i]);
  os << '\n';
  os << "points = " << cfg.dataset.points << '\n';
  os << "train_per_class = " << cfg.dataset.samples_per_class << '\n';
  os << "test_per_class = " << cfg.test_per_class << '\n';
  os << "jitter = " << detail::fmt_scalar(cfg.dataset.jitter) << '\n';
  os << "\n[augment]\n";
  os << "scale_lo = " << detail::fmt_scalar(cfg.scale_lo) << '\n';
  os << "scale_hi = " << detail::fmt_scalar(cfg.scale_hi) << '\n';
  os << "noise_std = " << detail::fmt_scalar(cfg.noise_std) << '\n';
  os << "\n[geometry]\n";
  os << "base_grid = " << detail::fmt_scalar(cfg.base_grid) << '\n';
  os << "k_max = " << cfg.k_max << '\n';
  os << "subsample = " << subsample_name(cfg.subsample) << '\n';
}

}  // namespace pointagg
