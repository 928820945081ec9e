#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "rd3d/keyvalue.hpp"
#include "rd3d/metrics.hpp"
#include "rd3d/train.hpp"

namespace rd3d {

/// Settings of the ablation command: seeds, the held-out split, and which variants run.
struct AblationConfig {
  std::vector<std::uint64_t> seeds{0, 1, 2};
  std::size_t test_count = 16;
  std::vector<std::string> variants{"input_fusion", "two_stream", "siamese", "rd3d", "model1", "model2", "model3", "model4"};
};

/// Everything a command can be configured with; one flat key space.
struct RunConfig {
  TrainConfig train;
  SynthConfig synth;
  metrics::MetricConfig metric;
  AblationConfig ablation;

  void validate() const {
    train.validate();
    synth.validate();
    metric.validate();
    if (ablation.seeds.empty()) throw ConfigError("ablation_seeds must not be empty");
    for (const auto& v : ablation.variants) variant_from_name(v, train.variant.encoder);
  }
};

inline ShapeKind shape_from_string(const KeyValue& kv, const std::string& s) {
  if (s == "ellipse") return ShapeKind::Ellipse;
  if (s == "rectangle") return ShapeKind::Rectangle;
  if (s == "blob") return ShapeKind::Blob;
  kv.fail("unknown shape '" + s + "' (expected ellipse, rectangle or blob)");
}

inline std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  for (std::string item; std::getline(ss, item, ',');) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

/// Applies one key to the run configuration; unknown keys are rejected with their location.
inline void apply(RunConfig& c, const KeyValue& kv) {
  const std::string& k = kv.key;
  if (k == "input_side") {
    c.train.input_side = as_size(kv);
    c.train.variant.encoder.input_side = c.train.input_side;
  } else if (k == "preset") {
    apply_variant_key(c.train.variant, kv);
    c.train.input_side = c.train.variant.encoder.input_side;
  } else if (apply_variant_key(c.train.variant, kv)) {
  } else if (k == "lr0") {
    c.train.lr0 = as_double(kv);
  } else if (k == "weight_decay") {
    c.train.weight_decay = as_double(kv);
  } else if (k == "epochs") {
    c.train.epochs = as_size(kv);
  } else if (k == "batch_size") {
    c.train.batch_size = as_size(kv);
  } else if (k == "seed") {
    c.train.seed = as_u64(kv);
  } else if (k == "flip") {
    c.train.flip = as_bool(kv);
  } else if (k == "cosine") {
    c.train.cosine = as_bool(kv);
  } else if (k == "scales") {
    c.train.scales = kv.value.empty() ? std::vector<std::size_t>{} : as_size_list(kv);
  } else if (k == "synth_seed") {
    c.synth.seed = as_u64(kv);
  } else if (k == "count") {
    c.synth.count = as_size(kv);
  } else if (k == "canvas_side") {
    c.synth.canvas_side = as_size(kv);
  } else if (k == "shapes") {
    c.synth.shapes.clear();
    for (const auto& s : split_list(kv.value)) c.synth.shapes.push_back(shape_from_string(kv, s));
  } else if (k == "depth_contrast_min") {
    c.synth.depth_contrast_min = as_double(kv);
  } else if (k == "depth_contrast_max") {
    c.synth.depth_contrast_max = as_double(kv);
  } else if (k == "clutter_density") {
    c.synth.clutter_density = as_double(kv);
  } else if (k == "beta2") {
    c.metric.beta2 = as_double(kv);
  } else if (k == "alpha") {
    c.metric.alpha = as_double(kv);
  } else if (k == "thresholds") {
    c.metric.thresholds = as_size(kv);
  } else if (k == "ablation_seeds") {
    c.ablation.seeds.clear();
    for (const auto& s : split_list(kv.value)) c.ablation.seeds.push_back(as_u64(kv, s));
  } else if (k == "ablation_test_count") {
    c.ablation.test_count = as_size(kv);
  } else if (k == "ablation_variants") {
    c.ablation.variants = split_list(kv.value);
  } else {
    kv.fail("unknown key");
  }
}

inline RunConfig parse_config(const std::string& text, const std::string& source = "config") {
  RunConfig c;
  for (const auto& kv : parse_key_values(text, source)) apply(c, kv);
  return c;
}

inline std::string read_text(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw ConfigError(p.string() + ": cannot open config file");
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Loads `path` (optional) and then applies `key=value` overrides in order.
inline RunConfig load_config(const std::string& path, const std::vector<std::string>& overrides = {}) {
  RunConfig c = path.empty() ? RunConfig{} : parse_config(read_text(path), path);
  for (const auto& o : overrides) apply(c, parse_override(o));
  c.validate();
  return c;
}

}  // namespace rd3d
