#pragma once

#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numbers>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "rd3d/data.hpp"
#include "rd3d/keyvalue.hpp"
#include "rd3d/model.hpp"
#include "rd3d/ops.hpp"

namespace rd3d {

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class LoadError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainConfig {
  double lr0 = 1e-4;
  double weight_decay = 1e-3;
  std::size_t epochs = 60;
  std::size_t batch_size = 4;
  std::uint64_t seed = 0;
  VariantSpec variant;
  std::size_t input_side = 64;
  bool flip = true;
  bool cosine = true;               // false keeps lr0 for every epoch
  std::vector<std::size_t> scales;  // training sides; empty = {input_side}

  std::vector<std::size_t> training_sides() const { return scales.empty() ? std::vector<std::size_t>{input_side} : scales; }

  void validate() const {
    if (!(lr0 > 0.0)) throw ConfigError("lr0 must be positive");
    if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be non-negative");
    if (epochs == 0) throw ConfigError("epochs must be positive");
    if (batch_size == 0) throw ConfigError("batch_size must be positive");
    for (std::size_t s : training_sides()) {
      if (s == 0 || s % 32 != 0) throw ConfigError("training side " + std::to_string(s) + " must be a positive multiple of 32");
    }
    variant.validate();
  }

  /// The model spec with the configured input side.
  VariantSpec model_spec() const {
    VariantSpec v = variant;
    v.encoder.input_side = input_side;
    return v;
  }
};

/// Cosine decay from lr0 at epoch 0 to 0 at epoch == epochs.
inline double cosine_lr(std::size_t epoch, const TrainConfig& cfg) {
  if (epoch > cfg.epochs) {
    throw ArgumentError("cosine_lr: epoch " + std::to_string(epoch) + " outside [0, " + std::to_string(cfg.epochs) + "]");
  }
  const double lr_min = 0.0;
  return lr_min + 0.5 * (cfg.lr0 - lr_min) *
                      (1.0 + std::cos(std::numbers::pi * static_cast<double>(epoch) / static_cast<double>(cfg.epochs)));
}

// ---------------------------------------------------------------------------------------------
// Adam with coupled L2 weight decay.

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <class T>
struct AdamState {
  std::uint64_t step = 0;
  NamedTensors<T> m;
  NamedTensors<T> v;
};

/// One update of every trainable parameter in `store`. A parameter without an entry in `grads`
/// is treated as having zero gradient; weight decay still applies.
template <class T>
void adam_step(ParamStore<T>& store, const Gradients<T>& grads, AdamState<T>& state, double lr, double weight_decay,
               const AdamConfig& cfg = {}) {
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  for (const auto& e : store.entries()) {
    if (!e.trainable) continue;
    Tensor<T>& p = e.var->value;
    auto [mit, fresh_m] = state.m.try_emplace(e.name, p.shape());
    auto [vit, fresh_v] = state.v.try_emplace(e.name, p.shape());
    Tensor<T>& m = mit->second;
    Tensor<T>& v = vit->second;
    const auto git = grads.find(e.name);
    const Tensor<T>* g = git == grads.end() ? nullptr : &git->second;
    if (g && g->shape() != p.shape()) throw DimensionError("adam_step: gradient shape mismatch for " + e.name);
    for (std::size_t i = 0; i < p.numel(); ++i) {
      const double gi = (g ? static_cast<double>((*g)[i]) : 0.0) + weight_decay * static_cast<double>(p[i]);
      const double mi = cfg.beta1 * static_cast<double>(m[i]) + (1.0 - cfg.beta1) * gi;
      const double vi = cfg.beta2 * static_cast<double>(v[i]) + (1.0 - cfg.beta2) * gi * gi;
      m[i] = static_cast<T>(mi);
      v[i] = static_cast<T>(vi);
      const double update = lr * (mi / c1) / (std::sqrt(vi / c2) + cfg.eps);
      p[i] = static_cast<T>(static_cast<double>(p[i]) - update);
    }
  }
}

// ---------------------------------------------------------------------------------------------
// Checkpoint: "RD3DCKPT", u32 version, u32-length-prefixed spec text, then parameter records and
// optimizer records, each block preceded by a u32 record count. A record is
// (u32 name length, name, u32 rank, rank x u32 extents, f32 little-endian payload).

using TensorRecords = std::vector<std::pair<std::string, Tensor<float>>>;

struct Checkpoint {
  static constexpr char kMagic[8] = {'R', 'D', '3', 'D', 'C', 'K', 'P', 'T'};
  static constexpr std::uint32_t kVersion = 1;

  VariantSpec spec;
  std::uint64_t seed = 0;
  std::size_t epoch = 0;  // completed epochs; the data order of epoch e derives from (seed, e)
  std::uint64_t adam_step = 0;
  TensorRecords params;     // trainable parameters and buffers, in model order
  TensorRecords optimizer;  // "adam.m/<name>", "adam.v/<name>"

  std::string spec_text() const {
    return spec.to_text() + "seed = " + std::to_string(seed) + "\nepoch = " + std::to_string(epoch) +
           "\nadam_step = " + std::to_string(adam_step) + "\n";
  }

  std::vector<std::uint8_t> serialize() const {
    std::vector<std::uint8_t> out(kMagic, kMagic + 8);
    put_u32(out, kVersion);
    const std::string text = spec_text();
    put_u32(out, static_cast<std::uint32_t>(text.size()));
    out.insert(out.end(), text.begin(), text.end());
    for (const TensorRecords* block : {&params, &optimizer}) {
      put_u32(out, static_cast<std::uint32_t>(block->size()));
      for (const auto& [name, t] : *block) {
        put_u32(out, static_cast<std::uint32_t>(name.size()));
        out.insert(out.end(), name.begin(), name.end());
        put_u32(out, static_cast<std::uint32_t>(kRank));
        for (std::size_t i = 0; i < kRank; ++i) put_u32(out, static_cast<std::uint32_t>(t.shape()[i]));
        for (float v : t.storage()) put_u32(out, std::bit_cast<std::uint32_t>(v));
      }
    }
    return out;
  }

  static Checkpoint parse(const std::vector<std::uint8_t>& bytes, const std::string& source = "checkpoint") {
    Reader r{bytes, 0, source};
    if (bytes.size() < 8 || std::memcmp(bytes.data(), kMagic, 8) != 0) r.fail("bad magic");
    r.pos = 8;
    const std::uint32_t version = r.u32();
    if (version != kVersion) r.fail("unsupported version " + std::to_string(version));
    const std::string text = r.str(r.u32());
    Checkpoint c;
    VariantSpec v;
    for (const auto& kv : parse_key_values(text, source + " spec")) {
      if (kv.key == "seed") c.seed = as_u64(kv);
      else if (kv.key == "epoch") c.epoch = as_size(kv);
      else if (kv.key == "adam_step") c.adam_step = as_u64(kv);
      else if (!apply_variant_key(v, kv)) kv.fail("unknown key");
    }
    v.validate();
    c.spec = v;
    for (TensorRecords* block : {&c.params, &c.optimizer}) {
      const std::uint32_t count = r.u32();
      for (std::uint32_t k = 0; k < count; ++k) {
        std::string name = r.str(r.u32());
        const std::uint32_t rank = r.u32();
        if (rank != kRank) r.fail("record " + name + " has rank " + std::to_string(rank));
        Shape s;
        for (std::size_t i = 0; i < kRank; ++i) s[i] = r.u32();
        if (s.numel() == 0) r.fail("record " + name + " has a zero extent");
        if ((bytes.size() - r.pos) / 4 < s.numel()) r.fail("record " + name + " is truncated");
        Tensor<float> t(s);
        for (auto& x : t.storage()) x = std::bit_cast<float>(r.u32());
        block->emplace_back(std::move(name), std::move(t));
      }
    }
    if (r.pos != bytes.size()) r.fail("trailing bytes");
    return c;
  }

  void save(const std::filesystem::path& path) const {
    const auto bytes = serialize();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError(path.string() + ": cannot open for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError(path.string() + ": write failed");
  }

  static Checkpoint load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError(path.string() + ": cannot open for reading");
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return parse(bytes, path.string());
  }

 private:
  static void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }

  struct Reader {
    const std::vector<std::uint8_t>& b;
    std::size_t pos;
    std::string source;

    [[noreturn]] void fail(const std::string& what) const {
      throw LoadError(source + ": " + what + " at byte offset " + std::to_string(pos));
    }
    std::uint32_t u32() {
      if (b.size() - pos < 4) fail("unexpected end of file");
      std::uint32_t v = 0;
      for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[pos + i]) << (8 * i);
      pos += 4;
      return v;
    }
    std::string str(std::uint32_t n) {
      if (b.size() - pos < n) fail("unexpected end of file");
      std::string s(b.begin() + static_cast<std::ptrdiff_t>(pos), b.begin() + static_cast<std::ptrdiff_t>(pos + n));
      pos += n;
      return s;
    }
  };
};

inline TensorRecords model_records(const Model<float>& m) {
  TensorRecords out;
  for (const auto& e : m.params().entries()) out.emplace_back(e.name, e.var->value);
  return out;
}

inline TensorRecords optimizer_records(const Model<float>& m, const AdamState<float>& st) {
  TensorRecords out;
  for (const auto& e : m.params().entries()) {
    if (!e.trainable) continue;
    if (auto it = st.m.find(e.name); it != st.m.end()) out.emplace_back("adam.m/" + e.name, it->second);
    if (auto it = st.v.find(e.name); it != st.v.end()) out.emplace_back("adam.v/" + e.name, it->second);
  }
  return out;
}

/// Rebuilds the model a checkpoint describes. Every model tensor must be present with its exact shape.
inline std::unique_ptr<Model<float>> restore_model(const Checkpoint& c) {
  auto m = build<float>(c.spec, c.seed);
  std::map<std::string, const Tensor<float>*> by_name;
  for (const auto& [name, t] : c.params) by_name[name] = &t;
  std::vector<std::string> bad;
  for (const auto& e : m->params().entries()) {
    auto it = by_name.find(e.name);
    if (it == by_name.end()) {
      bad.push_back(e.name + " (missing)");
    } else if (it->second->shape() != e.var->value.shape()) {
      bad.push_back(e.name + " (shape " + it->second->shape().str() + ", model expects " + e.var->value.shape().str() + ")");
    } else {
      e.var->value = *it->second;
    }
    by_name.erase(e.name);
  }
  for (const auto& [name, t] : by_name) bad.push_back(name + " (unknown to the model)");
  if (!bad.empty()) {
    std::string msg = "checkpoint does not match its model spec:";
    for (const auto& b : bad) msg += " " + b + ";";
    throw LoadError(msg);
  }
  return m;
}

inline AdamState<float> restore_optimizer(const Checkpoint& c) {
  AdamState<float> st;
  st.step = c.adam_step;
  for (const auto& [name, t] : c.optimizer) {
    if (name.rfind("adam.m/", 0) == 0) st.m.emplace(name.substr(7), t);
    else if (name.rfind("adam.v/", 0) == 0) st.v.emplace(name.substr(7), t);
    else throw LoadError("unknown optimizer record " + name);
  }
  return st;
}

// ---------------------------------------------------------------------------------------------
// Batching and the training loop.

struct Batch {
  Tensor<float> input;  // N x 2 x S x S x 3
  Tensor<float> gt;     // N x 1 x S x S x 1
  std::vector<std::string> ids;
};

inline Batch make_batch(const std::vector<RgbdSample>& samples, std::size_t side) {
  Batch b;
  const std::size_t n = samples.size(), plane = side * side * 3;
  b.input = Tensor<float>(Shape{n, kModalities, side, side, 3});
  b.gt = Tensor<float>(Shape{n, 1, side, side, 1});
  for (std::size_t i = 0; i < n; ++i) {
    auto p = preprocess(samples[i], side);
    std::copy(p.rgb3.storage().begin(), p.rgb3.storage().end(), b.input.storage().begin() + static_cast<std::ptrdiff_t>((2 * i) * plane));
    std::copy(p.depth3.storage().begin(), p.depth3.storage().end(),
              b.input.storage().begin() + static_cast<std::ptrdiff_t>((2 * i + 1) * plane));
    std::copy(p.gt.storage().begin(), p.gt.storage().end(), b.gt.storage().begin() + static_cast<std::ptrdiff_t>(i * side * side));
    b.ids.push_back(samples[i].id);
  }
  return b;
}

/// Seeded Fisher-Yates permutation of 0..n-1.
inline std::vector<std::size_t> permutation(std::size_t n, std::mt19937_64& rng) {
  std::vector<std::size_t> p(n);
  for (std::size_t i = 0; i < n; ++i) p[i] = i;
  for (std::size_t i = n; i > 1; --i) {
    const auto j = static_cast<std::size_t>(uniform01(rng) * static_cast<double>(i));
    std::swap(p[i - 1], p[std::min(j, i - 1)]);
  }
  return p;
}

struct LogEntry {
  std::size_t epoch;
  std::uint64_t step;
  double lr;
  double loss;
};

inline std::string format_log(const LogEntry& e) {
  char buf[128];
  std::snprintf(buf, sizeof buf, "%zu %llu %.9g %.9g", e.epoch, static_cast<unsigned long long>(e.step), e.lr, e.loss);
  return buf;
}

/// Owns the model and optimizer through a run; each epoch is a pure function of
/// (state, seed, epoch index), which makes resuming at an epoch boundary exact.
class Trainer {
 public:
  Trainer(TrainConfig cfg, const std::vector<RgbdSample>& data) : cfg_(std::move(cfg)), data_(data) {
    cfg_.validate();
    if (data_.empty()) throw ArgumentError("train: empty dataset");
    model_ = build<float>(cfg_.model_spec(), cfg_.seed);
  }

  Trainer(TrainConfig cfg, const std::vector<RgbdSample>& data, const Checkpoint& resume) : cfg_(std::move(cfg)), data_(data) {
    cfg_.validate();
    if (data_.empty()) throw ArgumentError("train: empty dataset");
    if (!(resume.spec == cfg_.model_spec())) throw LoadError("resume checkpoint model spec differs from the configuration");
    if (resume.seed != cfg_.seed) throw LoadError("resume checkpoint seed differs from the configuration");
    if (resume.epoch > cfg_.epochs) throw LoadError("resume checkpoint is past the configured epoch count");
    model_ = restore_model(resume);
    adam_ = restore_optimizer(resume);
    epoch_ = resume.epoch;
  }

  bool done() const { return epoch_ >= cfg_.epochs; }
  std::size_t epoch() const { return epoch_; }
  Model<float>& model() { return *model_; }
  const std::vector<LogEntry>& log() const { return log_; }

  /// Runs one epoch; each step's log line also goes to `log_out` when given.
  void run_epoch(std::ostream* log_out = nullptr) {
    if (done()) throw ArgumentError("train: all epochs already completed");
    const double lr = cfg_.cosine ? cosine_lr(epoch_, cfg_) : cfg_.lr0;
    auto order_rng = keyed_rng(cfg_.seed, "epoch/" + std::to_string(epoch_));
    const auto order = permutation(data_.size(), order_rng);
    const auto sides = cfg_.training_sides();
    for (std::size_t b0 = 0, b = 0; b0 < order.size(); b0 += cfg_.batch_size, ++b) {
      auto rng = keyed_rng(cfg_.seed, "augment/" + std::to_string(epoch_) + "/" + std::to_string(b));
      const std::size_t side = sides[std::min(sides.size() - 1, static_cast<std::size_t>(uniform01(rng) * static_cast<double>(sides.size())))];
      std::vector<RgbdSample> picked;
      for (std::size_t k = b0; k < std::min(order.size(), b0 + cfg_.batch_size); ++k) {
        const RgbdSample& s = data_[order[k]];
        picked.push_back(cfg_.flip ? augment(s, rng, {side}).sample : s);
      }
      const Batch batch = make_batch(picked, side);
      const double loss = step(batch, lr);
      LogEntry entry{epoch_, adam_.step, lr, loss};
      log_.push_back(entry);
      if (log_out) *log_out << format_log(entry) << "\n";
    }
    ++epoch_;
  }

  /// One optimizer step on a prepared batch; returns the loss before the update.
  double step(const Batch& batch, double lr) {
    Tape<float> tape;
    Context<float> ctx{&tape, Mode::Train};
    auto out = model_->forward(ctx, constant(batch.input));
    auto loss = ops::bce_loss(&tape, out.probabilities, constant(batch.gt));
    const double value = loss->value.item();
    if (!std::isfinite(value)) {
      std::string ids;
      for (const auto& id : batch.ids) ids += (ids.empty() ? "" : ",") + id;
      throw TrainingError("non-finite loss " + std::to_string(value) + " at epoch " + std::to_string(epoch_) + ", step " +
                          std::to_string(adam_.step + 1) + ", batch ids [" + ids + "]");
    }
    auto grads = tape.backward(loss, model_->params().trainable());
    adam_step(model_->params(), grads, adam_, lr, cfg_.weight_decay);
    return value;
  }

  Checkpoint checkpoint() const {
    Checkpoint c;
    c.spec = model_->spec();
    c.seed = cfg_.seed;
    c.epoch = epoch_;
    c.adam_step = adam_.step;
    c.params = model_records(*model_);
    c.optimizer = optimizer_records(*model_, adam_);
    return c;
  }

 private:
  TrainConfig cfg_;
  const std::vector<RgbdSample>& data_;
  std::unique_ptr<Model<float>> model_;
  AdamState<float> adam_;
  std::size_t epoch_ = 0;
  std::vector<LogEntry> log_;
};

struct TrainResult {
  Checkpoint final;
  std::vector<LogEntry> log;
};

/// Trains to the configured epoch count, optionally from a checkpoint. `on_epoch` sees the
/// checkpoint after every completed epoch.
inline TrainResult train(const TrainConfig& cfg, const std::vector<RgbdSample>& data, const Checkpoint* resume = nullptr,
                         std::ostream* log_out = nullptr, const std::function<void(const Checkpoint&)>& on_epoch = {}) {
  Trainer t = resume ? Trainer(cfg, data, *resume) : Trainer(cfg, data);
  while (!t.done()) {
    t.run_epoch(log_out);
    if (on_epoch) on_epoch(t.checkpoint());
  }
  return {t.checkpoint(), t.log()};
}

// ---------------------------------------------------------------------------------------------
// Inference.

/// Saliency map at the sample's original resolution.
inline metrics::SaliencyMap infer(Model<float>& m, const RgbdSample& s, std::size_t side) {
  const Batch b = make_batch({s}, side);
  Context<float> ctx{nullptr, Mode::Infer};
  auto out = m.forward(ctx, constant(b.input));
  auto full = ops::resize_bilinear<float>(nullptr, out.probabilities, s.rows(), s.cols());
  std::vector<double> v(full->value.numel());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = std::clamp(static_cast<double>(full->value[i]), 0.0, 1.0);
  return metrics::SaliencyMap(s.rows(), s.cols(), std::move(v));
}

inline metrics::SaliencyMap infer(Model<float>& m, const RgbdSample& s) { return infer(m, s, m.spec().encoder.input_side); }

/// Evaluates a model on labeled samples.
inline metrics::SaliencyEval evaluate_model(Model<float>& m, const std::vector<RgbdSample>& samples,
                                            const metrics::MetricConfig& cfg = {}) {
  std::vector<metrics::EvalPair> pairs;
  for (const auto& s : samples) pairs.push_back({s.id, infer(m, s), to_ground_truth(s.gt)});
  return metrics::evaluate_set(pairs, cfg);
}

}  // namespace rd3d
