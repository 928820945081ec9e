#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "rd3d/ops.hpp"

namespace rd3d {

/// Portable uniform draw in [0, 1) from a 64-bit engine (independent of library distributions).
inline double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

inline std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

/// Engine seeded from (seed, key); every named parameter draws from its own stream so that
/// initial values depend only on the seed and the parameter name.
inline std::mt19937_64 keyed_rng(std::uint64_t seed, const std::string& key) {
  return std::mt19937_64(splitmix64(seed ^ fnv1a(key)));
}

enum class Init { HeUniform, Zeros, Ones };

/// Ordered set of named tensors. Trainable parameters receive gradients; buffers
/// (batch-norm running statistics) are serialized but never optimized.
template <class T>
class ParamStore {
 public:
  struct Entry {
    std::string name;
    Var<T> var;
    bool trainable = true;
  };

  explicit ParamStore(std::uint64_t seed = 0) : seed_(seed) {}
  ParamStore(const ParamStore&) = delete;
  ParamStore& operator=(const ParamStore&) = delete;

  Var<T> parameter(const std::string& name, const Shape& shape, Init init, std::size_t fan_in = 1) {
    Tensor<T> v(shape);
    switch (init) {
      case Init::Zeros: break;
      case Init::Ones: v.fill(T(1)); break;
      case Init::HeUniform: {
        auto rng = keyed_rng(seed_, name);
        const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
        for (auto& x : v.storage()) x = static_cast<T>((2.0 * uniform01(rng) - 1.0) * bound);
        break;
      }
    }
    return add(name, std::move(v), true);
  }

  Var<T> buffer(const std::string& name, Tensor<T> v) { return add(name, std::move(v), false); }

  const std::vector<Entry>& entries() const { return entries_; }

  std::vector<Var<T>> trainable() const {
    std::vector<Var<T>> out;
    for (const auto& e : entries_)
      if (e.trainable) out.push_back(e.var);
    return out;
  }

  Var<T> find(const std::string& name) const {
    auto it = index_.find(name);
    return it == index_.end() ? nullptr : entries_[it->second].var;
  }

  std::size_t count(const std::function<bool(const Entry&)>& pred = {}) const {
    std::size_t n = 0;
    for (const auto& e : entries_)
      if (e.trainable && (!pred || pred(e))) n += e.var->value.numel();
    return n;
  }

  std::uint64_t seed() const { return seed_; }

 private:
  Var<T> add(const std::string& name, Tensor<T> v, bool trainable) {
    if (index_.count(name)) throw ArgumentError("ParamStore: duplicate parameter name " + name);
    auto var = std::make_shared<Node<T>>(std::move(v), trainable, name);
    index_[name] = entries_.size();
    entries_.push_back(Entry{name, var, trainable});
    return var;
  }

  std::uint64_t seed_;
  std::vector<Entry> entries_;
  std::map<std::string, std::size_t> index_;
};

/// Per-forward execution state: the tape to record on (null for inference without gradients)
/// and whether batch norm uses batch statistics.
template <class T>
struct Context {
  Tape<T>* tape = nullptr;
  Mode mode = Mode::Infer;
};

namespace nn {

template <class T>
struct BatchNorm {
  Var<T> gamma, beta;
  RunningStats<T> stats;

  BatchNorm() = default;
  BatchNorm(ParamStore<T>& store, const std::string& name, std::size_t channels) {
    const Shape s{1, 1, 1, 1, channels};
    gamma = store.parameter(name + ".gamma", s, Init::Ones);
    beta = store.parameter(name + ".beta", s, Init::Zeros);
    stats.mean = store.buffer(name + ".running_mean", Tensor<T>(s, T(0)));
    stats.var = store.buffer(name + ".running_var", Tensor<T>(s, T(1)));
  }

  Var<T> operator()(Context<T>& ctx, const Var<T>& x) { return ops::batch_norm(ctx.tape, x, gamma, beta, stats, ctx.mode); }
};

/// Convolution with kernel kT x kH x kW; temporal padding is (kT - 1) / 2 unless overridden.
template <class T>
struct Conv {
  Kernel3D<T> kernel;

  Conv() = default;
  Conv(ParamStore<T>& store, const std::string& name, std::array<std::size_t, 3> k, std::size_t cin, std::size_t cout,
       std::array<std::size_t, 3> stride, std::array<std::size_t, 3> pad, bool bias = false) {
    const std::size_t fan_in = k[0] * k[1] * k[2] * cin;
    kernel.weight = store.parameter(name + ".weight", Shape{k[0], k[1], k[2], cin, cout}, Init::HeUniform, fan_in);
    if (bias) kernel.bias = store.parameter(name + ".bias", Shape{1, 1, 1, 1, cout}, Init::Zeros);
    kernel.geom.stride = stride;
    kernel.geom.pad = pad;
  }

  Var<T> operator()(Context<T>& ctx, const Var<T>& x) const { return ops::conv3d(ctx.tape, x, kernel); }
};

/// Convolution + batch norm, optionally followed by ReLU.
template <class T>
struct ConvBn {
  Conv<T> conv;
  BatchNorm<T> bn;
  bool relu = true;

  ConvBn() = default;
  ConvBn(ParamStore<T>& store, const std::string& name, std::array<std::size_t, 3> k, std::size_t cin, std::size_t cout,
         std::array<std::size_t, 3> stride, std::array<std::size_t, 3> pad, bool with_relu = true)
      : conv(store, name + ".conv", k, cin, cout, stride, pad), bn(store, name + ".bn", cout), relu(with_relu) {}

  Var<T> operator()(Context<T>& ctx, const Var<T>& x) {
    auto y = bn(ctx, conv(ctx, x));
    return relu ? ops::relu(ctx.tape, y) : y;
  }
};

template <class T>
struct Linear {
  Var<T> weight, bias;

  Linear() = default;
  Linear(ParamStore<T>& store, const std::string& name, std::size_t cin, std::size_t cout) {
    weight = store.parameter(name + ".weight", Shape{1, 1, 1, cin, cout}, Init::HeUniform, cin);
    bias = store.parameter(name + ".bias", Shape{1, 1, 1, 1, cout}, Init::Zeros);
  }

  Var<T> operator()(Context<T>& ctx, const Var<T>& x) const { return ops::fully_connected(ctx.tape, x, weight, bias); }
};

}  // namespace nn
}  // namespace rd3d
