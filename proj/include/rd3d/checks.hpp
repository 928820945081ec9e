#pragma once

#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "rd3d/model.hpp"
#include "rd3d/ops.hpp"

namespace rd3d::checks {

struct CheckResult {
  std::string name;
  bool passed = false;
  double value = 0.0;  // the measured quantity (max abs diff, relative error, ...)
  std::string detail;
};

inline std::string sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

template <class T>
Tensor<T> random_tensor(const Shape& s, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  Tensor<T> t(s);
  for (auto& v : t.storage()) v = static_cast<T>(lo + (hi - lo) * uniform01(rng));
  return t;
}

template <class T>
double max_abs_diff_of(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a.shape(), b.shape(), "max_abs_diff");
  double m = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i])));
  return m;
}

template <class T>
Tensor<T> plus(const Tensor<T>& a, const Tensor<T>& b) {
  Tensor<T> out = a;
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] += b[i];
  return out;
}

// ---------------------------------------------------------------------------------------------
// Pre-fusion identity: with T = 2, kT = 3 and temporal padding 1, the two output slices of a 3D
// convolution are w2*R + w3*D and w1*R + w2*D, each term a per-slice 2D convolution.

template <class T>
double eq1_max_diff(std::size_t draws, std::uint64_t seed) {
  auto rng = keyed_rng(seed, "eq1");
  double worst = 0.0;
  for (std::size_t d = 0; d < draws; ++d) {
    auto pick = [&](std::size_t lo, std::size_t hi) { return lo + static_cast<std::size_t>(uniform01(rng) * static_cast<double>(hi - lo + 1)); };
    const std::size_t n = pick(1, 2), cin = pick(1, 4), cout = pick(1, 4), h = pick(3, 9), w = pick(3, 9);
    const std::size_t k = uniform01(rng) < 0.5 ? 1 : 3;
    const std::size_t stride = uniform01(rng) < 0.3 ? 2 : 1;
    auto x = constant(random_tensor<T>(Shape{n, 2, h, w, cin}, rng));
    // Kernel entries scaled by fan-in, as in an initialized network.
    const double bound = 1.0 / std::sqrt(static_cast<double>(3 * k * k * cin));
    Kernel3D<T> k3{constant(random_tensor<T>(Shape{3, k, k, cin, cout}, rng, -bound, bound)), nullptr, {}};
    k3.geom.stride = {1, stride, stride};
    k3.geom.pad = {1, (k - 1) / 2, (k - 1) / 2};
    auto y = ops::conv3d<T>(nullptr, x, k3);

    auto slice2d = [&](std::size_t i) {
      Kernel3D<T> k2{constant(k3.temporal_slice(i)), nullptr, {}};
      k2.geom.stride = {1, stride, stride};
      k2.geom.pad = {0, (k - 1) / 2, (k - 1) / 2};
      return k2;
    };
    auto R = ops::slice<T>(nullptr, x, Axis::T, 0, 1);
    auto D = ops::slice<T>(nullptr, x, Axis::T, 1, 1);
    auto conv = [&](const Var<T>& in, std::size_t i) { return ops::conv2d<T>(nullptr, in, slice2d(i))->value; };
    const Tensor<T> r0 = plus(conv(R, 1), conv(D, 2));
    const Tensor<T> r1 = plus(conv(R, 0), conv(D, 1));
    worst = std::max(worst, max_abs_diff_of(ops::slice<T>(nullptr, y, Axis::T, 0, 1)->value, r0));
    worst = std::max(worst, max_abs_diff_of(ops::slice<T>(nullptr, y, Axis::T, 1, 1)->value, r1));
  }
  return worst;
}

// ---------------------------------------------------------------------------------------------
// Inflation equivalence: a 3D encoder inflated from a 2D encoder (same BN statistics) evaluated in
// inference mode equals the shared 2D encoder applied to each modality separately.

struct SiameseOptions {
  std::uint64_t seed = 0;
  std::size_t batch = 2;
  std::size_t side = 64;
  double w1_perturbation = 0.0;  // added to the stem's first temporal slice after inflation
  bool randomize_batch_norm = false;  // random affine and running statistics instead of fresh ones
};

inline double inflation_siamese_max_diff(const SiameseOptions& opt, const EncoderConfig& cfg = EncoderConfig::tiny()) {
  ParamStore<float> store2d(opt.seed), store3d(opt.seed + 1);
  ResNetEncoder<float> enc2d(store2d, "encoder", cfg, 3, 1);
  ResNetEncoder<float> enc3d(store3d, "encoder", cfg, 3, 3);
  auto rng = keyed_rng(opt.seed, "siamese");
  for (const auto& e : store2d.entries()) {
    if (!opt.randomize_batch_norm) break;
    auto ends = [&](const char* suffix) {
      const std::string s(suffix);
      return e.name.size() >= s.size() && e.name.compare(e.name.size() - s.size(), s.size(), s) == 0;
    };
    if (ends(".running_var") || ends(".gamma")) e.var->value = random_tensor<float>(e.var->value.shape(), rng, 0.5, 1.5);
    else if (ends(".running_mean") || ends(".beta")) e.var->value = random_tensor<float>(e.var->value.shape(), rng, -0.2, 0.2);
  }
  assign(store3d, inflate_2d(snapshot(store2d, "encoder"), store3d, "encoder"));
  if (opt.w1_perturbation != 0.0) {
    auto w = store3d.find("encoder.stem.conv.weight");
    const std::size_t slice = w->value.numel() / w->value.shape()[0];
    for (std::size_t i = 0; i < slice; ++i) w->value[i] += static_cast<float>(opt.w1_perturbation * (2.0 * uniform01(rng) - 1.0));
  }

  auto x = constant(random_tensor<float>(Shape{opt.batch, 2, opt.side, opt.side, 3}, rng));
  Context<float> ctx{nullptr, Mode::Infer};
  auto y3 = enc3d(ctx, x);
  double worst = 0.0;
  for (std::size_t t = 0; t < 2; ++t) {
    auto y2 = enc2d(ctx, ops::slice<float>(nullptr, x, Axis::T, t, 1));
    for (std::size_t l = 0; l < kLevels; ++l) {
      worst = std::max(worst, max_abs_diff_of(ops::slice<float>(nullptr, y3[l], Axis::T, t, 1)->value, y2[l]->value));
    }
  }
  return worst;
}

// ---------------------------------------------------------------------------------------------
// Central finite differences. The checked function's output is contracted with fixed random
// weights to a scalar; the error is ||analytic - numeric|| / max(||analytic||, ||numeric||).

using BuildLoss = std::function<Var<double>(Tape<double>*)>;

inline double gradient_rel_error(const std::vector<Var<double>>& inputs, const BuildLoss& f, std::uint64_t seed,
                                 double h = 1e-5) {
  Tensor<double> weights;
  auto contract = [&](Tape<double>* tape) {
    auto y = f(tape);
    if (y->value.numel() == 1) return y;
    return ops::sum(tape, ops::multiply(tape, y, constant(weights)));
  };
  {
    auto probe = f(nullptr);
    auto rng = keyed_rng(seed, "fd-weights");
    weights = random_tensor<double>(probe->value.shape(), rng);
  }
  Tape<double> tape;
  for (const auto& v : inputs) v->requires_grad = true;
  auto loss = contract(&tape);
  std::vector<Var<double>> params(inputs.begin(), inputs.end());
  // Inputs may share names; key the analytic gradients by position instead.
  std::vector<std::string> saved;
  for (std::size_t i = 0; i < params.size(); ++i) {
    saved.push_back(params[i]->name);
    params[i]->name = "in" + std::to_string(i);
  }
  auto grads = tape.backward(loss, params);
  double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Tensor<double>& g = grads.at(params[i]->name);
    Tensor<double>& v = params[i]->value;
    for (std::size_t k = 0; k < v.numel(); ++k) {
      const double orig = v[k];
      v[k] = orig + h;
      const double up = contract(nullptr)->value.item();
      v[k] = orig - h;
      const double down = contract(nullptr)->value.item();
      v[k] = orig;
      const double num = (up - down) / (2.0 * h);
      diff2 += (g[k] - num) * (g[k] - num);
      a2 += g[k] * g[k];
      n2 += num * num;
    }
    params[i]->name = saved[i];
  }
  const double denom = std::max({std::sqrt(a2), std::sqrt(n2), 1e-300});
  return std::sqrt(diff2) / denom;
}

inline std::vector<CheckResult> gradient_suite(std::uint64_t seed, double tolerance = 1e-4) {
  std::vector<CheckResult> out;
  auto rng = keyed_rng(seed, "gradients");
  auto leaf_of = [&](const Shape& s, double lo = -1.0, double hi = 1.0) { return leaf(random_tensor<double>(s, rng, lo, hi), "x"); };
  auto record = [&](const std::string& name, double err) {
    out.push_back({"gradient " + name, err < tolerance, err, "relative error " + sci(err) + " (tol " + sci(tolerance) + ")"});
  };

  {
    auto x = leaf_of(Shape{2, 2, 5, 5, 2});
    Kernel3D<double> k{leaf_of(Shape{1, 3, 3, 2, 3}), leaf_of(Shape{1, 1, 1, 1, 3}), {}};
    k.geom.pad = {0, 1, 1};
    record("conv2d", gradient_rel_error({x, k.weight, k.bias}, [&](Tape<double>* t) { return ops::conv2d(t, x, k); }, seed));
  }
  {
    auto x = leaf_of(Shape{1, 2, 6, 5, 2});
    Kernel3D<double> k{leaf_of(Shape{3, 3, 3, 2, 2}), nullptr, {}};
    k.geom.stride = {1, 2, 2};
    k.geom.pad = {1, 1, 1};
    record("conv3d", gradient_rel_error({x, k.weight}, [&](Tape<double>* t) { return ops::conv3d(t, x, k); }, seed));
  }
  {
    auto x = leaf_of(Shape{2, 2, 3, 3, 3});
    auto gamma = leaf_of(Shape{1, 1, 1, 1, 3}, 0.5, 1.5);
    auto beta = leaf_of(Shape{1, 1, 1, 1, 3});
    RunningStats<double> stats{constant(Tensor<double>(Shape{1, 1, 1, 1, 3})), constant(Tensor<double>(Shape{1, 1, 1, 1, 3}, 1.0))};
    record("batch_norm", gradient_rel_error({x, gamma, beta}, [&](Tape<double>* t) {
      return ops::batch_norm(t, x, gamma, beta, stats, Mode::Train);
    }, seed));
  }
  {
    auto x = leaf_of(Shape{1, 2, 3, 4, 2});
    record("bilinear_upsample", gradient_rel_error({x}, [&](Tape<double>* t) { return ops::bilinear_upsample(t, x, 2); }, seed));
  }
  {
    ParamStore<double> store(seed);
    ChannelModalityAttention<double> cma(store, "cma", 4, 3, 4);
    auto x = leaf_of(Shape{2, 3, 3, 3, 4});
    std::vector<Var<double>> in{x};
    for (const auto& e : store.entries()) {
      e.var->value = random_tensor<double>(e.var->value.shape(), rng);
      in.push_back(e.var);
    }
    record("cma", gradient_rel_error(in, [&](Tape<double>* t) {
      Context<double> ctx{t, Mode::Train};
      return cma(ctx, x);
    }, seed));
  }
  {
    ParamStore<double> store(seed);
    TemporalReduce<double> tr(store, "tr", 5, 3);
    auto x = leaf_of(Shape{2, 5, 3, 3, 3});
    std::vector<Var<double>> in{x};
    for (const auto& e : store.entries())
      if (e.trainable) in.push_back(e.var);
    record("temporal_reduce", gradient_rel_error(in, [&](Tape<double>* t) {
      Context<double> ctx{t, Mode::Train};
      return tr(ctx, x);
    }, seed));
  }
  {
    auto p = leaf_of(Shape{2, 1, 4, 4, 1}, 0.05, 0.95);
    Tensor<double> g(p->value.shape());
    for (auto& v : g.storage()) v = uniform01(rng) < 0.5 ? 0.0 : 1.0;
    auto gv = constant(g);
    record("bce_loss", gradient_rel_error({p}, [&](Tape<double>* t) { return ops::bce_loss(t, p, gv); }, seed));
  }
  return out;
}

// ---------------------------------------------------------------------------------------------
// Decoder temporal extents for one forward pass of a full model.

inline DecoderTrace decoder_trace(const VariantSpec& spec, std::uint64_t seed = 0) {
  auto m = build<float>(spec, seed);
  const std::size_t side = spec.encoder.input_side;
  Context<float> ctx{nullptr, Mode::Infer};
  auto x = constant(Tensor<float>(Shape{1, kModalities, side, side, 3}, 0.1f));
  return m->forward(ctx, x).trace;
}

struct SuiteOptions {
  std::uint64_t seed = 0;
  std::size_t eq1_draws = 100;
  double w1_perturbation = 0.0;
};

/// Eq.-(1) equivalence, inflation/Siamese equivalence, gradient checks, and temporal bookkeeping.
inline std::vector<CheckResult> oracle_suite(const SuiteOptions& opt = {}) {
  std::vector<CheckResult> out;
  const double e32 = eq1_max_diff<float>(opt.eq1_draws, opt.seed);
  const double e64 = eq1_max_diff<double>(opt.eq1_draws, opt.seed);
  out.push_back({"prefusion identity f32", e32 <= 1e-6, e32, "max abs diff " + sci(e32) + " (tol 1e-6)"});
  out.push_back({"prefusion identity f64", e64 <= 1e-12, e64, "max abs diff " + sci(e64) + " (tol 1e-12)"});

  const double s = inflation_siamese_max_diff({.seed = opt.seed, .w1_perturbation = opt.w1_perturbation});
  out.push_back({"inflation equals shared 2D encoder", s <= 1e-5, s, "max abs diff " + sci(s) + " (tol 1e-5)"});

  for (auto& r : gradient_suite(opt.seed)) out.push_back(std::move(r));

  const auto trace = decoder_trace(VariantSpec::rd3d(), opt.seed);
  const std::array<std::size_t, 4> want{3, 5, 7, 10};
  bool ok = trace.hat_frames == want;
  for (std::size_t f : trace.out_frames) ok = ok && f == 1;
  std::string d = "T(hat F0..3) =";
  for (std::size_t f : trace.hat_frames) d += " " + std::to_string(f);
  d += ", T(F0..3) =";
  for (std::size_t f : trace.out_frames) d += " " + std::to_string(f);
  out.push_back({"decoder temporal bookkeeping", ok, 0.0, d});
  return out;
}

}  // namespace rd3d::checks
