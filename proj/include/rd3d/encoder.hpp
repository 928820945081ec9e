#pragma once

#include <algorithm>
#include <array>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "rd3d/attention.hpp"
#include "rd3d/nn.hpp"

namespace rd3d {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class ParameterImportError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr std::size_t kLevels = 5;
inline constexpr std::size_t kModalities = 2;

struct EncoderConfig {
  std::array<std::size_t, 5> stage_channels{16, 32, 64, 128, 256};
  std::array<std::size_t, 4> blocks_per_stage{1, 1, 1, 1};
  std::size_t reduced_channels = 32;
  std::size_t input_side = 64;
  std::string preset = "tiny";

  static EncoderConfig tiny() { return EncoderConfig{}; }

  static EncoderConfig resnet50_like() {
    return EncoderConfig{{64, 256, 512, 1024, 2048}, {3, 4, 6, 3}, 32, 352, "resnet50-like"};
  }

  static EncoderConfig from_preset(const std::string& name) {
    if (name == "tiny") return tiny();
    if (name == "resnet50-like") return resnet50_like();
    throw ConfigError("unknown encoder preset '" + name + "' (expected tiny or resnet50-like)");
  }

  void validate() const {
    for (std::size_t c : stage_channels)
      if (c == 0) throw ConfigError("stage_channels must be positive");
    for (std::size_t b : blocks_per_stage)
      if (b == 0) throw ConfigError("blocks_per_stage must be positive");
    if (reduced_channels == 0) throw ConfigError("reduced_channels must be positive");
    // The stem level may be widened (tiny preset: 16 -> 32); residual stages are only reduced.
    if (reduced_channels > *std::min_element(stage_channels.begin() + 1, stage_channels.end())) {
      throw ConfigError("reduced_channels must not exceed the smallest residual stage width");
    }
    if (input_side == 0 || input_side % 32 != 0) throw ConfigError("input_side must be a positive multiple of 32");
  }
};

/// Encoder outputs f0..f4, each N x 2 x side/2^(i+1) x side/2^(i+1) x C.
template <class T>
struct FeaturePyramid {
  std::array<Var<T>, kLevels> levels;

  const Var<T>& operator[](std::size_t i) const { return levels[i]; }
  Var<T>& operator[](std::size_t i) { return levels[i]; }
};

/// Stacks an RGB image and a 3-channel depth map (both N x 1 x H x W x 3) into N x 2 x H x W x 3.
/// Temporal slice 0 holds RGB, slice 1 holds depth.
template <class T>
Tensor<T> stack_input(const Tensor<T>& rgb, const Tensor<T>& depth3) {
  const Shape& a = rgb.shape();
  const Shape& b = depth3.shape();
  if (a.t() != 1 || b.t() != 1) throw DimensionError("stack_input: inputs must have T = 1 on axis T");
  for (Axis ax : {Axis::N, Axis::H, Axis::W, Axis::C}) {
    if (a[ax] != b[ax]) {
      throw DimensionError(std::string("stack_input: modality extent mismatch on axis ") + axis_name(ax) + " (" +
                           a.str() + " vs " + b.str() + ")");
    }
  }
  Tensor<T> out(Shape{a.n(), 2, a.h(), a.w(), a.c()});
  const std::size_t plane = a.h() * a.w() * a.c();
  for (std::size_t n = 0; n < a.n(); ++n) {
    std::copy_n(rgb.data().data() + n * plane, plane, out.data().data() + (n * 2) * plane);
    std::copy_n(depth3.data().data() + n * plane, plane, out.data().data() + (n * 2 + 1) * plane);
  }
  return out;
}

/// Temporal slice `t` of an N x T x H x W x C tensor as N x 1 x H x W x C.
template <class T>
Tensor<T> temporal_slice(const Tensor<T>& x, std::size_t t) {
  const Shape& s = x.shape();
  if (t >= s.t()) throw DimensionError("temporal_slice: index out of range on axis T");
  Tensor<T> out(Shape{s.n(), 1, s.h(), s.w(), s.c()});
  const std::size_t plane = s.h() * s.w() * s.c();
  for (std::size_t n = 0; n < s.n(); ++n)
    std::copy_n(x.data().data() + (n * s.t() + t) * plane, plane, out.data().data() + n * plane);
  return out;
}

namespace detail {

// Temporal kernel extent for a spatial kernel: kernels wider than 1x1 take the encoder's
// temporal extent, pointwise kernels stay at 1.
inline std::array<std::size_t, 3> inflated_kernel(std::size_t k, std::size_t temporal) {
  return {k > 1 ? temporal : 1, k, k};
}

inline std::array<std::size_t, 3> inflated_pad(std::size_t k, std::size_t pad, std::size_t temporal) {
  return {k > 1 ? (temporal - 1) / 2 : 0, pad, pad};
}

}  // namespace detail

/// ResNet bottleneck unit: 1x1 reduce, 3x3 (strided), 1x1 expand, projection shortcut when needed.
template <class T>
class Bottleneck {
 public:
  Bottleneck(ParamStore<T>& store, const std::string& name, std::size_t cin, std::size_t cout, std::size_t stride,
             std::size_t temporal) {
    const std::size_t width = std::max<std::size_t>(1, cout / 4);
    reduce_ = nn::ConvBn<T>(store, name + ".conv1", detail::inflated_kernel(1, temporal), cin, width, {1, 1, 1},
                            detail::inflated_pad(1, 0, temporal));
    spatial_ = nn::ConvBn<T>(store, name + ".conv2", detail::inflated_kernel(3, temporal), width, width,
                             {1, stride, stride}, detail::inflated_pad(3, 1, temporal));
    expand_ = nn::ConvBn<T>(store, name + ".conv3", detail::inflated_kernel(1, temporal), width, cout, {1, 1, 1},
                            detail::inflated_pad(1, 0, temporal), /*with_relu=*/false);
    if (stride != 1 || cin != cout) {
      shortcut_ = nn::ConvBn<T>(store, name + ".downsample", detail::inflated_kernel(1, temporal), cin, cout,
                                {1, stride, stride}, detail::inflated_pad(1, 0, temporal), /*with_relu=*/false);
    }
  }

  Var<T> operator()(Context<T>& ctx, const Var<T>& x) {
    auto y = expand_(ctx, spatial_(ctx, reduce_(ctx, x)));
    auto identity = shortcut_ ? (*shortcut_)(ctx, x) : x;
    return ops::relu(ctx.tape, ops::add(ctx.tape, y, identity));
  }

 private:
  nn::ConvBn<T> reduce_, spatial_, expand_;
  std::optional<nn::ConvBn<T>> shortcut_;
};

/// ResNet-style backbone. With temporal extent 3 it is the inflated 3D encoder (every kernel
/// wider than 1x1 spans three temporal slices, temporal stride 1, so T is preserved); with
/// temporal extent 1 it is the equivalent 2D network applied to each temporal slice.
template <class T>
class ResNetEncoder {
 public:
  ResNetEncoder(ParamStore<T>& store, const std::string& name, const EncoderConfig& cfg, std::size_t in_channels,
                std::size_t temporal, std::size_t stage_attention_frames = 0, std::size_t attention_reduction = 4)
      : cfg_(cfg), in_channels_(in_channels), temporal_(temporal) {
    cfg.validate();
    if (temporal != 1 && temporal != 3) throw ArgumentError("ResNetEncoder: temporal kernel extent must be 1 or 3");
    stem_ = nn::ConvBn<T>(store, name + ".stem", detail::inflated_kernel(7, temporal), in_channels,
                          cfg.stage_channels[0], {1, 2, 2}, detail::inflated_pad(7, 3, temporal));
    std::size_t cin = cfg.stage_channels[0];
    for (std::size_t s = 0; s < 4; ++s) {
      const std::size_t cout = cfg.stage_channels[s + 1];
      std::vector<Bottleneck<T>> blocks;
      for (std::size_t b = 0; b < cfg.blocks_per_stage[s]; ++b) {
        const std::size_t stride = (b == 0 && s > 0) ? 2 : 1;
        blocks.emplace_back(store, name + ".layer" + std::to_string(s + 1) + "." + std::to_string(b), cin, cout,
                            stride, temporal);
        cin = cout;
      }
      stages_.push_back(std::move(blocks));
      if (stage_attention_frames > 0) {
        attention_.emplace_back(store, name + ".layer" + std::to_string(s + 1) + ".cma", cout, stage_attention_frames,
                                attention_reduction);
      }
    }
  }

  /// Raw (pre channel-reduction) outputs of the stem and the four residual stages.
  std::array<Var<T>, kLevels> operator()(Context<T>& ctx, const Var<T>& x) {
    const Shape& s = x->value.shape();
    if (s.c() != in_channels_) {
      throw DimensionError("encoder: expected " + std::to_string(in_channels_) + " input channels on axis C, got " +
                           s.str());
    }
    if (s.h() != s.w() || s.h() % 32 != 0) {
      throw DimensionError("encoder: input side must be square and a multiple of 32 on axes H/W, got " + s.str());
    }
    std::array<Var<T>, kLevels> out;
    out[0] = stem_(ctx, x);
    auto y = ops::max_pool(ctx.tape, out[0]);
    for (std::size_t st = 0; st < 4; ++st) {
      for (auto& block : stages_[st]) y = block(ctx, y);
      if (!attention_.empty()) y = attention_[st](ctx, y);
      out[st + 1] = y;
    }
    return out;
  }

  std::size_t temporal_extent() const { return temporal_; }
  std::size_t in_channels() const { return in_channels_; }
  const EncoderConfig& config() const { return cfg_; }

 private:
  EncoderConfig cfg_;
  std::size_t in_channels_;
  std::size_t temporal_;
  nn::ConvBn<T> stem_;
  std::vector<std::vector<Bottleneck<T>>> stages_;
  std::vector<ChannelModalityAttention<T>> attention_;
};

/// 1x1x1 conv + BN + ReLU per level, mapping every level to `reduced_channels`.
template <class T>
class ChannelReduce {
 public:
  ChannelReduce(ParamStore<T>& store, const std::string& name, const EncoderConfig& cfg) {
    for (std::size_t i = 0; i < kLevels; ++i) {
      modules_.emplace_back(store, name + "." + std::to_string(i), std::array<std::size_t, 3>{1, 1, 1},
                            cfg.stage_channels[i], cfg.reduced_channels, std::array<std::size_t, 3>{1, 1, 1},
                            std::array<std::size_t, 3>{0, 0, 0});
    }
  }

  Var<T> reduce(Context<T>& ctx, std::size_t level, const Var<T>& f) { return modules_.at(level)(ctx, f); }

  FeaturePyramid<T> operator()(Context<T>& ctx, const std::array<Var<T>, kLevels>& raw) {
    FeaturePyramid<T> p;
    for (std::size_t i = 0; i < kLevels; ++i) p[i] = reduce(ctx, i, raw[i]);
    return p;
  }

 private:
  std::vector<nn::ConvBn<T>> modules_;
};

template <class T>
using NamedTensors = std::map<std::string, Tensor<T>>;

template <class T>
NamedTensors<T> snapshot(const ParamStore<T>& store, const std::string& prefix = {}) {
  NamedTensors<T> out;
  for (const auto& e : store.entries())
    if (e.name.rfind(prefix, 0) == 0) out.emplace(e.name, e.var->value);
  return out;
}

/// Overwrites store entries by name. Every tensor must name an existing entry of equal shape.
template <class T>
void assign(ParamStore<T>& store, const NamedTensors<T>& values) {
  std::vector<std::string> bad;
  for (const auto& [name, t] : values) {
    auto v = store.find(name);
    if (!v || v->value.shape() != t.shape()) {
      bad.push_back(name);
      continue;
    }
    v->value = t;
  }
  if (!bad.empty()) {
    std::string msg = "parameter import failed for:";
    for (const auto& b : bad) msg += " " + b;
    throw ParameterImportError(msg);
  }
}

/// Centralized inflation: maps a 2D parameter set onto the entries of `target` whose names start
/// with `prefix`. Each 2D kernel (1 x kH x kW x Cin x Cout) fills the central temporal slice of the
/// matching target kernel with all other slices zero; every other tensor is copied unchanged.
template <class T>
NamedTensors<T> inflate_2d(const NamedTensors<T>& weights2d, const ParamStore<T>& target, const std::string& prefix) {
  NamedTensors<T> out;
  std::vector<std::string> offenders;
  for (const auto& e : target.entries()) {
    if (e.name.rfind(prefix, 0) != 0) continue;
    auto it = weights2d.find(e.name);
    if (it == weights2d.end()) {
      offenders.push_back(e.name + " (missing)");
      continue;
    }
    const Shape& ts = e.var->value.shape();
    const Tensor<T>& src = it->second;
    const bool kernel = e.name.size() >= 7 && e.name.compare(e.name.size() - 7, 7, ".weight") == 0 && ts[0] > 1;
    if (!kernel) {
      if (src.shape() != ts) {
        offenders.push_back(e.name + " (shape " + src.shape().str() + ", expected " + ts.str() + ")");
        continue;
      }
      out.emplace(e.name, src);
      continue;
    }
    const Shape expect{1, ts[1], ts[2], ts[3], ts[4]};
    if (src.shape() != expect) {
      offenders.push_back(e.name + " (shape " + src.shape().str() + ", expected " + expect.str() + ")");
      continue;
    }
    Tensor<T> inflated(ts);
    const std::size_t slice = src.numel();
    std::copy(src.storage().begin(), src.storage().end(), inflated.storage().begin() + static_cast<std::ptrdiff_t>(((ts[0] - 1) / 2) * slice));
    out.emplace(e.name, std::move(inflated));
  }
  for (const auto& [name, t] : weights2d) {
    if (name.rfind(prefix, 0) == 0 && !target.find(name)) offenders.push_back(name + " (unexpected)");
  }
  if (!offenders.empty()) {
    std::string msg = "inflate_2d: parameter mismatch:";
    for (const auto& o : offenders) msg += " " + o + ";";
    throw ParameterImportError(msg);
  }
  return out;
}

}  // namespace rd3d
