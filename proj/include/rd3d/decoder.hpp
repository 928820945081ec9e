#pragma once

#include <array>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "rd3d/attention.hpp"
#include "rd3d/encoder.hpp"

namespace rd3d {

enum class AttentionKind { CMA, ChannelSE, None };

inline std::string to_string(AttentionKind a) {
  switch (a) {
    case AttentionKind::CMA: return "cma";
    case AttentionKind::ChannelSE: return "plain_channel_attention";
    case AttentionKind::None: return "none";
  }
  return "none";
}

inline AttentionKind attention_from_string(const std::string& s) {
  if (s == "cma") return AttentionKind::CMA;
  if (s == "plain_channel_attention") return AttentionKind::ChannelSE;
  if (s == "none") return AttentionKind::None;
  throw ConfigError("unknown attention '" + s + "' (expected cma, plain_channel_attention or none)");
}

struct DecoderConfig {
  std::size_t channels = 32;
  bool use_rbpp = true;
  AttentionKind attention = AttentionKind::CMA;
  std::size_t attention_reduction = 4;
};

/// Temporal extents of the intermediate (concatenated) and reduced features per level 0..3.
struct DecoderTrace {
  std::array<std::size_t, 4> hat_frames{};
  std::array<std::size_t, 4> out_frames{};
};

/// Expected temporal extent of the concatenated features at `level` (0..3).
/// With back-projection: f_i (2) + one path per higher-resolution level (2 each) + UB(F_{i+1}).
inline std::size_t expected_hat_frames(std::size_t level, bool use_rbpp) {
  const std::size_t up = level == 3 ? kModalities : 1;  // F4 = f4 keeps T = 2
  return kModalities + (use_rbpp ? kModalities * level : 0) + up;
}

/// Chain of downsampling blocks (1x3x3 conv, spatial stride 2, BN, ReLU), one per octave.
template <class T>
class DownsampleChain {
 public:
  DownsampleChain() = default;
  DownsampleChain(ParamStore<T>& store, const std::string& name, std::size_t source_side, std::size_t target_side,
                  std::size_t channels) {
    if (target_side == 0 || source_side <= target_side || source_side % target_side != 0) {
      throw ArgumentError("downsample_block: source side " + std::to_string(source_side) + " is not a power-of-two multiple of " +
                          std::to_string(target_side));
    }
    std::size_t ratio = source_side / target_side;
    if ((ratio & (ratio - 1)) != 0) {
      throw ArgumentError("downsample_block: ratio " + std::to_string(ratio) + " is not a power of two");
    }
    for (std::size_t k = 0; ratio > 1; ratio >>= 1, ++k) {
      blocks_.emplace_back(store, name + "." + std::to_string(k), std::array<std::size_t, 3>{1, 3, 3}, channels, channels,
                           std::array<std::size_t, 3>{1, 2, 2}, std::array<std::size_t, 3>{0, 1, 1});
    }
  }

  std::size_t length() const { return blocks_.size(); }

  Var<T> operator()(Context<T>& ctx, Var<T> x) {
    for (auto& b : blocks_) x = b(ctx, x);
    return x;
  }

 private:
  std::vector<nn::ConvBn<T>> blocks_;
};

/// Bilinear x2 upsampling followed by 1x3x3 conv + BN + ReLU.
template <class T>
class UpsampleBlock {
 public:
  UpsampleBlock() = default;
  UpsampleBlock(ParamStore<T>& store, const std::string& name, std::size_t channels)
      : conv_(store, name, {1, 3, 3}, channels, channels, {1, 1, 1}, {0, 1, 1}) {}

  Var<T> operator()(Context<T>& ctx, const Var<T>& x) { return conv_(ctx, ops::bilinear_upsample(ctx.tape, x, 2)); }

 private:
  nn::ConvBn<T> conv_;
};

/// Collapses T to 1 with a single T x 1 x 1 convolution (no temporal padding) + BN + ReLU.
template <class T>
class TemporalReduce {
 public:
  TemporalReduce() = default;
  TemporalReduce(ParamStore<T>& store, const std::string& name, std::size_t frames, std::size_t channels)
      : frames_(frames), conv_(store, name, {frames, 1, 1}, channels, channels, {1, 1, 1}, {0, 0, 0}) {}

  Var<T> operator()(Context<T>& ctx, const Var<T>& x) {
    if (x->value.shape().t() != frames_) {
      throw ArgumentError("temporal_reduce: expected T = " + std::to_string(frames_) + ", got " +
                          std::to_string(x->value.shape().t()));
    }
    return conv_(ctx, x);
  }

  std::size_t frames() const { return frames_; }
  nn::ConvBn<T>& layer() { return conv_; }

 private:
  std::size_t frames_ = 0;
  nn::ConvBn<T> conv_;
};

/// Concatenation along T, in the given order.
template <class T>
Var<T> tconcat(Tape<T>* tape, const std::vector<Var<T>>& parts) {
  return ops::concat(tape, parts, Axis::T);
}

/// Decoder with back-projection paths: for level i = 3..0,
///   hat_i = tconcat(f_i, DB(f_{i-1}), ..., DB(f_0), UB(F_{i+1}))
///   F_i   = TR(attention(hat_i))
/// with F_4 = f_4, followed by a 1x1x1 prediction head on F_0.
template <class T>
class Decoder {
 public:
  Decoder(ParamStore<T>& store, const std::string& name, const DecoderConfig& cfg, std::size_t input_side)
      : cfg_(cfg) {
    const std::size_t C = cfg.channels;
    std::array<std::size_t, kLevels> side{};
    for (std::size_t i = 0; i < kLevels; ++i) side[i] = input_side >> (i + 1);

    for (std::size_t i = 0; i < 4; ++i) {
      const std::string lv = name + ".level" + std::to_string(i);
      Level level;
      if (cfg.use_rbpp) {
        // Paths listed nearest-first: f_{i-1}, ..., f_0.
        for (std::size_t j = i; j-- > 0;) {
          level.paths.emplace_back(store, lv + ".db" + std::to_string(j), side[j], side[i], C);
        }
      }
      level.up = UpsampleBlock<T>(store, lv + ".ub", C);
      const std::size_t frames = expected_hat_frames(i, cfg.use_rbpp);
      if (cfg.attention == AttentionKind::CMA) {
        level.cma.emplace(store, lv + ".cma", C, frames, cfg.attention_reduction);
      } else if (cfg.attention == AttentionKind::ChannelSE) {
        level.se.emplace(store, lv + ".ca", C, cfg.attention_reduction);
      }
      level.reduce = TemporalReduce<T>(store, lv + ".tr", frames, C);
      levels_.push_back(std::move(level));
    }
    head_ = nn::Conv<T>(store, name + ".head", {1, 1, 1}, C, 1, {1, 1, 1}, {0, 0, 0}, /*bias=*/true);
  }

  struct Output {
    Var<T> logits;  // N x 1 x side/2 x side/2 x 1
    DecoderTrace trace;
  };

  Output operator()(Context<T>& ctx, const FeaturePyramid<T>& f) {
    for (std::size_t i = 0; i < kLevels; ++i) {
      if (!f[i]) throw ArgumentError("decode: pyramid must have 5 levels");
    }
    Output out;
    Var<T> upper = f[4];
    for (std::size_t i = 4; i-- > 0;) {
      Level& level = levels_[i];
      std::vector<Var<T>> parts{f[i]};
      for (std::size_t p = 0; p < level.paths.size(); ++p) {
        const std::size_t source = i - 1 - p;
        parts.push_back(level.paths[p](ctx, f[source]));
      }
      parts.push_back(level.up(ctx, upper));
      auto hat = tconcat(ctx.tape, parts);
      out.trace.hat_frames[i] = hat->value.shape().t();
      if (out.trace.hat_frames[i] != expected_hat_frames(i, cfg_.use_rbpp)) {
        throw std::logic_error("decoder: temporal bookkeeping violated at level " + std::to_string(i));
      }
      if (level.cma) hat = (*level.cma)(ctx, hat);
      if (level.se) hat = (*level.se)(ctx, hat);
      upper = level.reduce(ctx, hat);
      out.trace.out_frames[i] = upper->value.shape().t();
    }
    out.logits = head_(ctx, upper);
    return out;
  }

  const DecoderConfig& config() const { return cfg_; }
  std::size_t path_count(std::size_t level) const { return levels_.at(level).paths.size(); }
  std::size_t path_length(std::size_t level, std::size_t p) const { return levels_.at(level).paths.at(p).length(); }

 private:
  struct Level {
    std::vector<DownsampleChain<T>> paths;
    UpsampleBlock<T> up;
    std::optional<ChannelModalityAttention<T>> cma;
    std::optional<ChannelAttention<T>> se;
    TemporalReduce<T> reduce;
  };

  DecoderConfig cfg_;
  std::vector<Level> levels_;
  nn::Conv<T> head_;
};

}  // namespace rd3d
