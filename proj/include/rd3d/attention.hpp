#pragma once

#include "rd3d/nn.hpp"

namespace rd3d {

/// Channel-modality attention: squeeze-excitation over the folded (T * C) axis, applied as a
/// residual gate. Input and output are N x T x H x W x C.
///
/// Folding T into channels (H x W x (C*T)) and pooling over (H, W) gives the same N x (T*C)
/// descriptor as pooling the unfolded tensor per (t, c), so the gate is computed on the pooled
/// N x T x 1 x 1 x C tensor directly and broadcast back over (H, W).
template <class T>
class ChannelModalityAttention {
 public:
  ChannelModalityAttention() = default;
  ChannelModalityAttention(ParamStore<T>& store, const std::string& name, std::size_t channels, std::size_t frames,
                           std::size_t reduction)
      : channels_(channels), frames_(frames) {
    const std::size_t folded = channels * frames;
    if (reduction == 0 || folded % reduction != 0) {
      throw ArgumentError("ChannelModalityAttention: C*T = " + std::to_string(folded) +
                          " is not divisible by reduction ratio " + std::to_string(reduction));
    }
    squeeze_ = nn::Linear<T>(store, name + ".fc1", folded, folded / reduction);
    excite_ = nn::Linear<T>(store, name + ".fc2", folded / reduction, folded);
  }

  /// Sigmoid gate, N x T x 1 x 1 x C.
  Var<T> gate(Context<T>& ctx, const Var<T>& x) const {
    const Shape& s = x->value.shape();
    if (s.c() != channels_ || s.t() != frames_) {
      throw DimensionError("ChannelModalityAttention: expected T=" + std::to_string(frames_) + ", C=" +
                           std::to_string(channels_) + ", got " + s.str());
    }
    auto pooled = ops::global_avg_pool(ctx.tape, x);
    auto folded = ops::reshape(ctx.tape, pooled, Shape{s.n(), 1, 1, 1, frames_ * channels_});
    auto h = ops::relu(ctx.tape, squeeze_(ctx, folded));
    auto g = ops::sigmoid(ctx.tape, excite_(ctx, h));
    return ops::reshape(ctx.tape, g, Shape{s.n(), frames_, 1, 1, channels_});
  }

  Var<T> operator()(Context<T>& ctx, const Var<T>& x) const {
    return ops::add(ctx.tape, ops::broadcast_multiply(ctx.tape, x, gate(ctx, x)), x);
  }

  std::size_t frames() const { return frames_; }
  const nn::Linear<T>& squeeze() const { return squeeze_; }
  const nn::Linear<T>& excite() const { return excite_; }

 private:
  std::size_t channels_ = 0, frames_ = 0;
  nn::Linear<T> squeeze_, excite_;
};

/// Plain squeeze-excitation channel attention: pooling over (T, H, W), one gate per channel,
/// no residual path.
template <class T>
class ChannelAttention {
 public:
  ChannelAttention() = default;
  ChannelAttention(ParamStore<T>& store, const std::string& name, std::size_t channels, std::size_t reduction)
      : channels_(channels) {
    if (reduction == 0 || channels % reduction != 0) {
      throw ArgumentError("ChannelAttention: C = " + std::to_string(channels) + " is not divisible by " +
                          std::to_string(reduction));
    }
    squeeze_ = nn::Linear<T>(store, name + ".fc1", channels, channels / reduction);
    excite_ = nn::Linear<T>(store, name + ".fc2", channels / reduction, channels);
  }

  Var<T> operator()(Context<T>& ctx, const Var<T>& x) const {
    const Shape& s = x->value.shape();
    if (s.c() != channels_) throw DimensionError("ChannelAttention: channel mismatch on axis C");
    auto pooled = ops::global_avg_pool(ctx.tape, x, /*over_time=*/true);
    auto h = ops::relu(ctx.tape, squeeze_(ctx, pooled));
    auto g = ops::reshape(ctx.tape, ops::sigmoid(ctx.tape, excite_(ctx, h)), Shape{s.n(), 1, 1, 1, channels_});
    return ops::broadcast_multiply(ctx.tape, x, g);
  }

 private:
  std::size_t channels_ = 0;
  nn::Linear<T> squeeze_, excite_;
};

}  // namespace rd3d
