#pragma once

#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "rd3d/decoder.hpp"
#include "rd3d/encoder.hpp"

namespace rd3d {

enum class Backbone { RD3D, InputFusion, TwoStream, Siamese };

inline std::string to_string(Backbone b) {
  switch (b) {
    case Backbone::RD3D: return "rd3d_3d";
    case Backbone::InputFusion: return "input_fusion";
    case Backbone::TwoStream: return "two_stream";
    case Backbone::Siamese: return "siamese";
  }
  return "rd3d_3d";
}

inline Backbone backbone_from_string(const std::string& s) {
  if (s == "rd3d_3d") return Backbone::RD3D;
  if (s == "input_fusion") return Backbone::InputFusion;
  if (s == "two_stream") return Backbone::TwoStream;
  if (s == "siamese") return Backbone::Siamese;
  throw ConfigError("unknown backbone '" + s + "' (expected rd3d_3d, input_fusion, two_stream or siamese)");
}

/// Which backbone and decoder features a model uses.
struct VariantSpec {
  Backbone backbone = Backbone::RD3D;
  bool use_rbpp = true;
  AttentionKind attention = AttentionKind::CMA;
  bool cma_in_encoder = false;
  std::size_t attention_reduction = 4;
  EncoderConfig encoder = EncoderConfig::tiny();

  static VariantSpec rd3d(EncoderConfig enc = EncoderConfig::tiny()) { return with(Backbone::RD3D, true, AttentionKind::CMA, false, enc); }
  static VariantSpec backbone_variant(Backbone b, EncoderConfig enc = EncoderConfig::tiny()) {
    return with(b, true, AttentionKind::CMA, false, enc);
  }
  /// Plain 3D UNet-style decoder: no attention, no back-projection.
  static VariantSpec model1(EncoderConfig enc = EncoderConfig::tiny()) { return with(Backbone::RD3D, false, AttentionKind::None, false, enc); }
  static VariantSpec model2(EncoderConfig enc = EncoderConfig::tiny()) { return with(Backbone::RD3D, false, AttentionKind::CMA, false, enc); }
  static VariantSpec model3(EncoderConfig enc = EncoderConfig::tiny()) {
    return with(Backbone::RD3D, true, AttentionKind::ChannelSE, false, enc);
  }
  /// Attention moved from the decoder into the encoder stages.
  static VariantSpec model4(EncoderConfig enc = EncoderConfig::tiny()) { return with(Backbone::RD3D, true, AttentionKind::None, true, enc); }

  void validate() const {
    encoder.validate();
    if (cma_in_encoder && backbone != Backbone::RD3D) {
      throw ConfigError("cma_in_encoder requires the rd3d_3d backbone (encoder attention needs T = 2)");
    }
    if (attention_reduction == 0) throw ConfigError("attention_reduction must be positive");
  }

  /// `key = value` lines; the same keys are accepted by the configuration parser.
  std::string to_text() const {
    std::ostringstream os;
    os << "backbone = " << to_string(backbone) << "\n";
    os << "use_rbpp = " << (use_rbpp ? "true" : "false") << "\n";
    os << "attention = " << to_string(attention) << "\n";
    os << "cma_in_encoder = " << (cma_in_encoder ? "true" : "false") << "\n";
    os << "attention_reduction = " << attention_reduction << "\n";
    os << "preset = " << encoder.preset << "\n";
    os << "stage_channels = ";
    for (std::size_t i = 0; i < 5; ++i) os << (i ? "," : "") << encoder.stage_channels[i];
    os << "\nblocks_per_stage = ";
    for (std::size_t i = 0; i < 4; ++i) os << (i ? "," : "") << encoder.blocks_per_stage[i];
    os << "\nreduced_channels = " << encoder.reduced_channels << "\n";
    os << "input_side = " << encoder.input_side << "\n";
    return os.str();
  }

  friend bool operator==(const VariantSpec& a, const VariantSpec& b) { return a.to_text() == b.to_text(); }

 private:
  static VariantSpec with(Backbone b, bool rbpp, AttentionKind att, bool enc_cma, EncoderConfig enc) {
    VariantSpec v;
    v.backbone = b;
    v.use_rbpp = rbpp;
    v.attention = att;
    v.cma_in_encoder = enc_cma;
    v.encoder = std::move(enc);
    return v;
  }
};

template <class T>
struct ModelOutput {
  Var<T> logits;         // N x 1 x H x W x 1 at input resolution
  Var<T> probabilities;  // sigmoid(logits)
  FeaturePyramid<T> pyramid;
  DecoderTrace trace;
};

/// Complete network: backbone variant, channel reduction, decoder, and prediction head.
/// Input is N x 2 x S x S x 3 (slice 0 RGB, slice 1 depth); S must be a multiple of 32.
template <class T>
class Model {
 public:
  Model(const VariantSpec& spec, std::uint64_t seed) : spec_(spec), store_(seed) {
    spec.validate();
    const EncoderConfig& enc = spec.encoder;
    switch (spec.backbone) {
      case Backbone::RD3D:
        encoders_.push_back(std::make_unique<ResNetEncoder<T>>(store_, "encoder", enc, 3, 3,
                                                               spec.cma_in_encoder ? kModalities : 0,
                                                               spec.attention_reduction));
        break;
      case Backbone::Siamese:
        encoders_.push_back(std::make_unique<ResNetEncoder<T>>(store_, "encoder", enc, 3, 1));
        break;
      case Backbone::TwoStream:
        encoders_.push_back(std::make_unique<ResNetEncoder<T>>(store_, "encoder.rgb", enc, 3, 1));
        encoders_.push_back(std::make_unique<ResNetEncoder<T>>(store_, "encoder.depth", enc, 3, 1));
        break;
      case Backbone::InputFusion:
        encoders_.push_back(std::make_unique<ResNetEncoder<T>>(store_, "encoder", enc, 6, 1));
        break;
    }
    reduce_ = std::make_unique<ChannelReduce<T>>(store_, "reduce", enc);
    DecoderConfig dc;
    dc.channels = enc.reduced_channels;
    dc.use_rbpp = spec.use_rbpp;
    dc.attention = spec.attention;
    dc.attention_reduction = spec.attention_reduction;
    decoder_ = std::make_unique<Decoder<T>>(store_, "decoder", dc, enc.input_side);
  }

  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  /// Backbone outputs before channel reduction, all with T = 2.
  std::array<Var<T>, kLevels> encode(Context<T>& ctx, const Var<T>& x) {
    const Shape s = x->value.shape();
    if (s.t() != kModalities) throw DimensionError("model input must have T = 2 on axis T, got " + s.str());
    std::array<Var<T>, kLevels> out;
    switch (spec_.backbone) {
      case Backbone::RD3D:
        return (*encoders_[0])(ctx, x);
      case Backbone::Siamese: {
        // One shared 2D encoder over both modalities: N x 2 folds into a batch of 2N.
        auto folded = ops::reshape(ctx.tape, x, Shape{s.n() * 2, 1, s.h(), s.w(), s.c()});
        auto raw = (*encoders_[0])(ctx, folded);
        for (std::size_t i = 0; i < kLevels; ++i) {
          const Shape& r = raw[i]->value.shape();
          out[i] = ops::reshape(ctx.tape, raw[i], Shape{s.n(), 2, r.h(), r.w(), r.c()});
        }
        return out;
      }
      case Backbone::TwoStream: {
        auto rgb = (*encoders_[0])(ctx, ops::slice(ctx.tape, x, Axis::T, 0, 1));
        auto depth = (*encoders_[1])(ctx, ops::slice(ctx.tape, x, Axis::T, 1, 1));
        for (std::size_t i = 0; i < kLevels; ++i) out[i] = ops::concat(ctx.tape, {rgb[i], depth[i]}, Axis::T);
        return out;
      }
      case Backbone::InputFusion: {
        auto fused = ops::concat(ctx.tape,
                                 {ops::slice(ctx.tape, x, Axis::T, 0, 1), ops::slice(ctx.tape, x, Axis::T, 1, 1)},
                                 Axis::C);
        auto raw = (*encoders_[0])(ctx, fused);
        // Encoder outputs repeated along T so the decoder sees T = 2.
        for (std::size_t i = 0; i < kLevels; ++i) out[i] = ops::concat(ctx.tape, {raw[i], raw[i]}, Axis::T);
        return out;
      }
    }
    return out;
  }

  ModelOutput<T> forward(Context<T>& ctx, const Var<T>& x) {
    ModelOutput<T> out;
    out.pyramid = (*reduce_)(ctx, encode(ctx, x));
    auto dec = (*decoder_)(ctx, out.pyramid);
    out.trace = dec.trace;
    const std::size_t side = x->value.shape().h();
    out.logits = ops::resize_bilinear(ctx.tape, dec.logits, side, side);
    out.probabilities = ops::sigmoid(ctx.tape, out.logits);
    return out;
  }

  ParamStore<T>& params() { return store_; }
  const ParamStore<T>& params() const { return store_; }
  const VariantSpec& spec() const { return spec_; }
  Decoder<T>& decoder() { return *decoder_; }
  ChannelReduce<T>& channel_reduce() { return *reduce_; }
  ResNetEncoder<T>& encoder(std::size_t i = 0) { return *encoders_.at(i); }

 private:
  VariantSpec spec_;
  ParamStore<T> store_;
  std::vector<std::unique_ptr<ResNetEncoder<T>>> encoders_;
  std::unique_ptr<ChannelReduce<T>> reduce_;
  std::unique_ptr<Decoder<T>> decoder_;
};

template <class T>
std::unique_ptr<Model<T>> build(const VariantSpec& spec, std::uint64_t seed) {
  return std::make_unique<Model<T>>(spec, seed);
}

/// Trainable parameter count (running statistics excluded).
template <class T>
std::size_t param_count(const Model<T>& m) {
  return m.params().count();
}

/// Trainable parameter count restricted to names with the given prefix.
template <class T>
std::size_t param_count(const Model<T>& m, const std::string& prefix) {
  return m.params().count([&](const auto& e) { return e.name.rfind(prefix, 0) == 0; });
}

/// Trainable parameters of convolution kernels with a kH x kW spatial footprint under `prefix`.
template <class T>
std::size_t kernel_param_count(const Model<T>& m, const std::string& prefix, std::size_t kh, std::size_t kw) {
  return m.params().count([&](const auto& e) {
    const Shape& s = e.var->value.shape();
    const bool weight = e.name.size() >= 7 && e.name.compare(e.name.size() - 7, 7, ".weight") == 0;
    return weight && e.name.rfind(prefix, 0) == 0 && s[1] == kh && s[2] == kw;
  });
}

/// Multiply-accumulate count of one inference forward pass at the given input side.
template <class T>
std::uint64_t flops_estimate(Model<T>& m, std::size_t input_side) {
  Context<T> ctx{nullptr, Mode::Infer};
  auto x = constant(Tensor<T>(Shape{1, kModalities, input_side, input_side, 3}));
  MacCounter counter;
  m.forward(ctx, x);
  return counter.total();
}

}  // namespace rd3d
