#include <gtest/gtest.h>

#include <random>

#include "rd3d/ablation.hpp"
#include "rd3d/checks.hpp"
#include "rd3d/model.hpp"

using namespace rd3d;

namespace {

Var<float> random_input(std::size_t n, std::size_t side, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return constant(checks::random_tensor<float>(Shape{n, 2, side, side, 3}, rng));
}

// Counts 2D encoder parameters directly from the topology: kernels kH*kW*Cin*Cout, BN 2*C.
std::size_t direct_encoder_count(const EncoderConfig& cfg, std::size_t in_channels, std::size_t temporal) {
  auto kt = [&](std::size_t k) { return k > 1 ? temporal : 1; };
  std::size_t n = kt(7) * 49 * in_channels * cfg.stage_channels[0] + 2 * cfg.stage_channels[0];
  std::size_t cin = cfg.stage_channels[0];
  for (std::size_t s = 0; s < 4; ++s) {
    const std::size_t cout = cfg.stage_channels[s + 1], mid = cout / 4;
    for (std::size_t b = 0; b < cfg.blocks_per_stage[s]; ++b) {
      n += cin * mid + 2 * mid + kt(3) * 9 * mid * mid + 2 * mid + mid * cout + 2 * cout;
      if (b == 0) n += cin * cout + 2 * cout;
      cin = cout;
    }
  }
  return n;
}

}  // namespace

// ---------------------------------------------------------------------------------------------
// Encoder.

TEST(StackInput, SlicesAndShape) {
  std::mt19937_64 rng(1);
  const auto rgb = checks::random_tensor<float>(Shape{2, 1, 8, 8, 3}, rng);
  const auto depth = checks::random_tensor<float>(Shape{2, 1, 8, 8, 3}, rng);
  const auto x = stack_input(rgb, depth);
  EXPECT_EQ(x.shape(), (Shape{2, 2, 8, 8, 3}));
  EXPECT_EQ(temporal_slice(x, 0).storage(), rgb.storage());
  EXPECT_EQ(temporal_slice(x, 1).storage(), depth.storage());
  const auto same = stack_input(rgb, rgb);
  EXPECT_EQ(temporal_slice(same, 0).storage(), temporal_slice(same, 1).storage());
  EXPECT_EQ(stack_input(Tensor<float>(Shape{1, 1, 352, 352, 3}), Tensor<float>(Shape{1, 1, 352, 352, 3})).shape(),
            (Shape{1, 2, 352, 352, 3}));
  EXPECT_THROW(stack_input(rgb, Tensor<float>(Shape{2, 1, 8, 9, 3})), DimensionError);
}

TEST(Encoder, TinyPyramidSides) {
  auto m = build<float>(VariantSpec::rd3d(), 0);
  Context<float> ctx{nullptr, Mode::Infer};
  auto raw = m->encode(ctx, random_input(1, 64, 2));
  const std::array<std::size_t, 5> sides{32, 16, 8, 4, 2};
  const auto& ch = m->spec().encoder.stage_channels;
  for (std::size_t i = 0; i < 5; ++i) {
    EXPECT_EQ(raw[i]->value.shape(), (Shape{1, 2, sides[i], sides[i], ch[i]})) << "level " << i;
  }
  auto pyramid = m->channel_reduce()(ctx, raw);
  for (std::size_t i = 0; i < 5; ++i) {
    EXPECT_EQ(pyramid[i]->value.shape(), (Shape{1, 2, sides[i], sides[i], 32}));
    for (float v : pyramid[i]->value.storage()) ASSERT_GE(v, 0.0f);
  }
}

TEST(Encoder, SidesAt352) {
  EncoderConfig enc;
  enc.input_side = 352;
  ParamStore<float> store(0);
  ResNetEncoder<float> e(store, "e", enc, 3, 3);
  Context<float> ctx{nullptr, Mode::Infer};
  auto raw = e(ctx, random_input(1, 352, 3));
  const std::array<std::size_t, 5> sides{176, 88, 44, 22, 11};
  for (std::size_t i = 0; i < 5; ++i) {
    EXPECT_EQ(raw[i]->value.shape().h(), sides[i]);
    EXPECT_EQ(raw[i]->value.shape().t(), 2u);
  }
}

TEST(Encoder, KernelTemporalExtents) {
  auto m = build<float>(VariantSpec::rd3d(), 0);
  for (const auto& e : m->params().entries()) {
    if (e.name.rfind("encoder", 0) != 0 || e.name.find(".weight") == std::string::npos) continue;
    const Shape& s = e.var->value.shape();
    if (s[1] > 1) {
      EXPECT_EQ(s[0], 3u) << e.name;
    } else {
      EXPECT_EQ(s[0], 1u) << e.name;
    }
  }
}

TEST(Encoder, WrongInputSide) {
  auto m = build<float>(VariantSpec::rd3d(), 0);
  Context<float> ctx{nullptr, Mode::Infer};
  EXPECT_THROW(m->encode(ctx, random_input(1, 48, 0)), DimensionError);
  EXPECT_THROW(m->encode(ctx, constant(Tensor<float>(Shape{1, 3, 64, 64, 3}))), DimensionError);
}

TEST(Encoder, ConfigValidation) {
  EncoderConfig c;
  c.input_side = 100;
  EXPECT_THROW(c.validate(), ConfigError);
  c = EncoderConfig{};
  c.reduced_channels = 64;
  EXPECT_THROW(c.validate(), ConfigError);
  EXPECT_EQ(EncoderConfig::from_preset("resnet50-like").stage_channels[4], 2048u);
  EXPECT_THROW(EncoderConfig::from_preset("vgg"), ConfigError);
}

TEST(Inflation, CentralSliceAndCounts) {
  const EncoderConfig enc;
  ParamStore<float> s2(0), s3(1);
  ResNetEncoder<float> e2(s2, "encoder", enc, 3, 1);
  ResNetEncoder<float> e3(s3, "encoder", enc, 3, 3);
  const auto w2 = snapshot(s2, "encoder");
  const auto w3 = inflate_2d(w2, s3, "encoder");
  std::size_t count2 = 0, count3 = 0;
  for (const auto& [name, t] : w3) {
    const Tensor<float>& src = w2.at(name);
    if (s3.find(name)->requires_grad) {
      count2 += src.numel();
      count3 += t.numel();
    }
    if (t.shape()[0] == 3) {
      const std::size_t len = src.numel();
      for (std::size_t i = 0; i < len; ++i) {
        ASSERT_EQ(t[i], 0.0f) << name;
        ASSERT_EQ(t[len + i], src[i]) << name;
        ASSERT_EQ(t[2 * len + i], 0.0f) << name;
      }
    } else {
      EXPECT_EQ(t.storage(), src.storage()) << name;
    }
  }
  EXPECT_EQ(count2, direct_encoder_count(enc, 3, 1));
  EXPECT_EQ(count3, direct_encoder_count(enc, 3, 3));
  EXPECT_EQ(s3.count(), count3);
}

TEST(Inflation, MismatchListsOffenders) {
  const EncoderConfig enc;
  ParamStore<float> s2(0), s3(0);
  ResNetEncoder<float> e2(s2, "encoder", enc, 3, 1);
  ResNetEncoder<float> e3(s3, "encoder", enc, 3, 3);
  auto w2 = snapshot(s2, "encoder");
  w2.erase("encoder.stem.bn.gamma");
  w2["encoder.layer1.0.conv1.conv.weight"] = Tensor<float>(Shape{1, 1, 1, 2, 2});
  w2["encoder.bogus"] = Tensor<float>(Shape{1, 1, 1, 1, 1});
  try {
    inflate_2d(w2, s3, "encoder");
    FAIL() << "expected ParameterImportError";
  } catch (const ParameterImportError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("encoder.stem.bn.gamma (missing)"), std::string::npos) << msg;
    EXPECT_NE(msg.find("encoder.layer1.0.conv1.conv.weight (shape"), std::string::npos) << msg;
    EXPECT_NE(msg.find("encoder.bogus (unexpected)"), std::string::npos) << msg;
  }
}

TEST(Inflation, EqualsSharedEncoderPerModality) {
  EXPECT_LE(checks::inflation_siamese_max_diff({.seed = 0}), 1e-5);
  EXPECT_LE(checks::inflation_siamese_max_diff({.seed = 5, .randomize_batch_norm = true}), 1e-5);
}

TEST(Inflation, PerturbedFirstSliceBreaksEquivalence) {
  EXPECT_GT(checks::inflation_siamese_max_diff({.seed = 0, .w1_perturbation = 0.1}), 1e-3);
}

TEST(Inflation, TrainingStepMakesFusionLive) {
  // The zero off-centre slices receive gradient, so the first update makes cross-modal mixing live.
  auto m = build<float>(VariantSpec::rd3d(), 0);
  ParamStore<float> s2(0);
  ResNetEncoder<float> e2(s2, "encoder", m->spec().encoder, 3, 1);
  assign(m->params(), inflate_2d(snapshot(s2, "encoder"), m->params(), "encoder"));
  auto w = m->params().find("encoder.stem.conv.weight");
  Tape<float> tape;
  Context<float> ctx{&tape, Mode::Train};
  auto out = m->forward(ctx, random_input(2, 64, 1));
  auto loss = ops::bce_loss(&tape, out.probabilities, constant(Tensor<float>(out.probabilities->value.shape(), 1.0f)));
  auto g = tape.backward(loss, {w});
  const Tensor<float>& gw = g.at(w->name);
  const std::size_t len = gw.numel() / 3;
  double first = 0;
  for (std::size_t i = 0; i < len; ++i) first += std::abs(gw[i]);
  EXPECT_GT(first, 0.0);
}

TEST(ChannelReduce, GradientReachesWeights) {
  auto m = build<double>(VariantSpec::rd3d(), 3);
  Tape<double> tape;
  Context<double> ctx{&tape, Mode::Train};
  std::mt19937_64 rng(2);
  auto out = m->forward(ctx, constant(checks::random_tensor<double>(Shape{2, 2, 64, 64, 3}, rng)));
  auto loss = ops::mean(&tape, ops::multiply(&tape, out.logits, out.logits));
  auto grads = tape.backward(loss, m->params().trainable());
  for (std::size_t i = 0; i < 5; ++i) {
    const auto& g = grads.at("reduce." + std::to_string(i) + ".conv.weight");
    double norm = 0;
    for (double v : g.storage()) norm += v * v;
    EXPECT_GT(norm, 0.0) << "level " << i;
  }
  // Every encoder parameter receives a gradient.
  for (const auto& [name, g] : grads) {
    if (name.rfind("encoder", 0) != 0) continue;
    double norm = 0;
    for (double v : g.storage()) norm += std::abs(v);
    EXPECT_GT(norm, 0.0) << name;
  }
}

// ---------------------------------------------------------------------------------------------
// Decoder.

TEST(Decoder, DownsampleChainLengths) {
  ParamStore<float> store;
  DownsampleChain<float> one(store, "a", 32, 16, 4);
  EXPECT_EQ(one.length(), 1u);
  DownsampleChain<float> three(store, "b", 176, 22, 4);
  EXPECT_EQ(three.length(), 3u);
  EXPECT_THROW(DownsampleChain<float>(store, "c", 48, 16, 4), ArgumentError);
  EXPECT_THROW(DownsampleChain<float>(store, "d", 16, 16, 4), ArgumentError);
  Context<float> ctx{nullptr, Mode::Infer};
  auto y = one(ctx, constant(Tensor<float>(Shape{1, 2, 32, 32, 4}, 1.0f)));
  EXPECT_EQ(y->value.shape(), (Shape{1, 2, 16, 16, 4}));
}

TEST(Decoder, UpsampleBlockShapes) {
  ParamStore<float> store;
  UpsampleBlock<float> ub(store, "ub", 32);
  Context<float> ctx{nullptr, Mode::Infer};
  EXPECT_EQ(ub(ctx, constant(Tensor<float>(Shape{1, 1, 11, 11, 32})))->value.shape(), (Shape{1, 1, 22, 22, 32}));
  EXPECT_EQ(ub(ctx, constant(Tensor<float>(Shape{1, 2, 11, 11, 32})))->value.shape(), (Shape{1, 2, 22, 22, 32}));
}

TEST(Decoder, UpsampleOfConstantIsSpatiallyConstant) {
  ParamStore<double> store;
  UpsampleBlock<double> ub(store, "ub", 1);
  Context<double> ctx{nullptr, Mode::Infer};
  auto y = ub(ctx, constant(Tensor<double>(Shape{1, 1, 4, 4, 1}, 2.0)));
  // Away from the zero-padded border every output sees the same constant neighbourhood.
  const double centre = y->value.at(0, 0, 3, 3, 0);
  for (int h = 1; h < 7; ++h)
    for (int w = 1; w < 7; ++w) EXPECT_NEAR(y->value.at(0, 0, h, w, 0), centre, 1e-12);
}

TEST(Decoder, TconcatExtents) {
  std::vector<Var<float>> parts(5, constant(Tensor<float>(Shape{1, 2, 4, 4, 3})));
  EXPECT_EQ(tconcat<float>(nullptr, parts)->value.shape().t(), 10u);
  std::mt19937_64 rng(1);
  auto single = constant(checks::random_tensor<float>(Shape{1, 2, 4, 4, 3}, rng));
  EXPECT_EQ(tconcat<float>(nullptr, {single})->value.storage(), single->value.storage());
  auto level0 = tconcat<float>(nullptr, {single, constant(Tensor<float>(Shape{1, 1, 4, 4, 3}))});
  EXPECT_EQ(level0->value.shape().t(), 3u);
  EXPECT_THROW(tconcat<float>(nullptr, {single, constant(Tensor<float>(Shape{1, 1, 4, 5, 3}))}), DimensionError);
}

TEST(Cma, ZeroFcScalesByOneAndAHalf) {
  ParamStore<double> store;
  ChannelModalityAttention<double> cma(store, "cma", 8, 3, 4);
  for (const auto& e : store.entries()) e.var->value.fill(0.0);
  std::mt19937_64 rng(3);
  auto x = constant(checks::random_tensor<double>(Shape{2, 3, 5, 5, 8}, rng));
  Context<double> ctx{nullptr, Mode::Infer};
  auto y = cma(ctx, x);
  ASSERT_EQ(y->value.shape(), x->value.shape());
  for (std::size_t i = 0; i < x->value.numel(); ++i) EXPECT_DOUBLE_EQ(y->value[i], 1.5 * x->value[i]);
}

TEST(Cma, GateInOpenUnitInterval) {
  ParamStore<float> store(9);
  ChannelModalityAttention<float> cma(store, "cma", 32, 10, 4);
  std::mt19937_64 rng(4);
  Context<float> ctx{nullptr, Mode::Infer};
  for (int trial = 0; trial < 5; ++trial) {
    auto x = constant(checks::random_tensor<float>(Shape{2, 10, 4, 4, 32}, rng, -3, 3));
    auto g = cma.gate(ctx, x);
    EXPECT_EQ(g->value.shape(), (Shape{2, 10, 1, 1, 32}));
    for (float v : g->value.storage()) {
      EXPECT_GT(v, 0.0f);
      EXPECT_LT(v, 1.0f);
    }
  }
  EXPECT_THROW(ChannelModalityAttention<float>(store, "bad", 3, 3, 4), ArgumentError);
  EXPECT_THROW(cma.gate(ctx, constant(Tensor<float>(Shape{1, 9, 2, 2, 32}))), DimensionError);
}

TEST(TemporalReduce, UniformKernelGivesTemporalMean) {
  ParamStore<double> store;
  TemporalReduce<double> tr(store, "tr", 5, 2);
  auto& w = tr.layer().conv.kernel.weight->value;
  EXPECT_EQ(w.shape(), (Shape{5, 1, 1, 2, 2}));
  w.fill(0.0);
  for (std::size_t t = 0; t < 5; ++t)
    for (std::size_t c = 0; c < 2; ++c) w[(t * 2 + c) * 2 + c] = 1.0 / 5.0;
  std::mt19937_64 rng(5);
  auto x = constant(checks::random_tensor<double>(Shape{1, 5, 3, 3, 2}, rng, 0.0, 1.0));
  Context<double> ctx{nullptr, Mode::Infer};
  auto y = tr(ctx, x);
  ASSERT_EQ(y->value.shape(), (Shape{1, 1, 3, 3, 2}));
  for (std::size_t h = 0; h < 3; ++h)
    for (std::size_t ww = 0; ww < 3; ++ww)
      for (std::size_t c = 0; c < 2; ++c) {
        double mean = 0;
        for (std::size_t t = 0; t < 5; ++t) mean += x->value.at(0, t, h, ww, c) / 5.0;
        EXPECT_NEAR(y->value.at(0, 0, h, ww, c), mean / std::sqrt(1.0 + 1e-5), 1e-12);
      }
  EXPECT_THROW(tr(ctx, constant(Tensor<double>(Shape{1, 4, 3, 3, 2}))), ArgumentError);
}

TEST(Decoder, TraceAndOutputRange) {
  for (bool rbpp : {true, false}) {
    auto spec = rbpp ? VariantSpec::rd3d() : VariantSpec::model2();
    auto m = build<float>(spec, 1);
    Context<float> ctx{nullptr, Mode::Infer};
    auto out = m->forward(ctx, random_input(1, 64, 7));
    const std::array<std::size_t, 4> want = rbpp ? std::array<std::size_t, 4>{3, 5, 7, 10} : std::array<std::size_t, 4>{3, 3, 3, 4};
    EXPECT_EQ(out.trace.hat_frames, want);
    for (std::size_t f : out.trace.out_frames) EXPECT_EQ(f, 1u);
    EXPECT_EQ(out.probabilities->value.shape(), (Shape{1, 1, 64, 64, 1}));
    for (float p : out.probabilities->value.storage()) {
      ASSERT_GT(p, 0.0f);
      ASSERT_LT(p, 1.0f);
    }
  }
  const auto t = checks::decoder_trace(VariantSpec::rd3d());
  EXPECT_EQ(t.hat_frames, (std::array<std::size_t, 4>{3, 5, 7, 10}));
}

TEST(Decoder, BackProjectionFlowsDownwardOnly) {
  auto m = build<float>(VariantSpec::rd3d(), 0);
  for (std::size_t i = 0; i < 4; ++i) {
    ASSERT_EQ(m->decoder().path_count(i), i);
    // Path p carries f_{i-1-p}, which is i-(i-1-p) = p+1 octaves above level i.
    for (std::size_t p = 0; p < i; ++p) EXPECT_EQ(m->decoder().path_length(i, p), p + 1);
  }
  auto plain = build<float>(VariantSpec::model1(), 0);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(plain->decoder().path_count(i), 0u);
}

TEST(Decoder, MissingLevelRejected) {
  auto m = build<float>(VariantSpec::rd3d(), 0);
  FeaturePyramid<float> p;
  Context<float> ctx{nullptr, Mode::Infer};
  EXPECT_THROW(m->decoder()(ctx, p), ArgumentError);
}

TEST(Decoder, OutputAt352) {
  EncoderConfig enc;
  enc.input_side = 352;
  auto m = build<float>(VariantSpec::rd3d(enc), 0);
  Context<float> ctx{nullptr, Mode::Infer};
  auto out = m->forward(ctx, random_input(1, 352, 1));
  EXPECT_EQ(out.probabilities->value.shape(), (Shape{1, 1, 352, 352, 1}));
}

// ---------------------------------------------------------------------------------------------
// Model zoo.

TEST(ModelZoo, AblationFlags) {
  const auto full = VariantSpec::rd3d();
  EXPECT_EQ(full.backbone, Backbone::RD3D);
  EXPECT_TRUE(full.use_rbpp);
  EXPECT_EQ(full.attention, AttentionKind::CMA);
  EXPECT_FALSE(full.cma_in_encoder);
  const auto m1 = VariantSpec::model1(), m2 = VariantSpec::model2(), m3 = VariantSpec::model3(), m4 = VariantSpec::model4();
  EXPECT_TRUE(!m1.use_rbpp && m1.attention == AttentionKind::None);
  EXPECT_TRUE(!m2.use_rbpp && m2.attention == AttentionKind::CMA);
  EXPECT_TRUE(m3.use_rbpp && m3.attention == AttentionKind::ChannelSE);
  EXPECT_TRUE(m4.use_rbpp && m4.cma_in_encoder && m4.attention == AttentionKind::None);
  auto bad = VariantSpec::backbone_variant(Backbone::Siamese);
  bad.cma_in_encoder = true;
  EXPECT_THROW(bad.validate(), ConfigError);
}

TEST(ModelZoo, ParameterIdentities) {
  auto rd3d = build<float>(VariantSpec::rd3d(), 0);
  auto siamese = build<float>(VariantSpec::backbone_variant(Backbone::Siamese), 0);
  auto two = build<float>(VariantSpec::backbone_variant(Backbone::TwoStream), 0);
  auto fusion = build<float>(VariantSpec::backbone_variant(Backbone::InputFusion), 0);
  EXPECT_EQ(kernel_param_count(*rd3d, "encoder", 3, 3), 3 * kernel_param_count(*siamese, "encoder", 3, 3));
  EXPECT_EQ(kernel_param_count(*rd3d, "encoder", 7, 7), 3 * kernel_param_count(*siamese, "encoder", 7, 7));
  EXPECT_EQ(kernel_param_count(*rd3d, "encoder", 1, 1), kernel_param_count(*siamese, "encoder", 1, 1));
  EXPECT_EQ(param_count(*two, "encoder"), 2 * param_count(*siamese, "encoder"));
  // Input fusion differs only in the stem's three extra input channels.
  const std::size_t c0 = siamese->spec().encoder.stage_channels[0];
  EXPECT_EQ(param_count(*fusion, "encoder") - param_count(*siamese, "encoder"), 7u * 7u * 3u * c0);
  EXPECT_EQ(param_count(*siamese, "encoder"), direct_encoder_count(siamese->spec().encoder, 3, 1));
  // Decoders are identical across backbones.
  EXPECT_EQ(param_count(*rd3d, "decoder"), param_count(*siamese, "decoder"));
  EXPECT_EQ(param_count(*fusion, "decoder"), param_count(*two, "decoder"));
  const auto id = param_identities(EncoderConfig::tiny());
  EXPECT_TRUE(id.inflation_triples());
  EXPECT_TRUE(id.two_stream_doubles());
}

TEST(ModelZoo, BackbonesShareAPyramidShape) {
  std::vector<Shape> ref;
  for (Backbone b : {Backbone::RD3D, Backbone::InputFusion, Backbone::TwoStream, Backbone::Siamese}) {
    auto m = build<float>(VariantSpec::backbone_variant(b), 0);
    Context<float> ctx{nullptr, Mode::Infer};
    auto out = m->forward(ctx, random_input(2, 64, 4));
    std::vector<Shape> shapes;
    for (std::size_t i = 0; i < 5; ++i) shapes.push_back(out.pyramid[i]->value.shape());
    if (ref.empty()) ref = shapes;
    EXPECT_EQ(shapes, ref) << to_string(b);
    EXPECT_EQ(out.trace.hat_frames, (std::array<std::size_t, 4>{3, 5, 7, 10})) << to_string(b);
  }
}

TEST(ModelZoo, InputFusionRepeatsFeatures) {
  auto m = build<float>(VariantSpec::backbone_variant(Backbone::InputFusion), 0);
  Context<float> ctx{nullptr, Mode::Infer};
  auto raw = m->encode(ctx, random_input(1, 64, 5));
  for (const auto& f : raw) EXPECT_EQ(temporal_slice(f->value, 0).storage(), temporal_slice(f->value, 1).storage());
}

TEST(ModelZoo, SiameseSharesWeightsAcrossModalities) {
  // Equal modalities give equal slices; distinct modalities do not.
  auto m = build<float>(VariantSpec::backbone_variant(Backbone::Siamese), 0);
  Context<float> ctx{nullptr, Mode::Infer};
  std::mt19937_64 rng(6);
  const auto img = checks::random_tensor<float>(Shape{1, 1, 64, 64, 3}, rng);
  auto raw = m->encode(ctx, constant(stack_input(img, img)));
  EXPECT_EQ(temporal_slice(raw[4]->value, 0).storage(), temporal_slice(raw[4]->value, 1).storage());
  auto two = build<float>(VariantSpec::backbone_variant(Backbone::TwoStream), 0);
  auto raw2 = two->encode(ctx, constant(stack_input(img, img)));
  EXPECT_NE(temporal_slice(raw2[4]->value, 0).storage(), temporal_slice(raw2[4]->value, 1).storage());
}

TEST(ModelZoo, SeededInitIsDeterministic) {
  auto a = build<float>(VariantSpec::rd3d(), 42);
  auto b = build<float>(VariantSpec::rd3d(), 42);
  auto c = build<float>(VariantSpec::rd3d(), 43);
  bool any_diff = false;
  for (std::size_t i = 0; i < a->params().entries().size(); ++i) {
    const auto& ea = a->params().entries()[i];
    EXPECT_EQ(ea.var->value.storage(), b->params().entries()[i].var->value.storage()) << ea.name;
    any_diff = any_diff || ea.var->value.storage() != c->params().entries()[i].var->value.storage();
  }
  EXPECT_TRUE(any_diff);
  Context<float> ctx{nullptr, Mode::Infer};
  auto x = random_input(1, 64, 8);
  EXPECT_EQ(a->forward(ctx, x).probabilities->value.storage(), b->forward(ctx, x).probabilities->value.storage());
}

TEST(ModelZoo, FlopsEstimate) {
  auto rd3d = build<float>(VariantSpec::rd3d(), 0);
  auto siamese = build<float>(VariantSpec::backbone_variant(Backbone::Siamese), 0);
  const auto f3 = flops_estimate(*rd3d, 64), f2 = flops_estimate(*siamese, 64);
  EXPECT_GT(f2, 0u);
  EXPECT_GT(f3, f2);
  EXPECT_EQ(flops_estimate(*rd3d, 64), f3);
}
