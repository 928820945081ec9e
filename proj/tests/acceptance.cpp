// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any criterion fails.
// Usage: rd3d_acceptance [criterion ...]   (default: all ten)

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <set>
#include <sstream>
#include <string>

#include "rd3d/ablation.hpp"
#include "rd3d/checks.hpp"
#include "rd3d/config.hpp"
#include "rd3d/train.hpp"
#include "reference_metrics.hpp"

using namespace rd3d;
namespace m = rd3d::metrics;

namespace {

struct Outcome {
  bool passed = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// ---------------------------------------------------------------------------------------------

Outcome prefusion_identity() {
  const auto t0 = std::chrono::steady_clock::now();
  const double e32 = checks::eq1_max_diff<float>(100, 0);
  const double e64 = checks::eq1_max_diff<double>(100, 0);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return {e32 <= 1e-6 && e64 <= 1e-12 && secs < 10.0,
          fmt("100 draws: f32 max diff %.3g (tol 1e-6), f64 max diff %.3g (tol 1e-12), %.2f s (limit 10 s)", e32, e64, secs)};
}

Outcome inflation_siamese() {
  const double fresh = checks::inflation_siamese_max_diff({.seed = 0});
  const double copied = checks::inflation_siamese_max_diff({.seed = 1, .randomize_batch_norm = true});
  const double worst = std::max(fresh, copied);
  return {worst <= 1e-5, fmt("max abs diff %.3g with fresh BN stats, %.3g with randomized copied stats (tol 1e-5)", fresh, copied)};
}

Outcome gradient_suite() {
  bool ok = true;
  std::string d;
  for (const auto& r : checks::gradient_suite(0)) {
    ok = ok && r.passed;
    d += (d.empty() ? "" : ", ") + r.name.substr(std::string("gradient ").size()) + " " + checks::sci(r.value);
  }
  return {ok, "relative errors (tol 1e-4): " + d};
}

Outcome temporal_bookkeeping() {
  const auto trace = checks::decoder_trace(VariantSpec::rd3d());
  const std::array<std::size_t, 4> want{3, 5, 7, 10};
  bool ok = trace.hat_frames == want;
  std::string d = "T(hat F0..3) =";
  for (std::size_t f : trace.hat_frames) d += " " + std::to_string(f);
  d += ", T(F0..3) =";
  for (std::size_t f : trace.out_frames) {
    d += " " + std::to_string(f);
    ok = ok && f == 1;
  }
  return {ok, d};
}

Outcome overfit() {
  SynthConfig sc;
  sc.seed = 7;
  sc.count = 8;
  sc.canvas_side = 64;
  const auto data = generate_synthetic(sc);
  // One batch holds all eight pairs, so 200 epochs are 200 Adam steps at a constant rate.
  TrainConfig cfg;
  cfg.lr0 = 1e-4;
  cfg.batch_size = 8;
  cfg.epochs = 200;
  cfg.cosine = false;
  cfg.flip = false;
  cfg.seed = 0;
  const auto t0 = std::chrono::steady_clock::now();
  const auto result = train(cfg, data);
  auto model = restore_model(result.final);
  const auto e = evaluate_model(*model, data);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return {e.mae < 0.05 && e.f_beta_max > 0.9 && secs < 300.0,
          fmt("%zu steps, final loss %.4f: training MAE %.4f (need < 0.05), Fbeta max %.4f (need > 0.9), %.0f s (limit 300 s)",
              static_cast<std::size_t>(result.final.adam_step), result.log.back().loss, e.mae, e.f_beta_max, secs)};
}

Outcome ablation() {
  RunConfig cfg;
  cfg.synth.count = 64;
  cfg.synth.canvas_side = 64;
  cfg.train.input_side = 64;
  cfg.train.lr0 = 1e-3;
  cfg.train.epochs = 30;
  cfg.train.batch_size = 4;
  const auto data = generate_synthetic(cfg.synth);
  const auto t0 = std::chrono::steady_clock::now();
  const auto result = run_ablation(cfg, data, &std::cerr);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::fputs(result.table().c_str(), stdout);
  std::fputs(result.summary().c_str(), stdout);

  bool table_ok = result.rows.size() == cfg.ablation.variants.size();
  for (const auto& r : result.rows) table_ok = table_ok && r.per_seed.size() == cfg.ablation.seeds.size();

  // Per-seed verdicts; the ordering is binding only when every seed agrees.
  const auto* rd3d = result.find("rd3d");
  const auto* model1 = result.find("model1");
  std::size_t rd3d_wins = 0, fusion_best = 0;
  const std::size_t seeds = cfg.ablation.seeds.size();
  for (std::size_t s = 0; s < seeds; ++s) {
    if (rd3d->per_seed[s].mae <= model1->per_seed[s].mae) ++rd3d_wins;
    double best = 1e300;
    std::string best_name;
    for (const char* b : {"input_fusion", "two_stream", "siamese", "rd3d"}) {
      const double v = result.find(b)->per_seed[s].mae;
      if (v < best) best = v, best_name = b;
    }
    if (best_name == "input_fusion") ++fusion_best;
  }
  auto verdict = [&](std::size_t yes, bool want_all_yes) {
    if (yes != 0 && yes != seeds) return std::string("seeds disagree, advisory");
    return std::string((yes == seeds) == want_all_yes ? "holds on every seed" : "fails on every seed");
  };
  const std::string v1 = verdict(rd3d_wins, true), v2 = verdict(fusion_best, false);
  const bool ordering_ok = v1.find("fails") == std::string::npos && v2.find("fails") == std::string::npos;
  const double mean_rd3d = rd3d->mean(&m::SaliencyEval::mae), mean_m1 = model1->mean(&m::SaliencyEval::mae);
  return {table_ok && ordering_ok && secs < 1800.0,
          fmt("table %s; mean MAE rd3d %.4f vs model1 %.4f (rd3d <= model1 on %zu/%zu seeds: %s); "
              "input_fusion best backbone on %zu/%zu seeds (%s); %.0f s (limit 1800 s)",
              table_ok ? "emitted" : "INCOMPLETE", mean_rd3d, mean_m1, rd3d_wins, seeds, v1.c_str(), fusion_best, seeds,
              v2.c_str(), secs)};
}

Outcome structural_identities() {
  bool ok = true;
  std::string d;
  for (const auto& [name, enc] : {std::pair{"tiny", EncoderConfig::tiny()}, std::pair{"resnet50_like", EncoderConfig::resnet50_like()}}) {
    const auto id = param_identities(enc);
    ok = ok && id.inflation_triples() && id.two_stream_doubles();
    d += fmt("%s%s: 3x3 kernels %zu vs 3 x %zu, encoder %zu vs 2 x %zu", d.empty() ? "" : "; ", name, id.rd3d_kernel3x3,
             id.siamese_kernel3x3, id.two_stream_encoder, id.siamese_encoder);
  }
  return {ok, d};
}

// ---------------------------------------------------------------------------------------------
// Metrics.

m::SaliencyMap smap(std::size_t h, std::size_t w, std::vector<double> v) { return m::SaliencyMap(h, w, std::move(v)); }
m::GroundTruth gmask(std::size_t h, std::size_t w, std::vector<std::uint8_t> v) { return m::GroundTruth(h, w, std::move(v)); }

Outcome metric_suite() {
  std::vector<std::string> failures;
  std::size_t examples = 0;
  auto expect = [&](const char* what, double got, double want, double tol = 1e-12) {
    ++examples;
    if (!(std::abs(got - want) <= tol)) failures.push_back(fmt("%s got %.12g want %.12g", what, got, want));
  };
  const auto g = gmask(2, 4, {1, 1, 0, 0, 1, 1, 0, 0});
  const auto s_eq = smap(2, 4, {1, 1, 0, 0, 1, 1, 0, 0});
  const auto s_inv = smap(2, 4, {0, 0, 1, 1, 0, 0, 1, 1});
  const auto s_half = smap(2, 4, std::vector<double>(8, 0.5));
  expect("mae s=g", m::mae(s_eq, g), 0.0);
  expect("mae s=1-g", m::mae(s_inv, g), 1.0);
  expect("mae uniform 0.5", m::mae(s_half, g), 0.5);
  expect("fmax s=g", m::f_measure_max(s_eq, g).value, 1.0);
  expect("fmax s=1", m::f_measure_max(smap(2, 4, std::vector<double>(8, 1.0)), g).value, 1.3 * 0.5 / 1.15);
  expect("fmax s=0", m::f_measure_max(smap(2, 4, std::vector<double>(8, 0.0)), g).value, 0.0);
  expect("s s=g", m::s_measure(s_eq, g), 1.0);
  expect("s empty gt", m::s_measure(smap(2, 2, {0, 0, 0, 0}), gmask(2, 2, {0, 0, 0, 0})), 1.0);
  expect("e s=g", m::e_measure_max(s_eq, g), 1.0);
  expect("e s=1-g", m::e_measure_max(s_inv, g), ref::e_max(s_inv, g));
  const auto s_const = smap(2, 4, std::vector<double>(8, 0.3));
  expect("e constant s", m::e_measure_max(s_const, g), ref::e_max(s_const, g));
  {
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<double> sv(64);
    std::vector<std::uint8_t> gv(64);
    for (std::size_t i = 0; i < 64; ++i) {
      gv[i] = u(rng) < 0.4;
      sv[i] = u(rng);
    }
    gv[0] = 1, gv[1] = 0;
    expect("s random 8x8", m::s_measure(smap(8, 8, sv), gmask(8, 8, gv)), ref::s_measure(smap(8, 8, sv), gmask(8, 8, gv)));
  }
  {
    const auto one = m::evaluate_set({{"a", s_eq, g}});
    expect("perfect S", one.s_alpha, 1.0);
    expect("perfect F", one.f_beta_max, 1.0);
    expect("perfect E", one.e_phi_max, 1.0);
    expect("perfect M", one.mae, 0.0);
    const auto two = m::evaluate_set({{"a", s_eq, g}, {"b", s_half, g}});
    const auto b = m::evaluate_pair(s_half, g);
    expect("mean S", two.s_alpha, (1.0 + b.s_alpha) / 2);
    expect("mean M", two.mae, (0.0 + b.mae) / 2);
  }
  const std::size_t examples_failed = failures.size();

  // Cross-validation against the reference formulas.
  double worst = 0.0;
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int pair = 0; pair < 50; ++pair) {
    const double fg = 0.05 + 0.9 * u(rng);
    std::vector<double> sv(256);
    std::vector<std::uint8_t> gv(256);
    for (std::size_t i = 0; i < 256; ++i) {
      gv[i] = u(rng) < fg;
      sv[i] = std::clamp(0.5 * gv[i] + 0.6 * u(rng) - 0.1, 0.0, 1.0);
    }
    gv[pair % 256] = 1;
    gv[(pair + 17) % 256] = 0;
    const auto s = smap(16, 16, sv);
    const auto gt = gmask(16, 16, gv);
    double ref_mae = 0.0;
    for (std::size_t i = 0; i < 256; ++i) ref_mae += std::abs(sv[i] - gv[i]) / 256.0;
    const auto r = m::evaluate_pair(s, gt);
    for (double diff : {r.s_alpha - ref::s_measure(s, gt), r.f_beta_max - ref::f_max(s, gt), r.e_phi_max - ref::e_max(s, gt),
                        r.mae - ref_mae}) {
      worst = std::max(worst, std::abs(diff));
    }
  }
  if (!(worst <= 1e-10)) failures.push_back(fmt("reference max diff %.3g", worst));
  std::string d = fmt("%zu worked examples, %zu failed; 50 random 16x16 pairs max diff vs reference %.3g (tol 1e-10)",
                      examples, examples_failed, worst);
  for (const auto& f : failures) d += "; " + f;
  return {failures.empty(), d};
}

Outcome schedule_and_loss() {
  TrainConfig cfg;
  cfg.lr0 = 1e-4;
  cfg.epochs = 60;
  const double a = cosine_lr(0, cfg), b = cosine_lr(30, cfg), c = cosine_lr(60, cfg);
  const Shape shape{1, 1, 4, 4, 1};
  Tensor<double> g(shape);
  for (std::size_t i = 0; i < g.numel(); i += 3) g[i] = 1.0;
  const double bce = ops::bce_loss<double>(nullptr, constant(Tensor<double>(shape, 0.5)), constant(g))->value.item();
  const bool ok = std::abs(a - 1e-4) <= 1e-18 && std::abs(b - 5e-5) <= 1e-18 && std::abs(c) <= 1e-18 &&
                  std::abs(bce - std::log(2.0)) <= 1e-9;
  return {ok, fmt("lr(0) %.6g, lr(T/2) %.6g, lr(T) %.3g; bce(0.5) - ln 2 = %.3g", a, b, c, bce - std::log(2.0))};
}

Outcome determinism() {
  SynthConfig sc;
  sc.seed = 3;
  sc.count = 6;
  sc.canvas_side = 40;
  const auto data = generate_synthetic(sc);
  const bool data_same = generate_synthetic(sc)[5].rgb.storage() == data[5].rgb.storage();
  TrainConfig cfg;
  cfg.input_side = 32;
  cfg.epochs = 3;
  cfg.batch_size = 4;
  cfg.seed = 11;
  cfg.lr0 = 1e-3;

  std::vector<Checkpoint> snapshots;
  std::ostringstream log_a, log_b;
  const auto a = train(cfg, data, nullptr, &log_a, [&](const Checkpoint& c) { snapshots.push_back(c); });
  const auto b = train(cfg, data, nullptr, &log_b);
  const bool repeat_same = a.final.serialize() == b.final.serialize() && log_a.str() == log_b.str();

  const auto bytes = a.final.serialize();
  const bool roundtrip = Checkpoint::parse(bytes, "memory").serialize() == bytes;

  auto head = cfg;
  head.epochs = 1;
  std::ostringstream log_r;
  train(head, data, nullptr, &log_r);
  const auto ckpt = Checkpoint::parse(snapshots.front().serialize(), "epoch1");
  const auto resumed = train(cfg, data, &ckpt, &log_r);
  const bool resume_same = resumed.final.serialize() == bytes && log_r.str() == log_a.str();

  auto m1 = restore_model(a.final), m2 = restore_model(b.final);
  const bool infer_same = infer(*m1, data[0]).values() == infer(*m2, data[0]).values();

  auto yn = [](bool v) { return v ? "identical" : "DIFFERENT"; };
  return {data_same && repeat_same && roundtrip && resume_same && infer_same,
          fmt("synthetic data %s, repeated training %s, checkpoint save/load/save %s (%zu bytes), resume vs uninterrupted %s, "
              "inference %s",
              yn(data_same), yn(repeat_same), yn(roundtrip), bytes.size(), yn(resume_same), yn(infer_same))};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"prefusion identity", prefusion_identity},
      {"inflation equals siamese", inflation_siamese},
      {"gradient suite", gradient_suite},
      {"temporal bookkeeping", temporal_bookkeeping},
      {"overfit smoke test", overfit},
      {"ablation", ablation},
      {"structural identities", structural_identities},
      {"metric suite", metric_suite},
      {"schedule and loss closed forms", schedule_and_loss},
      {"determinism and round trips", determinism},
  };
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));

  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!only.empty() && !only.count(id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("%s\t%d\t%s\t%s [%.1f s]\n", o.passed ? "PASS" : "FAIL", id, criteria[i].first, o.detail.c_str(), secs);
    std::fflush(stdout);
    failed += !o.passed;
  }
  std::printf("%d criteria failed\n", failed);
  return failed ? 1 : 0;
}
