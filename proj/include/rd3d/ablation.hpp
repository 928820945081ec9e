#pragma once

#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "rd3d/config.hpp"

namespace rd3d {

struct AblationRow {
  std::string name;
  VariantSpec spec;
  std::size_t params = 0;
  std::vector<metrics::SaliencyEval> per_seed;

  double mean(double metrics::SaliencyEval::*field) const {
    double s = 0.0;
    for (const auto& e : per_seed) s += e.*field;
    return per_seed.empty() ? 0.0 : s / static_cast<double>(per_seed.size());
  }
};

struct ParamIdentities {
  std::size_t rd3d_kernel3x3 = 0, siamese_kernel3x3 = 0;
  std::size_t two_stream_encoder = 0, siamese_encoder = 0;

  bool inflation_triples() const { return rd3d_kernel3x3 == 3 * siamese_kernel3x3; }
  bool two_stream_doubles() const { return two_stream_encoder == 2 * siamese_encoder; }
};

inline ParamIdentities param_identities(const EncoderConfig& enc) {
  ParamIdentities p;
  auto rd3d = build<float>(VariantSpec::rd3d(enc), 0);
  auto siamese = build<float>(VariantSpec::backbone_variant(Backbone::Siamese, enc), 0);
  auto two = build<float>(VariantSpec::backbone_variant(Backbone::TwoStream, enc), 0);
  p.rd3d_kernel3x3 = kernel_param_count(*rd3d, "encoder", 3, 3);
  p.siamese_kernel3x3 = kernel_param_count(*siamese, "encoder", 3, 3);
  p.two_stream_encoder = param_count(*two, "encoder");
  p.siamese_encoder = param_count(*siamese, "encoder");
  return p;
}

struct AblationResult {
  std::vector<AblationRow> rows;
  ParamIdentities identities;

  const AblationRow* find(const std::string& name) const {
    for (const auto& r : rows)
      if (r.name == name) return &r;
    return nullptr;
  }

  /// Full model MAE at most the plain decoder's (mean over seeds).
  std::optional<bool> rd3d_beats_model1() const {
    const auto *a = find("rd3d"), *b = find("model1");
    if (!a || !b) return std::nullopt;
    return a->mean(&metrics::SaliencyEval::mae) <= b->mean(&metrics::SaliencyEval::mae);
  }

  /// Input fusion is never the lowest-MAE backbone, checked per seed.
  std::optional<bool> input_fusion_never_best() const {
    const std::vector<std::string> names{"input_fusion", "two_stream", "siamese", "rd3d"};
    std::vector<const AblationRow*> rs;
    for (const auto& n : names) {
      const auto* r = find(n);
      if (!r) return std::nullopt;
      rs.push_back(r);
    }
    for (std::size_t s = 0; s < rs[0]->per_seed.size(); ++s) {
      const double fusion = rs[0]->per_seed[s].mae;
      bool beaten = false;
      for (std::size_t i = 1; i < rs.size(); ++i) beaten = beaten || rs[i]->per_seed[s].mae < fusion;
      if (!beaten) return false;
    }
    return true;
  }

  /// Tab-separated comparison table, one row per variant.
  std::string table() const {
    std::ostringstream os;
    os << "table\tvariant\tbackbone\tuse_rbpp\tattention\tcma_in_encoder\tparams\tSα\tFβmax\tEφmax\tM";
    const std::size_t seeds = rows.empty() ? 0 : rows.front().per_seed.size();
    for (std::size_t s = 0; s < seeds; ++s) os << "\tM[seed" << s << "]";
    os << "\n";
    for (const auto& r : rows) {
      const bool backbone_row = r.name == "input_fusion" || r.name == "two_stream" || r.name == "siamese";
      os << (backbone_row ? "backbone" : (r.name == "rd3d" ? "both" : "decoder")) << "\t" << r.name << "\t"
         << to_string(r.spec.backbone) << "\t" << (r.spec.use_rbpp ? "true" : "false") << "\t" << to_string(r.spec.attention)
         << "\t" << (r.spec.cma_in_encoder ? "true" : "false") << "\t" << r.params << "\t"
         << metrics::fixed3(r.mean(&metrics::SaliencyEval::s_alpha)) << "\t"
         << metrics::fixed3(r.mean(&metrics::SaliencyEval::f_beta_max)) << "\t"
         << metrics::fixed3(r.mean(&metrics::SaliencyEval::e_phi_max)) << "\t" << metrics::fixed3(r.mean(&metrics::SaliencyEval::mae));
      for (const auto& e : r.per_seed) os << "\t" << metrics::fixed3(e.mae);
      os << "\n";
    }
    return os.str();
  }

  std::string summary() const {
    std::ostringstream os;
    auto yn = [](std::optional<bool> b) { return b ? (*b ? "yes" : "no") : "n/a"; };
    os << "identity 3x3 kernel params rd3d = 3 x siamese: " << identities.rd3d_kernel3x3 << " = 3 x "
       << identities.siamese_kernel3x3 << " " << (identities.inflation_triples() ? "holds" : "VIOLATED") << "\n";
    os << "identity encoder params two_stream = 2 x siamese: " << identities.two_stream_encoder << " = 2 x "
       << identities.siamese_encoder << " " << (identities.two_stream_doubles() ? "holds" : "VIOLATED") << "\n";
    os << "ordering rd3d mean M <= model1 mean M: " << yn(rd3d_beats_model1()) << "\n";
    os << "ordering input_fusion never the best backbone: " << yn(input_fusion_never_best()) << "\n";
    return os.str();
  }
};

/// Trains every configured variant once per seed on the leading samples and evaluates on the
/// last `test_count` samples.
inline AblationResult run_ablation(const RunConfig& cfg, const std::vector<RgbdSample>& data, std::ostream* progress = nullptr) {
  cfg.validate();
  if (cfg.ablation.test_count == 0 || cfg.ablation.test_count >= data.size()) {
    throw ConfigError("ablation_test_count must lie in [1, " + std::to_string(data.size()) + ")");
  }
  const std::size_t split = data.size() - cfg.ablation.test_count;
  const std::vector<RgbdSample> train_set(data.begin(), data.begin() + static_cast<std::ptrdiff_t>(split));
  const std::vector<RgbdSample> test_set(data.begin() + static_cast<std::ptrdiff_t>(split), data.end());

  AblationResult result;
  result.identities = param_identities(cfg.train.model_spec().encoder);
  for (const auto& name : cfg.ablation.variants) {
    AblationRow row;
    row.name = name;
    row.spec = variant_from_name(name, cfg.train.model_spec().encoder);
    row.params = param_count(*build<float>(row.spec, 0));
    for (std::uint64_t seed : cfg.ablation.seeds) {
      TrainConfig tc = cfg.train;
      tc.variant = row.spec;
      tc.seed = seed;
      auto trained = train(tc, train_set);
      auto model = restore_model(trained.final);
      row.per_seed.push_back(evaluate_model(*model, test_set, cfg.metric));
      if (progress) {
        *progress << "ablation " << name << " seed " << seed << " final loss " << trained.log.back().loss << " test M "
                  << metrics::fixed3(row.per_seed.back().mae) << std::endl;
      }
    }
    result.rows.push_back(std::move(row));
  }
  return result;
}

}  // namespace rd3d
