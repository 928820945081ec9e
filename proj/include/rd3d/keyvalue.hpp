#pragma once

#include <charconv>
#include <string>
#include <vector>

#include "rd3d/model.hpp"

namespace rd3d {

/// One `key = value` line; `line` is 1-based (0 for command-line overrides).
struct KeyValue {
  std::string key;
  std::string value;
  std::size_t line = 0;
  std::string source;

  std::string where() const {
    return line ? source + ":" + std::to_string(line) : (source.empty() ? std::string("override") : source);
  }
  [[noreturn]] void fail(const std::string& what) const { throw ConfigError(where() + ": " + key + ": " + what); }
};

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

/// Parses UTF-8 `key = value` lines. `#` starts a comment; blank lines are skipped.
inline std::vector<KeyValue> parse_key_values(const std::string& text, const std::string& source = "config") {
  std::vector<KeyValue> out;
  std::size_t line = 0, pos = 0;
  while (pos <= text.size()) {
    const std::size_t nl = std::min(text.find('\n', pos), text.size());
    std::string raw = text.substr(pos, nl - pos);
    pos = nl + 1;
    ++line;
    if (const auto hash = raw.find('#'); hash != std::string::npos) raw.resize(hash);
    raw = trim(raw);
    if (raw.empty()) continue;
    const auto eq = raw.find('=');
    if (eq == std::string::npos) throw ConfigError(source + ":" + std::to_string(line) + ": expected 'key = value'");
    KeyValue kv{trim(raw.substr(0, eq)), trim(raw.substr(eq + 1)), line, source};
    if (kv.key.empty()) throw ConfigError(source + ":" + std::to_string(line) + ": empty key");
    out.push_back(std::move(kv));
  }
  return out;
}

/// `key=value` from the command line.
inline KeyValue parse_override(const std::string& s) {
  const auto eq = s.find('=');
  if (eq == std::string::npos) throw ConfigError("override '" + s + "': expected key=value");
  KeyValue kv{trim(s.substr(0, eq)), trim(s.substr(eq + 1)), 0, "--set"};
  if (kv.key.empty()) throw ConfigError("override '" + s + "': empty key");
  return kv;
}

inline bool as_bool(const KeyValue& kv) {
  if (kv.value == "true" || kv.value == "1") return true;
  if (kv.value == "false" || kv.value == "0") return false;
  kv.fail("expected true or false, got '" + kv.value + "'");
}

inline std::uint64_t as_u64(const KeyValue& kv, const std::string& text) {
  std::uint64_t v = 0;
  auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || p != text.data() + text.size() || text.empty()) kv.fail("expected a non-negative integer, got '" + text + "'");
  return v;
}

inline std::uint64_t as_u64(const KeyValue& kv) { return as_u64(kv, kv.value); }

inline std::size_t as_size(const KeyValue& kv) { return static_cast<std::size_t>(as_u64(kv)); }

inline double as_double(const KeyValue& kv) {
  try {
    std::size_t used = 0;
    const double v = std::stod(kv.value, &used);
    if (used != kv.value.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    kv.fail("expected a number, got '" + kv.value + "'");
  }
}

inline std::vector<std::size_t> as_size_list(const KeyValue& kv) {
  std::vector<std::size_t> out;
  std::size_t pos = 0;
  while (pos <= kv.value.size()) {
    const std::size_t comma = std::min(kv.value.find(',', pos), kv.value.size());
    out.push_back(static_cast<std::size_t>(as_u64(kv, trim(kv.value.substr(pos, comma - pos)))));
    pos = comma + 1;
  }
  return out;
}

template <std::size_t N>
std::array<std::size_t, N> as_size_array(const KeyValue& kv) {
  auto v = as_size_list(kv);
  if (v.size() != N) kv.fail("expected " + std::to_string(N) + " comma-separated integers");
  std::array<std::size_t, N> out{};
  std::copy(v.begin(), v.end(), out.begin());
  return out;
}

/// Named model configurations: the full model, the backbone alternatives, and the decoder ablations.
inline VariantSpec variant_from_name(const std::string& name, const EncoderConfig& enc) {
  if (name == "rd3d") return VariantSpec::rd3d(enc);
  if (name == "input_fusion") return VariantSpec::backbone_variant(Backbone::InputFusion, enc);
  if (name == "two_stream") return VariantSpec::backbone_variant(Backbone::TwoStream, enc);
  if (name == "siamese") return VariantSpec::backbone_variant(Backbone::Siamese, enc);
  if (name == "model1") return VariantSpec::model1(enc);
  if (name == "model2") return VariantSpec::model2(enc);
  if (name == "model3") return VariantSpec::model3(enc);
  if (name == "model4") return VariantSpec::model4(enc);
  throw ConfigError("unknown variant '" + name + "'");
}

/// Applies a model key; returns false when the key is not a model key.
inline bool apply_variant_key(VariantSpec& v, const KeyValue& kv) {
  try {
    if (kv.key == "variant") {
      v = variant_from_name(kv.value, v.encoder);
    } else if (kv.key == "backbone") {
      v.backbone = backbone_from_string(kv.value);
    } else if (kv.key == "use_rbpp") {
      v.use_rbpp = as_bool(kv);
    } else if (kv.key == "attention") {
      v.attention = attention_from_string(kv.value);
    } else if (kv.key == "cma_in_encoder") {
      v.cma_in_encoder = as_bool(kv);
    } else if (kv.key == "attention_reduction") {
      v.attention_reduction = as_size(kv);
    } else if (kv.key == "preset") {
      v.encoder = EncoderConfig::from_preset(kv.value);
    } else if (kv.key == "stage_channels") {
      v.encoder.stage_channels = as_size_array<5>(kv);
    } else if (kv.key == "blocks_per_stage") {
      v.encoder.blocks_per_stage = as_size_array<4>(kv);
    } else if (kv.key == "reduced_channels") {
      v.encoder.reduced_channels = as_size(kv);
    } else if (kv.key == "input_side") {
      v.encoder.input_side = as_size(kv);
    } else {
      return false;
    }
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    if (msg.rfind(kv.where(), 0) == 0) throw;
    kv.fail(msg);
  }
  return true;
}

/// Parses the text produced by VariantSpec::to_text (unknown keys rejected).
inline VariantSpec parse_variant(const std::string& text, const std::string& source = "spec") {
  VariantSpec v;
  for (const auto& kv : parse_key_values(text, source)) {
    if (!apply_variant_key(v, kv)) kv.fail("unknown key");
  }
  v.validate();
  return v;
}

}  // namespace rd3d
