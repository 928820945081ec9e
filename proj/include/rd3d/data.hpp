#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <random>
#include <string>
#include <vector>

#include "rd3d/encoder.hpp"
#include "rd3d/metrics.hpp"
#include "rd3d/nn.hpp"

namespace rd3d {

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// One RGB-D pair. rgb is 1x1xHxWx3 in [0,1]; depth is 1x1xHxWx1 raw; gt is 1x1xHxWx1 in {0,1}.
struct RgbdSample {
  Tensor<float> rgb;
  Tensor<float> depth;
  Tensor<float> gt;
  std::string id;

  std::size_t rows() const { return rgb.shape().h(); }
  std::size_t cols() const { return rgb.shape().w(); }

  void validate() const {
    const Shape& a = rgb.shape();
    if (a.c() != 3 || depth.shape().c() != 1 || gt.shape().c() != 1) throw DimensionError("RgbdSample: channel layout must be 3/1/1");
    if (depth.shape().h() != a.h() || depth.shape().w() != a.w() || gt.shape().h() != a.h() || gt.shape().w() != a.w()) {
      throw DimensionError("RgbdSample " + id + ": rgb, depth and gt extents differ on axes H/W");
    }
  }
};

// ---------------------------------------------------------------------------------------------
// Portable raster I/O (binary PGM / PPM, 8 bit).

struct Image {
  std::size_t rows = 0, cols = 0, channels = 1;
  std::vector<std::uint8_t> pixels;  // row-major, interleaved
};

namespace detail {

class PnmReader {
 public:
  PnmReader(const std::string& path, std::vector<std::uint8_t> bytes) : path_(path), b_(std::move(bytes)) {}

  [[noreturn]] void fail(const std::string& what) const {
    throw IoError(path_ + ": " + what + " at byte offset " + std::to_string(pos_));
  }

  void skip_space() {
    while (pos_ < b_.size()) {
      if (b_[pos_] == '#') {
        while (pos_ < b_.size() && b_[pos_] != '\n') ++pos_;
      } else if (std::isspace(b_[pos_])) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  std::size_t number() {
    skip_space();
    if (pos_ >= b_.size() || !std::isdigit(b_[pos_])) fail("expected a decimal number");
    std::size_t v = 0;
    while (pos_ < b_.size() && std::isdigit(b_[pos_])) {
      v = v * 10 + static_cast<std::size_t>(b_[pos_] - '0');
      if (v > (1u << 24)) fail("header value too large");
      ++pos_;
    }
    return v;
  }

  Image read() {
    if (b_.size() < 2 || b_[0] != 'P' || (b_[1] != '5' && b_[1] != '6')) fail("not a binary PGM (P5) or PPM (P6) file");
    Image img;
    img.channels = b_[1] == '5' ? 1 : 3;
    pos_ = 2;
    img.cols = number();
    img.rows = number();
    const std::size_t maxval = number();
    if (img.cols == 0 || img.rows == 0) fail("zero image extent");
    if (maxval == 0 || maxval > 255) fail("only 8-bit maxval (1..255) is supported");
    if (pos_ >= b_.size() || !std::isspace(b_[pos_])) fail("expected whitespace after header");
    ++pos_;
    const std::size_t need = img.rows * img.cols * img.channels;
    if (b_.size() - pos_ < need) {
      pos_ = b_.size();
      fail("truncated pixel data (need " + std::to_string(need) + " bytes)");
    }
    img.pixels.assign(b_.begin() + static_cast<std::ptrdiff_t>(pos_), b_.begin() + static_cast<std::ptrdiff_t>(pos_ + need));
    if (maxval != 255) {
      for (auto& p : img.pixels) {
        if (p > maxval) fail("pixel value exceeds maxval");
        p = static_cast<std::uint8_t>(std::lround(255.0 * p / static_cast<double>(maxval)));
      }
    }
    return img;
  }

 private:
  std::string path_;
  std::vector<std::uint8_t> b_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline Image load_image(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path.string() + ": cannot open for reading at byte offset 0");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return detail::PnmReader(path.string(), std::move(bytes)).read();
}

inline void save_image(const std::filesystem::path& path, const Image& img) {
  if (img.channels != 1 && img.channels != 3) throw IoError(path.string() + ": unsupported channel count");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(path.string() + ": cannot open for writing");
  out << (img.channels == 1 ? "P5" : "P6") << "\n" << img.cols << " " << img.rows << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
  if (!out) throw IoError(path.string() + ": write failed");
}

/// Probability to 8-bit level: round(p * 255), halves rounded up.
inline std::uint8_t quantize(double p) {
  const double v = std::floor(std::clamp(p, 0.0, 1.0) * 255.0 + 0.5);
  return static_cast<std::uint8_t>(v);
}

inline void save_map(const std::filesystem::path& path, const metrics::SaliencyMap& map) {
  Image img{map.rows(), map.cols(), 1, {}};
  img.pixels.reserve(map.size());
  for (double v : map.values()) img.pixels.push_back(quantize(v));
  save_image(path, img);
}

/// Loads an 8-bit grayscale map and divides by 255.
inline metrics::SaliencyMap load_map(const std::filesystem::path& path) {
  Image img = load_image(path);
  if (img.channels != 1) throw IoError(path.string() + ": expected a grayscale (P5) map at byte offset 0");
  std::vector<double> v(img.pixels.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = img.pixels[i] / 255.0;
  return metrics::SaliencyMap(img.rows, img.cols, std::move(v));
}

/// Ground-truth masks are binarized at mid-gray.
inline metrics::GroundTruth load_mask(const std::filesystem::path& path) {
  Image img = load_image(path);
  if (img.channels != 1) throw IoError(path.string() + ": expected a grayscale (P5) mask at byte offset 0");
  std::vector<std::uint8_t> v(img.pixels.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = img.pixels[i] > 127 ? 1 : 0;
  return metrics::GroundTruth(img.rows, img.cols, std::move(v));
}

inline metrics::GroundTruth to_ground_truth(const Tensor<float>& gt) {
  std::vector<std::uint8_t> v(gt.numel());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = gt[i] > 0.5f ? 1 : 0;
  return metrics::GroundTruth(gt.shape().h(), gt.shape().w(), std::move(v));
}

// ---------------------------------------------------------------------------------------------
// Dataset directory: <root>/rgb/<id>.ppm, <root>/depth/<id>.pgm, <root>/gt/<id>.pgm

inline void write_sample(const std::filesystem::path& root, const RgbdSample& s) {
  namespace fs = std::filesystem;
  for (const char* sub : {"rgb", "depth", "gt"}) fs::create_directories(root / sub);
  const std::size_t h = s.rows(), w = s.cols();
  Image rgb{h, w, 3, std::vector<std::uint8_t>(h * w * 3)};
  for (std::size_t i = 0; i < rgb.pixels.size(); ++i) rgb.pixels[i] = quantize(s.rgb[i]);
  Image depth{h, w, 1, std::vector<std::uint8_t>(h * w)};
  for (std::size_t i = 0; i < depth.pixels.size(); ++i)
    depth.pixels[i] = static_cast<std::uint8_t>(std::clamp(std::lround(s.depth[i]), 0L, 255L));
  Image gt{h, w, 1, std::vector<std::uint8_t>(h * w)};
  for (std::size_t i = 0; i < gt.pixels.size(); ++i) gt.pixels[i] = s.gt[i] > 0.5f ? 255 : 0;
  save_image(root / "rgb" / (s.id + ".ppm"), rgb);
  save_image(root / "depth" / (s.id + ".pgm"), depth);
  save_image(root / "gt" / (s.id + ".pgm"), gt);
}

inline void write_dataset(const std::filesystem::path& root, const std::vector<RgbdSample>& samples) {
  for (const auto& s : samples) write_sample(root, s);
}

/// Sorted ids of files with extension `ext` in `dir`.
inline std::vector<std::string> list_ids(const std::filesystem::path& dir, const std::string& ext) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw IoError(dir.string() + ": not a directory");
  std::vector<std::string> ids;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ext) ids.push_back(e.path().stem().string());
  }
  std::sort(ids.begin(), ids.end());
  return ids;
}

/// Loads one sample; `with_gt` = false leaves gt as zeros (inference on unlabeled data).
inline RgbdSample load_sample(const std::filesystem::path& root, const std::string& id, bool with_gt = true) {
  Image rgb = load_image(root / "rgb" / (id + ".ppm"));
  Image depth = load_image(root / "depth" / (id + ".pgm"));
  if (rgb.channels != 3) throw IoError((root / "rgb" / (id + ".ppm")).string() + ": expected P6 color image at byte offset 0");
  if (depth.channels != 1) throw IoError((root / "depth" / (id + ".pgm")).string() + ": expected P5 grayscale at byte offset 0");
  RgbdSample s;
  s.id = id;
  s.rgb = Tensor<float>(Shape{1, 1, rgb.rows, rgb.cols, 3});
  for (std::size_t i = 0; i < rgb.pixels.size(); ++i) s.rgb[i] = static_cast<float>(rgb.pixels[i] / 255.0);
  s.depth = Tensor<float>(Shape{1, 1, depth.rows, depth.cols, 1});
  for (std::size_t i = 0; i < depth.pixels.size(); ++i) s.depth[i] = static_cast<float>(depth.pixels[i]);
  s.gt = Tensor<float>(Shape{1, 1, rgb.rows, rgb.cols, 1});
  if (with_gt) {
    auto gt = load_mask(root / "gt" / (id + ".pgm"));
    if (gt.rows() != rgb.rows || gt.cols() != rgb.cols) throw IoError(id + ": gt extent differs from rgb");
    for (std::size_t i = 0; i < gt.size(); ++i) s.gt[i] = gt[i] ? 1.0f : 0.0f;
  }
  s.validate();
  return s;
}

inline std::vector<RgbdSample> load_dataset(const std::filesystem::path& root, bool with_gt = true) {
  std::vector<RgbdSample> out;
  for (const auto& id : list_ids(root / "rgb", ".ppm")) out.push_back(load_sample(root, id, with_gt));
  if (out.empty()) throw IoError(root.string() + ": no samples found under rgb/");
  return out;
}

// ---------------------------------------------------------------------------------------------
// Preprocessing and augmentation.

/// Per-channel standardization applied to both RGB and replicated depth.
struct Normalization {
  std::array<float, 3> mean{0.485f, 0.456f, 0.406f};
  std::array<float, 3> stddev{0.229f, 0.224f, 0.225f};
};

struct PreparedPair {
  Tensor<float> rgb3;    // 1 x 1 x side x side x 3, standardized
  Tensor<float> depth3;  // 1 x 1 x side x side x 3, standardized
  Tensor<float> gt;      // 1 x 1 x side x side x 1, binary
  bool depth_degenerate = false;
};

inline Tensor<float> resize_image(const Tensor<float>& x, std::size_t rows, std::size_t cols) {
  if (x.shape().h() == rows && x.shape().w() == cols) return x;
  return ops::resize_bilinear<float>(nullptr, constant(x), rows, cols)->value;
}

/// Min-max normalizes depth to [0, 255]; a constant map becomes all zeros (flagged degenerate).
inline Tensor<float> normalize_depth(const Tensor<float>& depth, bool* degenerate = nullptr) {
  auto [lo, hi] = std::minmax_element(depth.storage().begin(), depth.storage().end());
  Tensor<float> out(depth.shape());
  const double range = static_cast<double>(*hi) - static_cast<double>(*lo);
  if (degenerate) *degenerate = !(range > 0.0);
  if (!(range > 0.0)) return out;
  for (std::size_t i = 0; i < out.numel(); ++i)
    out[i] = static_cast<float>((static_cast<double>(depth[i]) - *lo) * 255.0 / range);
  return out;
}

/// Model-ready pair at side x side: depth normalized to [0,255], scaled to [0,1], replicated to three
/// channels; both modalities resized and standardized. Near surfaces are bright.
inline PreparedPair preprocess(const RgbdSample& s, std::size_t side, const Normalization& norm = {}) {
  s.validate();
  PreparedPair p;
  Tensor<float> d = normalize_depth(s.depth, &p.depth_degenerate);
  Tensor<float> d3(Shape{1, 1, s.rows(), s.cols(), 3});
  for (std::size_t i = 0; i < d.numel(); ++i)
    for (std::size_t c = 0; c < 3; ++c) d3[i * 3 + c] = d[i] / 255.0f;
  p.rgb3 = resize_image(s.rgb, side, side);
  p.depth3 = resize_image(d3, side, side);
  for (Tensor<float>* t : {&p.rgb3, &p.depth3}) {
    for (std::size_t i = 0; i < t->numel(); ++i) {
      const std::size_t c = i % 3;
      (*t)[i] = ((*t)[i] - norm.mean[c]) / norm.stddev[c];
    }
  }
  p.gt = resize_image(s.gt, side, side);
  for (auto& v : p.gt.storage()) v = v >= 0.5f ? 1.0f : 0.0f;
  return p;
}

inline Tensor<float> flip_horizontal(const Tensor<float>& x) {
  const Shape& s = x.shape();
  Tensor<float> out(s);
  for (std::size_t n = 0; n < s.n(); ++n)
    for (std::size_t t = 0; t < s.t(); ++t)
      for (std::size_t h = 0; h < s.h(); ++h)
        for (std::size_t w = 0; w < s.w(); ++w)
          for (std::size_t c = 0; c < s.c(); ++c) out.at(n, t, h, s.w() - 1 - w, c) = x.at(n, t, h, w, c);
  return out;
}

inline RgbdSample flip_sample(const RgbdSample& s) {
  return RgbdSample{flip_horizontal(s.rgb), flip_horizontal(s.depth), flip_horizontal(s.gt), s.id};
}

inline const std::vector<std::size_t>& paper_scales() {
  static const std::vector<std::size_t> scales{256, 352, 416};
  return scales;
}

struct Augmented {
  RgbdSample sample;
  std::size_t side = 0;
  bool flipped = false;
};

/// Horizontal flip with probability 0.5 (applied to rgb, depth and gt alike) and a training side
/// drawn uniformly from `scales`.
inline Augmented augment(const RgbdSample& s, std::mt19937_64& rng, const std::vector<std::size_t>& scales = paper_scales()) {
  if (scales.empty()) throw ArgumentError("augment: empty scale set");
  Augmented a;
  a.flipped = uniform01(rng) < 0.5;
  a.sample = a.flipped ? flip_sample(s) : s;
  a.side = scales[std::min(scales.size() - 1, static_cast<std::size_t>(uniform01(rng) * static_cast<double>(scales.size())))];
  return a;
}

// ---------------------------------------------------------------------------------------------
// Synthetic RGB-D data.

enum class ShapeKind { Ellipse, Rectangle, Blob };

struct SynthConfig {
  std::uint64_t seed = 0;
  std::size_t count = 64;
  std::size_t canvas_side = 64;
  std::vector<ShapeKind> shapes{ShapeKind::Ellipse, ShapeKind::Rectangle, ShapeKind::Blob};
  double depth_contrast_min = 60.0;
  double depth_contrast_max = 140.0;
  double clutter_density = 0.5;

  void validate() const {
    if (count == 0) throw ConfigError("synth count must be >= 1");
    if (canvas_side < 8) throw ConfigError("synth canvas_side must be >= 8");
    if (shapes.empty()) throw ConfigError("synth shape vocabulary is empty");
    if (depth_contrast_min < 0 || depth_contrast_max < depth_contrast_min) throw ConfigError("invalid depth contrast range");
    if (clutter_density < 0.0 || clutter_density > 1.0) throw ConfigError("clutter_density must lie in [0, 1]");
  }
};

namespace detail {

struct Blot {
  ShapeKind kind;
  double cy, cx, ry, rx;
  std::array<std::array<double, 2>, 3> lobes{};  // blob lobe offsets (relative to radii)

  bool contains(double y, double x) const {
    const double dy = (y - cy) / ry, dx = (x - cx) / rx;
    switch (kind) {
      case ShapeKind::Ellipse: return dy * dy + dx * dx <= 1.0;
      case ShapeKind::Rectangle: return std::abs(dy) <= 1.0 && std::abs(dx) <= 1.0;
      case ShapeKind::Blob:
        for (const auto& l : lobes) {
          const double ly = dy - l[0], lx = dx - l[1];
          if (ly * ly + lx * lx <= 0.36) return true;
        }
        return false;
    }
    return false;
  }
};

inline Blot random_blot(std::mt19937_64& rng, const std::vector<ShapeKind>& kinds, double side, double min_r, double max_r) {
  Blot b;
  b.kind = kinds[std::min(kinds.size() - 1, static_cast<std::size_t>(uniform01(rng) * static_cast<double>(kinds.size())))];
  b.ry = side * (min_r + (max_r - min_r) * uniform01(rng));
  b.rx = side * (min_r + (max_r - min_r) * uniform01(rng));
  b.cy = b.ry + (side - 2.0 * b.ry) * uniform01(rng);
  b.cx = b.rx + (side - 2.0 * b.rx) * uniform01(rng);
  for (auto& l : b.lobes) {
    l[0] = 0.8 * (2.0 * uniform01(rng) - 1.0);
    l[1] = 0.8 * (2.0 * uniform01(rng) - 1.0);
  }
  b.lobes[0] = {0.0, 0.0};
  return b;
}

inline std::array<double, 3> random_color(std::mt19937_64& rng) {
  return {uniform01(rng), uniform01(rng), uniform01(rng)};
}

inline double color_distance(const std::array<double, 3>& a, const std::array<double, 3>& b) {
  return std::abs(a[0] - b[0]) + std::abs(a[1] - b[1]) + std::abs(a[2] - b[2]);
}

}  // namespace detail

/// Generates `cfg.count` samples. Each holds one or two salient shapes standing out from the
/// background in depth (nearer = larger value) and in color, plus optional clutter shapes whose
/// depth matches the background. Fully determined by the seed.
inline std::vector<RgbdSample> generate_synthetic(const SynthConfig& cfg) {
  cfg.validate();
  const std::size_t S = cfg.canvas_side;
  const double side = static_cast<double>(S);
  std::vector<RgbdSample> out;
  out.reserve(cfg.count);
  for (std::size_t k = 0; k < cfg.count; ++k) {
    auto rng = keyed_rng(cfg.seed, "synth/" + std::to_string(k));
    RgbdSample s;
    char id[32];
    std::snprintf(id, sizeof id, "syn%05zu", k);
    s.id = id;
    s.rgb = Tensor<float>(Shape{1, 1, S, S, 3});
    s.depth = Tensor<float>(Shape{1, 1, S, S, 1});
    s.gt = Tensor<float>(Shape{1, 1, S, S, 1});

    const auto bg = detail::random_color(rng);
    const double bg_depth = 20.0 + 60.0 * uniform01(rng);
    const double slope = 30.0 * (2.0 * uniform01(rng) - 1.0);
    std::vector<double> base_depth(S * S);
    for (std::size_t y = 0; y < S; ++y)
      for (std::size_t x = 0; x < S; ++x) {
        const double shade = 0.15 * (static_cast<double>(y) / side - 0.5);
        const double noise = 0.06 * (uniform01(rng) - 0.5);
        for (std::size_t c = 0; c < 3; ++c) {
          s.rgb[(y * S + x) * 3 + c] = static_cast<float>(std::clamp(bg[c] + shade + noise, 0.0, 1.0));
        }
        base_depth[y * S + x] = bg_depth + slope * static_cast<double>(y) / side;
      }

    // Clutter: color only, depth stays on the background surface.
    for (int c = 0; c < 3; ++c) {
      if (uniform01(rng) >= cfg.clutter_density) continue;
      const auto blot = detail::random_blot(rng, cfg.shapes, side, 0.06, 0.14);
      const auto col = detail::random_color(rng);
      for (std::size_t y = 0; y < S; ++y)
        for (std::size_t x = 0; x < S; ++x)
          if (blot.contains(static_cast<double>(y) + 0.5, static_cast<double>(x) + 0.5))
            for (std::size_t ch = 0; ch < 3; ++ch) s.rgb[(y * S + x) * 3 + ch] = static_cast<float>(col[ch]);
    }

    std::vector<double> depth = base_depth;
    const std::size_t objects = uniform01(rng) < 0.5 ? 1 : 2;
    for (std::size_t o = 0; o < objects; ++o) {
      const auto blot = detail::random_blot(rng, cfg.shapes, side, objects == 1 ? 0.15 : 0.1, objects == 1 ? 0.32 : 0.22);
      std::array<double, 3> col = detail::random_color(rng);
      for (int tries = 0; tries < 16 && detail::color_distance(col, bg) < 0.6; ++tries) col = detail::random_color(rng);
      const double lift = cfg.depth_contrast_min + (cfg.depth_contrast_max - cfg.depth_contrast_min) * uniform01(rng);
      for (std::size_t y = 0; y < S; ++y)
        for (std::size_t x = 0; x < S; ++x) {
          if (!blot.contains(static_cast<double>(y) + 0.5, static_cast<double>(x) + 0.5)) continue;
          const std::size_t i = y * S + x;
          s.gt[i] = 1.0f;
          depth[i] = std::max(depth[i], base_depth[i] + lift);
          const double noise = 0.06 * (uniform01(rng) - 0.5);
          for (std::size_t ch = 0; ch < 3; ++ch)
            s.rgb[i * 3 + ch] = static_cast<float>(std::clamp(col[ch] + noise, 0.0, 1.0));
        }
    }
    // Guarantee at least one foreground and one background pixel.
    s.gt[(S / 2) * S + S / 2] = 1.0f;
    depth[(S / 2) * S + S / 2] = std::max(depth[(S / 2) * S + S / 2], base_depth[(S / 2) * S + S / 2] + cfg.depth_contrast_min);
    s.gt[0] = 0.0f;
    depth[0] = base_depth[0];

    for (std::size_t i = 0; i < S * S; ++i) {
      s.depth[i] = static_cast<float>(std::clamp(std::round(depth[i]), 0.0, 255.0));
      for (std::size_t ch = 0; ch < 3; ++ch) {
        float& v = s.rgb[i * 3 + ch];
        v = static_cast<float>(std::floor(static_cast<double>(v) * 255.0 + 0.5) / 255.0);
      }
    }
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace rd3d
