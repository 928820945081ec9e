#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "rd3d/tensor.hpp"

namespace rd3d::metrics {

/// Machine epsilon used by the structure and alignment measures' reference definitions.
inline constexpr double kEps = 2.220446049250313e-16;

/// Row-major H x W map with values in [0, 1].
class SaliencyMap {
 public:
  SaliencyMap(std::size_t h, std::size_t w, std::vector<double> v) : h_(h), w_(w), v_(std::move(v)) {
    if (v_.size() != h_ * w_) throw DimensionError("SaliencyMap: data length does not match H x W");
    for (double x : v_) {
      if (!(x >= 0.0 && x <= 1.0)) throw ArgumentError("SaliencyMap: values must lie in [0, 1]");
    }
  }
  std::size_t rows() const { return h_; }
  std::size_t cols() const { return w_; }
  std::size_t size() const { return v_.size(); }
  double operator[](std::size_t i) const { return v_[i]; }
  double at(std::size_t r, std::size_t c) const { return v_[r * w_ + c]; }
  const std::vector<double>& values() const { return v_; }

 private:
  std::size_t h_, w_;
  std::vector<double> v_;
};

/// Row-major H x W binary mask.
class GroundTruth {
 public:
  GroundTruth(std::size_t h, std::size_t w, std::vector<std::uint8_t> v) : h_(h), w_(w), v_(std::move(v)) {
    if (v_.size() != h_ * w_) throw DimensionError("GroundTruth: data length does not match H x W");
    for (auto x : v_) {
      if (x > 1) throw ArgumentError("GroundTruth: values must be 0 or 1");
    }
  }
  std::size_t rows() const { return h_; }
  std::size_t cols() const { return w_; }
  std::size_t size() const { return v_.size(); }
  bool operator[](std::size_t i) const { return v_[i] != 0; }
  bool at(std::size_t r, std::size_t c) const { return v_[r * w_ + c] != 0; }
  std::size_t foreground() const { return static_cast<std::size_t>(std::count(v_.begin(), v_.end(), 1)); }

 private:
  std::size_t h_, w_;
  std::vector<std::uint8_t> v_;
};

struct MetricConfig {
  double beta2 = 0.3;
  double alpha = 0.5;
  std::size_t thresholds = 256;

  void validate() const {
    if (!(beta2 > 0.0)) throw ArgumentError("MetricConfig: beta2 must be positive");
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw ArgumentError("MetricConfig: alpha must lie in [0, 1]");
    if (thresholds == 0) throw ArgumentError("MetricConfig: thresholds must be positive");
  }
};

namespace detail {

inline void require_same(const SaliencyMap& s, const GroundTruth& g, const char* what) {
  if (s.rows() != g.rows() || s.cols() != g.cols()) {
    throw DimensionError(std::string(what) + ": saliency map " + std::to_string(s.rows()) + "x" +
                         std::to_string(s.cols()) + " vs ground truth " + std::to_string(g.rows()) + "x" +
                         std::to_string(g.cols()));
  }
}

// Threshold k of n: pixels strictly above k / n are foreground.
inline double threshold(std::size_t k, std::size_t n) { return static_cast<double>(k) / static_cast<double>(n); }

}  // namespace detail

inline double mae(const SaliencyMap& s, const GroundTruth& g) {
  detail::require_same(s, g, "mae");
  double acc = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) acc += std::abs(s[i] - (g[i] ? 1.0 : 0.0));
  return acc / static_cast<double>(s.size());
}

struct FMeasure {
  double value = 0.0;
  bool empty_ground_truth = false;
};

/// Maximum F-measure over binarizations s > k / thresholds, k = 0 .. thresholds - 1.
inline FMeasure f_measure_max(const SaliencyMap& s, const GroundTruth& g, const MetricConfig& cfg = {}) {
  detail::require_same(s, g, "f_measure_max");
  cfg.validate();
  const std::size_t positives = g.foreground();
  if (positives == 0) return FMeasure{0.0, true};
  // Histogram of foreground / background pixels by the first threshold they fail to exceed.
  const std::size_t n = cfg.thresholds;
  std::vector<std::size_t> fg(n + 1, 0), bg(n + 1, 0);
  for (std::size_t i = 0; i < s.size(); ++i) {
    // Number of thresholds k / n strictly below s.
    std::size_t above = 0;
    if (s[i] > 0.0) {
      above = static_cast<std::size_t>(std::ceil(s[i] * static_cast<double>(n)));
      if (above > n) above = n;
      while (above > 0 && !(s[i] > detail::threshold(above - 1, n))) --above;
      while (above < n && s[i] > detail::threshold(above, n)) ++above;
    }
    (g[i] ? fg : bg)[above] += 1;
  }
  // tp(k) = #fg pixels exceeding threshold k = sum of fg[j] for j > k.
  double best = 0.0;
  std::size_t tp = 0, fp = 0;
  for (std::size_t k = n; k-- > 0;) {
    tp += fg[k + 1];
    fp += bg[k + 1];
    if (tp + fp == 0) continue;
    const double p = static_cast<double>(tp) / static_cast<double>(tp + fp);
    const double r = static_cast<double>(tp) / static_cast<double>(positives);
    const double denom = cfg.beta2 * p + r;
    const double f = denom > 0.0 ? (1.0 + cfg.beta2) * p * r / denom : 0.0;
    best = std::max(best, f);
  }
  return FMeasure{best, false};
}

namespace detail {

// Similarity of a region's values to an all-ones target: 2m / (m^2 + 1 + sigma).
inline double object_score(const std::vector<double>& x) {
  if (x.empty()) return 0.0;
  double m = 0.0;
  for (double v : x) m += v;
  m /= static_cast<double>(x.size());
  double sd = 0.0;
  if (x.size() > 1) {
    double acc = 0.0;
    for (double v : x) acc += (v - m) * (v - m);
    sd = std::sqrt(acc / static_cast<double>(x.size() - 1));
  }
  return 2.0 * m / (m * m + 1.0 + sd + kEps);
}

inline double s_object(const SaliencyMap& s, const GroundTruth& g) {
  std::vector<double> fg, bg;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (g[i]) fg.push_back(s[i]);
    else bg.push_back(1.0 - s[i]);
  }
  const double u = static_cast<double>(fg.size()) / static_cast<double>(s.size());
  return u * object_score(fg) + (1.0 - u) * object_score(bg);
}

// Structural similarity of one block; sample variances use N - 1.
inline double block_ssim(const SaliencyMap& s, const GroundTruth& g, std::size_t r0, std::size_t r1, std::size_t c0,
                         std::size_t c1) {
  const std::size_t n = (r1 - r0) * (c1 - c0);
  if (n == 0) return 0.0;
  double mx = 0.0, my = 0.0;
  for (std::size_t r = r0; r < r1; ++r)
    for (std::size_t c = c0; c < c1; ++c) {
      mx += s.at(r, c);
      my += g.at(r, c) ? 1.0 : 0.0;
    }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double vx = 0.0, vy = 0.0, cxy = 0.0;
  for (std::size_t r = r0; r < r1; ++r)
    for (std::size_t c = c0; c < c1; ++c) {
      const double dx = s.at(r, c) - mx;
      const double dy = (g.at(r, c) ? 1.0 : 0.0) - my;
      vx += dx * dx;
      vy += dy * dy;
      cxy += dx * dy;
    }
  const double denom_n = n > 1 ? static_cast<double>(n - 1) : 1.0;
  vx /= denom_n;
  vy /= denom_n;
  cxy /= denom_n;
  const double a = 4.0 * mx * my * cxy;
  const double b = (mx * mx + my * my) * (vx + vy);
  if (a != 0.0) return a / (b + kEps);
  if (b == 0.0) return 1.0;
  return 0.0;
}

// Split point (1-based column X, row Y) at the rounded foreground centroid; image centre when empty.
inline std::pair<std::size_t, std::size_t> centroid(const GroundTruth& g) {
  const std::size_t total = g.foreground();
  if (total == 0) {
    return {static_cast<std::size_t>(std::lround(static_cast<double>(g.cols()) / 2.0)),
            static_cast<std::size_t>(std::lround(static_cast<double>(g.rows()) / 2.0))};
  }
  double sx = 0.0, sy = 0.0;
  for (std::size_t r = 0; r < g.rows(); ++r)
    for (std::size_t c = 0; c < g.cols(); ++c)
      if (g.at(r, c)) {
        sx += static_cast<double>(c + 1);
        sy += static_cast<double>(r + 1);
      }
  return {static_cast<std::size_t>(std::lround(sx / static_cast<double>(total))),
          static_cast<std::size_t>(std::lround(sy / static_cast<double>(total)))};
}

inline double s_region(const SaliencyMap& s, const GroundTruth& g) {
  const auto [x, y] = centroid(g);
  const std::size_t h = g.rows(), w = g.cols();
  const double area = static_cast<double>(h * w);
  const double w1 = static_cast<double>(x * y) / area;
  const double w2 = static_cast<double>((w - x) * y) / area;
  const double w3 = static_cast<double>(x * (h - y)) / area;
  const double w4 = 1.0 - w1 - w2 - w3;
  return w1 * block_ssim(s, g, 0, y, 0, x) + w2 * block_ssim(s, g, 0, y, x, w) + w3 * block_ssim(s, g, y, h, 0, x) +
         w4 * block_ssim(s, g, y, h, x, w);
}

}  // namespace detail

/// Structure measure: alpha * object-aware + (1 - alpha) * region-aware similarity.
inline double s_measure(const SaliencyMap& s, const GroundTruth& g, const MetricConfig& cfg = {}) {
  detail::require_same(s, g, "s_measure");
  cfg.validate();
  double mean_s = 0.0;
  for (double v : s.values()) mean_s += v;
  mean_s /= static_cast<double>(s.size());
  const std::size_t fg = g.foreground();
  if (fg == 0) return 1.0 - mean_s;
  if (fg == g.size()) return mean_s;
  const double q = cfg.alpha * detail::s_object(s, g) + (1.0 - cfg.alpha) * detail::s_region(s, g);
  return std::max(0.0, q);
}

/// Enhanced-alignment score of a binary prediction against the ground truth (pixel mean).
inline double e_measure_binary(const std::vector<std::uint8_t>& pred, const GroundTruth& g) {
  const std::size_t n = g.size();
  const std::size_t gt_fg = g.foreground();
  std::size_t pred_fg = 0;
  for (auto p : pred) pred_fg += p;
  if (gt_fg == 0) return static_cast<double>(n - pred_fg) / static_cast<double>(n);
  if (gt_fg == n) return static_cast<double>(pred_fg) / static_cast<double>(n);
  const double mp = static_cast<double>(pred_fg) / static_cast<double>(n);
  const double mg = static_cast<double>(gt_fg) / static_cast<double>(n);
  // Only four (pred, gt) combinations occur; sum their enhanced alignment by count.
  std::size_t count[2][2] = {{0, 0}, {0, 0}};
  for (std::size_t i = 0; i < n; ++i) count[pred[i]][g[i] ? 1 : 0] += 1;
  double total = 0.0;
  for (int p = 0; p < 2; ++p)
    for (int q = 0; q < 2; ++q) {
      if (!count[p][q]) continue;
      const double ap = static_cast<double>(p) - mp;
      const double aq = static_cast<double>(q) - mg;
      const double xi = 2.0 * ap * aq / (ap * ap + aq * aq + kEps);
      total += static_cast<double>(count[p][q]) * (xi + 1.0) * (xi + 1.0) / 4.0;
    }
  return total / static_cast<double>(n);
}

/// Maximum enhanced-alignment measure over binarizations s > k / thresholds.
inline double e_measure_max(const SaliencyMap& s, const GroundTruth& g, const MetricConfig& cfg = {}) {
  detail::require_same(s, g, "e_measure_max");
  cfg.validate();
  std::vector<std::uint8_t> pred(s.size());
  double best = 0.0;
  for (std::size_t k = 0; k < cfg.thresholds; ++k) {
    const double t = detail::threshold(k, cfg.thresholds);
    for (std::size_t i = 0; i < s.size(); ++i) pred[i] = s[i] > t ? 1 : 0;
    best = std::max(best, e_measure_binary(pred, g));
  }
  return best;
}

struct ImageScores {
  std::string id;
  double s_alpha = 0.0;
  double f_beta_max = 0.0;
  double e_phi_max = 0.0;
  double mae = 0.0;
  bool empty_ground_truth = false;
};

/// Per-image scores and dataset means, aggregated in f64.
struct SaliencyEval {
  std::vector<ImageScores> images;
  double s_alpha = 0.0;
  double f_beta_max = 0.0;
  double e_phi_max = 0.0;
  double mae = 0.0;
};

inline ImageScores evaluate_pair(const SaliencyMap& s, const GroundTruth& g, const MetricConfig& cfg = {}) {
  ImageScores r;
  r.s_alpha = s_measure(s, g, cfg);
  const auto f = f_measure_max(s, g, cfg);
  r.f_beta_max = f.value;
  r.empty_ground_truth = f.empty_ground_truth;
  r.e_phi_max = e_measure_max(s, g, cfg);
  r.mae = mae(s, g);
  return r;
}

struct EvalPair {
  std::string id;
  SaliencyMap map;
  GroundTruth gt;
};

inline SaliencyEval evaluate_set(const std::vector<EvalPair>& pairs, const MetricConfig& cfg = {}) {
  if (pairs.empty()) throw ArgumentError("evaluate_set: empty pair set");
  SaliencyEval out;
  for (const auto& p : pairs) {
    auto r = evaluate_pair(p.map, p.gt, cfg);
    r.id = p.id;
    out.images.push_back(r);
  }
  const double n = static_cast<double>(out.images.size());
  for (const auto& r : out.images) {
    out.s_alpha += r.s_alpha;
    out.f_beta_max += r.f_beta_max;
    out.e_phi_max += r.e_phi_max;
    out.mae += r.mae;
  }
  out.s_alpha /= n;
  out.f_beta_max /= n;
  out.e_phi_max /= n;
  out.mae /= n;
  return out;
}

inline std::string fixed3(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

/// Tab-separated table with columns S-alpha, F-beta max, E-phi max, MAE (3 decimals).
inline std::string report_table(const std::string& dataset, const SaliencyEval& e) {
  std::ostringstream os;
  os << "dataset\tSα\tFβmax\tEφmax\tM\n";
  os << dataset << "\t" << fixed3(e.s_alpha) << "\t" << fixed3(e.f_beta_max) << "\t" << fixed3(e.e_phi_max) << "\t"
     << fixed3(e.mae) << "\n";
  return os.str();
}

/// One machine-readable `key=value` record per dataset.
inline std::string report_record(const std::string& dataset, const SaliencyEval& e) {
  std::ostringstream os;
  os << "dataset=" << dataset << " images=" << e.images.size() << " s_alpha=" << fixed3(e.s_alpha)
     << " f_beta_max=" << fixed3(e.f_beta_max) << " e_phi_max=" << fixed3(e.e_phi_max) << " mae=" << fixed3(e.mae)
     << "\n";
  return os.str();
}

}  // namespace rd3d::metrics
