#pragma once

#include <algorithm>
#include <cmath>

#include "rd3d/ops/runtime.hpp"

namespace rd3d {
namespace ops {
namespace detail {

// Half-pixel source coordinate along one axis (align-corners disabled), clamped at the
// low border. Returns the two taps and the weight of the upper tap.
struct LinearTap {
  std::size_t lo = 0, hi = 0;
  double frac = 0.0;
};

inline std::vector<LinearTap> linear_taps(std::size_t in, std::size_t out) {
  std::vector<LinearTap> taps(out);
  const double scale = static_cast<double>(in) / static_cast<double>(out);
  for (std::size_t o = 0; o < out; ++o) {
    double src = (static_cast<double>(o) + 0.5) * scale - 0.5;
    if (src < 0.0) src = 0.0;
    std::size_t lo = static_cast<std::size_t>(std::floor(src));
    if (lo > in - 1) lo = in - 1;
    const std::size_t hi = std::min(lo + 1, in - 1);
    taps[o] = LinearTap{lo, hi, src - static_cast<double>(lo)};
  }
  return taps;
}

}  // namespace detail

/// Spatial bilinear resize of an N x T x H x W x C tensor to out_h x out_w.
template <class T>
Var<T> resize_bilinear(Tape<T>* tape, const Var<T>& x, std::size_t out_h, std::size_t out_w) {
  if (out_h == 0 || out_w == 0) throw ArgumentError("resize_bilinear: output extent must be positive");
  const Shape s = x->value.shape();
  const auto th = detail::linear_taps(s.h(), out_h);
  const auto tw = detail::linear_taps(s.w(), out_w);
  Tensor<T> out(Shape{s.n(), s.t(), out_h, out_w, s.c()});
  const std::size_t planes = s.n() * s.t();
  const std::size_t C = s.c();
  const T* xd = x->value.data().data();
  for (std::size_t p = 0; p < planes; ++p) {
    const T* src = xd + p * s.h() * s.w() * C;
    T* dst = out.data().data() + p * out_h * out_w * C;
    for (std::size_t oh = 0; oh < out_h; ++oh) {
      const auto& a = th[oh];
      for (std::size_t ow = 0; ow < out_w; ++ow) {
        const auto& b = tw[ow];
        const T w00 = static_cast<T>((1.0 - a.frac) * (1.0 - b.frac));
        const T w01 = static_cast<T>((1.0 - a.frac) * b.frac);
        const T w10 = static_cast<T>(a.frac * (1.0 - b.frac));
        const T w11 = static_cast<T>(a.frac * b.frac);
        T* o = dst + (oh * out_w + ow) * C;
        const T* p00 = src + (a.lo * s.w() + b.lo) * C;
        const T* p01 = src + (a.lo * s.w() + b.hi) * C;
        const T* p10 = src + (a.hi * s.w() + b.lo) * C;
        const T* p11 = src + (a.hi * s.w() + b.hi) * C;
        for (std::size_t c = 0; c < C; ++c) o[c] = w00 * p00[c] + w01 * p01[c] + w10 * p10[c] + w11 * p11[c];
      }
    }
  }
  return detail::emit<T>(tape, std::move(out), {&x}, [x, s, th, tw, out_h, out_w](const Tensor<T>& g, GradSink<T>& sink) {
    Tensor<T>* gx = sink.slot(x);
    if (!gx) return;
    const std::size_t C = s.c();
    for (std::size_t p = 0; p < s.n() * s.t(); ++p) {
      T* dst = gx->data().data() + p * s.h() * s.w() * C;
      const T* src = g.data().data() + p * out_h * out_w * C;
      for (std::size_t oh = 0; oh < out_h; ++oh) {
        const auto& a = th[oh];
        for (std::size_t ow = 0; ow < out_w; ++ow) {
          const auto& b = tw[ow];
          const T w00 = static_cast<T>((1.0 - a.frac) * (1.0 - b.frac));
          const T w01 = static_cast<T>((1.0 - a.frac) * b.frac);
          const T w10 = static_cast<T>(a.frac * (1.0 - b.frac));
          const T w11 = static_cast<T>(a.frac * b.frac);
          const T* gi = src + (oh * out_w + ow) * C;
          T* p00 = dst + (a.lo * s.w() + b.lo) * C;
          T* p01 = dst + (a.lo * s.w() + b.hi) * C;
          T* p10 = dst + (a.hi * s.w() + b.lo) * C;
          T* p11 = dst + (a.hi * s.w() + b.hi) * C;
          for (std::size_t c = 0; c < C; ++c) {
            p00[c] += w00 * gi[c];
            p01[c] += w01 * gi[c];
            p10[c] += w10 * gi[c];
            p11[c] += w11 * gi[c];
          }
        }
      }
    }
  });
}

/// Spatial-only bilinear upsampling by an integer factor; T and C unchanged.
template <class T>
Var<T> bilinear_upsample(Tape<T>* tape, const Var<T>& x, std::size_t factor) {
  if (factor == 0) throw ArgumentError("bilinear_upsample: factor must be >= 1");
  const Shape& s = x->value.shape();
  return resize_bilinear(tape, x, s.h() * factor, s.w() * factor);
}

/// Average over H and W, and over T as well when `over_time` is set.
/// Output is N x (T or 1) x 1 x 1 x C.
template <class T>
Var<T> global_avg_pool(Tape<T>* tape, const Var<T>& x, bool over_time = false) {
  const Shape s = x->value.shape();
  const std::size_t to = over_time ? 1 : s.t();
  const std::size_t hw = s.h() * s.w();
  const std::size_t count = over_time ? hw * s.t() : hw;
  Tensor<T> out(Shape{s.n(), to, 1, 1, s.c()});
  std::vector<double> acc(out.numel(), 0.0);
  for (std::size_t n = 0; n < s.n(); ++n)
    for (std::size_t t = 0; t < s.t(); ++t)
      for (std::size_t i = 0; i < hw; ++i)
        for (std::size_t c = 0; c < s.c(); ++c) {
          const std::size_t o = (n * to + (over_time ? 0 : t)) * s.c() + c;
          acc[o] += static_cast<double>(x->value[((n * s.t() + t) * hw + i) * s.c() + c]);
        }
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = static_cast<T>(acc[i] / static_cast<double>(count));
  return detail::emit<T>(tape, std::move(out), {&x}, [x, s, to, hw, count, over_time](const Tensor<T>& g, GradSink<T>& sink) {
    Tensor<T>* gx = sink.slot(x);
    if (!gx) return;
    const T inv = T(1) / static_cast<T>(count);
    for (std::size_t n = 0; n < s.n(); ++n)
      for (std::size_t t = 0; t < s.t(); ++t)
        for (std::size_t i = 0; i < hw; ++i)
          for (std::size_t c = 0; c < s.c(); ++c) {
            const std::size_t o = (n * to + (over_time ? 0 : t)) * s.c() + c;
            (*gx)[((n * s.t() + t) * hw + i) * s.c() + c] += g[o] * inv;
          }
  });
}

}  // namespace ops
}  // namespace rd3d
