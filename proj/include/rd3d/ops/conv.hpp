#pragma once

#include <Eigen/Core>
#include <array>
#include <limits>

#include "rd3d/ops/runtime.hpp"

namespace rd3d {

/// Stride and zero padding per (T, H, W).
struct ConvGeometry {
  std::array<std::size_t, 3> stride{1, 1, 1};
  std::array<std::size_t, 3> pad{0, 0, 0};
};

/// 3D convolution weights laid out kT x kH x kW x Cin x Cout, optional bias of length Cout.
template <class T>
struct Kernel3D {
  Var<T> weight;
  Var<T> bias;  // may be null
  ConvGeometry geom;

  std::size_t kt() const { return weight->value.shape()[0]; }
  std::size_t kh() const { return weight->value.shape()[1]; }
  std::size_t kw() const { return weight->value.shape()[2]; }
  std::size_t in_channels() const { return weight->value.shape()[3]; }
  std::size_t out_channels() const { return weight->value.shape()[4]; }

  /// Temporal weight slice i as a 1 x kH x kW x Cin x Cout tensor (w1, w2, w3 for i = 0, 1, 2).
  Tensor<T> temporal_slice(std::size_t i) const {
    const Shape& s = weight->value.shape();
    if (i >= s[0]) throw ArgumentError("Kernel3D::temporal_slice: index out of range");
    const std::size_t len = s[1] * s[2] * s[3] * s[4];
    auto first = weight->value.storage().begin() + static_cast<std::ptrdiff_t>(i * len);
    return Tensor<T>(Shape{1, s[1], s[2], s[3], s[4]}, std::vector<T>(first, first + static_cast<std::ptrdiff_t>(len)));
  }
};

namespace ops {
namespace detail {

template <class T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MatMap = Eigen::Map<RowMatrix<T>>;
template <class T>
using ConstMatMap = Eigen::Map<const RowMatrix<T>>;

struct ConvPlan {
  Shape in, out;
  std::array<std::size_t, 3> k{};
  ConvGeometry g;
  std::size_t rows = 0;  // N * To * Ho * Wo
  std::size_t cols = 0;  // taps * kH * kW * Cin
  std::vector<std::size_t> taps;  // temporal kernel offsets gathered by im2col
  bool pointwise = false;
};

inline std::size_t conv_extent(std::size_t in, std::size_t k, std::size_t stride, std::size_t pad, Axis axis) {
  if (stride == 0) throw ArgumentError(std::string("conv: zero stride on axis ") + axis_name(axis));
  if (in + 2 * pad < k) {
    throw DimensionError(std::string("conv: kernel larger than padded input on axis ") + axis_name(axis));
  }
  return (in + 2 * pad - k) / stride + 1;
}

inline ConvPlan plan_conv(const Shape& x, const Shape& w, const ConvGeometry& g) {
  if (x.c() != w[3]) {
    throw DimensionError("conv: channel mismatch on axis C (input " + std::to_string(x.c()) + ", kernel Cin " +
                         std::to_string(w[3]) + ")");
  }
  ConvPlan p;
  p.in = x;
  p.k = {w[0], w[1], w[2]};
  p.g = g;
  p.out = Shape{x.n(), conv_extent(x.t(), w[0], g.stride[0], g.pad[0], Axis::T),
                conv_extent(x.h(), w[1], g.stride[1], g.pad[1], Axis::H),
                conv_extent(x.w(), w[2], g.stride[2], g.pad[2], Axis::W), w[4]};
  p.rows = p.out.n() * p.out.t() * p.out.h() * p.out.w();
  p.cols = w[0] * w[1] * w[2] * w[3];
  for (std::size_t a = 0; a < w[0]; ++a) p.taps.push_back(a);
  p.pointwise = w[0] == 1 && w[1] == 1 && w[2] == 1 && g.stride == std::array<std::size_t, 3>{1, 1, 1} &&
                g.pad == std::array<std::size_t, 3>{0, 0, 0};
  return p;
}

// Row r of the column matrix gathers the receptive field of output position r.
template <class T>
void im2col(const ConvPlan& p, const T* x, T* cols, std::size_t row_begin, std::size_t row_end) {
  const std::size_t ci = p.in.c();
  const std::size_t To = p.out.t(), Ho = p.out.h(), Wo = p.out.w();
  for (std::size_t r = row_begin; r < row_end; ++r) {
    std::size_t rem = r;
    const std::size_t wo = rem % Wo; rem /= Wo;
    const std::size_t ho = rem % Ho; rem /= Ho;
    const std::size_t to = rem % To; rem /= To;
    const std::size_t n = rem;
    T* dst = cols + r * p.cols;
    for (std::size_t a : p.taps) {
      const std::ptrdiff_t ti = static_cast<std::ptrdiff_t>(to * p.g.stride[0] + a) - static_cast<std::ptrdiff_t>(p.g.pad[0]);
      for (std::size_t b = 0; b < p.k[1]; ++b) {
        const std::ptrdiff_t hi = static_cast<std::ptrdiff_t>(ho * p.g.stride[1] + b) - static_cast<std::ptrdiff_t>(p.g.pad[1]);
        for (std::size_t c = 0; c < p.k[2]; ++c, dst += ci) {
          const std::ptrdiff_t wi = static_cast<std::ptrdiff_t>(wo * p.g.stride[2] + c) - static_cast<std::ptrdiff_t>(p.g.pad[2]);
          if (ti < 0 || hi < 0 || wi < 0 || ti >= static_cast<std::ptrdiff_t>(p.in.t()) ||
              hi >= static_cast<std::ptrdiff_t>(p.in.h()) || wi >= static_cast<std::ptrdiff_t>(p.in.w())) {
            std::fill(dst, dst + ci, T(0));
          } else {
            const T* src = x + (((n * p.in.t() + static_cast<std::size_t>(ti)) * p.in.h() + static_cast<std::size_t>(hi)) *
                                    p.in.w() + static_cast<std::size_t>(wi)) * ci;
            std::copy(src, src + ci, dst);
          }
        }
      }
    }
  }
}

template <class T>
void col2im(const ConvPlan& p, const T* cols, T* dx) {
  const std::size_t ci = p.in.c();
  const std::size_t To = p.out.t(), Ho = p.out.h(), Wo = p.out.w();
  for (std::size_t r = 0; r < p.rows; ++r) {
    std::size_t rem = r;
    const std::size_t wo = rem % Wo; rem /= Wo;
    const std::size_t ho = rem % Ho; rem /= Ho;
    const std::size_t to = rem % To; rem /= To;
    const std::size_t n = rem;
    const T* src = cols + r * p.cols;
    for (std::size_t a : p.taps) {
      const std::ptrdiff_t ti = static_cast<std::ptrdiff_t>(to * p.g.stride[0] + a) - static_cast<std::ptrdiff_t>(p.g.pad[0]);
      for (std::size_t b = 0; b < p.k[1]; ++b) {
        const std::ptrdiff_t hi = static_cast<std::ptrdiff_t>(ho * p.g.stride[1] + b) - static_cast<std::ptrdiff_t>(p.g.pad[1]);
        for (std::size_t c = 0; c < p.k[2]; ++c, src += ci) {
          const std::ptrdiff_t wi = static_cast<std::ptrdiff_t>(wo * p.g.stride[2] + c) - static_cast<std::ptrdiff_t>(p.g.pad[2]);
          if (ti < 0 || hi < 0 || wi < 0 || ti >= static_cast<std::ptrdiff_t>(p.in.t()) ||
              hi >= static_cast<std::ptrdiff_t>(p.in.h()) || wi >= static_cast<std::ptrdiff_t>(p.in.w())) {
            continue;
          }
          T* dst = dx + (((n * p.in.t() + static_cast<std::size_t>(ti)) * p.in.h() + static_cast<std::size_t>(hi)) *
                             p.in.w() + static_cast<std::size_t>(wi)) * ci;
          for (std::size_t i = 0; i < ci; ++i) dst[i] += src[i];
        }
      }
    }
  }
}

template <class T>
Var<T> conv_impl(Tape<T>* tape, const Var<T>& x, const Kernel3D<T>& k) {
  ConvPlan p = plan_conv(x->value.shape(), k.weight->value.shape(), k.geom);
  const std::size_t co = p.out.c();
  if (k.bias && k.bias->value.numel() != co) {
    throw DimensionError("conv: bias length " + std::to_string(k.bias->value.numel()) + " != Cout " + std::to_string(co));
  }
  count_macs(static_cast<std::uint64_t>(p.rows) * p.cols * co);

  // Without a gradient to record, all-zero temporal slices (fresh inflation) are skipped, which
  // also makes the result bit-identical to the equivalent 2D convolution.
  const T* wptr = k.weight->value.data().data();
  std::vector<T> active_w;
  if (p.k[0] > 1 && !Tape<T>::needs_grad(tape, {&x, &k.weight, &k.bias})) {
    const std::size_t rows_per_tap = p.cols / p.k[0];
    const std::size_t slice = rows_per_tap * co;
    std::vector<std::size_t> taps;
    for (std::size_t a = 0; a < p.k[0]; ++a) {
      const T* s = wptr + a * slice;
      if (std::any_of(s, s + slice, [](T v) { return v != T(0); })) taps.push_back(a);
    }
    if (taps.empty()) taps.push_back(0);
    if (taps.size() < p.k[0]) {
      for (std::size_t a : taps) active_w.insert(active_w.end(), wptr + a * slice, wptr + (a + 1) * slice);
      p.taps = taps;
      p.cols = taps.size() * rows_per_tap;
      wptr = active_w.data();
    }
  }

  // Pointwise convolutions read the input directly as the column matrix.
  auto cols = std::make_shared<std::vector<T>>();
  const T* cols_ptr = x->value.data().data();
  if (!p.pointwise) {
    cols->resize(p.rows * p.cols);
    cols_ptr = cols->data();
  }

  Tensor<T> out(p.out);
  ConstMatMap<T> wmat(wptr, static_cast<Eigen::Index>(p.cols), static_cast<Eigen::Index>(co));
  parallel_for(p.rows, [&](std::size_t b, std::size_t e) {
    if (!p.pointwise) im2col(p, x->value.data().data(), cols->data(), b, e);
    ConstMatMap<T> cm(cols_ptr + b * p.cols, static_cast<Eigen::Index>(e - b), static_cast<Eigen::Index>(p.cols));
    MatMap<T> om(out.data().data() + b * co, static_cast<Eigen::Index>(e - b), static_cast<Eigen::Index>(co));
    om.noalias() = cm * wmat;
    if (k.bias) {
      Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>> bv(k.bias->value.data().data(), static_cast<Eigen::Index>(co));
      om.rowwise() += bv;
    }
  });

  const Var<T> w = k.weight;
  const Var<T> bias = k.bias;
  return detail::emit<T>(tape, std::move(out), {&x, &k.weight, &k.bias},
                                 [x, w, bias, p, cols](const Tensor<T>& g, GradSink<T>& sink) {
    const std::size_t co = p.out.c();
    ConstMatMap<T> gm(g.data().data(), static_cast<Eigen::Index>(p.rows), static_cast<Eigen::Index>(co));
    const T* cols_ptr = p.pointwise ? x->value.data().data() : cols->data();
    ConstMatMap<T> cm(cols_ptr, static_cast<Eigen::Index>(p.rows), static_cast<Eigen::Index>(p.cols));
    if (Tensor<T>* gw = sink.slot(w)) {
      MatMap<T> gwm(gw->data().data(), static_cast<Eigen::Index>(p.cols), static_cast<Eigen::Index>(co));
      gwm.noalias() += cm.transpose() * gm;
    }
    if (Tensor<T>* gb = sink.slot(bias)) {
      Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>> gbv(gb->data().data(), static_cast<Eigen::Index>(co));
      gbv += gm.colwise().sum();
    }
    if (Tensor<T>* gx = sink.slot(x)) {
      ConstMatMap<T> wmat(w->value.data().data(), static_cast<Eigen::Index>(p.cols), static_cast<Eigen::Index>(co));
      if (p.pointwise) {
        MatMap<T> gxm(gx->data().data(), static_cast<Eigen::Index>(p.rows), static_cast<Eigen::Index>(p.cols));
        gxm.noalias() += gm * wmat.transpose();
      } else {
        RowMatrix<T> dcols(static_cast<Eigen::Index>(p.rows), static_cast<Eigen::Index>(p.cols));
        parallel_for(p.rows, [&](std::size_t b, std::size_t e) {
          dcols.middleRows(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(e - b)).noalias() =
              gm.middleRows(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(e - b)) * wmat.transpose();
        });
        col2im(p, dcols.data(), gx->data().data());
      }
    }
  });
}

}  // namespace detail

/// Cross-correlation over (T, H, W) with zero padding. Input N x T x H x W x Cin.
template <class T>
Var<T> conv3d(Tape<T>* tape, const Var<T>& x, const Kernel3D<T>& k) {
  return detail::conv_impl(tape, x, k);
}

/// Spatial convolution applied to every temporal slice independently; the kernel must have kT = 1
/// and no temporal stride or padding.
template <class T>
Var<T> conv2d(Tape<T>* tape, const Var<T>& x, const Kernel3D<T>& k) {
  if (k.kt() != 1 || k.geom.stride[0] != 1 || k.geom.pad[0] != 0) {
    throw ArgumentError("conv2d: kernel must have temporal extent 1, stride 1, padding 0");
  }
  const Shape& s = x->value.shape();
  auto folded = detail::emit<T>(tape, x->value.reshaped(Shape{s.n() * s.t(), 1, s.h(), s.w(), s.c()}), {&x},
                                [x](const Tensor<T>& g, GradSink<T>& sink) {
                                  if (Tensor<T>* gx = sink.slot(x)) {
                                    for (std::size_t i = 0; i < g.numel(); ++i) (*gx)[i] += g[i];
                                  }
                                });
  auto y = detail::conv_impl(tape, folded, k);
  const Shape& ys = y->value.shape();
  return detail::emit<T>(tape, y->value.reshaped(Shape{s.n(), s.t(), ys.h(), ys.w(), ys.c()}), {&y},
                         [y](const Tensor<T>& g, GradSink<T>& sink) {
                           if (Tensor<T>* gy = sink.slot(y)) {
                             for (std::size_t i = 0; i < g.numel(); ++i) (*gy)[i] += g[i];
                           }
                         });
}

/// Dense layer over the last axis: x holds rows of length Cin (any leading extents),
/// weight is 1 x 1 x 1 x Cin x Cout. Output is rows x 1 x 1 x 1 x Cout.
template <class T>
Var<T> fully_connected(Tape<T>* tape, const Var<T>& x, const Var<T>& weight, const Var<T>& bias) {
  const std::size_t ci = weight->value.shape()[3];
  const std::size_t co = weight->value.shape()[4];
  if (x->value.numel() % ci != 0 || x->value.shape().c() != ci) {
    throw DimensionError("fully_connected: input channel extent " + std::to_string(x->value.shape().c()) +
                         " does not match weight Cin " + std::to_string(ci) + " on axis C");
  }
  if (bias && bias->value.numel() != co) throw DimensionError("fully_connected: bias length mismatch on axis C");
  const std::size_t rows = x->value.numel() / ci;
  count_macs(static_cast<std::uint64_t>(rows) * ci * co);
  Tensor<T> out(Shape{rows, 1, 1, 1, co});
  detail::ConstMatMap<T> xm(x->value.data().data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(ci));
  detail::ConstMatMap<T> wm(weight->value.data().data(), static_cast<Eigen::Index>(ci), static_cast<Eigen::Index>(co));
  detail::MatMap<T> om(out.data().data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(co));
  om.noalias() = xm * wm;
  if (bias) {
    Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>> bv(bias->value.data().data(), static_cast<Eigen::Index>(co));
    om.rowwise() += bv;
  }
  return detail::emit<T>(tape, std::move(out), {&x, &weight, &bias},
                                 [x, weight, bias, rows, ci, co](const Tensor<T>& g, GradSink<T>& sink) {
    detail::ConstMatMap<T> gm(g.data().data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(co));
    detail::ConstMatMap<T> xm(x->value.data().data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(ci));
    detail::ConstMatMap<T> wm(weight->value.data().data(), static_cast<Eigen::Index>(ci), static_cast<Eigen::Index>(co));
    if (Tensor<T>* gw = sink.slot(weight)) {
      detail::MatMap<T>(gw->data().data(), static_cast<Eigen::Index>(ci), static_cast<Eigen::Index>(co)).noalias() +=
          xm.transpose() * gm;
    }
    if (Tensor<T>* gb = sink.slot(bias)) {
      Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>>(gb->data().data(), static_cast<Eigen::Index>(co)) += gm.colwise().sum();
    }
    if (Tensor<T>* gx = sink.slot(x)) {
      detail::MatMap<T>(gx->data().data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(ci)).noalias() +=
          gm * wm.transpose();
    }
  });
}

/// 1 x 3 x 3 max pooling with spatial stride 2 and padding 1; T is preserved.
template <class T>
Var<T> max_pool(Tape<T>* tape, const Var<T>& x) {
  const Shape& s = x->value.shape();
  const std::size_t ho = (s.h() + 2 - 3) / 2 + 1;
  const std::size_t wo = (s.w() + 2 - 3) / 2 + 1;
  Tensor<T> out(Shape{s.n(), s.t(), ho, wo, s.c()});
  auto argmax = std::make_shared<std::vector<std::size_t>>(out.numel());
  std::size_t o = 0;
  for (std::size_t n = 0; n < s.n(); ++n)
    for (std::size_t t = 0; t < s.t(); ++t)
      for (std::size_t h = 0; h < ho; ++h)
        for (std::size_t w = 0; w < wo; ++w)
          for (std::size_t c = 0; c < s.c(); ++c, ++o) {
            T best = -std::numeric_limits<T>::infinity();
            std::size_t best_i = 0;
            for (std::size_t dh = 0; dh < 3; ++dh) {
              const std::ptrdiff_t hi = static_cast<std::ptrdiff_t>(h * 2 + dh) - 1;
              if (hi < 0 || hi >= static_cast<std::ptrdiff_t>(s.h())) continue;
              for (std::size_t dw = 0; dw < 3; ++dw) {
                const std::ptrdiff_t wi = static_cast<std::ptrdiff_t>(w * 2 + dw) - 1;
                if (wi < 0 || wi >= static_cast<std::ptrdiff_t>(s.w())) continue;
                const std::size_t idx = x->value.offset(n, t, static_cast<std::size_t>(hi), static_cast<std::size_t>(wi), c);
                if (x->value[idx] > best) {
                  best = x->value[idx];
                  best_i = idx;
                }
              }
            }
            out[o] = best;
            (*argmax)[o] = best_i;
          }
  return detail::emit<T>(tape, std::move(out), {&x}, [x, argmax](const Tensor<T>& g, GradSink<T>& sink) {
    if (Tensor<T>* gx = sink.slot(x)) {
      for (std::size_t i = 0; i < g.numel(); ++i) (*gx)[(*argmax)[i]] += g[i];
    }
  });
}

}  // namespace ops
}  // namespace rd3d
