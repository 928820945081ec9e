#pragma once

#include <cmath>

#include "rd3d/ops/runtime.hpp"

namespace rd3d::ops {

template <class T>
Var<T> add(Tape<T>* tape, const Var<T>& a, const Var<T>& b) {
  require_same_shape(a->value.shape(), b->value.shape(), "add");
  Tensor<T> out = a->value;
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] += b->value[i];
  return detail::emit<T>(tape, std::move(out), {&a, &b}, [a, b](const Tensor<T>& g, GradSink<T>& sink) {
    sink.add(a, g);
    sink.add(b, g);
  });
}

template <class T>
Var<T> multiply(Tape<T>* tape, const Var<T>& a, const Var<T>& b) {
  require_same_shape(a->value.shape(), b->value.shape(), "multiply");
  Tensor<T> out = a->value;
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= b->value[i];
  return detail::emit<T>(tape, std::move(out), {&a, &b}, [a, b](const Tensor<T>& g, GradSink<T>& sink) {
    if (Tensor<T>* ga = sink.slot(a)) {
      for (std::size_t i = 0; i < g.numel(); ++i) (*ga)[i] += g[i] * b->value[i];
    }
    if (Tensor<T>* gb = sink.slot(b)) {
      for (std::size_t i = 0; i < g.numel(); ++i) (*gb)[i] += g[i] * a->value[i];
    }
  });
}

template <class T>
Var<T> scale(Tape<T>* tape, const Var<T>& x, T factor) {
  Tensor<T> out = x->value;
  for (auto& v : out.storage()) v *= factor;
  return detail::emit<T>(tape, std::move(out), {&x}, [x, factor](const Tensor<T>& g, GradSink<T>& sink) {
    if (Tensor<T>* gx = sink.slot(x)) {
      for (std::size_t i = 0; i < g.numel(); ++i) (*gx)[i] += g[i] * factor;
    }
  });
}

template <class T>
Var<T> relu(Tape<T>* tape, const Var<T>& x) {
  Tensor<T> out = x->value;
  for (auto& v : out.storage()) v = v > T(0) ? v : T(0);
  return detail::emit<T>(tape, std::move(out), {&x}, [x](const Tensor<T>& g, GradSink<T>& sink) {
    if (Tensor<T>* gx = sink.slot(x)) {
      for (std::size_t i = 0; i < g.numel(); ++i) {
        if (x->value[i] > T(0)) (*gx)[i] += g[i];
      }
    }
  });
}

template <class T>
T sigmoid_scalar(T v) {
  if (v >= T(0)) return T(1) / (T(1) + std::exp(-v));
  const T e = std::exp(v);
  return e / (T(1) + e);
}

template <class T>
Var<T> sigmoid(Tape<T>* tape, const Var<T>& x) {
  Tensor<T> out = x->value;
  for (auto& v : out.storage()) v = sigmoid_scalar(v);
  auto result = std::make_shared<Node<T>>(std::move(out), false);
  if (Tape<T>::needs_grad(tape, {&x})) {
    std::weak_ptr<Node<T>> self = result;
    tape->record(result, [x, self](const Tensor<T>& g, GradSink<T>& sink) {
      Tensor<T>* gx = sink.slot(x);
      auto y = self.lock();
      if (!gx || !y) return;
      for (std::size_t i = 0; i < g.numel(); ++i) (*gx)[i] += g[i] * y->value[i] * (T(1) - y->value[i]);
    });
  }
  return result;
}

template <class T>
Var<T> sum(Tape<T>* tape, const Var<T>& x) {
  T s = 0;
  for (T v : x->value.data()) s += v;
  return detail::emit<T>(tape, Tensor<T>::scalar(s), {&x}, [x](const Tensor<T>& g, GradSink<T>& sink) {
    if (Tensor<T>* gx = sink.slot(x)) {
      for (auto& v : gx->storage()) v += g[0];
    }
  });
}

template <class T>
Var<T> mean(Tape<T>* tape, const Var<T>& x) {
  return scale(tape, sum(tape, x), T(1) / static_cast<T>(x->value.numel()));
}

/// Elementwise product where `g` has extent 1 on every axis it is broadcast over.
template <class T>
Var<T> broadcast_multiply(Tape<T>* tape, const Var<T>& x, const Var<T>& g) {
  const Shape& xs = x->value.shape();
  const Shape& gs = g->value.shape();
  for (std::size_t a = 0; a < kRank; ++a) {
    if (gs[a] != xs[a] && gs[a] != 1) {
      throw DimensionError(std::string("broadcast_multiply: extent mismatch on axis ") +
                           axis_name(static_cast<Axis>(a)) + " (" + xs.str() + " vs " + gs.str() + ")");
    }
  }
  auto gate_index = [xs, gs](std::size_t flat) {
    std::size_t idx[kRank];
    for (std::size_t a = kRank; a-- > 0;) {
      idx[a] = flat % xs[a];
      flat /= xs[a];
    }
    std::size_t off = 0;
    for (std::size_t a = 0; a < kRank; ++a) off = off * gs[a] + (gs[a] == 1 ? 0 : idx[a]);
    return off;
  };
  Tensor<T> out(xs);
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = x->value[i] * g->value[gate_index(i)];
  return detail::emit<T>(tape, std::move(out), {&x, &g}, [x, g, gate_index](const Tensor<T>& go, GradSink<T>& sink) {
    Tensor<T>* gx = sink.slot(x);
    Tensor<T>* gg = sink.slot(g);
    for (std::size_t i = 0; i < go.numel(); ++i) {
      const std::size_t j = gate_index(i);
      if (gx) (*gx)[i] += go[i] * g->value[j];
      if (gg) (*gg)[j] += go[i] * x->value[i];
    }
  });
}

}  // namespace rd3d::ops
