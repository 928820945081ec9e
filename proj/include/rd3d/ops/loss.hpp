#pragma once

#include <algorithm>
#include <cmath>

#include "rd3d/ops/runtime.hpp"

namespace rd3d::ops {

inline constexpr double kBceClamp = 1e-7;

/// Mean binary cross-entropy of probabilities `p` against targets `g` in {0, 1}.
/// Probabilities are clamped to [eps, 1 - eps]; clamped entries pass no gradient.
template <class T>
Var<T> bce_loss(Tape<T>* tape, const Var<T>& p, const Var<T>& g, double eps = kBceClamp) {
  require_same_shape(p->value.shape(), g->value.shape(), "bce_loss");
  const std::size_t n = p->value.numel();
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double pi = std::clamp(static_cast<double>(p->value[i]), eps, 1.0 - eps);
    const double gi = static_cast<double>(g->value[i]);
    acc -= gi * std::log(pi) + (1.0 - gi) * std::log(1.0 - pi);
  }
  const T loss = static_cast<T>(acc / static_cast<double>(n));
  return detail::emit<T>(tape, Tensor<T>::scalar(loss), {&p}, [p, g, n, eps](const Tensor<T>& go, GradSink<T>& sink) {
    Tensor<T>* gp = sink.slot(p);
    if (!gp) return;
    const double scale = static_cast<double>(go[0]) / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double pi = static_cast<double>(p->value[i]);
      if (pi < eps || pi > 1.0 - eps) continue;
      const double gi = static_cast<double>(g->value[i]);
      (*gp)[i] += static_cast<T>(scale * (pi - gi) / (pi * (1.0 - pi)));
    }
  });
}

}  // namespace rd3d::ops
