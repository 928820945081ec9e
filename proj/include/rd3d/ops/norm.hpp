#pragma once

#include <cmath>

#include "rd3d/ops/runtime.hpp"

namespace rd3d {

enum class Mode { Train, Infer };

inline constexpr double kBatchNormEps = 1e-5;
inline constexpr double kBatchNormMomentum = 0.1;

/// Running statistics of a batch-norm layer, one entry per channel.
template <class T>
struct RunningStats {
  Var<T> mean;
  Var<T> var;
};

namespace ops {

/// Per-channel normalization over (N, T, H, W). Training mode uses batch statistics and
/// updates `stats` with momentum; inference mode reads `stats` only.
template <class T>
Var<T> batch_norm(Tape<T>* tape, const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, RunningStats<T>& stats,
                  Mode mode, T eps = T(kBatchNormEps), T momentum = T(kBatchNormMomentum)) {
  const Shape& s = x->value.shape();
  const std::size_t C = s.c();
  for (const Var<T>* p : std::initializer_list<const Var<T>*>{&gamma, &beta, &stats.mean, &stats.var}) {
    if ((*p)->value.numel() != C) {
      throw DimensionError("batch_norm: parameter length " + std::to_string((*p)->value.numel()) +
                           " does not match channel extent " + std::to_string(C) + " on axis C");
    }
  }
  const std::size_t M = s.numel() / C;
  const T* xd = x->value.data().data();

  std::vector<T> mu(C, T(0)), inv_std(C, T(0));
  if (mode == Mode::Train) {
    std::vector<double> acc(C, 0.0), acc2(C, 0.0);
    for (std::size_t i = 0; i < M; ++i)
      for (std::size_t c = 0; c < C; ++c) acc[c] += static_cast<double>(xd[i * C + c]);
    for (std::size_t c = 0; c < C; ++c) mu[c] = static_cast<T>(acc[c] / static_cast<double>(M));
    for (std::size_t i = 0; i < M; ++i)
      for (std::size_t c = 0; c < C; ++c) {
        const double d = static_cast<double>(xd[i * C + c]) - static_cast<double>(mu[c]);
        acc2[c] += d * d;
      }
    for (std::size_t c = 0; c < C; ++c) {
      const double var = acc2[c] / static_cast<double>(M);
      inv_std[c] = static_cast<T>(1.0 / std::sqrt(var + static_cast<double>(eps)));
      const double unbiased = M > 1 ? acc2[c] / static_cast<double>(M - 1) : var;
      T& rm = stats.mean->value[c];
      T& rv = stats.var->value[c];
      rm = (T(1) - momentum) * rm + momentum * mu[c];
      rv = (T(1) - momentum) * rv + momentum * static_cast<T>(unbiased);
    }
  } else {
    for (std::size_t c = 0; c < C; ++c) {
      mu[c] = stats.mean->value[c];
      inv_std[c] = T(1) / std::sqrt(stats.var->value[c] + eps);
    }
  }

  Tensor<T> out(s);
  auto xhat = std::make_shared<std::vector<T>>(s.numel());
  for (std::size_t i = 0; i < M; ++i)
    for (std::size_t c = 0; c < C; ++c) {
      const std::size_t k = i * C + c;
      (*xhat)[k] = (xd[k] - mu[c]) * inv_std[c];
      out[k] = gamma->value[c] * (*xhat)[k] + beta->value[c];
    }

  return detail::emit<T>(tape, std::move(out), {&x, &gamma, &beta},
                         [x, gamma, beta, xhat, inv_std, mode, M, C](const Tensor<T>& g, GradSink<T>& sink) {
    std::vector<T> sum_g(C, T(0)), sum_gx(C, T(0));
    for (std::size_t i = 0; i < M; ++i)
      for (std::size_t c = 0; c < C; ++c) {
        const std::size_t k = i * C + c;
        sum_g[c] += g[k];
        sum_gx[c] += g[k] * (*xhat)[k];
      }
    if (Tensor<T>* gg = sink.slot(gamma))
      for (std::size_t c = 0; c < C; ++c) (*gg)[c] += sum_gx[c];
    if (Tensor<T>* gb = sink.slot(beta))
      for (std::size_t c = 0; c < C; ++c) (*gb)[c] += sum_g[c];
    if (Tensor<T>* gx = sink.slot(x)) {
      const T inv_m = T(1) / static_cast<T>(M);
      for (std::size_t i = 0; i < M; ++i)
        for (std::size_t c = 0; c < C; ++c) {
          const std::size_t k = i * C + c;
          const T scale = gamma->value[c] * inv_std[c];
          if (mode == Mode::Train) {
            (*gx)[k] += scale * (g[k] - inv_m * sum_g[c] - (*xhat)[k] * inv_m * sum_gx[c]);
          } else {
            (*gx)[k] += scale * g[k];
          }
        }
    }
  });
}

}  // namespace ops
}  // namespace rd3d
