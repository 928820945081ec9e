#pragma once

#include <vector>

#include "rd3d/ops/runtime.hpp"

namespace rd3d::ops {

template <class T>
Var<T> reshape(Tape<T>* tape, const Var<T>& x, const Shape& shape) {
  return detail::emit<T>(tape, x->value.reshaped(shape), {&x}, [x](const Tensor<T>& g, GradSink<T>& sink) {
    if (Tensor<T>* gx = sink.slot(x)) {
      for (std::size_t i = 0; i < g.numel(); ++i) (*gx)[i] += g[i];
    }
  });
}

namespace detail {

// Views a tensor as [outer, axis, inner] around `axis`.
inline void split_axis(const Shape& s, Axis axis, std::size_t& outer, std::size_t& inner) {
  const int a = static_cast<int>(axis);
  outer = 1;
  inner = 1;
  for (int i = 0; i < a; ++i) outer *= s[static_cast<std::size_t>(i)];
  for (std::size_t i = static_cast<std::size_t>(a) + 1; i < kRank; ++i) inner *= s[i];
}

}  // namespace detail

/// Concatenation along `axis`; every other extent must agree with the first part.
template <class T>
Var<T> concat(Tape<T>* tape, const std::vector<Var<T>>& parts, Axis axis) {
  if (parts.empty()) throw ArgumentError("concat: no parts");
  Shape out_shape = parts[0]->value.shape();
  std::size_t total = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    const Shape& s = parts[p]->value.shape();
    for (std::size_t a = 0; a < kRank; ++a) {
      if (static_cast<Axis>(a) == axis) continue;
      if (s[a] != out_shape[a]) {
        throw DimensionError("concat: part " + std::to_string(p) + " extent mismatch on axis " +
                             axis_name(static_cast<Axis>(a)) + " (" + s.str() + " vs " + out_shape.str() + ")");
      }
    }
    total += s[axis];
  }
  out_shape[axis] = total;
  std::size_t outer = 0, inner = 0;
  detail::split_axis(out_shape, axis, outer, inner);

  Tensor<T> out(out_shape);
  std::size_t offset = 0;
  for (const auto& part : parts) {
    const std::size_t len = part->value.shape()[axis];
    for (std::size_t o = 0; o < outer; ++o) {
      const T* src = part->value.data().data() + o * len * inner;
      T* dst = out.data().data() + (o * total + offset) * inner;
      std::copy(src, src + len * inner, dst);
    }
    offset += len;
  }

  bool any = false;
  if (tape) {
    for (const auto& p : parts) any = any || p->requires_grad;
  }
  auto result = std::make_shared<Node<T>>(std::move(out), false);
  if (any) {
    tape->record(result, [parts, axis, outer, inner, total](const Tensor<T>& g, GradSink<T>& sink) {
      std::size_t offset = 0;
      for (const auto& part : parts) {
        const std::size_t len = part->value.shape()[axis];
        if (Tensor<T>* gp = sink.slot(part)) {
          for (std::size_t o = 0; o < outer; ++o) {
            const T* src = g.data().data() + (o * total + offset) * inner;
            T* dst = gp->data().data() + o * len * inner;
            for (std::size_t i = 0; i < len * inner; ++i) dst[i] += src[i];
          }
        }
        offset += len;
      }
    });
  }
  return result;
}

/// Sub-range [begin, begin+length) along `axis`.
template <class T>
Var<T> slice(Tape<T>* tape, const Var<T>& x, Axis axis, std::size_t begin, std::size_t length) {
  const Shape& s = x->value.shape();
  if (length == 0 || begin + length > s[axis]) {
    throw DimensionError(std::string("slice: range out of bounds on axis ") + axis_name(axis));
  }
  Shape out_shape = s;
  out_shape[axis] = length;
  std::size_t outer = 0, inner = 0;
  detail::split_axis(s, axis, outer, inner);
  const std::size_t full = s[axis];
  Tensor<T> out(out_shape);
  for (std::size_t o = 0; o < outer; ++o) {
    const T* src = x->value.data().data() + (o * full + begin) * inner;
    std::copy(src, src + length * inner, out.data().data() + o * length * inner);
  }
  return detail::emit<T>(tape, std::move(out), {&x},
                         [x, outer, inner, full, begin, length](const Tensor<T>& g, GradSink<T>& sink) {
                           if (Tensor<T>* gx = sink.slot(x)) {
                             for (std::size_t o = 0; o < outer; ++o) {
                               const T* src = g.data().data() + o * length * inner;
                               T* dst = gx->data().data() + (o * full + begin) * inner;
                               for (std::size_t i = 0; i < length * inner; ++i) dst[i] += src[i];
                             }
                           }
                         });
}

}  // namespace rd3d::ops
