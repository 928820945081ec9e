#pragma once

#include <functional>
#include <map>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "rd3d/tensor.hpp"

namespace rd3d {

template <class T>
struct Node {
  Tensor<T> value;
  bool requires_grad = false;
  std::string name;  // set for named parameters only

  explicit Node(Tensor<T> v, bool grad = false, std::string n = {})
      : value(std::move(v)), requires_grad(grad), name(std::move(n)) {}
};

template <class T>
using Var = std::shared_ptr<Node<T>>;

template <class T>
Var<T> constant(Tensor<T> v) {
  return std::make_shared<Node<T>>(std::move(v), false);
}

template <class T>
Var<T> leaf(Tensor<T> v, std::string name = {}) {
  return std::make_shared<Node<T>>(std::move(v), true, std::move(name));
}

template <class T>
class Tape;

/// Gradient buffers keyed by node, filled during the reverse sweep.
template <class T>
class GradSink {
 public:
  /// Zero-initialized gradient slot for `v`, or nullptr if `v` needs no gradient.
  Tensor<T>* slot(const Var<T>& v) {
    if (!v || !v->requires_grad) return nullptr;
    auto it = grads_.find(v.get());
    if (it == grads_.end()) {
      it = grads_.emplace(v.get(), Tensor<T>(v->value.shape())).first;
    }
    return &it->second;
  }

  void add(const Var<T>& v, const Tensor<T>& g) {
    Tensor<T>* s = slot(v);
    if (!s) return;
    require_same_shape(s->shape(), g.shape(), "gradient accumulate");
    for (std::size_t i = 0; i < g.numel(); ++i) (*s)[i] += g[i];
  }

  const Tensor<T>* find(const Node<T>* n) const {
    auto it = grads_.find(n);
    return it == grads_.end() ? nullptr : &it->second;
  }

  void release(const Node<T>* n) { grads_.erase(n); }

 private:
  std::unordered_map<const Node<T>*, Tensor<T>> grads_;
};

template <class T>
using BackwardFn = std::function<void(const Tensor<T>& grad_out, GradSink<T>& sink)>;

template <class T>
using Gradients = std::map<std::string, Tensor<T>>;

/// Ordered record of differentiable operations. Single owner; not shared across threads.
template <class T>
class Tape {
 public:
  struct Entry {
    Var<T> output;
    BackwardFn<T> backward;
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// True when an op on `inputs` must be recorded.
  static bool needs_grad(const Tape* tape, std::initializer_list<const Var<T>*> inputs) {
    if (!tape) return false;
    for (const Var<T>* v : inputs) {
      if (*v && (*v)->requires_grad) return true;
    }
    return false;
  }

  void record(const Var<T>& output, BackwardFn<T> fn) {
    output->requires_grad = true;
    entries_.push_back(Entry{output, std::move(fn)});
  }

  std::size_t size() const { return entries_.size(); }

  /// Reverse sweep from a scalar loss. Returns a gradient for every entry of `params`
  /// (keyed by name); parameters the loss does not reach get zeros.
  Gradients<T> backward(const Var<T>& loss, const std::vector<Var<T>>& params) {
    if (loss->value.numel() != 1) {
      throw ArgumentError("backward: loss must be scalar, got shape " + loss->value.shape().str());
    }
    GradSink<T> sink;
    if (loss->requires_grad) {
      sink.add(loss, Tensor<T>(loss->value.shape(), T(1)));
    }
    std::unordered_map<const Node<T>*, bool> keep;
    for (const auto& p : params) keep[p.get()] = true;

    for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
      const Node<T>* out = it->output.get();
      const Tensor<T>* g = sink.find(out);
      if (!g) continue;
      Tensor<T> gout = *g;
      if (!keep.count(out)) sink.release(out);
      it->backward(gout, sink);
    }

    Gradients<T> result;
    for (const auto& p : params) {
      const Tensor<T>* g = sink.find(p.get());
      result.emplace(p->name, g ? *g : Tensor<T>(p->value.shape()));
    }
    return result;
  }

  void clear() { entries_.clear(); }

 private:
  std::vector<Entry> entries_;
};

}  // namespace rd3d
