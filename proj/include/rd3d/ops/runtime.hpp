#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <cstdlib>
#include <string>
#include <thread>
#include <vector>

#include "rd3d/autodiff.hpp"

namespace rd3d {

/// Intra-op worker count. 0 or 1 means single-threaded deterministic execution.
/// Initialized from RD3D_THREADS on first use.
inline std::atomic<int>& thread_setting() {
  static std::atomic<int> threads = [] {
    const char* env = std::getenv("RD3D_THREADS");
    if (!env) return 0;
    try {
      return std::max(0, std::stoi(env));
    } catch (...) {
      return 0;
    }
  }();
  return threads;
}

inline void set_threads(int n) { thread_setting().store(std::max(0, n)); }
inline int threads() { return thread_setting().load(); }

/// Splits [0, count) into contiguous chunks. Inline when threads() <= 1.
template <class Fn>
void parallel_for(std::size_t count, Fn&& fn) {
  const int nt = threads();
  if (nt <= 1 || count < 2) {
    fn(std::size_t{0}, count);
    return;
  }
  const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(nt), count);
  const std::size_t chunk = (count + workers - 1) / workers;
  std::vector<std::thread> pool;
  for (std::size_t w = 1; w < workers; ++w) {
    const std::size_t b = w * chunk, e = std::min(count, b + chunk);
    if (b < e) pool.emplace_back([&fn, b, e] { fn(b, e); });
  }
  fn(std::size_t{0}, std::min(count, chunk));
  for (auto& t : pool) t.join();
}

/// Multiply-accumulate counter used for cost estimates. Counting is off unless a
/// MacCounter is alive.
struct MacState {
  std::atomic<bool> enabled{false};
  std::atomic<std::uint64_t> macs{0};
};

inline MacState& mac_state() {
  static MacState s;
  return s;
}

inline void count_macs(std::uint64_t n) {
  auto& s = mac_state();
  if (s.enabled.load(std::memory_order_relaxed)) s.macs.fetch_add(n, std::memory_order_relaxed);
}

class MacCounter {
 public:
  MacCounter() {
    mac_state().macs = 0;
    mac_state().enabled = true;
  }
  ~MacCounter() { mac_state().enabled = false; }
  MacCounter(const MacCounter&) = delete;
  MacCounter& operator=(const MacCounter&) = delete;
  std::uint64_t total() const { return mac_state().macs.load(); }
};

namespace ops::detail {

/// Wraps `value` in a node and records `fn` when any input needs a gradient.
template <class T>
Var<T> emit(Tape<T>* tape, Tensor<T> value, std::initializer_list<const Var<T>*> inputs, BackwardFn<T> fn) {
  auto out = std::make_shared<Node<T>>(std::move(value), false);
  if (Tape<T>::needs_grad(tape, inputs)) tape->record(out, std::move(fn));
  return out;
}

}  // namespace ops::detail
}  // namespace rd3d
