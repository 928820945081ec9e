#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace rd3d {

class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class ArgumentError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Axis order of every activation tensor: batch, temporal (modality), height, width, channel.
enum class Axis : int { N = 0, T = 1, H = 2, W = 3, C = 4 };

inline constexpr const char* axis_name(Axis a) {
  switch (a) {
    case Axis::N: return "N";
    case Axis::T: return "T";
    case Axis::H: return "H";
    case Axis::W: return "W";
    case Axis::C: return "C";
  }
  return "?";
}

inline constexpr std::size_t kRank = 5;

/// Five extents in N,T,H,W,C order. Lower-rank values use unit extents.
struct Shape {
  std::array<std::size_t, kRank> ext{1, 1, 1, 1, 1};

  constexpr Shape() = default;
  constexpr Shape(std::size_t n, std::size_t t, std::size_t h, std::size_t w, std::size_t c)
      : ext{n, t, h, w, c} {}

  constexpr std::size_t operator[](Axis a) const { return ext[static_cast<int>(a)]; }
  constexpr std::size_t& operator[](Axis a) { return ext[static_cast<int>(a)]; }
  constexpr std::size_t operator[](std::size_t i) const { return ext[i]; }
  constexpr std::size_t& operator[](std::size_t i) { return ext[i]; }

  constexpr std::size_t n() const { return ext[0]; }
  constexpr std::size_t t() const { return ext[1]; }
  constexpr std::size_t h() const { return ext[2]; }
  constexpr std::size_t w() const { return ext[3]; }
  constexpr std::size_t c() const { return ext[4]; }

  constexpr std::size_t numel() const { return ext[0] * ext[1] * ext[2] * ext[3] * ext[4]; }

  friend constexpr bool operator==(const Shape&, const Shape&) = default;

  std::string str() const {
    std::ostringstream os;
    os << ext[0] << "x" << ext[1] << "x" << ext[2] << "x" << ext[3] << "x" << ext[4];
    return os.str();
  }
};

inline void require_same_shape(const Shape& a, const Shape& b, const char* what) {
  for (std::size_t i = 0; i < kRank; ++i) {
    if (a[i] != b[i]) {
      throw DimensionError(std::string(what) + ": extent mismatch on axis " +
                           axis_name(static_cast<Axis>(i)) + " (" + a.str() + " vs " + b.str() + ")");
    }
  }
}

/// Dense row-major tensor over the N,T,H,W,C layout.
template <class T>
class Tensor {
 public:
  using value_type = T;

  Tensor() : data_(1, T(0)) {}
  explicit Tensor(const Shape& shape, T fill = T(0)) : shape_(shape), data_(shape.numel(), fill) {
    validate();
  }
  Tensor(const Shape& shape, std::vector<T> data) : shape_(shape), data_(std::move(data)) {
    validate();
    if (data_.size() != shape_.numel()) {
      throw DimensionError("Tensor: data length " + std::to_string(data_.size()) +
                           " does not match shape " + shape_.str());
    }
  }

  static Tensor scalar(T v) { return Tensor(Shape{}, std::vector<T>{v}); }

  const Shape& shape() const { return shape_; }
  std::size_t numel() const { return data_.size(); }
  std::size_t extent(Axis a) const { return shape_[a]; }

  std::span<T> data() { return data_; }
  std::span<const T> data() const { return data_; }
  std::vector<T>& storage() { return data_; }
  const std::vector<T>& storage() const { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  std::size_t offset(std::size_t n, std::size_t t, std::size_t h, std::size_t w, std::size_t c) const {
    return (((n * shape_.t() + t) * shape_.h() + h) * shape_.w() + w) * shape_.c() + c;
  }
  T& at(std::size_t n, std::size_t t, std::size_t h, std::size_t w, std::size_t c) {
    return data_[offset(n, t, h, w, c)];
  }
  const T& at(std::size_t n, std::size_t t, std::size_t h, std::size_t w, std::size_t c) const {
    return data_[offset(n, t, h, w, c)];
  }

  T item() const {
    if (data_.size() != 1) throw ArgumentError("Tensor::item on non-scalar tensor " + shape_.str());
    return data_[0];
  }

  /// Same data, new extents. Element count must match.
  Tensor reshaped(const Shape& s) const {
    if (s.numel() != numel()) {
      throw DimensionError("reshape: " + shape_.str() + " has " + std::to_string(numel()) +
                           " elements, target " + s.str() + " has " + std::to_string(s.numel()));
    }
    return Tensor(s, data_);
  }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  template <class U>
  Tensor<U> cast() const {
    std::vector<U> out(data_.begin(), data_.end());
    return Tensor<U>(shape_, std::move(out));
  }

 private:
  void validate() const {
    for (std::size_t i = 0; i < kRank; ++i) {
      if (shape_[i] == 0) {
        throw DimensionError(std::string("Tensor: extent on axis ") + axis_name(static_cast<Axis>(i)) +
                             " must be >= 1");
      }
    }
  }

  Shape shape_;
  std::vector<T> data_;
};

template <class T>
T max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a.shape(), b.shape(), "max_abs_diff");
  T m = 0;
  for (std::size_t i = 0; i < a.numel(); ++i) {
    T d = a[i] > b[i] ? a[i] - b[i] : b[i] - a[i];
    if (d > m) m = d;
  }
  return m;
}

}  // namespace rd3d
