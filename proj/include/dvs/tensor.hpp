#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "dvs/error.hpp"

namespace dvs {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_str(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

// Dense row-major tensor. Feature maps are channels x time x space.
// The scalar type doubles as the compute-mode switch: float is the
// production path, double is used by oracles and gradient checks.
template <class T>
class BasicTensor {
 public:
  using value_type = T;

  BasicTensor() = default;

  explicit BasicTensor(Shape shape, T fill = T{})
      : shape_(std::move(shape)), data_(shape_size(shape_), fill) {}

  BasicTensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (data_.size() != shape_size(shape_)) {
      throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                       " does not match shape " + shape_str(shape_));
    }
  }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  T* raw() noexcept { return data_.data(); }
  const T* raw() const noexcept { return data_.data(); }
  std::span<T> data() noexcept { return data_; }
  std::span<const T> data() const noexcept { return data_; }
  std::vector<T>& storage() noexcept { return data_; }
  const std::vector<T>& storage() const noexcept { return data_; }

  T& operator[](std::size_t i) noexcept { return data_[i]; }
  const T& operator[](std::size_t i) const noexcept { return data_[i]; }

  // Rank-3 accessor (c, t, s).
  T& operator()(std::size_t c, std::size_t t, std::size_t s) noexcept {
    return data_[(c * shape_[1] + t) * shape_[2] + s];
  }
  const T& operator()(std::size_t c, std::size_t t, std::size_t s) const noexcept {
    return data_[(c * shape_[1] + t) * shape_[2] + s];
  }

  void fill(T value) { std::fill(data_.begin(), data_.end(), value); }

  // Re-shapes in place, reusing the allocation when it is large enough.
  // Element values are unspecified afterwards unless `value` is given.
  void resize(const Shape& shape) {
    if (shape_ != shape) shape_ = shape;
    data_.resize(shape_size(shape_));
  }
  void resize(const Shape& shape, T value) {
    resize(shape);
    fill(value);
  }

  // Same data, new shape of equal element count.
  BasicTensor reshaped(Shape shape) const {
    if (shape_size(shape) != data_.size()) {
      throw ShapeError("cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
    }
    return BasicTensor(std::move(shape), data_);
  }

  template <class U>
  BasicTensor<U> cast() const {
    std::vector<U> out(data_.begin(), data_.end());
    return BasicTensor<U>(shape_, std::move(out));
  }

  bool all_finite() const {
    for (T v : data_) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }

  friend bool operator==(const BasicTensor& a, const BasicTensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  Shape shape_;
  std::vector<T> data_;
};

using Tensor = BasicTensor<float>;
using Tensor64 = BasicTensor<double>;

inline void require_shape(const Shape& got, const Shape& want, const char* what) {
  if (got != want) {
    throw ShapeError(std::string(what) + ": expected " + shape_str(want) + ", got " + shape_str(got));
  }
}

}  // namespace dvs
