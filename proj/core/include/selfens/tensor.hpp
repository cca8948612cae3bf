#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "selfens/errors.hpp"

namespace selfens {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i != 0) os << ',';
    os << shape[i];
  }
  os << ')';
  return os.str();
}

/// Dense row-major tensor. The leading extent is the batch dimension wherever
/// a tensor holds a stack of items.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;

  explicit Tensor(Shape shape, T fill = T{0})
      : shape_(std::move(shape)), data_(shape_size(shape_), fill) {}

  Tensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (shape_size(shape_) != data_.size()) {
      throw ConfigError("tensor shape " + shape_string(shape_) + " does not match " +
                        std::to_string(data_.size()) + " values");
    }
  }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::span<T> data() { return data_; }
  std::span<const T> data() const { return data_; }
  T* raw() { return data_.data(); }
  const T* raw() const { return data_.data(); }
  std::vector<T>& values() { return data_; }
  const std::vector<T>& values() const { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  /// Number of values per leading-dimension item.
  std::size_t item_size() const { return shape_.empty() ? 0 : data_.size() / shape_[0]; }

  std::span<T> item(std::size_t i) {
    const std::size_t n = item_size();
    return std::span<T>(data_).subspan(i * n, n);
  }
  std::span<const T> item(std::size_t i) const {
    const std::size_t n = item_size();
    return std::span<const T>(data_).subspan(i * n, n);
  }

  Tensor reshaped(Shape shape) const {
    if (shape_size(shape) != data_.size()) {
      throw ConfigError("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
    }
    return Tensor(std::move(shape), data_);
  }

  void fill(T value) { std::fill(data_.begin(), data_.end(), value); }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
  }

  template <typename U>
  Tensor<U> cast() const {
    return Tensor<U>(shape_, std::vector<U>(data_.begin(), data_.end()));
  }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  Shape shape_;
  std::vector<T> data_;
};

/// Gathers the listed leading-dimension items into a new stack.
template <typename T>
Tensor<T> gather_items(const Tensor<T>& source, std::span<const std::size_t> indices) {
  Shape shape = source.shape();
  shape[0] = indices.size();
  Tensor<T> out(shape);
  const std::size_t n = source.item_size();
  for (std::size_t r = 0; r < indices.size(); ++r) {
    const auto src = source.item(indices[r]);
    std::copy(src.begin(), src.end(), out.raw() + r * n);
  }
  return out;
}

}  // namespace selfens
