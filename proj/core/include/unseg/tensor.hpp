#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "unseg/error.hpp"

namespace unseg {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_to_string(const Shape& shape);

// Dense row-major array. Image tensors are NCHW.
//
// A default-constructed tensor is "null": empty shape, no storage. Every
// non-null tensor has all dimensions >= 1 and exactly numel() elements.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T{});
  Tensor(Shape shape, std::vector<T> data);

  static Tensor zeros(const Shape& shape) { return Tensor(shape, T{0}); }
  static Tensor ones(const Shape& shape) { return Tensor(shape, T{1}); }
  static Tensor scalar(T value) { return Tensor(Shape{1}, value); }
  static Tensor zeros_like(const Tensor& other) { return Tensor(other.shape(), T{0}); }

  bool is_null() const noexcept { return shape_.empty(); }
  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const noexcept { return data_.size(); }

  std::span<T> data() noexcept { return data_; }
  std::span<const T> data() const noexcept { return data_; }
  T* ptr() noexcept { return data_.data(); }
  const T* ptr() const noexcept { return data_.data(); }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  // NCHW element access; rank must be 4.
  T& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) {
    return data_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
  }
  const T& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
    return data_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
  }

  T item() const;
  Tensor reshaped(Shape shape) const;
  void fill(T value);
  bool all_finite() const;

  template <typename U>
  Tensor<U> cast() const {
    std::vector<U> out(data_.begin(), data_.end());
    return Tensor<U>(shape_, std::move(out));
  }

  // Accumulate other into this (same shape).
  Tensor& operator+=(const Tensor& other);

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  Shape shape_;
  std::vector<T> data_;
};

// Throws kShapeMismatch with context when shapes differ.
void require_same_shape(const Shape& a, const Shape& b, const char* what);
void require_rank(const Shape& shape, std::size_t rank, const char* what);

extern template class Tensor<float>;
extern template class Tensor<double>;

}  // namespace unseg
