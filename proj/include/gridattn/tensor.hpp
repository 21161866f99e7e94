// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "gridattn/error.hpp"

namespace gridattn {

struct Shape {
  std::size_t rows = 1;
  std::size_t cols = 1;
  std::size_t depth = 1;

  std::size_t size() const { return rows * cols * depth; }
  std::size_t cells() const { return rows * cols; }
  bool operator==(const Shape&) const = default;
};

std::string to_string(const Shape& s);

/// Dense rows x cols x depth volume, row-major over space with the channel
/// index fastest: offset = (i * cols + j) * depth + k.
///
/// Also used for matrices (rows x cols x 1) and vectors (1 x 1 x n).
template <class T>
class BasicTensor3 {
 public:
  using value_type = T;

  BasicTensor3() = default;

  explicit BasicTensor3(Shape shape, T fill = T{}) : shape_(shape), values_(shape.size(), fill) {
    check_shape(shape_);
  }

  BasicTensor3(std::size_t rows, std::size_t cols, std::size_t depth, T fill = T{})
      : BasicTensor3(Shape{rows, cols, depth}, fill) {}

  BasicTensor3(Shape shape, std::vector<T> values) : shape_(shape), values_(std::move(values)) {
    check_shape(shape_);
    if (values_.size() != shape_.size()) {
      throw Error(ErrorCode::kDimensionMismatch, "tensor " + to_string(shape_) + " given " +
                                                     std::to_string(values_.size()) + " values");
    }
  }

  const Shape& shape() const { return shape_; }
  std::size_t rows() const { return shape_.rows; }
  std::size_t cols() const { return shape_.cols; }
  std::size_t depth() const { return shape_.depth; }
  std::size_t size() const { return values_.size(); }
  bool empty() const { return values_.empty(); }

  std::size_t offset(std::size_t i, std::size_t j, std::size_t k = 0) const {
    return (i * shape_.cols + j) * shape_.depth + k;
  }

  T& operator()(std::size_t i, std::size_t j, std::size_t k = 0) { return values_[offset(i, j, k)]; }
  const T& operator()(std::size_t i, std::size_t j, std::size_t k = 0) const {
    return values_[offset(i, j, k)];
  }

  /// The depth-long feature vector stored at cell (i, j).
  std::span<T> cell(std::size_t i, std::size_t j) { return {values_.data() + offset(i, j), shape_.depth}; }
  std::span<const T> cell(std::size_t i, std::size_t j) const {
    return {values_.data() + offset(i, j), shape_.depth};
  }

  std::span<T> values() { return values_; }
  std::span<const T> values() const { return values_; }
  std::vector<T>& storage() { return values_; }
  const std::vector<T>& storage() const { return values_; }

  bool operator==(const BasicTensor3&) const = default;

 private:
  static void check_shape(const Shape& s) {
    if (s.rows == 0 || s.cols == 0 || s.depth == 0) {
      throw Error(ErrorCode::kDimensionMismatch, "tensor dimensions must be positive, got " + to_string(s));
    }
  }

  Shape shape_{0, 0, 0};
  std::vector<T> values_;
};

using Tensor3 = BasicTensor3<double>;
using Tensor3f = BasicTensor3<float>;

inline std::string to_string(const Shape& s) {
  return std::to_string(s.rows) + "x" + std::to_string(s.cols) + "x" + std::to_string(s.depth);
}

template <class To, class From>
BasicTensor3<To> tensor_cast(const BasicTensor3<From>& t) {
  std::vector<To> out(t.values().begin(), t.values().end());
  return BasicTensor3<To>(t.shape(), std::move(out));
}

}  // namespace gridattn
