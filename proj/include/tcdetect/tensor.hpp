#pragma once

#include <cmath>
#include <cstddef>
#include <cstring>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "tcdetect/errors.hpp"

namespace tcdetect {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t e : shape) n *= e;
  return n;
}

inline std::string shape_to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

// Dense n-dimensional array, row-major, value semantics. S is float in the
// default build and double in gradient-check paths.
template <typename S>
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(Shape shape)
      : shape_(std::move(shape)), data_(checked_size(shape_), S(0)) {}

  Tensor(Shape shape, std::vector<S> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    if (data_.size() != checked_size(shape_)) {
      throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                       " does not match shape " + shape_to_string(shape_));
    }
  }

  static Tensor full(Shape shape, S value) {
    Tensor t(std::move(shape));
    for (S& v : t.data_) v = value;
    return t;
  }

  static Tensor from_vector(std::vector<S> values) {
    Shape shape{values.size()};
    return Tensor(std::move(shape), std::move(values));
  }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t extent(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  const std::vector<S>& values() const { return data_; }
  S* data() { return data_.data(); }
  const S* data() const { return data_.data(); }

  S& operator[](std::size_t flat) { return data_[flat]; }
  const S& operator[](std::size_t flat) const { return data_[flat]; }

  S& at(std::size_t i) { return data_[offset(i)]; }
  const S& at(std::size_t i) const { return data_[offset(i)]; }
  S& at(std::size_t i, std::size_t j) { return data_[offset(i, j)]; }
  const S& at(std::size_t i, std::size_t j) const { return data_[offset(i, j)]; }
  S& at(std::size_t i, std::size_t j, std::size_t k) { return data_[offset(i, j, k)]; }
  const S& at(std::size_t i, std::size_t j, std::size_t k) const {
    return data_[offset(i, j, k)];
  }

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

  bool all_finite() const {
    for (S v : data_) {
      if (!std::isfinite(static_cast<double>(v))) return false;
    }
    return true;
  }

  // Shape plus bit-pattern equality; distinguishes -0.0 from 0.0, which is
  // what the round-trip contracts call for.
  bool bitwise_equal(const Tensor& other) const {
    if (shape_ != other.shape_) return false;
    if (data_.empty()) return true;
    return std::memcmp(data_.data(), other.data_.data(), data_.size() * sizeof(S)) == 0;
  }

 private:
  static std::size_t checked_size(const Shape& shape) {
    for (std::size_t e : shape) {
      if (e == 0) throw ShapeError("tensor extents must be positive, got " + shape_to_string(shape));
    }
    return shape_size(shape);
  }

  std::size_t offset(std::size_t i) const { return i; }
  std::size_t offset(std::size_t i, std::size_t j) const { return i * shape_[1] + j; }
  std::size_t offset(std::size_t i, std::size_t j, std::size_t k) const {
    return (i * shape_[1] + j) * shape_[2] + k;
  }

  Shape shape_;
  std::vector<S> data_;
};

template <typename To, typename From>
Tensor<To> tensor_cast(const Tensor<From>& t) {
  std::vector<To> out(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) out[i] = static_cast<To>(t[i]);
  return Tensor<To>(t.shape(), std::move(out));
}

}  // namespace tcdetect
