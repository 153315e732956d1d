#pragma once

#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace cdee {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

std::string shape_string(const Shape& shape);

// Dense row-major tensor. Image batches and feature maps are NHWC.
template <typename T>
class BasicTensor {
 public:
  using value_type = T;

  BasicTensor() = default;

  explicit BasicTensor(Shape shape, T fill = T{})
      : shape_(std::move(shape)), data_(shape_size(shape_), fill) {
    check_dims();
  }

  BasicTensor(Shape shape, std::vector<T> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    check_dims();
    if (data_.size() != shape_size(shape_)) {
      throw std::invalid_argument("tensor data length " +
                                  std::to_string(data_.size()) +
                                  " does not match shape " +
                                  shape_string(shape_));
    }
  }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<T> data() noexcept { return data_; }
  std::span<const T> data() const noexcept { return data_; }
  std::vector<T>& storage() noexcept { return data_; }
  const std::vector<T>& storage() const noexcept { return data_; }

  T& operator[](std::size_t i) noexcept { return data_[i]; }
  const T& operator[](std::size_t i) const noexcept { return data_[i]; }

  // NHWC element access.
  T& at(std::size_t n, std::size_t y, std::size_t x, std::size_t c) {
    return data_[((n * shape_[1] + y) * shape_[2] + x) * shape_[3] + c];
  }
  const T& at(std::size_t n, std::size_t y, std::size_t x,
              std::size_t c) const {
    return data_[((n * shape_[1] + y) * shape_[2] + x) * shape_[3] + c];
  }
  T& at(std::size_t row, std::size_t col) {
    return data_[row * shape_[1] + col];
  }
  const T& at(std::size_t row, std::size_t col) const {
    return data_[row * shape_[1] + col];
  }

  void fill(T value) { std::fill(data_.begin(), data_.end(), value); }

  // Reinterprets the buffer under a new shape of equal element count.
  void reshape(Shape shape) {
    if (shape_size(shape) != data_.size()) {
      throw std::invalid_argument("cannot reshape " + shape_string(shape_) +
                                  " to " + shape_string(shape));
    }
    shape_ = std::move(shape);
  }

  BasicTensor reshaped(Shape shape) const {
    BasicTensor out = *this;
    out.reshape(std::move(shape));
    return out;
  }

  template <typename U>
  BasicTensor<U> cast() const {
    std::vector<U> out(data_.begin(), data_.end());
    return BasicTensor<U>(shape_, std::move(out));
  }

  bool operator==(const BasicTensor&) const = default;

 private:
  void check_dims() const {
    for (std::size_t d : shape_) {
      if (d == 0) {
        throw std::invalid_argument("tensor dimensions must be positive: " +
                                    shape_string(shape_));
      }
    }
  }

  Shape shape_;
  std::vector<T> data_;
};

using Tensor = BasicTensor<float>;
using TensorD = BasicTensor<double>;

template <typename T>
bool all_finite(const BasicTensor<T>& t);

}  // namespace cdee
