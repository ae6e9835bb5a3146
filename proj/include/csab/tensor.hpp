#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <type_traits>
#include <vector>

#include "csab/error.hpp"

namespace csab {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

inline std::string shape_str(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

// Dense N-dimensional array, row-major with the last index fastest.
// Image batches are laid out NHWC; conv kernels as [kh, kw, Cin, Cout].
template <typename T>
class Tensor {
  static_assert(std::is_floating_point_v<T>, "Tensor holds float or double");

 public:
  Tensor() = default;

  explicit Tensor(Shape shape)
      : shape_(std::move(shape)), data_(shape_numel(shape_), T(0)) {}

  Tensor(Shape shape, T fill)
      : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {}

  Tensor(Shape shape, std::vector<T> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    if (shape_numel(shape_) != data_.size()) {
      throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                       " does not match shape " + shape_str(shape_));
    }
  }

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
  static Tensor ones(Shape shape) { return Tensor(std::move(shape), T(1)); }
  static Tensor full(Shape shape, T v) { return Tensor(std::move(shape), v); }
  static Tensor scalar(T v) { return Tensor(Shape{1}, std::vector<T>{v}); }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t numel() const { return data_.size(); }
  std::size_t dim(std::size_t i) const { return shape_[i]; }
  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::vector<T>& vec() { return data_; }
  const std::vector<T>& vec() const { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  // Checked 4-d access for NHWC tensors; hot loops index flat instead.
  T& at4(std::size_t n, std::size_t h, std::size_t w, std::size_t c) {
    return data_[((n * shape_[1] + h) * shape_[2] + w) * shape_[3] + c];
  }
  const T& at4(std::size_t n, std::size_t h, std::size_t w,
               std::size_t c) const {
    return data_[((n * shape_[1] + h) * shape_[2] + w) * shape_[3] + c];
  }

  T& at2(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
  const T& at2(std::size_t i, std::size_t j) const {
    return data_[i * shape_[1] + j];
  }

  template <typename U>
  Tensor<U> cast() const {
    std::vector<U> out(data_.size());
    for (std::size_t i = 0; i < data_.size(); ++i)
      out[i] = static_cast<U>(data_[i]);
    return Tensor<U>(shape_, std::move(out));
  }

  Tensor reshaped(Shape new_shape) const {
    if (shape_numel(new_shape) != numel()) {
      throw ShapeError("cannot reshape " + shape_str(shape_) + " to " +
                       shape_str(new_shape));
    }
    return Tensor(std::move(new_shape), data_);
  }

  bool all_finite() const {
    for (T v : data_)
      if (!std::isfinite(v)) return false;
    return true;
  }

  bool operator==(const Tensor& o) const {
    return shape_ == o.shape_ && data_ == o.data_;
  }

 private:
  Shape shape_;
  std::vector<T> data_;
};

template <typename T>
void check_same_shape(const Tensor<T>& a, const Tensor<T>& b,
                      const char* where) {
  if (!a.same_shape(b)) {
    throw ShapeError(std::string(where) + ": shape mismatch " +
                     shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}

// y += x, elementwise.
template <typename T>
void add_inplace(Tensor<T>& y, const Tensor<T>& x) {
  check_same_shape(y, x, "add_inplace");
  T* yd = y.data();
  const T* xd = x.data();
  for (std::size_t i = 0; i < y.numel(); ++i) yd[i] += xd[i];
}

// y += alpha * x.
template <typename T>
void axpy_inplace(Tensor<T>& y, T alpha, const Tensor<T>& x) {
  check_same_shape(y, x, "axpy_inplace");
  T* yd = y.data();
  const T* xd = x.data();
  for (std::size_t i = 0; i < y.numel(); ++i) yd[i] += alpha * xd[i];
}

}  // namespace csab
