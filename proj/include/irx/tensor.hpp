#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <new>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "irx/errors.hpp"

namespace irx {

using Shape = std::vector<std::size_t>;

// 64-byte aligned storage, so vectorised reductions take the same path (and
// round the same way) whatever address the allocator hands back.
template <typename T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlignment{64};

  AlignedAllocator() = default;
  template <typename U>
  AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlignment)); }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, kAlignment); }

  friend bool operator==(const AlignedAllocator&, const AlignedAllocator&) { return true; }
};

template <typename T>
using Buffer = std::vector<T, AlignedAllocator<T>>;

inline std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

/// Dense row-major array of rank 1 to 4.
///
/// Rank 4 only appears for batched images and 2-D convolution kernels
/// ([k,k,Cin,Cout]); sequence features use [L,C] or [N,L,C].
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;

  explicit Tensor(Shape shape, T fill = T{}) : shape_(std::move(shape)) {
    check_shape(shape_);
    data_.assign(shape_size(shape_), fill);
  }

  Tensor(Shape shape, Buffer<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
    check_shape(shape_);
    check_length();
  }

  Tensor(Shape shape, const std::vector<T>& data)
      : shape_(std::move(shape)), data_(data.begin(), data.end()) {
    check_shape(shape_);
    check_length();
  }

  Tensor(Shape shape, std::initializer_list<T> data) : shape_(std::move(shape)), data_(data) {
    check_shape(shape_);
    check_length();
  }

 private:
  void check_length() const {
    if (shape_size(shape_) != data_.size()) {
      throw DimensionError("tensor data length " + std::to_string(data_.size()) +
                           " does not match shape " + shape_str(shape_));
    }
  }

 public:

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape), T{0}); }
  static Tensor ones(Shape shape) { return Tensor(std::move(shape), T{1}); }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  // Extent of the last axis (channels).
  std::size_t channels() const { return shape_.empty() ? 0 : shape_.back(); }
  // Number of channel vectors, i.e. product of every axis but the last.
  std::size_t rows() const { return shape_.empty() ? 0 : data_.size() / shape_.back(); }

  std::span<T> data() & { return data_; }
  std::span<const T> data() const& { return data_; }
  std::span<const T> data() && = delete;  // would dangle
  T* raw() { return data_.data(); }
  const T* raw() const { return data_.data(); }
  Buffer<T>& storage() { return data_; }
  const Buffer<T>& storage() const { return data_; }
  std::vector<T> to_vector() const { return {data_.begin(), data_.end()}; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  T& at(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
  const T& at(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }
  T& at(std::size_t i, std::size_t j, std::size_t k) {
    return data_[(i * shape_[1] + j) * shape_[2] + k];
  }
  const T& at(std::size_t i, std::size_t j, std::size_t k) const {
    return data_[(i * shape_[1] + j) * shape_[2] + k];
  }

  Tensor reshaped(Shape shape) const& {
    if (shape_size(shape) != data_.size()) {
      throw DimensionError("cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
    }
    return Tensor(std::move(shape), data_);
  }
  Tensor reshaped(Shape shape) && {
    if (shape_size(shape) != data_.size()) {
      throw DimensionError("cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
    }
    return Tensor(std::move(shape), std::move(data_));
  }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
  }

  template <typename U>
  Tensor<U> cast() const {
    return Tensor<U>(shape_, Buffer<U>(data_.begin(), data_.end()));
  }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  static void check_shape(const Shape& shape) {
    if (shape.empty() || shape.size() > 4) {
      throw DimensionError("tensor rank must be 1..4, got shape " + shape_str(shape));
    }
    for (auto e : shape) {
      if (e == 0) throw DimensionError("tensor extents must be positive: " + shape_str(shape));
    }
  }

  Shape shape_;
  Buffer<T> data_;
};

}  // namespace irx
