#pragma once

#include <cstddef>
#include <new>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace cat::nn {

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

using Shape = std::vector<std::size_t>;

/// Cache-line aligned storage. Vectorised reductions peel a prefix that
/// depends on the buffer address; a fixed alignment keeps their summation
/// order, and so training runs, reproducible.
template <typename T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlign{64};

  AlignedAllocator() = default;
  template <typename U>
  AlignedAllocator(const AlignedAllocator<U>&) {}

  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlign)); }
  void deallocate(T* p, std::size_t) { ::operator delete(p, kAlign); }

  template <typename U>
  bool operator==(const AlignedAllocator<U>&) const { return true; }
};

template <typename T>
using AlignedVector = std::vector<T, AlignedAllocator<T>>;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

/// Dense row-major tensor.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T{});
  Tensor(Shape shape, std::span<const T> data);
  Tensor(Shape shape, const std::vector<T>& data) : Tensor(std::move(shape), std::span<const T>(data)) {}

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }
  std::size_t size() const { return data_.size(); }

  T* ptr() { return data_.data(); }
  const T* ptr() const { return data_.data(); }
  std::span<T> data() { return data_; }
  std::span<const T> data() const { return data_; }
  AlignedVector<T>& storage() { return data_; }
  const AlignedVector<T>& storage() const { return data_; }
  std::vector<T> to_vector() const { return {data_.begin(), data_.end()}; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  bool all_finite() const;
  void fill(T value);

  /// Same data under a new shape with equal element count.
  Tensor reshaped(Shape shape) const;

  template <typename U>
  Tensor<U> cast() const {
    const std::vector<U> converted(data_.begin(), data_.end());
    return Tensor<U>(shape_, converted);
  }

  bool operator==(const Tensor&) const = default;

 private:
  Shape shape_;
  AlignedVector<T> data_;
};

extern template class Tensor<float>;
extern template class Tensor<double>;

}  // namespace cat::nn
