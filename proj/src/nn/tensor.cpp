#include "cat/nn/tensor.hpp"

#include <fmt/format.h>
#include <fmt/ranges.h>

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

namespace cat::nn {

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape) { return fmt::format("[{}]", fmt::join(shape, ", ")); }

template <typename T>
Tensor<T>::Tensor(Shape shape, T fill) : shape_(std::move(shape)), data_(shape_size(shape_), fill) {}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::span<const T> data) : shape_(std::move(shape)), data_(data.begin(), data.end()) {
  if (data_.size() != shape_size(shape_))
    throw ShapeError(fmt::format("{} values do not fill shape {}", data_.size(), shape_string(shape_)));
}

template <typename T>
bool Tensor<T>::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
}

template <typename T>
void Tensor<T>::fill(T value) {
  std::fill(data_.begin(), data_.end(), value);
}

template <typename T>
Tensor<T> Tensor<T>::reshaped(Shape shape) const {
  if (shape_size(shape) != data_.size())
    throw ShapeError(fmt::format("cannot reshape {} to {}", shape_string(shape_), shape_string(shape)));
  Tensor out = *this;
  out.shape_ = std::move(shape);
  return out;
}

template class Tensor<float>;
template class Tensor<double>;

}  // namespace cat::nn
