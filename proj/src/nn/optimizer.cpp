#include "cat/nn/optimizer.hpp"

#include <fmt/format.h>

#include <cmath>

namespace cat::nn {

template <typename T>
double RmsProp<T>::step(PolicyValueNet<T>& model, const Gradients<T>& grads) {
  auto& params = model.mutable_parameters();
  const auto& names = model.parameter_names();
  if (grads.size() != params.size())
    throw OptimizerError(fmt::format("{} gradients for {} parameters", grads.size(), params.size()));

  double sq = 0.0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (grads[i].shape() != params[i].shape())
      throw OptimizerError(fmt::format("gradient for {} has shape {}, expected {}", names[i],
                                       shape_string(grads[i].shape()), shape_string(params[i].shape())));
    for (std::size_t j = 0; j < grads[i].size(); ++j) {
      const double g = grads[i][j];
      if (!std::isfinite(g))
        throw OptimizerError(fmt::format("non-finite gradient {} at {}[{}]", g, names[i], j));
      sq += g * g;
    }
  }
  const double norm = std::sqrt(sq);
  double scale = 1.0;
  if (config_.max_grad_norm > 0 && norm > config_.max_grad_norm) scale = config_.max_grad_norm / norm;

  if (square_avg_.empty())
    for (const auto& p : params) square_avg_.emplace_back(p.shape(), T{0});

  const T lr = static_cast<T>(config_.learning_rate);
  const T decay = static_cast<T>(config_.decay);
  const T eps = static_cast<T>(config_.epsilon);
  const T s = static_cast<T>(scale);
  for (std::size_t i = 0; i < params.size(); ++i) {
    T* p = params[i].ptr();
    T* avg = square_avg_[i].ptr();
    const T* g = grads[i].ptr();
    for (std::size_t j = 0; j < params[i].size(); ++j) {
      const T gj = g[j] * s;
      avg[j] = decay * avg[j] + (T{1} - decay) * gj * gj;
      p[j] -= lr * gj / (std::sqrt(avg[j]) + eps);
    }
  }
  return norm;
}

template class RmsProp<float>;
template class RmsProp<double>;

}  // namespace cat::nn
