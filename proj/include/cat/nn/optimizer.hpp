#pragma once

#include "cat/nn/model.hpp"

#include <stdexcept>
#include <vector>

namespace cat::nn {

class OptimizerError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RmsPropConfig {
  double learning_rate = 5e-4;
  double decay = 0.99;
  double epsilon = 1e-5;
  /// Global L2 norm clip applied before the update; 0 disables it.
  double max_grad_norm = 40.0;
};

/// RMSProp: s <- decay*s + (1-decay)*g^2; p <- p - lr*g/(sqrt(s)+eps).
template <typename T>
class RmsProp {
 public:
  explicit RmsProp(RmsPropConfig config = {}) : config_(config) {}

  const RmsPropConfig& config() const { return config_; }

  /// Applies one update in place. Returns the gradient norm before clipping.
  /// Throws OptimizerError (naming the parameter) on non-finite gradients or
  /// shape mismatches; the model is untouched in that case.
  double step(PolicyValueNet<T>& model, const Gradients<T>& grads);

  const std::vector<Tensor<T>>& state() const { return square_avg_; }

 private:
  RmsPropConfig config_;
  std::vector<Tensor<T>> square_avg_;
};

extern template class RmsProp<float>;
extern template class RmsProp<double>;

}  // namespace cat::nn
