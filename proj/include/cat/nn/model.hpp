#pragma once

#include "cat/nn/tape.hpp"
#include "cat/nn/tensor.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace cat::nn {

/// Layer sizes of the policy/value network. Defaults follow the reference
/// architecture: conv 3x3 (32) -> conv 3x3 (64) -> dense 1024 -> dense 512,
/// then an actor head (256 -> logits) and a critic head (1).
struct Architecture {
  int input_rows = 5;
  int input_cols = 5;
  int input_channels = 10;
  int conv1_channels = 32;
  int conv2_channels = 64;
  int fc1_units = 1024;
  int fc2_units = 512;
  int actor_hidden_units = 256;
  std::vector<int> logit_arities;

  int total_logits() const;
  bool operator==(const Architecture&) const = default;
};

/// Named parameter gradients, in the model's parameter order.
template <typename T>
using Gradients = std::vector<Tensor<T>>;

/// Convolutional actor-critic network. ReLU follows every layer except the
/// two output layers. Parameters are plain value tensors; copying a model
/// yields an independent snapshot.
template <typename T>
class PolicyValueNet {
 public:
  PolicyValueNet() = default;
  /// Orthogonal initial weights (seeded), zero biases.
  PolicyValueNet(Architecture arch, std::uint64_t seed);

  const Architecture& architecture() const { return arch_; }
  std::size_t parameter_count() const { return params_.size(); }
  const std::vector<std::string>& parameter_names() const { return names_; }
  const std::vector<Tensor<T>>& parameters() const { return params_; }
  std::vector<Tensor<T>>& mutable_parameters() { return params_; }
  std::size_t scalar_count() const;

  struct Output {
    Var logits;  // [N, total_logits]
    Var value;   // [N, 1]
    std::vector<Var> params;
  };

  /// Binds every parameter onto `tape` and returns their handles.
  std::vector<Var> bind(Tape<T>& tape) const;

  /// Records a forward pass. `observations` is [N, rows, cols, channels].
  Output forward(Tape<T>& tape, const Tensor<T>& observations) const;

  /// Parameter gradients recorded by the last backward on `tape`, for the
  /// handles returned by `bind` (or `Output::params`).
  Gradients<T> gradients(const Tape<T>& tape, std::span<const Var> params) const;

  template <typename U>
  PolicyValueNet<U> cast() const {
    PolicyValueNet<U> out;
    out.arch_ = arch_;
    out.names_ = names_;
    for (const auto& p : params_) out.params_.push_back(p.template cast<U>());
    return out;
  }

  /// Replaces parameters, checking names and shapes.
  void load(const std::vector<std::string>& names, std::vector<Tensor<T>> values);

 private:
  template <typename>
  friend class PolicyValueNet;

  void add(std::string name, Shape shape);

  Architecture arch_;
  std::vector<std::string> names_;
  std::vector<Tensor<T>> params_;
};

extern template class PolicyValueNet<float>;
extern template class PolicyValueNet<double>;

}  // namespace cat::nn
