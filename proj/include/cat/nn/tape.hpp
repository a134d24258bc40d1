#pragma once

#include "cat/nn/tensor.hpp"

#include <cstddef>
#include <functional>
#include <optional>
#include <vector>

namespace cat::nn {

class TapeError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Handle to a value recorded on a Tape.
struct Var {
  std::size_t id = static_cast<std::size_t>(-1);
};

/// Reverse-mode differentiation tape. Operations append nodes in evaluation
/// order; `backward` walks them in reverse and accumulates gradients into
/// every node that depends on a parameter or variable.
///
/// Layouts: activations are channel-last [N, H, W, C]; dense layers take
/// [N, in] inputs with [in, out] weights; convolution weights are
/// [9 * C_in, C_out] with rows ordered (ky, kx, c_in).
template <typename T>
class Tape {
 public:
  /// With `record = false` no backward closures are kept (inference).
  explicit Tape(bool record = true) : record_(record) {}

  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor<T> value);
  /// A leaf that receives a gradient (used for input-gradient checks).
  Var variable(Tensor<T> value);
  /// A leaf aliasing an external parameter tensor, which must outlive the tape.
  Var parameter(const Tensor<T>& value, std::size_t slot);

  Var linear(Var x, Var w, Var b);
  Var conv3x3(Var x, Var w, Var b);
  Var relu(Var x);
  Var reshape(Var x, Shape shape);
  Var sum_squares(Var x);
  /// Scalar sum(x * weights) with `weights` held constant.
  Var dot(Var x, const Tensor<T>& weights);
  Var add(Var a, Var b);

  const Tensor<T>& value(Var v) const;
  /// Gradient after backward; zeros if the node did not receive one.
  const Tensor<T>& grad(Var v) const;
  std::optional<std::size_t> parameter_slot(Var v) const;
  std::size_t size() const { return nodes_.size(); }

  /// Seeds d(loss)/d(loss) = 1 and propagates. The loss must be a scalar
  /// node of this tape, and the tape must be recording.
  void backward(Var loss);
  bool has_gradients() const { return backward_done_; }

 private:
  struct Node {
    Tensor<T> owned;
    const Tensor<T>* external = nullptr;
    Tensor<T> grad;
    bool requires_grad = false;
    std::optional<std::size_t> slot;
    std::function<void()> backward;
    const Tensor<T>& value() const { return external ? *external : owned; }
  };

  Node& node(Var v);
  const Node& node(Var v) const;
  Var push(Tensor<T> value, bool requires_grad);
  Tensor<T>& grad_buffer(Var v);
  bool tracks(Var v) const { return record_ && node(v).requires_grad; }

  bool record_;
  bool backward_done_ = false;
  std::vector<Node> nodes_;
};

extern template class Tape<float>;
extern template class Tape<double>;

}  // namespace cat::nn
