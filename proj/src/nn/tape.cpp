#include "cat/nn/tape.hpp"

#include <Eigen/Dense>
#include <fmt/format.h>

namespace cat::nn {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;
template <typename T>
using VecMap = Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>>;
template <typename T>
using ConstVecMap = Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>>;

template <typename T>
ConstMatMap<T> as_matrix(const Tensor<T>& t, std::size_t rows, std::size_t cols) {
  return ConstMatMap<T>(t.ptr(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

template <typename T>
MatMap<T> as_matrix(Tensor<T>& t, std::size_t rows, std::size_t cols) {
  return MatMap<T>(t.ptr(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

template <typename T>
ConstVecMap<T> as_vector(const Tensor<T>& t) {
  return ConstVecMap<T>(t.ptr(), static_cast<Eigen::Index>(t.size()));
}

template <typename T>
VecMap<T> as_vector(Tensor<T>& t) {
  return VecMap<T>(t.ptr(), static_cast<Eigen::Index>(t.size()));
}

// Gathers 3x3 zero-padded neighbourhoods: [N*H*W, 9*C].
template <typename T>
Tensor<T> im2col(const Tensor<T>& x) {
  const std::size_t n = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
  Tensor<T> cols({n * h * w, 9 * c});
  T* out = cols.ptr();
  const T* in = x.ptr();
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t xx = 0; xx < w; ++xx) {
        T* row = out + ((b * h + y) * w + xx) * 9 * c;
        for (int ky = 0; ky < 3; ++ky) {
          const auto sy = static_cast<std::ptrdiff_t>(y) + ky - 1;
          for (int kx = 0; kx < 3; ++kx) {
            const auto sx = static_cast<std::ptrdiff_t>(xx) + kx - 1;
            T* dst = row + static_cast<std::size_t>(ky * 3 + kx) * c;
            if (sy < 0 || sx < 0 || sy >= static_cast<std::ptrdiff_t>(h) || sx >= static_cast<std::ptrdiff_t>(w))
              continue;
            const T* src = in + ((b * h + static_cast<std::size_t>(sy)) * w + static_cast<std::size_t>(sx)) * c;
            std::copy(src, src + c, dst);
          }
        }
      }
  return cols;
}

template <typename T>
void col2im_accumulate(const Tensor<T>& cols, Tensor<T>& dx) {
  const std::size_t n = dx.dim(0), h = dx.dim(1), w = dx.dim(2), c = dx.dim(3);
  const T* in = cols.ptr();
  T* out = dx.ptr();
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t xx = 0; xx < w; ++xx) {
        const T* row = in + ((b * h + y) * w + xx) * 9 * c;
        for (int ky = 0; ky < 3; ++ky) {
          const auto sy = static_cast<std::ptrdiff_t>(y) + ky - 1;
          for (int kx = 0; kx < 3; ++kx) {
            const auto sx = static_cast<std::ptrdiff_t>(xx) + kx - 1;
            if (sy < 0 || sx < 0 || sy >= static_cast<std::ptrdiff_t>(h) || sx >= static_cast<std::ptrdiff_t>(w))
              continue;
            const T* src = row + static_cast<std::size_t>(ky * 3 + kx) * c;
            T* dst = out + ((b * h + static_cast<std::size_t>(sy)) * w + static_cast<std::size_t>(sx)) * c;
            for (std::size_t i = 0; i < c; ++i) dst[i] += src[i];
          }
        }
      }
}

}  // namespace

template <typename T>
typename Tape<T>::Node& Tape<T>::node(Var v) {
  if (v.id >= nodes_.size()) throw TapeError(fmt::format("variable {} is not on this tape", v.id));
  return nodes_[v.id];
}

template <typename T>
const typename Tape<T>::Node& Tape<T>::node(Var v) const {
  if (v.id >= nodes_.size()) throw TapeError(fmt::format("variable {} is not on this tape", v.id));
  return nodes_[v.id];
}

template <typename T>
Var Tape<T>::push(Tensor<T> value, bool requires_grad) {
  Node n;
  n.owned = std::move(value);
  n.requires_grad = requires_grad && record_;
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

template <typename T>
Tensor<T>& Tape<T>::grad_buffer(Var v) {
  Node& n = node(v);
  if (n.grad.size() != n.value().size()) n.grad = Tensor<T>(n.value().shape(), T{0});
  return n.grad;
}

template <typename T>
Var Tape<T>::constant(Tensor<T> value) {
  return push(std::move(value), false);
}

template <typename T>
Var Tape<T>::variable(Tensor<T> value) {
  return push(std::move(value), true);
}

template <typename T>
Var Tape<T>::parameter(const Tensor<T>& value, std::size_t slot) {
  Node n;
  n.external = &value;
  n.requires_grad = record_;
  n.slot = slot;
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

template <typename T>
const Tensor<T>& Tape<T>::value(Var v) const {
  return node(v).value();
}

template <typename T>
const Tensor<T>& Tape<T>::grad(Var v) const {
  const Node& n = node(v);
  if (n.grad.size() != n.value().size()) {
    // Never reached by backward; report zeros.
    const_cast<Node&>(n).grad = Tensor<T>(n.value().shape(), T{0});
  }
  return n.grad;
}

template <typename T>
std::optional<std::size_t> Tape<T>::parameter_slot(Var v) const {
  return node(v).slot;
}

template <typename T>
Var Tape<T>::linear(Var x, Var w, Var b) {
  const auto& xv = value(x);
  const auto& wv = value(w);
  const auto& bv = value(b);
  if (xv.rank() != 2 || wv.rank() != 2 || bv.rank() != 1 || xv.dim(1) != wv.dim(0) || bv.dim(0) != wv.dim(1))
    throw ShapeError(fmt::format("linear: input {}, weight {}, bias {}", shape_string(xv.shape()),
                                 shape_string(wv.shape()), shape_string(bv.shape())));
  const std::size_t n = xv.dim(0), in = wv.dim(0), out = wv.dim(1);
  Tensor<T> y({n, out});
  auto ym = as_matrix(y, n, out);
  ym.noalias() = as_matrix(xv, n, in) * as_matrix(wv, in, out);
  ym.rowwise() += as_vector(bv).transpose();

  const bool rg = tracks(x) || tracks(w) || tracks(b);
  Var out_var = push(std::move(y), rg);
  if (rg) {
    nodes_[out_var.id].backward = [this, x, w, b, out_var, n, in, out] {
      const auto& dy = nodes_[out_var.id].grad;
      auto dym = as_matrix(dy, n, out);
      if (tracks(x)) as_matrix(grad_buffer(x), n, in).noalias() += dym * as_matrix(value(w), in, out).transpose();
      if (tracks(w)) as_matrix(grad_buffer(w), in, out).noalias() += as_matrix(value(x), n, in).transpose() * dym;
      if (tracks(b)) as_vector(grad_buffer(b)) += dym.colwise().sum().transpose();
    };
  }
  return out_var;
}

template <typename T>
Var Tape<T>::conv3x3(Var x, Var w, Var b) {
  const auto& xv = value(x);
  const auto& wv = value(w);
  const auto& bv = value(b);
  if (xv.rank() != 4 || wv.rank() != 2 || bv.rank() != 1 || wv.dim(0) != 9 * xv.dim(3) || bv.dim(0) != wv.dim(1))
    throw ShapeError(fmt::format("conv3x3: input {}, weight {}, bias {}", shape_string(xv.shape()),
                                 shape_string(wv.shape()), shape_string(bv.shape())));
  const std::size_t n = xv.dim(0), h = xv.dim(1), wd = xv.dim(2), cin = xv.dim(3), cout = wv.dim(1);
  const std::size_t rows = n * h * wd, k = 9 * cin;

  auto cols = std::make_shared<Tensor<T>>(im2col(xv));
  Tensor<T> y({n, h, wd, cout});
  auto ym = as_matrix(y, rows, cout);
  ym.noalias() = as_matrix(*cols, rows, k) * as_matrix(wv, k, cout);
  ym.rowwise() += as_vector(bv).transpose();

  const bool rg = tracks(x) || tracks(w) || tracks(b);
  Var out_var = push(std::move(y), rg);
  if (rg) {
    nodes_[out_var.id].backward = [this, x, w, b, out_var, cols, rows, k, cout] {
      const auto& dy = nodes_[out_var.id].grad;
      auto dym = as_matrix(dy, rows, cout);
      if (tracks(w)) as_matrix(grad_buffer(w), k, cout).noalias() += as_matrix(*cols, rows, k).transpose() * dym;
      if (tracks(b)) as_vector(grad_buffer(b)) += dym.colwise().sum().transpose();
      if (tracks(x)) {
        Tensor<T> dcols({rows, k});
        as_matrix(dcols, rows, k).noalias() = dym * as_matrix(value(w), k, cout).transpose();
        col2im_accumulate(dcols, grad_buffer(x));
      }
    };
  }
  return out_var;
}

template <typename T>
Var Tape<T>::relu(Var x) {
  Tensor<T> y = value(x);
  for (auto& v : y.data()) v = v > T{0} ? v : T{0};
  const bool rg = tracks(x);
  Var out_var = push(std::move(y), rg);
  if (rg) {
    nodes_[out_var.id].backward = [this, x, out_var] {
      const auto& dy = nodes_[out_var.id].grad;
      const auto& xv = value(x);
      auto& dx = grad_buffer(x);
      for (std::size_t i = 0; i < dx.size(); ++i)
        if (xv[i] > T{0}) dx[i] += dy[i];
    };
  }
  return out_var;
}

template <typename T>
Var Tape<T>::reshape(Var x, Shape shape) {
  Tensor<T> y = value(x).reshaped(std::move(shape));
  const bool rg = tracks(x);
  Var out_var = push(std::move(y), rg);
  if (rg) {
    nodes_[out_var.id].backward = [this, x, out_var] {
      const auto& dy = nodes_[out_var.id].grad;
      as_vector(grad_buffer(x)) += as_vector(dy);
    };
  }
  return out_var;
}

template <typename T>
Var Tape<T>::sum_squares(Var x) {
  Tensor<T> y({1}, as_vector(value(x)).squaredNorm());
  const bool rg = tracks(x);
  Var out_var = push(std::move(y), rg);
  if (rg) {
    nodes_[out_var.id].backward = [this, x, out_var] {
      const T g = nodes_[out_var.id].grad[0];
      as_vector(grad_buffer(x)) += (T{2} * g) * as_vector(value(x));
    };
  }
  return out_var;
}

template <typename T>
Var Tape<T>::dot(Var x, const Tensor<T>& weights) {
  if (weights.size() != value(x).size())
    throw ShapeError(fmt::format("dot: {} against weights {}", shape_string(value(x).shape()),
                                 shape_string(weights.shape())));
  Tensor<T> y({1}, as_vector(value(x)).dot(as_vector(weights)));
  const bool rg = tracks(x);
  Var out_var = push(std::move(y), rg);
  if (rg) {
    auto held = std::make_shared<Tensor<T>>(weights);
    nodes_[out_var.id].backward = [this, x, out_var, held] {
      const T g = nodes_[out_var.id].grad[0];
      as_vector(grad_buffer(x)) += g * as_vector(*held);
    };
  }
  return out_var;
}

template <typename T>
Var Tape<T>::add(Var a, Var b) {
  if (value(a).shape() != value(b).shape())
    throw ShapeError(fmt::format("add: {} vs {}", shape_string(value(a).shape()), shape_string(value(b).shape())));
  Tensor<T> y = value(a);
  as_vector(y) += as_vector(value(b));
  const bool rg = tracks(a) || tracks(b);
  Var out_var = push(std::move(y), rg);
  if (rg) {
    nodes_[out_var.id].backward = [this, a, b, out_var] {
      const auto& dy = nodes_[out_var.id].grad;
      if (tracks(a)) as_vector(grad_buffer(a)) += as_vector(dy);
      if (tracks(b)) as_vector(grad_buffer(b)) += as_vector(dy);
    };
  }
  return out_var;
}

template <typename T>
void Tape<T>::backward(Var loss) {
  if (!record_) throw TapeError("backward on a tape recorded without gradients");
  if (nodes_.empty()) throw TapeError("backward called before any forward computation");
  Node& root = node(loss);
  if (root.value().size() != 1)
    throw TapeError(fmt::format("backward needs a scalar loss, got shape {}", shape_string(root.value().shape())));
  if (!root.requires_grad) throw TapeError("loss does not depend on any parameter or variable");
  for (auto& n : nodes_) n.grad = Tensor<T>();
  grad_buffer(loss)[0] = T{1};
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.backward && n.grad.size() == n.value().size()) n.backward();
  }
  backward_done_ = true;
}

template class Tape<float>;
template class Tape<double>;

}  // namespace cat::nn
