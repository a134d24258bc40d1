#include "cat/nn/model.hpp"

#include "cat/random.hpp"

#include <Eigen/Dense>
#include <fmt/format.h>

#include <cmath>
#include <numeric>

namespace cat::nn {

int Architecture::total_logits() const { return std::accumulate(logit_arities.begin(), logit_arities.end(), 0); }

namespace {

// Rows x cols matrix with orthonormal rows or columns, scaled by `gain`.
std::vector<double> orthogonal(std::size_t rows, std::size_t cols, double gain, Rng& rng) {
  const std::size_t big = std::max(rows, cols), small = std::min(rows, cols);
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd g(static_cast<Eigen::Index>(big), static_cast<Eigen::Index>(small));
  for (Eigen::Index j = 0; j < g.cols(); ++j)
    for (Eigen::Index i = 0; i < g.rows(); ++i) g(i, j) = normal(rng.engine());
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(g.rows(), g.cols());
  Eigen::MatrixXd r = qr.matrixQR().topRows(g.cols()).triangularView<Eigen::Upper>();
  for (Eigen::Index j = 0; j < q.cols(); ++j)
    if (r(j, j) < 0) q.col(j) *= -1.0;
  if (rows < cols) q.transposeInPlace();
  std::vector<double> out(rows * cols);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j)
      out[i * cols + j] = gain * q(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
  return out;
}

void check_arch(const Architecture& a) {
  auto positive = {a.input_rows, a.input_cols, a.input_channels, a.conv1_channels, a.conv2_channels,
                   a.fc1_units,  a.fc2_units,  a.actor_hidden_units};
  for (int v : positive)
    if (v < 1) throw ShapeError("architecture sizes must be positive");
  if (a.logit_arities.empty()) throw ShapeError("architecture needs at least one logit group");
  for (int v : a.logit_arities)
    if (v < 1) throw ShapeError("logit arities must be positive");
}

}  // namespace

template <typename T>
void PolicyValueNet<T>::add(std::string name, Shape shape) {
  names_.push_back(std::move(name));
  params_.emplace_back(std::move(shape), T{0});
}

template <typename T>
PolicyValueNet<T>::PolicyValueNet(Architecture arch, std::uint64_t seed) : arch_(std::move(arch)) {
  check_arch(arch_);
  auto sz = [](int v) { return static_cast<std::size_t>(v); };
  const std::size_t flat = sz(arch_.input_rows * arch_.input_cols * arch_.conv2_channels);
  add("conv1.weight", {9 * sz(arch_.input_channels), sz(arch_.conv1_channels)});
  add("conv1.bias", {sz(arch_.conv1_channels)});
  add("conv2.weight", {9 * sz(arch_.conv1_channels), sz(arch_.conv2_channels)});
  add("conv2.bias", {sz(arch_.conv2_channels)});
  add("fc1.weight", {flat, sz(arch_.fc1_units)});
  add("fc1.bias", {sz(arch_.fc1_units)});
  add("fc2.weight", {sz(arch_.fc1_units), sz(arch_.fc2_units)});
  add("fc2.bias", {sz(arch_.fc2_units)});
  add("actor1.weight", {sz(arch_.fc2_units), sz(arch_.actor_hidden_units)});
  add("actor1.bias", {sz(arch_.actor_hidden_units)});
  add("actor2.weight", {sz(arch_.actor_hidden_units), sz(arch_.total_logits())});
  add("actor2.bias", {sz(arch_.total_logits())});
  add("critic.weight", {sz(arch_.fc2_units), 1});
  add("critic.bias", {1});

  Rng rng(seed);
  const double relu_gain = std::sqrt(2.0);
  for (std::size_t i = 0; i < params_.size(); i += 2) {
    auto& w = params_[i];
    double gain = relu_gain;
    if (names_[i] == "actor2.weight") gain = 0.01;
    if (names_[i] == "critic.weight") gain = 1.0;
    auto values = orthogonal(w.dim(0), w.dim(1), gain, rng);
    for (std::size_t j = 0; j < values.size(); ++j) w[j] = static_cast<T>(values[j]);
  }
}

template <typename T>
std::size_t PolicyValueNet<T>::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.size();
  return n;
}

template <typename T>
std::vector<Var> PolicyValueNet<T>::bind(Tape<T>& tape) const {
  std::vector<Var> vars;
  vars.reserve(params_.size());
  for (std::size_t i = 0; i < params_.size(); ++i) vars.push_back(tape.parameter(params_[i], i));
  return vars;
}

template <typename T>
typename PolicyValueNet<T>::Output PolicyValueNet<T>::forward(Tape<T>& tape, const Tensor<T>& obs) const {
  if (params_.empty()) throw ShapeError("forward on an uninitialised model");
  const auto sz = [](int v) { return static_cast<std::size_t>(v); };
  if (obs.rank() != 4 || obs.dim(0) < 1 || obs.dim(1) != sz(arch_.input_rows) ||
      obs.dim(2) != sz(arch_.input_cols) || obs.dim(3) != sz(arch_.input_channels))
    throw ShapeError(fmt::format("observation batch {} does not match [N, {}, {}, {}]", shape_string(obs.shape()),
                                 arch_.input_rows, arch_.input_cols, arch_.input_channels));
  if (!obs.all_finite()) throw ShapeError("observation batch has non-finite entries");

  Output out;
  out.params = bind(tape);
  const auto& p = out.params;
  const std::size_t n = obs.dim(0);
  Var x = tape.constant(obs);
  Var h = tape.relu(tape.conv3x3(x, p[0], p[1]));
  h = tape.relu(tape.conv3x3(h, p[2], p[3]));
  h = tape.reshape(h, {n, sz(arch_.input_rows * arch_.input_cols * arch_.conv2_channels)});
  h = tape.relu(tape.linear(h, p[4], p[5]));
  h = tape.relu(tape.linear(h, p[6], p[7]));
  Var a = tape.relu(tape.linear(h, p[8], p[9]));
  out.logits = tape.linear(a, p[10], p[11]);
  out.value = tape.linear(h, p[12], p[13]);
  if (!tape.value(out.logits).all_finite() || !tape.value(out.value).all_finite())
    throw ShapeError("network produced non-finite outputs");
  return out;
}

template <typename T>
Gradients<T> PolicyValueNet<T>::gradients(const Tape<T>& tape, std::span<const Var> params) const {
  if (!tape.has_gradients()) throw TapeError("gradients requested before backward");
  if (params.size() != params_.size())
    throw TapeError(fmt::format("{} parameter handles for {} parameters", params.size(), params_.size()));
  Gradients<T> grads;
  grads.reserve(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (tape.parameter_slot(params[i]) != i) throw TapeError("parameter handles are out of order");
    grads.push_back(tape.grad(params[i]));
  }
  return grads;
}

template <typename T>
void PolicyValueNet<T>::load(const std::vector<std::string>& names, std::vector<Tensor<T>> values) {
  if (names != names_) throw ShapeError("checkpoint parameter names do not match the model");
  if (values.size() != params_.size()) throw ShapeError("checkpoint has the wrong number of tensors");
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (values[i].shape() != params_[i].shape())
      throw ShapeError(fmt::format("parameter {} has shape {}, checkpoint has {}", names_[i],
                                   shape_string(params_[i].shape()), shape_string(values[i].shape())));
    if (!values[i].all_finite()) throw ShapeError(fmt::format("parameter {} has non-finite values", names_[i]));
  }
  params_ = std::move(values);
}

template class PolicyValueNet<float>;
template class PolicyValueNet<double>;

}  // namespace cat::nn
