#include "cat/trainer/learner.hpp"

#include <fmt/format.h>

#include <algorithm>

namespace cat::trainer {

Learner::Learner(const ExperimentConfig& config, Model model)
    : config_(config), model_(std::move(model)), optimizer_(config.optimizer) {}

UpdateStats Learner::update(const std::vector<Trajectory>& batch) {
  if (batch.empty()) throw VTraceError("empty batch");
  const auto& arch = model_.architecture();
  const auto& arities = arch.logit_arities;
  const std::size_t width = static_cast<std::size_t>(arch.total_logits());
  const std::size_t rows_per = batch.front().observations.dim(0);
  for (std::size_t b = 0; b < batch.size(); ++b) {
    try {
      batch[b].validate();
    } catch (const VTraceError& e) {
      throw VTraceError(fmt::format("trajectory {} (actor {}): {}", b, batch[b].actor_id, e.what()));
    }
    if (batch[b].observations.dim(0) != rows_per || batch[b].components() != arities.size())
      throw VTraceError(fmt::format("trajectory {} does not match the batch layout", b));
  }

  const auto& o = batch.front().observations;
  const std::size_t obs_size = o.size() / rows_per;
  nn::Tensor<float> obs({batch.size() * rows_per, o.dim(1), o.dim(2), o.dim(3)});
  for (std::size_t b = 0; b < batch.size(); ++b)
    std::copy(batch[b].observations.data().begin(), batch[b].observations.data().end(),
              obs.ptr() + b * rows_per * obs_size);

  nn::Tape<float> tape(true);
  const auto fwd = model_.forward(tape, obs);
  const auto& logits = tape.value(fwd.logits);
  const auto& values = tape.value(fwd.value);

  nn::Tensor<float> g_logits(logits.shape(), 0.0f);
  nn::Tensor<float> g_values(values.shape(), 0.0f);
  UpdateStats stats;
  stats.entropy.assign(arities.size(), 0.0);

  for (std::size_t b = 0; b < batch.size(); ++b) {
    const auto& traj = batch[b];
    const std::size_t t_len = traj.length();
    const std::size_t base = b * rows_per;
    std::vector<double> lg(logits.ptr() + base * width, logits.ptr() + (base + t_len) * width);
    std::vector<double> v(values.ptr() + base, values.ptr() + base + t_len + 1);
    if (!traj.bootstrap) v[t_len] = 0.0;

    const auto target = target_log_probs(lg, arities, traj);
    const auto weights = importance_weights(target, traj.behaviour_log_probs, config_.vtrace);
    const auto vt = vtrace_targets(v, traj.rewards, traj.terminals, weights, config_.vtrace);
    LossGradients grads;
    const auto terms = vtrace_losses(lg, arities, traj, v, vt, config_.vtrace, &grads);

    for (std::size_t i = 0; i < grads.logits.size(); ++i) g_logits[base * width + i] = static_cast<float>(grads.logits[i]);
    for (std::size_t t = 0; t < t_len; ++t) g_values[base + t] = static_cast<float>(grads.values[t]);

    stats.policy_loss += terms.policy;
    stats.value_loss += terms.value;
    for (std::size_t k = 0; k < arities.size(); ++k) stats.entropy[k] += terms.entropy_per_component[k];
    double clip = 0.0;
    for (double c : weights.clip_fraction) clip += c;
    stats.clip_fraction += clip / static_cast<double>(std::max<std::size_t>(1, weights.clip_fraction.size()));
    stats.steps += t_len;
  }

  // Surrogate whose parameter gradient equals the loss gradient: the loss
  // gradients w.r.t. network outputs are held constant.
  const nn::Var surrogate = tape.add(tape.dot(fwd.logits, g_logits), tape.dot(fwd.value, g_values));
  tape.backward(surrogate);
  const auto param_grads = model_.gradients(tape, fwd.params);
  stats.grad_norm = optimizer_.step(model_, param_grads);
  ++updates_;

  const double n = static_cast<double>(batch.size());
  stats.policy_loss /= static_cast<double>(stats.steps);
  stats.value_loss /= static_cast<double>(stats.steps);
  for (auto& h : stats.entropy) h /= n;
  stats.clip_fraction /= n;
  return stats;
}

}  // namespace cat::trainer
