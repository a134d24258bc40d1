#include "cat/vtrace.hpp"

#include "cat/masked_policy.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace cat {

void Trajectory::validate() const {
  const std::size_t t_len = rewards.size();
  if (t_len == 0) throw VTraceError("trajectory has no steps");
  if (selections.size() != t_len || masks.size() != t_len || behaviour_log_probs.size() != t_len ||
      terminals.size() != t_len)
    throw VTraceError(fmt::format("trajectory lengths disagree: {} selections, {} masks, {} log-probs, {} rewards, "
                                  "{} terminals",
                                  selections.size(), masks.size(), behaviour_log_probs.size(), t_len,
                                  terminals.size()));
  if (observations.rank() != 4 || observations.dim(0) != t_len + 1)
    throw VTraceError(fmt::format("observations {} do not hold {} states", nn::shape_string(observations.shape()),
                                  t_len + 1));
  const std::size_t k_len = components();
  for (std::size_t t = 0; t < t_len; ++t) {
    if (selections[t].size() != k_len || masks[t].size() != k_len || behaviour_log_probs[t].size() != k_len)
      throw VTraceError(fmt::format("step {} has inconsistent component counts", t));
    for (std::size_t k = 0; k < k_len; ++k) {
      const int c = selections[t][k];
      if (c < 0 || static_cast<std::size_t>(c) >= masks[t][k].size() || !masks[t][k].test(static_cast<std::size_t>(c)))
        throw VTraceError(fmt::format("step {} component {}: selection {} outside mask {}", t, k, c,
                                      masks[t][k].to_string()));
      const double lp = behaviour_log_probs[t][k];
      if (!(lp <= 0.0) || !std::isfinite(lp))
        throw VTraceError(fmt::format("step {} component {}: behaviour log-prob {} is not a finite value <= 0", t, k,
                                      lp));
    }
    if (!std::isfinite(rewards[t])) throw VTraceError(fmt::format("step {}: non-finite reward", t));
  }
}

void VTraceConfig::validate() const {
  if (!(gamma > 0.0 && gamma <= 1.0)) throw VTraceError(fmt::format("gamma {} outside (0, 1]", gamma));
  if (!(rho_bar >= 0.0)) throw VTraceError(fmt::format("rho_bar {} must be >= 0", rho_bar));
  if (!(u_bar >= 0.0)) throw VTraceError(fmt::format("u_bar {} must be >= 0", u_bar));
  if (!(entropy_cost >= 0.0)) throw VTraceError(fmt::format("entropy_cost {} must be >= 0", entropy_cost));
  if (!(baseline_cost >= 0.0)) throw VTraceError(fmt::format("baseline_cost {} must be >= 0", baseline_cost));
}

ImportanceWeights importance_weights(const std::vector<std::vector<double>>& target,
                                     const std::vector<std::vector<double>>& behaviour, const VTraceConfig& config) {
  if (target.size() != behaviour.size())
    throw VTraceError(fmt::format("{} target steps vs {} behaviour steps", target.size(), behaviour.size()));
  ImportanceWeights w;
  const std::size_t t_len = target.size();
  const std::size_t k_len = t_len ? target[0].size() : 0;
  w.rho.resize(t_len);
  w.u.resize(t_len);
  w.joint_rho.resize(t_len);
  w.joint_u.resize(t_len);
  w.clip_fraction.assign(k_len, 0.0);
  for (std::size_t t = 0; t < t_len; ++t) {
    if (target[t].size() != k_len || behaviour[t].size() != k_len)
      throw VTraceError(fmt::format("step {} has mismatched component counts", t));
    double jr = 1.0, ju = 1.0;
    for (std::size_t k = 0; k < k_len; ++k) {
      const double ratio = std::exp(target[t][k] - behaviour[t][k]);
      if (!std::isfinite(ratio))
        throw VTraceError(fmt::format("non-finite importance ratio at step {} component {} (log pi {}, log mu {})", t,
                                      k, target[t][k], behaviour[t][k]));
      const double r = std::min(config.rho_bar, ratio);
      const double u = std::min(config.u_bar, ratio);
      w.rho[t].push_back(r);
      w.u[t].push_back(u);
      jr *= r;
      ju *= u;
      // Float round-off between batched forwards must not register as clipping.
      if (ratio > config.rho_bar * (1.0 + kClipTolerance)) w.clip_fraction[k] += 1.0;
    }
    w.joint_rho[t] = std::min(config.rho_bar, jr);
    w.joint_u[t] = std::min(config.u_bar, ju);
  }
  if (t_len)
    for (auto& f : w.clip_fraction) f /= static_cast<double>(t_len);
  return w;
}

VTraceOutput vtrace_targets(std::span<const double> values, std::span<const double> rewards,
                            std::span<const std::uint8_t> terminals, const ImportanceWeights& w,
                            const VTraceConfig& config) {
  const std::size_t t_len = rewards.size();
  if (values.size() != t_len + 1 || terminals.size() != t_len || w.joint_rho.size() != t_len ||
      w.joint_u.size() != t_len || w.rho.size() != t_len)
    throw VTraceError(fmt::format("length mismatch: {} values, {} rewards, {} terminals, {} weights", values.size(),
                                  t_len, terminals.size(), w.joint_rho.size()));
  VTraceOutput out;
  out.v_targets.assign(t_len, 0.0);
  out.pg_advantages.resize(t_len);
  out.clip_fraction = w.clip_fraction;

  double next_diff = 0.0;  // v_{t+1} - V_{t+1}
  for (std::size_t i = t_len; i-- > 0;) {
    const double g = terminals[i] ? 0.0 : config.gamma;
    const double delta = w.joint_rho[i] * (rewards[i] + g * values[i + 1] - values[i]);
    const double diff = delta + g * w.joint_u[i] * next_diff;
    out.v_targets[i] = values[i] + diff;
    next_diff = diff;
  }
  for (std::size_t t = 0; t < t_len; ++t) {
    const double g = terminals[t] ? 0.0 : config.gamma;
    const double v_next = t + 1 < t_len ? out.v_targets[t + 1] : values[t_len];
    const double adv = rewards[t] + g * v_next - values[t];
    for (double r : w.rho[t]) out.pg_advantages[t].push_back(r * adv);
  }
  return out;
}

namespace {

void check_logits(std::span<const double> logits, std::span<const int> arities, std::size_t steps) {
  const auto width = static_cast<std::size_t>(std::accumulate(arities.begin(), arities.end(), 0));
  if (logits.size() != steps * width)
    throw VTraceError(fmt::format("{} logits for {} steps of width {}", logits.size(), steps, width));
}

}  // namespace

std::vector<std::vector<double>> target_log_probs(std::span<const double> logits, std::span<const int> arities,
                                                  const Trajectory& traj) {
  const std::size_t t_len = traj.length();
  check_logits(logits, arities, t_len);
  const std::size_t width = logits.size() / std::max<std::size_t>(t_len, 1);
  std::vector<std::vector<double>> out(t_len);
  for (std::size_t t = 0; t < t_len; ++t) {
    auto groups = split_logits(logits.subspan(t * width, width), arities);
    try {
      out[t] = log_prob_of(traj.selections[t], groups, traj.masks[t]);
    } catch (const PolicyError& e) {
      throw VTraceError(fmt::format("step {}: {}", t, e.what()));
    }
  }
  return out;
}

LossTerms vtrace_losses(std::span<const double> logits, std::span<const int> arities, const Trajectory& traj,
                        std::span<const double> values, const VTraceOutput& vt, const VTraceConfig& config,
                        LossGradients* grads) {
  const std::size_t t_len = traj.length();
  check_logits(logits, arities, t_len);
  if (values.size() < t_len || vt.v_targets.size() != t_len || vt.pg_advantages.size() != t_len)
    throw VTraceError("loss inputs disagree on trajectory length");
  const std::size_t k_len = arities.size();
  const std::size_t width = t_len ? logits.size() / t_len : 0;

  LossTerms terms;
  terms.entropy_per_component.assign(k_len, 0.0);
  if (grads) {
    grads->logits.assign(logits.size(), 0.0);
    grads->values.assign(t_len, 0.0);
  }

  for (std::size_t t = 0; t < t_len; ++t) {
    if (traj.selections[t].size() != k_len || traj.masks[t].size() != k_len || vt.pg_advantages[t].size() != k_len)
      throw VTraceError(fmt::format("step {} does not have {} components", t, k_len));
    std::size_t offset = t * width;
    for (std::size_t k = 0; k < k_len; ++k) {
      const auto n = static_cast<std::size_t>(arities[k]);
      MaskedCategorical dist(logits.subspan(offset, n), traj.masks[t][k]);
      const auto c = static_cast<std::size_t>(traj.selections[t][k]);
      const double lp = dist.log_prob(c);
      if (!std::isfinite(lp)) throw VTraceError(fmt::format("step {} component {}: selection outside mask", t, k));
      const double adv = vt.pg_advantages[t][k];
      const double h = dist.entropy();
      terms.policy += -adv * lp;
      terms.entropy += h;
      terms.entropy_per_component[k] += h;
      if (grads) {
        const auto p = dist.probabilities();
        for (std::size_t i = 0; i < n; ++i) {
          if (!dist.mask().test(i)) continue;
          double g = -adv * ((i == c ? 1.0 : 0.0) - p[i]);
          if (p[i] > 0.0) g += config.entropy_cost * p[i] * (std::log(p[i]) + h);
          grads->logits[offset + i] = g;
        }
      }
      offset += n;
    }
    const double diff = vt.v_targets[t] - values[t];
    terms.value += 0.5 * config.baseline_cost * diff * diff;
    if (grads) grads->values[t] = config.baseline_cost * (values[t] - vt.v_targets[t]);
  }
  if (t_len)
    for (auto& h : terms.entropy_per_component) h /= static_cast<double>(t_len);
  terms.total = terms.policy + terms.value - config.entropy_cost * terms.entropy;
  return terms;
}

}  // namespace cat
