#pragma once

#include "cat/action_tree.hpp"
#include "cat/nn/tensor.hpp"

#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

namespace cat {

class VTraceError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct EpisodeSummary {
  double reward = 0.0;
  int length = 0;
};

/// Fixed-length unroll of T steps with K+1 action components.
struct Trajectory {
  /// [T+1, rows, cols, channels]; the last row is the bootstrap state.
  nn::Tensor<float> observations;
  std::vector<Path> selections;                      // [T][K+1]
  std::vector<std::vector<Mask>> masks;              // [T][K+1]
  std::vector<std::vector<double>> behaviour_log_probs;  // [T][K+1]
  std::vector<double> rewards;                       // [T]
  /// terminals[t]: the episode ended on step t; the state after it belongs
  /// to a fresh episode.
  std::vector<std::uint8_t> terminals;               // [T]
  /// False when the final step was terminal and V(s_T) is unused.
  bool bootstrap = true;
  /// Snapshot version that produced the behaviour log-probs.
  std::uint64_t snapshot_version = 0;
  int actor_id = 0;
  /// Episodes that finished inside this unroll.
  std::vector<EpisodeSummary> episodes;

  std::size_t length() const { return rewards.size(); }
  std::size_t components() const { return selections.empty() ? 0 : selections.front().size(); }

  /// Checks lengths, log-prob signs, and that each stored mask admits its
  /// selection. Throws VTraceError with the offending step.
  void validate() const;
};

struct VTraceConfig {
  double gamma = 0.99;
  double rho_bar = 1.0;
  double u_bar = 1.0;
  double entropy_cost = 0.01;
  double baseline_cost = 0.5;

  /// Throws VTraceError on out-of-range values.
  void validate() const;
  /// rho_bar >= u_bar is the recommended ordering.
  bool clip_order_ok() const { return rho_bar >= u_bar; }
};

/// Relative slack before a ratio above rho_bar counts towards clip_fraction.
inline constexpr double kClipTolerance = 1e-6;

struct ImportanceWeights {
  std::vector<std::vector<double>> rho;  // [T][K+1], min(rho_bar, pi_k / mu_k)
  std::vector<std::vector<double>> u;    // [T][K+1], min(u_bar, pi_k / mu_k)
  /// Joint weights for the value target: per-component clipped ratios
  /// multiplied, then clipped again.
  std::vector<double> joint_rho;  // [T]
  std::vector<double> joint_u;    // [T]
  /// Per component, fraction of steps whose ratio exceeded rho_bar (beyond kClipTolerance).
  std::vector<double> clip_fraction;
};

ImportanceWeights importance_weights(const std::vector<std::vector<double>>& target_log_probs,
                                     const std::vector<std::vector<double>>& behaviour_log_probs,
                                     const VTraceConfig& config);

struct VTraceOutput {
  std::vector<double> v_targets;                   // [T]
  std::vector<std::vector<double>> pg_advantages;  // [T][K+1]
  std::vector<double> clip_fraction;               // per component
};

/// Backward recursion
///   v_t - V_t = d_t + g_t * u_t * (v_{t+1} - V_{t+1}),
///   d_t = rho_t * (r_t + g_t * V_{t+1} - V_t),
/// with g_t = 0 after a terminal step and v_T = V_T. The policy-gradient
/// advantage uses each component's own rho: rho_{k,t} (r_t + g_t v_{t+1} - V_t).
VTraceOutput vtrace_targets(std::span<const double> values, std::span<const double> rewards,
                            std::span<const std::uint8_t> terminals, const ImportanceWeights& weights,
                            const VTraceConfig& config);

struct LossTerms {
  double total = 0.0;
  double policy = 0.0;
  double value = 0.0;   // baseline_cost * 0.5 * sum (v - V)^2
  double entropy = 0.0; // sum over steps and components
  std::vector<double> entropy_per_component;  // mean over steps
};

/// Gradients of LossTerms::total.
struct LossGradients {
  std::vector<double> logits;  // [T, total_logits], row-major
  std::vector<double> values;  // [T]
};

/// loss = sum_{t,k} -A_{t,k} log pi(c_k | m_k) + baseline_cost * 0.5 * sum_t (v_t - V_t)^2
///        - entropy_cost * sum_{t,k} H(pi_k under m_k)
/// `logits` is [T, total_logits]; `values` holds V(s_t) for t < T. Targets and
/// advantages are constants. Fills `grads` when non-null.
LossTerms vtrace_losses(std::span<const double> logits, std::span<const int> arities, const Trajectory& traj,
                        std::span<const double> values, const VTraceOutput& vt, const VTraceConfig& config,
                        LossGradients* grads = nullptr);

/// log pi_k for every step under the stored masks ([T][K+1]).
std::vector<std::vector<double>> target_log_probs(std::span<const double> logits, std::span<const int> arities,
                                                  const Trajectory& traj);

}  // namespace cat
