#pragma once

#include "cat/nn/optimizer.hpp"
#include "cat/trainer/actor.hpp"

namespace cat::trainer {

struct UpdateStats {
  double policy_loss = 0.0;  // per step
  double value_loss = 0.0;   // per step
  std::vector<double> entropy;  // per component, mean over steps
  double clip_fraction = 0.0;   // mean over components and trajectories
  double grad_norm = 0.0;
  std::size_t steps = 0;
};

/// Owns the master model. Not thread-safe; only the learner thread calls it.
class Learner {
 public:
  Learner(const ExperimentConfig& config, Model model);

  /// One optimiser step on a batch of trajectories. Target log-probs are
  /// recomputed under each trajectory's stored masks. Throws VTraceError on
  /// a corrupt trajectory, before any parameter changes.
  UpdateStats update(const std::vector<Trajectory>& batch);

  const Model& model() const { return model_; }
  std::uint64_t updates() const { return updates_; }

 private:
  ExperimentConfig config_;
  Model model_;
  nn::RmsProp<float> optimizer_;
  std::uint64_t updates_ = 0;
};

}  // namespace cat::trainer
