#pragma once

#include "cat/clusters/clusters_env.hpp"
#include "cat/nn/model.hpp"
#include "cat/random.hpp"
#include "cat/trainer/config.hpp"
#include "cat/trainer/queue.hpp"
#include "cat/vtrace.hpp"

#include <atomic>
#include <memory>
#include <mutex>

namespace cat::trainer {

using Model = nn::PolicyValueNet<float>;

struct Snapshot {
  /// Learner updates applied to these parameters.
  std::uint64_t version = 0;
  std::shared_ptr<const Model> model;
};

/// Latest published parameters. Versions only increase.
class SnapshotStore {
 public:
  explicit SnapshotStore(Snapshot initial) : current_(std::move(initial)) {}
  /// Throws std::invalid_argument unless `version` exceeds the current one.
  void publish(Model model, std::uint64_t version);
  Snapshot latest() const;

 private:
  mutable std::mutex mu_;
  Snapshot current_;
};

/// Network architecture for a variant on a level.
nn::Architecture architecture_for(const ExperimentConfig& config, const clusters::GridState& level);

/// Samples one action per row of `logits` ([N, total]) and returns whether
/// a valid action existed. Used by actors and by `eval`.
struct ActionChoice {
  bool acted = false;
  Path selections;
  std::vector<Mask> masks;
  std::vector<double> log_probs;
};
ActionChoice choose_action(std::span<const float> logits_row, std::span<const int> arities,
                           const ValidActionTree& valid, MaskingMode mode, Rng& rng);

/// Steps `envs_per_actor` environments under a behaviour snapshot and cuts
/// their streams into fixed-length trajectories.
class Actor {
 public:
  Actor(const ExperimentConfig& config, const clusters::GridState& level, int actor_id);

  /// One unroll of every environment with the given snapshot.
  std::vector<Trajectory> unroll(const Snapshot& snapshot);

  /// Loops: fetch latest snapshot, unroll, push. Returns when `stop` is set
  /// or the sink is closed.
  void run(const SnapshotStore& store, BoundedQueue<Trajectory>& sink, const std::atomic<bool>& stop);

  std::uint64_t env_steps() const { return env_steps_; }
  int id() const { return id_; }

 private:
  struct Slot {
    clusters::ClustersEnv env;
    clusters::StepResult last;
    double episode_reward = 0.0;
    int episode_length = 0;
  };

  ExperimentConfig config_;
  int id_;
  Rng rng_;
  std::vector<Slot> slots_;
  std::vector<int> arities_;
  std::uint64_t env_steps_ = 0;
};

}  // namespace cat::trainer
