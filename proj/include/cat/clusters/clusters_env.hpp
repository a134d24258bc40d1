#pragma once

#include "cat/action_tree.hpp"
#include "cat/clusters/level.hpp"
#include "cat/clusters/mechanics.hpp"

#include <optional>
#include <span>

namespace cat::clusters {

struct EnvConfig {
  Variant variant = Variant::M;
  /// Act in the depth-2 flattened tree; selections are decoded before stepping.
  bool depth2 = false;
  /// Episodes reaching this many steps end with status TimedOut.
  int max_steps = 512;
};

struct StepResult {
  Observation observation;
  double reward = 0.0;
  bool done = false;
  Status status = Status::Running;
  /// Empty once the episode is over.
  ValidActionTree valid_tree;
};

/// One Clusters episode stream over a fixed level. Not thread-safe; each
/// actor owns its own instance.
class ClustersEnv {
 public:
  /// Throws LevelError if the level does not suit the variant (avatar
  /// present under Ma/MSa, or missing under M/MP/MPS).
  ClustersEnv(GridState level, EnvConfig config);

  StepResult reset();

  /// `selections` is a path in policy_tree(). Paths outside the full tree,
  /// and mechanically impossible actions, are no-ops with reward 0.
  StepResult step(std::span<const int> selections);

  /// Advances time without acting (used when no action is valid).
  StepResult step_noop();

  const GridState& state() const { return state_; }
  const EnvConfig& config() const { return config_; }
  const ActionTree& action_tree() const { return tree_; }
  const ActionTree& policy_tree() const { return flat_ ? flat_->tree() : tree_; }
  const Depth2Flattening* flattening() const { return flat_ ? &*flat_ : nullptr; }

  /// Valid tree for the current state in policy space.
  ValidActionTree valid_tree() const;
  Observation observe() const { return clusters::observe(state_, config_.variant); }

  /// Path in the variant's own tree for a policy-space path.
  Path decode(std::span<const int> selections) const;

 private:
  StepResult finish(double reward);

  GridState level_;
  GridState state_;
  EnvConfig config_;
  ActionTree tree_;
  std::optional<Depth2Flattening> flat_;
};

}  // namespace cat::clusters
