#include "cat/clusters/clusters_env.hpp"

#include <fmt/format.h>

namespace cat::clusters {

ClustersEnv::ClustersEnv(GridState level, EnvConfig config)
    : level_(std::move(level)),
      state_(level_),
      config_(config),
      tree_(make_action_tree(config.variant, level_.width, level_.height)) {
  if (uses_avatar(config_.variant) && !level_.agent)
    throw LevelError(fmt::format("variant {} needs exactly one agent in the level", display_name(config_.variant)));
  if (!uses_avatar(config_.variant) && level_.agent)
    throw LevelError(fmt::format("variant {} has no avatar; remove the 'A' glyph from the level",
                                 display_name(config_.variant)));
  if (config_.max_steps < 1) throw LevelError("max_steps must be positive");
  if (config_.depth2) flat_.emplace(tree_, depth2_groups(config_.variant));
}

ValidActionTree ClustersEnv::valid_tree() const {
  if (state_.status != Status::Running) return policy_tree().empty_valid_tree();
  auto valid = valid_action_tree(state_, config_.variant);
  return flat_ ? flat_->flatten(valid) : valid;
}

Path ClustersEnv::decode(std::span<const int> selections) const {
  if (flat_) return flat_->decode(selections);
  return Path(selections.begin(), selections.end());
}

StepResult ClustersEnv::reset() {
  state_ = level_;
  state_.step_count = 0;
  return finish(0.0);
}

StepResult ClustersEnv::step(std::span<const int> selections) {
  if (state_.status != Status::Running) throw LevelError("step called on a terminated episode");
  const auto& arities = policy_tree().paths().arities();
  if (selections.size() != arities.size())
    throw LevelError(fmt::format("expected {} selections, got {}", arities.size(), selections.size()));
  for (std::size_t k = 0; k < selections.size(); ++k)
    if (selections[k] < 0 || selections[k] >= arities[k])
      throw LevelError(fmt::format("selection {} of component {} outside arity {}", selections[k], k, arities[k]));

  const Path action = decode(selections);
  double reward = 0.0;
  if (tree_.paths().contains(action)) reward = apply_action(state_, action, config_.variant);
  ++state_.step_count;
  return finish(reward);
}

StepResult ClustersEnv::step_noop() {
  if (state_.status != Status::Running) throw LevelError("step called on a terminated episode");
  ++state_.step_count;
  return finish(0.0);
}

StepResult ClustersEnv::finish(double reward) {
  if (state_.status == Status::Running && state_.step_count >= config_.max_steps) state_.status = Status::TimedOut;
  StepResult r;
  r.observation = observe();
  r.reward = reward;
  r.status = state_.status;
  r.done = state_.status != Status::Running;
  r.valid_tree = valid_tree();
  return r;
}

}  // namespace cat::clusters
