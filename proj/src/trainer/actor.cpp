#include "cat/trainer/actor.hpp"

#include <fmt/format.h>

#include <algorithm>

namespace cat::trainer {

void SnapshotStore::publish(Model model, std::uint64_t version) {
  auto shared = std::make_shared<const Model>(std::move(model));
  std::lock_guard lock(mu_);
  if (version <= current_.version)
    throw std::invalid_argument(fmt::format("snapshot version {} does not exceed {}", version, current_.version));
  current_ = Snapshot{version, std::move(shared)};
}

Snapshot SnapshotStore::latest() const {
  std::lock_guard lock(mu_);
  return current_;
}

nn::Architecture architecture_for(const ExperimentConfig& config, const clusters::GridState& level) {
  nn::Architecture arch;
  const auto [rows, cols] = clusters::observation_shape(config.variant, level.width, level.height);
  arch.input_rows = rows;
  arch.input_cols = cols;
  arch.input_channels = clusters::kNumChannels;
  auto tree = clusters::make_action_tree(config.variant, level.width, level.height);
  if (config.depth2) arch.logit_arities = Depth2Flattening(tree, clusters::depth2_groups(config.variant)).tree().arities();
  else arch.logit_arities = tree.arities();
  return arch;
}

ActionChoice choose_action(std::span<const float> logits_row, std::span<const int> arities,
                           const ValidActionTree& valid, MaskingMode mode, Rng& rng) {
  std::vector<double> row(logits_row.begin(), logits_row.end());
  ActionChoice out;
  auto sample = sample_factored(split_logits(row, arities), valid, mode, rng);
  if (!sample) {
    for (int a : arities) {
      out.selections.push_back(0);
      out.masks.push_back(Mask::one_hot(static_cast<std::size_t>(a), 0));
      out.log_probs.push_back(0.0);
    }
    return out;
  }
  out.acted = true;
  out.selections = std::move(sample->path.selections);
  out.masks = std::move(sample->path.masks);
  out.log_probs = std::move(sample->log_probs);
  return out;
}

Actor::Actor(const ExperimentConfig& config, const clusters::GridState& level, int actor_id)
    : config_(config),
      id_(actor_id),
      rng_(config.seed * 0x9E3779B97F4A7C15ULL + static_cast<std::uint64_t>(actor_id) + 1) {
  clusters::EnvConfig env_config{config.variant, config.depth2, config.max_episode_steps};
  for (int i = 0; i < config.envs_per_actor; ++i) {
    Slot slot{clusters::ClustersEnv(level, env_config), {}, 0.0, 0};
    slot.last = slot.env.reset();
    slots_.push_back(std::move(slot));
  }
  arities_ = slots_.front().env.policy_tree().arities();
}

std::vector<Trajectory> Actor::unroll(const Snapshot& snapshot) {
  const auto& model = *snapshot.model;
  const auto& arch = model.architecture();
  const std::size_t t_len = static_cast<std::size_t>(config_.unroll_length);
  const std::size_t n = slots_.size();
  const nn::Shape obs_shape = {static_cast<std::size_t>(arch.input_rows), static_cast<std::size_t>(arch.input_cols),
                               static_cast<std::size_t>(arch.input_channels)};
  const std::size_t obs_size = nn::shape_size(obs_shape);
  const std::size_t width = static_cast<std::size_t>(arch.total_logits());

  std::vector<Trajectory> out(n);
  for (auto& traj : out) {
    traj.observations = nn::Tensor<float>({t_len + 1, obs_shape[0], obs_shape[1], obs_shape[2]});
    traj.snapshot_version = snapshot.version;
    traj.actor_id = id_;
  }
  nn::Tensor<float> batch({n, obs_shape[0], obs_shape[1], obs_shape[2]});

  for (std::size_t t = 0; t < t_len; ++t) {
    for (std::size_t i = 0; i < n; ++i) {
      const auto& obs = slots_[i].last.observation.data;
      std::copy(obs.begin(), obs.end(), batch.ptr() + i * obs_size);
      std::copy(obs.begin(), obs.end(), out[i].observations.ptr() + t * obs_size);
    }
    nn::Tape<float> tape(false);
    const auto fwd = model.forward(tape, batch);
    const auto& logits = tape.value(fwd.logits);

    for (std::size_t i = 0; i < n; ++i) {
      auto& slot = slots_[i];
      auto& traj = out[i];
      auto choice = choose_action(std::span<const float>(logits.ptr() + i * width, width), arities_,
                                  slot.last.valid_tree, config_.masking, rng_);
      slot.last = choice.acted ? slot.env.step(choice.selections) : slot.env.step_noop();
      ++env_steps_;
      slot.episode_reward += slot.last.reward;
      ++slot.episode_length;
      traj.selections.push_back(std::move(choice.selections));
      traj.masks.push_back(std::move(choice.masks));
      traj.behaviour_log_probs.push_back(std::move(choice.log_probs));
      traj.rewards.push_back(slot.last.reward);
      traj.terminals.push_back(slot.last.done ? 1 : 0);
      if (slot.last.done) {
        traj.episodes.push_back({slot.episode_reward, slot.episode_length});
        slot.episode_reward = 0.0;
        slot.episode_length = 0;
        slot.last = slot.env.reset();
      }
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    const auto& obs = slots_[i].last.observation.data;
    std::copy(obs.begin(), obs.end(), out[i].observations.ptr() + t_len * obs_size);
    out[i].bootstrap = !out[i].terminals.back();
  }
  return out;
}

void Actor::run(const SnapshotStore& store, BoundedQueue<Trajectory>& sink, const std::atomic<bool>& stop) {
  while (!stop.load()) {
    auto trajectories = unroll(store.latest());
    for (auto& traj : trajectories)
      if (!sink.push(std::move(traj))) return;
  }
}

}  // namespace cat::trainer
