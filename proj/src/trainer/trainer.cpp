#include "cat/trainer/trainer.hpp"

#include <spdlog/spdlog.h>

#include <exception>
#include <thread>

namespace cat::trainer {

namespace {

class Progress {
 public:
  Progress(const ExperimentConfig& config, const MetricsCallback& cb)
      : config_(config), cb_(cb), window_(static_cast<std::size_t>(config.reward_window)) {}

  /// Records one update; returns true when training should stop.
  /// `updates` counts the update just applied; the lag of a trajectory is
  /// the number of updates its behaviour snapshot was missing.
  bool record(const std::vector<Trajectory>& batch, const UpdateStats& stats, std::uint64_t updates,
              TrainResult& result) {
    double lag = 0.0;
    for (const auto& traj : batch) {
      env_steps_ += traj.length();
      for (const auto& e : traj.episodes) window_.add(e);
      lag += static_cast<double>(updates - 1 - traj.snapshot_version);
    }
    MetricsRecord r;
    r.env_steps = env_steps_;
    r.updates = updates;
    r.episode_reward_mean = window_.reward_mean();
    r.episode_length_mean = window_.length_mean();
    r.policy_loss = stats.policy_loss;
    r.value_loss = stats.value_loss;
    r.entropy = stats.entropy;
    r.clip_frac = stats.clip_fraction;
    r.snapshot_lag = lag / static_cast<double>(batch.size());
    if (cb_) cb_(r);
    result.records.push_back(r);
    result.env_steps = env_steps_;
    result.episodes = window_.total();
    result.final_reward_mean = r.episode_reward_mean;
    if (updates % 100 == 0)
      spdlog::debug("update {} env_steps {} reward {:.3f} entropy0 {:.3f}", updates, env_steps_,
                    r.episode_reward_mean, r.entropy.empty() ? 0.0 : r.entropy[0]);
    if (config_.early_stop_enabled() && window_.count() >= static_cast<std::size_t>(config_.reward_window) &&
        r.episode_reward_mean >= config_.stop_reward) {
      result.stopped_early = true;
      return true;
    }
    return env_steps_ >= config_.total_env_steps;
  }

 private:
  const ExperimentConfig& config_;
  const MetricsCallback& cb_;
  EpisodeWindow window_;
  std::uint64_t env_steps_ = 0;
};

}  // namespace

TrainResult run_synchronous(const ExperimentConfig& config, const MetricsCallback& on_record) {
  if (!config.synchronous) {
    ExperimentConfig copy = config;
    copy.synchronous = true;
    return run_synchronous(copy, on_record);
  }
  config.validate();
  const auto level = resolve_level(config.level, config.variant);
  Model initial(architecture_for(config, level), config.seed);
  SnapshotStore store(Snapshot{0, std::make_shared<const Model>(initial)});
  Learner learner(config, std::move(initial));
  Actor actor(config, level, 0);
  Progress progress(config, on_record);
  TrainResult result;

  const int unrolls = config.batch_size / config.envs_per_actor;
  for (;;) {
    const Snapshot snap = store.latest();
    std::vector<Trajectory> batch;
    for (int i = 0; i < unrolls; ++i)
      for (auto& traj : actor.unroll(snap)) batch.push_back(std::move(traj));
    const auto stats = learner.update(batch);
    const bool done = progress.record(batch, stats, learner.updates(), result);
    if (learner.updates() % static_cast<std::uint64_t>(config.snapshot_interval) == 0)
      store.publish(learner.model(), learner.updates());
    if (done) break;
  }
  result.model = learner.model();
  return result;
}

TrainResult run_threaded(const ExperimentConfig& config, const MetricsCallback& on_record) {
  config.validate();
  const auto level = resolve_level(config.level, config.variant);
  Model initial(architecture_for(config, level), config.seed);
  SnapshotStore store(Snapshot{0, std::make_shared<const Model>(initial)});
  Learner learner(config, std::move(initial));
  BoundedQueue<Trajectory> queue(static_cast<std::size_t>(config.effective_queue_capacity()));
  std::atomic<bool> stop{false};
  std::atomic<int> alive{config.num_actors};
  std::mutex error_mu;
  std::exception_ptr actor_error;

  std::vector<Actor> actors;
  for (int i = 0; i < config.num_actors; ++i) actors.emplace_back(config, level, i);
  std::vector<std::thread> threads;
  for (auto& actor : actors) {
    threads.emplace_back([&, a = &actor] {
      try {
        a->run(store, queue, stop);
      } catch (...) {
        std::lock_guard lock(error_mu);
        if (!actor_error) actor_error = std::current_exception();
        spdlog::error("actor {} stopped with an error", a->id());
      }
      if (--alive == 0) queue.close();
    });
  }

  Progress progress(config, on_record);
  TrainResult result;
  std::exception_ptr learner_error;
  try {
    for (;;) {
      std::vector<Trajectory> batch;
      while (batch.size() < static_cast<std::size_t>(config.batch_size)) {
        auto traj = queue.pop();
        if (!traj) break;
        batch.push_back(std::move(*traj));
      }
      if (batch.size() < static_cast<std::size_t>(config.batch_size)) break;  // every actor has exited
      const auto stats = learner.update(batch);
      const bool done = progress.record(batch, stats, learner.updates(), result);
      if (learner.updates() % static_cast<std::uint64_t>(config.snapshot_interval) == 0)
        store.publish(learner.model(), learner.updates());
      if (done) break;
    }
  } catch (...) {
    learner_error = std::current_exception();
  }
  stop = true;
  queue.close();
  for (auto& t : threads) t.join();
  if (learner_error) std::rethrow_exception(learner_error);
  if (actor_error && result.env_steps < config.total_env_steps && !result.stopped_early)
    std::rethrow_exception(actor_error);
  result.model = learner.model();
  return result;
}

TrainResult train(const ExperimentConfig& config, const MetricsCallback& on_record) {
  return config.synchronous ? run_synchronous(config, on_record) : run_threaded(config, on_record);
}

}  // namespace cat::trainer
