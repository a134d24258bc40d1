#pragma once

#include "cat/trainer/learner.hpp"
#include "cat/trainer/metrics.hpp"

#include <functional>

namespace cat::trainer {

struct TrainResult {
  std::vector<MetricsRecord> records;
  Model model;
  std::uint64_t env_steps = 0;
  std::uint64_t episodes = 0;
  double final_reward_mean = 0.0;  // over the last reward_window episodes
  bool stopped_early = false;
};

using MetricsCallback = std::function<void(const MetricsRecord&)>;

/// One actor and the learner interleaved on the calling thread. With a
/// fixed seed the metrics stream is bit-reproducible on the same build.
TrainResult run_synchronous(const ExperimentConfig& config, const MetricsCallback& on_record = {});

/// `num_actors` actor threads feed a bounded queue drained by the learner
/// on the calling thread.
TrainResult run_threaded(const ExperimentConfig& config, const MetricsCallback& on_record = {});

/// Dispatches on `config.synchronous`.
TrainResult train(const ExperimentConfig& config, const MetricsCallback& on_record = {});

}  // namespace cat::trainer
