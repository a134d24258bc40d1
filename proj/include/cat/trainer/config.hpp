#pragma once

#include "cat/clusters/level.hpp"
#include "cat/clusters/mechanics.hpp"
#include "cat/masked_policy.hpp"
#include "cat/nn/optimizer.hpp"
#include "cat/vtrace.hpp"

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace cat::trainer {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Everything needed to reproduce a training run. Every field has a flat
/// `key=value` spelling (see `keys()`), shared by config files and the
/// resolved_config written next to the metrics.
struct ExperimentConfig {
  clusters::Variant variant = clusters::Variant::M;
  MaskingMode masking = MaskingMode::Conditional;
  bool depth2 = false;
  /// Shipped level name (see levels/) or a path to a level file.
  std::string level = "clusters_0";
  std::uint64_t seed = 1;
  int num_actors = 1;
  bool synchronous = false;
  int unroll_length = 20;
  int batch_size = 8;
  /// Environments stepped together by each actor, sharing one forward pass.
  int envs_per_actor = 8;
  std::uint64_t total_env_steps = 1'000'000;
  int max_episode_steps = 512;
  int snapshot_interval = 1;
  /// 0 means 4 x batch_size.
  int queue_capacity = 0;
  /// Episodes averaged for episode_reward_mean.
  int reward_window = 50;
  /// Stop early once the windowed reward reaches this value (disabled when <= -1e300).
  double stop_reward = -1e308;
  VTraceConfig vtrace;
  nn::RmsPropConfig optimizer;

  void validate() const;
  int effective_queue_capacity() const { return queue_capacity > 0 ? queue_capacity : 4 * batch_size; }
  bool early_stop_enabled() const { return stop_reward > -1e300; }

  /// Sets one field from its text form. Throws ConfigError on unknown keys
  /// or malformed values.
  void set(std::string_view key, std::string_view value);
  std::vector<std::pair<std::string, std::string>> to_key_values() const;
  std::string resolved_text() const;
  static std::vector<std::string> keys();
};

/// Parses flat `key = value` lines; '#' starts a comment.
std::vector<std::pair<std::string, std::string>> parse_config_text(std::string_view text);
ExperimentConfig load_config_file(const std::filesystem::path& path, ExperimentConfig base = {});

/// Directory holding the shipped levels.
std::filesystem::path levels_dir();

/// Resolves a level name or path. Shipped levels are authored with an
/// avatar; under Ma/MSa it is removed. Explicit files are taken verbatim.
clusters::GridState resolve_level(const std::string& level, clusters::Variant variant);

}  // namespace cat::trainer
