#pragma once

#include <cstdint>
#include <deque>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "cat/vtrace.hpp"

namespace cat::trainer {

struct MetricsRecord {
  std::uint64_t env_steps = 0;
  std::uint64_t updates = 0;
  double episode_reward_mean = 0.0;  // NaN until an episode finishes
  double episode_length_mean = 0.0;
  double policy_loss = 0.0;
  double value_loss = 0.0;
  std::vector<double> entropy;  // per component
  double clip_frac = 0.0;
  double snapshot_lag = 0.0;
};

/// Mean reward and length over the most recent `window` episodes.
class EpisodeWindow {
 public:
  explicit EpisodeWindow(std::size_t window) : window_(window) {}
  void add(const EpisodeSummary& e);
  std::size_t count() const { return items_.size(); }
  std::uint64_t total() const { return total_; }
  double reward_mean() const;
  double length_mean() const;

 private:
  std::size_t window_;
  std::deque<EpisodeSummary> items_;
  std::uint64_t total_ = 0;
};

std::string csv_header(std::size_t components);
std::string csv_row(const MetricsRecord& r);
std::string json_line(const MetricsRecord& r);

/// Appends records to metrics.csv and metrics.jsonl in `dir`.
class MetricsWriter {
 public:
  MetricsWriter(const std::filesystem::path& dir, std::size_t components);
  void write(const MetricsRecord& r);

 private:
  std::ofstream csv_;
  std::ofstream jsonl_;
};

}  // namespace cat::trainer
