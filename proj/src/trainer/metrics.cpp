#include "cat/trainer/metrics.hpp"

#include <fmt/format.h>
#include <json.hpp>

#include <cmath>
#include <limits>
#include <stdexcept>

namespace cat::trainer {

void EpisodeWindow::add(const EpisodeSummary& e) {
  items_.push_back(e);
  ++total_;
  if (items_.size() > window_) items_.pop_front();
}

double EpisodeWindow::reward_mean() const {
  if (items_.empty()) return std::numeric_limits<double>::quiet_NaN();
  double s = 0.0;
  for (const auto& e : items_) s += e.reward;
  return s / static_cast<double>(items_.size());
}

double EpisodeWindow::length_mean() const {
  if (items_.empty()) return std::numeric_limits<double>::quiet_NaN();
  double s = 0.0;
  for (const auto& e : items_) s += e.length;
  return s / static_cast<double>(items_.size());
}

std::string csv_header(std::size_t components) {
  std::string h = "env_steps,updates,episode_reward_mean,episode_length_mean,policy_loss,value_loss";
  for (std::size_t k = 0; k < components; ++k) h += fmt::format(",entropy_c{}", k);
  return h + ",clip_frac,snapshot_lag";
}

namespace {
// Shortest round-trip text; "nan" for missing values.
std::string num(double v) { return std::isnan(v) ? "nan" : fmt::format("{}", v); }
}  // namespace

std::string csv_row(const MetricsRecord& r) {
  std::string row = fmt::format("{},{},{},{},{},{}", r.env_steps, r.updates, num(r.episode_reward_mean),
                                num(r.episode_length_mean), num(r.policy_loss), num(r.value_loss));
  for (double h : r.entropy) row += "," + num(h);
  return row + fmt::format(",{},{}", num(r.clip_frac), num(r.snapshot_lag));
}

std::string json_line(const MetricsRecord& r) {
  nlohmann::ordered_json j;
  auto put = [&](const std::string& key, double v) {
    if (std::isnan(v)) j[key] = nullptr;
    else j[key] = v;
  };
  j["env_steps"] = r.env_steps;
  j["updates"] = r.updates;
  put("episode_reward_mean", r.episode_reward_mean);
  put("episode_length_mean", r.episode_length_mean);
  put("policy_loss", r.policy_loss);
  put("value_loss", r.value_loss);
  for (std::size_t k = 0; k < r.entropy.size(); ++k) put(fmt::format("entropy_c{}", k), r.entropy[k]);
  put("clip_frac", r.clip_frac);
  put("snapshot_lag", r.snapshot_lag);
  return j.dump();
}

MetricsWriter::MetricsWriter(const std::filesystem::path& dir, std::size_t components)
    : csv_(dir / "metrics.csv", std::ios::trunc), jsonl_(dir / "metrics.jsonl", std::ios::trunc) {
  if (!csv_ || !jsonl_) throw std::ios_base::failure("cannot open metrics files in " + dir.string());
  csv_ << csv_header(components) << '\n';
  csv_.flush();
}

void MetricsWriter::write(const MetricsRecord& r) {
  csv_ << csv_row(r) << '\n';
  jsonl_ << json_line(r) << '\n';
  csv_.flush();
  jsonl_.flush();
  if (!csv_ || !jsonl_) throw std::ios_base::failure("writing metrics failed");
}

}  // namespace cat::trainer
