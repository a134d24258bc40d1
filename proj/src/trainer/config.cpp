#include "cat/trainer/config.hpp"

#include <fmt/format.h>

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace cat::trainer {

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_int(std::string_view key, std::string_view text) {
  T v{};
  auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || p != text.data() + text.size())
    throw ConfigError(fmt::format("{}: '{}' is not a valid integer", key, text));
  return v;
}

double parse_double(std::string_view key, std::string_view text) {
  std::string s(text);
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size()) throw ConfigError(fmt::format("{}: '{}' is not a number", key, text));
  return v;
}

bool parse_bool(std::string_view key, std::string_view text) {
  if (text == "true" || text == "1" || text == "yes") return true;
  if (text == "false" || text == "0" || text == "no") return false;
  throw ConfigError(fmt::format("{}: '{}' is not a boolean", key, text));
}

std::string fmt_double(double v) { return fmt::format("{}", v); }

}  // namespace

void ExperimentConfig::validate() const {
  auto require = [](bool ok, std::string_view msg) {
    if (!ok) throw ConfigError(std::string(msg));
  };
  require(unroll_length >= 2, "unroll_length must be >= 2");
  require(batch_size >= 1, "batch_size must be >= 1");
  require(num_actors >= 1, "actors must be >= 1");
  require(envs_per_actor >= 1, "envs_per_actor must be >= 1");
  require(total_env_steps >= 1, "steps must be >= 1");
  require(max_episode_steps >= 1, "max_episode_steps must be >= 1");
  require(snapshot_interval >= 1, "snapshot_interval must be >= 1");
  require(queue_capacity >= 0, "queue_capacity must be >= 0");
  require(reward_window >= 1, "reward_window must be >= 1");
  require(!level.empty(), "level must not be empty");
  if (synchronous) {
    require(num_actors == 1, "synchronous mode runs exactly one actor (got actors > 1)");
    require(batch_size % envs_per_actor == 0, "synchronous mode needs batch_size to be a multiple of envs_per_actor");
  }
  require(optimizer.learning_rate > 0, "lr must be > 0");
  require(optimizer.decay >= 0 && optimizer.decay < 1, "rms_decay must be in [0, 1)");
  require(optimizer.epsilon > 0, "rms_epsilon must be > 0");
  require(optimizer.max_grad_norm >= 0, "max_grad_norm must be >= 0");
  try {
    vtrace.validate();
  } catch (const VTraceError& e) {
    throw ConfigError(e.what());
  }
}

std::vector<std::string> ExperimentConfig::keys() {
  std::vector<std::string> out;
  for (auto& [k, v] : ExperimentConfig{}.to_key_values()) out.push_back(k);
  return out;
}

std::vector<std::pair<std::string, std::string>> ExperimentConfig::to_key_values() const {
  return {
      {"variant", std::string(clusters::to_string(variant))},
      {"masking", std::string(to_string(masking))},
      {"depth2", depth2 ? "true" : "false"},
      {"level", level},
      {"seed", std::to_string(seed)},
      {"actors", std::to_string(num_actors)},
      {"sync", synchronous ? "true" : "false"},
      {"unroll_length", std::to_string(unroll_length)},
      {"batch_size", std::to_string(batch_size)},
      {"envs_per_actor", std::to_string(envs_per_actor)},
      {"steps", std::to_string(total_env_steps)},
      {"max_episode_steps", std::to_string(max_episode_steps)},
      {"snapshot_interval", std::to_string(snapshot_interval)},
      {"queue_capacity", std::to_string(queue_capacity)},
      {"reward_window", std::to_string(reward_window)},
      {"stop_reward", early_stop_enabled() ? fmt_double(stop_reward) : "off"},
      {"gamma", fmt_double(vtrace.gamma)},
      {"rho_bar", fmt_double(vtrace.rho_bar)},
      {"u_bar", fmt_double(vtrace.u_bar)},
      {"entropy_cost", fmt_double(vtrace.entropy_cost)},
      {"baseline_cost", fmt_double(vtrace.baseline_cost)},
      {"lr", fmt_double(optimizer.learning_rate)},
      {"rms_decay", fmt_double(optimizer.decay)},
      {"rms_epsilon", fmt_double(optimizer.epsilon)},
      {"max_grad_norm", fmt_double(optimizer.max_grad_norm)},
  };
}

void ExperimentConfig::set(std::string_view key, std::string_view raw) {
  const std::string_view value = trim(raw);
  try {
    if (key == "variant") variant = clusters::parse_variant(value);
    else if (key == "masking") masking = parse_masking_mode(value);
    else if (key == "depth2") depth2 = parse_bool(key, value);
    else if (key == "level") level = std::string(value);
    else if (key == "seed") seed = parse_int<std::uint64_t>(key, value);
    else if (key == "actors") num_actors = parse_int<int>(key, value);
    else if (key == "sync") synchronous = parse_bool(key, value);
    else if (key == "unroll_length") unroll_length = parse_int<int>(key, value);
    else if (key == "batch_size") batch_size = parse_int<int>(key, value);
    else if (key == "envs_per_actor") envs_per_actor = parse_int<int>(key, value);
    else if (key == "steps") total_env_steps = parse_int<std::uint64_t>(key, value);
    else if (key == "max_episode_steps") max_episode_steps = parse_int<int>(key, value);
    else if (key == "snapshot_interval") snapshot_interval = parse_int<int>(key, value);
    else if (key == "queue_capacity") queue_capacity = parse_int<int>(key, value);
    else if (key == "reward_window") reward_window = parse_int<int>(key, value);
    else if (key == "stop_reward") stop_reward = value == "off" ? -1e308 : parse_double(key, value);
    else if (key == "gamma") vtrace.gamma = parse_double(key, value);
    else if (key == "rho_bar") vtrace.rho_bar = parse_double(key, value);
    else if (key == "u_bar") vtrace.u_bar = parse_double(key, value);
    else if (key == "entropy_cost") vtrace.entropy_cost = parse_double(key, value);
    else if (key == "baseline_cost") vtrace.baseline_cost = parse_double(key, value);
    else if (key == "lr") optimizer.learning_rate = parse_double(key, value);
    else if (key == "rms_decay") optimizer.decay = parse_double(key, value);
    else if (key == "rms_epsilon") optimizer.epsilon = parse_double(key, value);
    else if (key == "max_grad_norm") optimizer.max_grad_norm = parse_double(key, value);
    else throw ConfigError(fmt::format("unknown config key '{}'", key));
  } catch (const ConfigError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw ConfigError(fmt::format("{}: {}", key, e.what()));
  }
}

std::string ExperimentConfig::resolved_text() const {
  std::string out;
  for (const auto& [k, v] : to_key_values()) out += fmt::format("{}={}\n", k, v);
  return out;
}

std::vector<std::pair<std::string, std::string>> parse_config_text(std::string_view text) {
  std::vector<std::pair<std::string, std::string>> out;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ConfigError(fmt::format("line {}: expected key=value", line_no));
    const auto key = trim(line.substr(0, eq));
    if (key.empty()) throw ConfigError(fmt::format("line {}: empty key", line_no));
    out.emplace_back(std::string(key), std::string(trim(line.substr(eq + 1))));
  }
  return out;
}

ExperimentConfig load_config_file(const std::filesystem::path& path, ExperimentConfig base) {
  std::ifstream in(path);
  if (!in) throw ConfigError(fmt::format("cannot read config file {}", path.string()));
  std::stringstream ss;
  ss << in.rdbuf();
  for (const auto& [k, v] : parse_config_text(ss.str())) base.set(k, v);
  return base;
}

std::filesystem::path levels_dir() {
  if (const char* env = std::getenv("CAT_LEVELS_DIR"); env && *env) return env;
  return CAT_LEVELS_DIR;
}

clusters::GridState resolve_level(const std::string& level, clusters::Variant variant) {
  const std::filesystem::path shipped = levels_dir() / (level + ".lvl");
  if (level.find('/') == std::string::npos && std::filesystem::exists(shipped)) {
    auto state = clusters::load_level_file(shipped);
    return clusters::uses_avatar(variant) ? state : clusters::without_agent(std::move(state));
  }
  if (!std::filesystem::exists(level))
    throw ConfigError(fmt::format("level '{}' is neither a shipped level nor an existing file", level));
  return clusters::load_level_file(level);
}

}  // namespace cat::trainer
