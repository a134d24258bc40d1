#include "cat/cli/commands.hpp"

#include "cat/clusters/clusters_env.hpp"
#include "cat/nn/checkpoint.hpp"
#include "cat/trainer/trainer.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>
#include <json.hpp>
#include <spdlog/spdlog.h>

#include <charconv>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <map>
#include <ostream>

namespace cat::cli {

namespace fs = std::filesystem;
using trainer::ConfigError;
using trainer::ExperimentConfig;

namespace {

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string dashed(std::string key) {
  std::replace(key.begin(), key.end(), '_', '-');
  return key;
}

/// Experiment flags. Each `--some-key` mirrors the config-file key `some_key`.
struct ConfigFlags {
  std::string config_file;
  std::map<std::string, std::string> values;
  std::map<std::string, CLI::Option*> options;
  bool depth2 = false;
  bool sync = false;
  CLI::Option* depth2_flag = nullptr;
  CLI::Option* sync_flag = nullptr;

  void attach(CLI::App* cmd, const std::vector<std::string>& keys) {
    cmd->add_option("--config", config_file, "flat key=value config file; flags override it");
    for (const auto& key : keys) {
      if (key == "depth2") {
        depth2_flag = cmd->add_flag("--depth2", depth2, "act in the depth-2 flattened tree");
      } else if (key == "sync") {
        sync_flag = cmd->add_flag("--sync", sync, "single-threaded deterministic mode");
      } else {
        options[key] = cmd->add_option("--" + dashed(key), values[key], fmt::format("config key {}", key));
      }
    }
  }

  ExperimentConfig resolve() const {
    ExperimentConfig config;
    if (!config_file.empty()) config = trainer::load_config_file(config_file, config);
    for (const auto& [key, opt] : options)
      if (opt->count() > 0) config.set(key, values.at(key));
    if (depth2_flag && depth2_flag->count() > 0) config.depth2 = true;
    if (sync_flag && sync_flag->count() > 0) config.synchronous = true;
    return config;
  }
};

const std::vector<std::string> kEnvKeys = {"variant", "masking", "depth2", "level", "seed", "max_episode_steps"};

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError(fmt::format("cannot write {}", path.string()));
  f << text;
  if (!f) throw IoError(fmt::format("write to {} failed", path.string()));
}

std::string default_out(const ExperimentConfig& c) {
  return fmt::format("runs/{}_{}{}_s{}", clusters::to_string(c.variant), to_string(c.masking),
                     c.depth2 ? "_depth2" : "", c.seed);
}

int cmd_train(const ConfigFlags& flags, const std::string& out_dir, std::ostream& out) {
  ExperimentConfig config = flags.resolve();
  config.validate();
  const auto level = trainer::resolve_level(config.level, config.variant);
  (void)level;
  const fs::path dir = out_dir.empty() ? fs::path(default_out(config)) : fs::path(out_dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError(fmt::format("cannot create output directory {}: {}", dir.string(), ec.message()));
  write_text(dir / "resolved_config.txt", config.resolved_text());

  const auto arities = trainer::architecture_for(config, level).logit_arities;
  std::unique_ptr<trainer::MetricsWriter> writer;
  try {
    writer = std::make_unique<trainer::MetricsWriter>(dir, arities.size());
  } catch (const std::ios_base::failure& e) {
    throw IoError(e.what());
  }
  const auto start = std::chrono::steady_clock::now();
  auto result = trainer::train(config, [&](const trainer::MetricsRecord& r) {
    try {
      writer->write(r);
    } catch (const std::ios_base::failure& e) {
      throw IoError(e.what());
    }
  });
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  try {
    nn::save_checkpoint(dir / "checkpoint.bin", result.model);
  } catch (const nn::CheckpointError& e) {
    throw IoError(e.what());
  }
  nlohmann::ordered_json summary;
  summary["env_steps"] = result.env_steps;
  summary["updates"] = result.records.empty() ? 0 : result.records.back().updates;
  summary["episodes"] = result.episodes;
  if (std::isnan(result.final_reward_mean)) summary["final_reward_mean"] = nullptr;
  else summary["final_reward_mean"] = result.final_reward_mean;
  summary["stopped_early"] = result.stopped_early;
  summary["seconds"] = seconds;
  write_text(dir / "summary.json", summary.dump(2) + "\n");
  out << fmt::format("{} env steps, {} episodes, reward mean {} -> {}\n", result.env_steps, result.episodes,
                     result.final_reward_mean, dir.string());
  return kOk;
}

int cmd_eval(const ConfigFlags& flags, const std::string& checkpoint, int episodes, std::ostream& out) {
  ExperimentConfig config = flags.resolve();
  config.validate();
  if (episodes < 1) throw ConfigError("episodes must be >= 1");
  const auto level = trainer::resolve_level(config.level, config.variant);
  nn::PolicyValueNet<float> model;
  try {
    model = nn::load_checkpoint(checkpoint);
  } catch (const nn::CheckpointError& e) {
    throw IoError(e.what());
  }
  if (!(model.architecture() == trainer::architecture_for(config, level)))
    throw ConfigError("checkpoint architecture does not match the variant, level and depth2 setting");
  clusters::ClustersEnv env(level, {config.variant, config.depth2, config.max_episode_steps});
  const auto arities = env.policy_tree().arities();
  Rng rng(config.seed);
  double reward_sum = 0.0, length_sum = 0.0;
  int won = 0, lost = 0, timed_out = 0;
  for (int e = 0; e < episodes; ++e) {
    auto step = env.reset();
    double reward = 0.0;
    int length = 0;
    while (!step.done) {
      const auto& o = step.observation;
      nn::Tensor<float> obs({1, std::size_t(o.rows), std::size_t(o.cols), std::size_t(clusters::kNumChannels)},
                            o.data);
      nn::Tape<float> tape(false);
      const auto fwd = model.forward(tape, obs);
      const auto& logits = tape.value(fwd.logits);
      auto choice = trainer::choose_action(logits.data(), arities, step.valid_tree, config.masking, rng);
      step = choice.acted ? env.step(choice.selections) : env.step_noop();
      reward += step.reward;
      ++length;
    }
    reward_sum += reward;
    length_sum += length;
    won += step.status == clusters::Status::Won;
    lost += step.status == clusters::Status::Lost;
    timed_out += step.status == clusters::Status::TimedOut;
  }
  nlohmann::ordered_json j;
  j["episodes"] = episodes;
  j["reward_mean"] = reward_sum / episodes;
  j["length_mean"] = length_sum / episodes;
  j["won"] = won;
  j["lost"] = lost;
  j["timed_out"] = timed_out;
  out << j.dump() << "\n";
  return kOk;
}

Path parse_action(const std::string& text, const ActionTree& tree) {
  Path path;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto comma = text.find(',', pos);
    const std::string part = text.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
    int v = 0;
    auto [p, ec] = std::from_chars(part.data(), part.data() + part.size(), v);
    if (part.empty() || ec != std::errc() || p != part.data() + part.size())
      throw ConfigError(fmt::format("invalid action '{}': '{}' is not an integer", text, part));
    path.push_back(v);
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  const auto arities = tree.arities();
  if (path.size() != arities.size())
    throw ConfigError(fmt::format("invalid action '{}': expected {} comma-separated values", text, arities.size()));
  for (std::size_t k = 0; k < path.size(); ++k)
    if (path[k] < 0 || path[k] >= arities[k])
      throw ConfigError(fmt::format("invalid action '{}': value {} out of range for component {} (arity {})", text,
                                    path[k], k, arities[k]));
  return path;
}

int cmd_enumerate(const ConfigFlags& flags, const std::vector<std::string>& steps, std::ostream& out) {
  ExperimentConfig config = flags.resolve();
  const auto level = trainer::resolve_level(config.level, config.variant);
  clusters::ClustersEnv env(level, {config.variant, config.depth2, config.max_episode_steps});
  auto result = env.reset();
  for (const auto& s : steps) {
    if (result.done) throw ConfigError(fmt::format("invalid action '{}': the episode is already over", s));
    result = env.step(parse_action(s, env.policy_tree()));
  }
  out << serialize_valid_tree(env.valid_tree()) << "\n";
  return kOk;
}

int cmd_bench(const ConfigFlags& flags, int batch, int iterations, std::ostream& out) {
  ExperimentConfig config = flags.resolve();
  if (batch < 1 || iterations < 1) throw ConfigError("batch and iterations must be >= 1");
  const auto level = trainer::resolve_level(config.level, config.variant);
  using clock = std::chrono::steady_clock;
  auto secs = [](clock::time_point a) { return std::chrono::duration<double>(clock::now() - a).count(); };

  clusters::ClustersEnv env(level, {config.variant, config.depth2, config.max_episode_steps});
  Rng rng(config.seed);
  auto step = env.reset();
  const int env_steps = 2000 * iterations;
  auto t0 = clock::now();
  for (int i = 0; i < env_steps; ++i) {
    const auto leaves = step.valid_tree.leaves();
    step = leaves.empty() ? env.step_noop() : env.step(leaves[rng.below(leaves.size())]);
    if (step.done) step = env.reset();
  }
  const double env_rate = env_steps / secs(t0);

  const auto arch = trainer::architecture_for(config, level);
  trainer::Model model(arch, config.seed);
  nn::Tensor<float> obs({std::size_t(batch), std::size_t(arch.input_rows), std::size_t(arch.input_cols),
                         std::size_t(arch.input_channels)},
                        0.5f);
  t0 = clock::now();
  for (int i = 0; i < iterations; ++i) {
    nn::Tape<float> tape(false);
    model.forward(tape, obs);
  }
  const double fwd = secs(t0) / iterations;
  t0 = clock::now();
  for (int i = 0; i < iterations; ++i) {
    nn::Tape<float> tape(true);
    auto o = model.forward(tape, obs);
    tape.backward(tape.add(tape.sum_squares(o.logits), tape.sum_squares(o.value)));
  }
  const double fwd_bwd = secs(t0) / iterations;
  out << fmt::format("variant {} level {} ({}x{}), {} parameters\n", clusters::to_string(config.variant),
                     level.name, level.width, level.height, model.scalar_count());
  out << fmt::format("env steps/s (random valid actions): {:.0f}\n", env_rate);
  out << fmt::format("forward batch {}: {:.3f} ms ({:.0f} rows/s)\n", batch, fwd * 1e3, batch / fwd);
  out << fmt::format("forward+backward batch {}: {:.3f} ms ({:.0f} rows/s)\n", batch, fwd_bwd * 1e3, batch / fwd_bwd);
  return kOk;
}

}  // namespace

std::string logit_table(int width, int height, std::span<const clusters::Variant> variants) {
  std::string out = fmt::format("{:<8} {:<8} {:>6} {:>6} {:>6} {:>6} {:>6}\n", "mode", "variant", "|C0|", "|C1|",
                                "|C2|", "|C3|", "total");
  for (bool depth2 : {false, true}) {
    for (auto v : variants) {
      auto tree = clusters::make_action_tree(v, width, height);
      auto count = depth2 ? count_logits(Depth2Flattening(tree, clusters::depth2_groups(v)).tree()) : count_logits(tree);
      std::string row = fmt::format("{:<8} {:<8}", depth2 ? "Depth-2" : "CAT", clusters::display_name(v));
      for (std::size_t k = 0; k < 4; ++k)
        row += k < count.arities.size() ? fmt::format(" {:>6}", count.arities[k]) : fmt::format(" {:>6}", "-");
      out += row + fmt::format(" {:>6}\n", count.total);
    }
  }
  return out;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Conditional action tree training stack for the Clusters game"};
  app.name("cat_cli");
  app.require_subcommand(1);

  ConfigFlags train_flags, eval_flags, enum_flags, bench_flags;
  std::string out_dir, checkpoint;
  int episodes = 100, bench_batch = 8, bench_iters = 20, width = 13, height = 10;
  std::string count_level;
  std::vector<std::string> count_variants;
  std::vector<std::string> steps;
  std::string log_level = "warn";
  app.add_option("--log-level", log_level, "trace, debug, info, warn, error");

  auto* train = app.add_subcommand("train", "train an agent and write metrics, checkpoint and resolved config");
  train_flags.attach(train, ExperimentConfig::keys());
  train->add_option("--out", out_dir, "output directory");

  auto* eval = app.add_subcommand("eval", "roll out a checkpoint and report episode statistics");
  eval_flags.attach(eval, kEnvKeys);
  eval->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
  eval->add_option("--episodes", episodes, "episodes to run");

  auto* enumerate = app.add_subcommand("enumerate-tree", "print the valid action tree of a level as JSON");
  enum_flags.attach(enumerate, kEnvKeys);
  enumerate->add_option("--step", steps, "comma-separated action applied before printing (repeatable)");

  auto* count = app.add_subcommand("count-logits", "print per-component logit widths for every variant");
  count->add_option("--width", width, "level width")->check(CLI::PositiveNumber);
  count->add_option("--height", height, "level height")->check(CLI::PositiveNumber);
  count->add_option("--level", count_level, "take width and height from a level");
  count->add_option("--variant", count_variants, "only these variants (m, mp, mps, ma, msa)")->expected(1, -1);

  auto* bench = app.add_subcommand("bench", "measure environment and network throughput");
  bench_flags.attach(bench, kEnvKeys);
  bench->add_option("--batch", bench_batch, "forward batch size");
  bench->add_option("--iterations", bench_iters, "timed iterations");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kConfigError;
  }

  if (auto lvl = spdlog::level::from_str(log_level); lvl != spdlog::level::off || log_level == "off")
    spdlog::set_level(lvl);

  try {
    if (train->parsed()) return cmd_train(train_flags, out_dir, out);
    if (eval->parsed()) return cmd_eval(eval_flags, checkpoint, episodes, out);
    if (enumerate->parsed()) return cmd_enumerate(enum_flags, steps, out);
    if (bench->parsed()) return cmd_bench(bench_flags, bench_batch, bench_iters, out);
    if (count->parsed()) {
      if (!count_level.empty()) {
        const auto level = trainer::resolve_level(count_level, clusters::Variant::M);
        width = level.width;
        height = level.height;
      }
      std::vector<clusters::Variant> variants(clusters::kAllVariants.begin(), clusters::kAllVariants.end());
      if (!count_variants.empty()) {
        variants.clear();
        for (const auto& v : count_variants) variants.push_back(clusters::parse_variant(v));
      }
      out << logit_table(width, height, variants);
      return kOk;
    }
  } catch (const IoError& e) {
    err << "error: " << e.what() << "\n";
    return kIoError;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return kIoError;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const clusters::LevelError& e) {
    err << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const std::invalid_argument& e) {
    err << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kFailure;
  }
  return kFailure;
}

}  // namespace cat::cli
