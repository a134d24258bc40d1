#include "cat/trainer/trainer.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <thread>

using namespace cat;
using namespace cat::trainer;

namespace {

std::filesystem::path write_level(const std::string& name, const std::string& text) {
  auto dir = std::filesystem::temp_directory_path() / "cat_trainer_tests";
  std::filesystem::create_directories(dir);
  auto path = dir / name;
  std::ofstream(path) << text;
  return path;
}

ExperimentConfig small_config() {
  ExperimentConfig c;
  c.level = cat::testing::level_path("smoke_2box.lvl");
  c.synchronous = true;
  c.unroll_length = 8;
  c.envs_per_actor = 4;
  c.batch_size = 4;
  c.total_env_steps = 320;
  c.max_episode_steps = 40;
  c.reward_window = 5;
  return c;
}

Model zero_model(const nn::Architecture& arch) {
  Model m(arch, 1);
  for (auto& p : m.mutable_parameters()) p.fill(0.0f);
  return m;
}

}  // namespace

TEST(BoundedQueue, BackpressureAndClose) {
  BoundedQueue<int> q(2);
  EXPECT_TRUE(q.push(1));
  EXPECT_TRUE(q.push(2));
  std::atomic<bool> pushed{false};
  std::thread producer([&] {
    q.push(3);
    pushed = true;
  });
  std::this_thread::sleep_for(std::chrono::milliseconds(50));
  EXPECT_FALSE(pushed.load());
  EXPECT_EQ(q.pop(), 1);
  producer.join();
  EXPECT_TRUE(pushed.load());
  q.close();
  EXPECT_FALSE(q.push(4));
  EXPECT_EQ(q.pop(), 2);
  EXPECT_EQ(q.pop(), 3);
  EXPECT_EQ(q.pop(), std::nullopt);
}

TEST(BoundedQueue, CloseWakesBlockedConsumer) {
  BoundedQueue<int> q(1);
  std::optional<int> got = 7;
  std::thread consumer([&] { got = q.pop(); });
  std::this_thread::sleep_for(std::chrono::milliseconds(20));
  q.close();
  consumer.join();
  EXPECT_EQ(got, std::nullopt);
}

TEST(SnapshotStore, VersionsIncrease) {
  auto cfg = small_config();
  auto level = resolve_level(cfg.level, cfg.variant);
  Model m(architecture_for(cfg, level), 3);
  SnapshotStore store(Snapshot{0, std::make_shared<const Model>(m)});
  EXPECT_EQ(store.latest().version, 0u);
  store.publish(m, 1);
  store.publish(m, 4);
  EXPECT_EQ(store.latest().version, 4u);
  EXPECT_THROW(store.publish(m, 4), std::invalid_argument);
}

TEST(Actor, ScriptedForwardPolicyWinsEveryStep) {
  auto cfg = small_config();
  cfg.level = write_level("one_push.lvl", "R\nr\nA\n").string();
  cfg.envs_per_actor = 1;
  cfg.batch_size = 1;
  auto level = resolve_level(cfg.level, cfg.variant);
  auto model = zero_model(architecture_for(cfg, level));
  // Index kForward of the only component gets a large logit.
  model.mutable_parameters()[11][clusters::kForward] = 30.0f;
  Actor actor(cfg, level, 0);
  auto trajs = actor.unroll(Snapshot{5, std::make_shared<const Model>(model)});
  ASSERT_EQ(trajs.size(), 1u);
  const auto& tr = trajs[0];
  EXPECT_EQ(tr.length(), 8u);
  EXPECT_EQ(tr.snapshot_version, 5u);
  EXPECT_FALSE(tr.bootstrap);
  for (std::size_t t = 0; t < 8; ++t) {
    EXPECT_EQ(tr.selections[t][0], clusters::kForward);
    EXPECT_EQ(tr.rewards[t], 1.0);
    EXPECT_EQ(tr.terminals[t], 1);
  }
  ASSERT_EQ(tr.episodes.size(), 8u);
  EXPECT_EQ(tr.episodes[0].reward, 1.0);
  EXPECT_EQ(tr.episodes[0].length, 1);
  EXPECT_NO_THROW(tr.validate());
  EXPECT_EQ(actor.env_steps(), 8u);
}

TEST(Actor, StopBeforeFirstUnrollPushesNothing) {
  auto cfg = small_config();
  auto level = resolve_level(cfg.level, cfg.variant);
  SnapshotStore store(Snapshot{0, std::make_shared<const Model>(Model(architecture_for(cfg, level), 1))});
  BoundedQueue<Trajectory> q(8);
  std::atomic<bool> stop{true};
  Actor actor(cfg, level, 0);
  actor.run(store, q, stop);
  EXPECT_EQ(q.size(), 0u);
  EXPECT_EQ(actor.env_steps(), 0u);
}

TEST(ChooseAction, EmptyTreeUnderMaskingIsANoOp) {
  const std::vector<int> arities = {3, 4};
  std::vector<float> row(7, 0.0f);
  ValidActionTree empty(arities);
  Rng rng(1);
  auto c = choose_action(row, arities, empty, MaskingMode::Conditional, rng);
  EXPECT_FALSE(c.acted);
  EXPECT_EQ(c.selections, (Path{0, 0}));
  EXPECT_EQ(c.log_probs, (std::vector<double>{0.0, 0.0}));
  EXPECT_EQ(c.masks[1], Mask::one_hot(4, 0));
  c = choose_action(row, arities, empty, MaskingMode::Collapsed, rng);
  EXPECT_FALSE(c.acted);
}

TEST(Actor, UnmaskedInvalidActionsLeaveTheWorldUnchanged) {
  // A boxed-in box: no action has an effect.
  auto cfg = small_config();
  cfg.variant = clusters::Variant::MSa;
  cfg.masking = MaskingMode::None;
  cfg.level = write_level("stuck.lvl", "WWW\nWrW\nWWW\n").string();
  cfg.envs_per_actor = 1;
  cfg.batch_size = 1;
  cfg.max_episode_steps = 1000;
  auto level = resolve_level(cfg.level, cfg.variant);
  Model m(architecture_for(cfg, level), 2);
  Actor actor(cfg, level, 0);
  auto trajs = actor.unroll(Snapshot{0, std::make_shared<const Model>(m)});
  const auto& tr = trajs[0];
  for (std::size_t t = 0; t < tr.length(); ++t) {
    EXPECT_EQ(tr.rewards[t], 0.0);
    EXPECT_EQ(tr.terminals[t], 0);
    for (const auto& mask : tr.masks[t]) EXPECT_EQ(mask.count(), mask.size());
  }
  // Every observation equals the first.
  const std::size_t per = tr.observations.size() / tr.observations.dim(0);
  for (std::size_t i = 0; i < tr.observations.size(); ++i)
    EXPECT_EQ(tr.observations[i], tr.observations[i % per]);
}

TEST(Learner, CorruptTrajectoryAbortsBeforeTheStep) {
  auto cfg = small_config();
  auto level = resolve_level(cfg.level, cfg.variant);
  Model m(architecture_for(cfg, level), 4);
  Actor actor(cfg, level, 0);
  auto batch = actor.unroll(Snapshot{0, std::make_shared<const Model>(m)});
  Learner learner(cfg, m);
  auto bad = batch;
  bad[2].masks[3][0] = Mask(bad[2].masks[3][0].size());  // selection now outside its mask
  EXPECT_THROW(learner.update(bad), VTraceError);
  bad = batch;
  bad[1].behaviour_log_probs[0][0] = std::nan("");
  EXPECT_THROW(learner.update(bad), VTraceError);
  EXPECT_EQ(learner.updates(), 0u);
  for (std::size_t p = 0; p < m.parameters().size(); ++p)
    EXPECT_EQ(learner.model().parameters()[p].storage(), m.parameters()[p].storage());
  EXPECT_NO_THROW(learner.update(batch));
  EXPECT_EQ(learner.updates(), 1u);
}

TEST(Learner, OnPolicyBatchHasNoClipping) {
  auto cfg = small_config();
  auto level = resolve_level(cfg.level, cfg.variant);
  Model m(architecture_for(cfg, level), 5);
  Actor actor(cfg, level, 0);
  auto batch = actor.unroll(Snapshot{0, std::make_shared<const Model>(m)});
  // Behaviour log-probs agree with a fresh forward of the archived snapshot.
  const auto& arities = m.architecture().logit_arities;
  const std::size_t width = static_cast<std::size_t>(m.architecture().total_logits());
  for (const auto& tr : batch) {
    nn::Tape<float> tape(false);
    auto fwd = m.forward(tape, tr.observations);
    const auto& l = tape.value(fwd.logits);
    std::vector<double> lg(l.ptr(), l.ptr() + tr.length() * width);
    auto target = target_log_probs(lg, arities, tr);
    for (std::size_t t = 0; t < tr.length(); ++t)
      for (std::size_t k = 0; k < arities.size(); ++k)
        EXPECT_NEAR(target[t][k], tr.behaviour_log_probs[t][k], 1e-5);
  }
  Learner learner(cfg, m);
  auto stats = learner.update(batch);
  EXPECT_EQ(stats.clip_fraction, 0.0);
  EXPECT_EQ(stats.steps, 32u);
  EXPECT_TRUE(std::isfinite(stats.grad_norm));
  EXPECT_GT(stats.grad_norm, 0.0);
}

TEST(Synchronous, SnapshotEveryUpdateStaysOnPolicy) {
  auto cfg = small_config();
  auto result = run_synchronous(cfg);
  ASSERT_EQ(result.records.size(), 10u);
  for (const auto& r : result.records) {
    EXPECT_EQ(r.clip_frac, 0.0);
    EXPECT_EQ(r.snapshot_lag, 0.0);
  }
  EXPECT_EQ(result.env_steps, 320u);
  EXPECT_EQ(result.records.back().updates, 10u);
}

TEST(Synchronous, DeterministicForASeed) {
  auto cfg = small_config();
  auto a = run_synchronous(cfg), b = run_synchronous(cfg);
  ASSERT_EQ(a.records.size(), b.records.size());
  for (std::size_t i = 0; i < a.records.size(); ++i) EXPECT_EQ(csv_row(a.records[i]), csv_row(b.records[i]));
  cfg.seed = 2;
  auto c = run_synchronous(cfg);
  bool differs = false;
  for (std::size_t i = 0; i < a.records.size(); ++i) differs |= csv_row(a.records[i]) != csv_row(c.records[i]);
  EXPECT_TRUE(differs);
}

TEST(Synchronous, StaleSnapshotsShowLag) {
  auto cfg = small_config();
  cfg.snapshot_interval = 3;
  auto result = run_synchronous(cfg);
  double max_lag = 0.0;
  for (const auto& r : result.records) max_lag = std::max(max_lag, r.snapshot_lag);
  EXPECT_EQ(max_lag, 2.0);
}

TEST(Synchronous, EarlyStop) {
  auto cfg = small_config();
  cfg.level = write_level("one_push_stop.lvl", "R\nr\nA\n").string();
  cfg.total_env_steps = 100000;
  cfg.stop_reward = 0.5;  // a single forward push wins this level
  cfg.reward_window = 1;
  auto result = run_synchronous(cfg);
  EXPECT_TRUE(result.stopped_early);
  EXPECT_LT(result.env_steps, 100000u);
}

TEST(Config, SyncRejectsSeveralActors) {
  auto cfg = small_config();
  cfg.num_actors = 2;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg.num_actors = 1;
  cfg.batch_size = 6;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg.synchronous = false;
  EXPECT_NO_THROW(cfg.validate());
}

TEST(Config, KeyValueRoundTrip) {
  ExperimentConfig c;
  c.set("variant", "MSa");
  c.set("masking", "cl");
  c.set("depth2", "true");
  c.set("seed", "42");
  c.set("lr", "0.001");
  c.set("stop_reward", "1.5");
  ExperimentConfig d;
  for (const auto& [k, v] : parse_config_text(c.resolved_text())) d.set(k, v);
  EXPECT_EQ(d.resolved_text(), c.resolved_text());
  EXPECT_EQ(d.variant, clusters::Variant::MSa);
  EXPECT_EQ(d.masking, MaskingMode::Collapsed);
  EXPECT_EQ(d.optimizer.learning_rate, 0.001);
  EXPECT_EQ(ExperimentConfig::keys().size(), c.to_key_values().size());
}

TEST(Config, Errors) {
  ExperimentConfig c;
  EXPECT_THROW(c.set("nonsense", "1"), ConfigError);
  EXPECT_THROW(c.set("seed", "abc"), ConfigError);
  EXPECT_THROW(c.set("masking", "sometimes"), ConfigError);
  EXPECT_THROW(parse_config_text("just words\n"), ConfigError);
  EXPECT_THROW(resolve_level("/nonexistent/level.lvl", clusters::Variant::M), ConfigError);
  c.unroll_length = 0;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Config, ShippedLevelsDropTheAvatarForAvatarFreeVariants) {
  auto m = resolve_level("clusters_0", clusters::Variant::M);
  auto ma = resolve_level("clusters_0", clusters::Variant::Ma);
  EXPECT_TRUE(m.agent.has_value());
  EXPECT_FALSE(ma.agent.has_value());
}

TEST(Metrics, WindowAndRows) {
  EpisodeWindow w(2);
  EXPECT_TRUE(std::isnan(w.reward_mean()));
  w.add({1.0, 10});
  w.add({2.0, 20});
  w.add({4.0, 30});
  EXPECT_EQ(w.reward_mean(), 3.0);
  EXPECT_EQ(w.length_mean(), 25.0);
  EXPECT_EQ(w.total(), 3u);
  EXPECT_EQ(csv_header(2),
            "env_steps,updates,episode_reward_mean,episode_length_mean,policy_loss,value_loss,entropy_c0,entropy_c1,"
            "clip_frac,snapshot_lag");
  MetricsRecord r;
  r.episode_reward_mean = std::nan("");
  r.entropy = {0.5, 0.25};
  EXPECT_NE(csv_row(r).find("nan"), std::string::npos);
  EXPECT_NE(json_line(r).find("\"episode_reward_mean\":null"), std::string::npos);
}

TEST(Threaded, SmallRunFinishes) {
  auto cfg = small_config();
  cfg.synchronous = false;
  cfg.num_actors = 2;
  cfg.envs_per_actor = 2;
  cfg.total_env_steps = 256;
  auto result = run_threaded(cfg);
  EXPECT_GE(result.env_steps, 256u);
  EXPECT_FALSE(result.records.empty());
  for (const auto& r : result.records) EXPECT_GE(r.snapshot_lag, 0.0);
}
