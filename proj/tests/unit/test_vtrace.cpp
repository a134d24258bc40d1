#include "cat/masked_policy.hpp"
#include "cat/vtrace.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace cat;

namespace {

ImportanceWeights unit_weights(std::size_t t_len, double rho = 1.0, double u = 1.0) {
  ImportanceWeights w;
  w.rho.assign(t_len, {rho});
  w.u.assign(t_len, {u});
  w.joint_rho.assign(t_len, rho);
  w.joint_u.assign(t_len, u);
  w.clip_fraction = {0.0};
  return w;
}

struct Random {
  std::vector<double> values, rewards, rho, u;
  std::vector<std::uint8_t> terminals;
};

Random random_case(Rng& rng, std::size_t t_len, double terminal_rate) {
  Random c;
  for (std::size_t t = 0; t <= t_len; ++t) c.values.push_back(4 * rng.uniform() - 2);
  for (std::size_t t = 0; t < t_len; ++t) {
    c.rewards.push_back(2 * rng.uniform() - 1);
    c.rho.push_back(1.5 * rng.uniform());
    c.u.push_back(1.5 * rng.uniform());
    c.terminals.push_back(rng.uniform() < terminal_rate ? 1 : 0);
  }
  return c;
}

ImportanceWeights weights_from(const Random& c) {
  ImportanceWeights w;
  for (std::size_t t = 0; t < c.rho.size(); ++t) {
    w.rho.push_back({c.rho[t]});
    w.u.push_back({c.u[t]});
  }
  w.joint_rho = c.rho;
  w.joint_u = c.u;
  return w;
}

Mask bits(const std::string& s) {
  Mask m(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) m.set(i, s[i] == '1');
  return m;
}

// Three steps over components of arity 3 and 2.
Trajectory fixture() {
  Trajectory tr;
  tr.observations = nn::Tensor<float>({4, 1, 1, 1});
  tr.selections = {{0, 1}, {2, 0}, {1, 1}};
  tr.masks = {{bits("111"), bits("11")}, {bits("101"), bits("10")}, {bits("011"), bits("11")}};
  tr.behaviour_log_probs = {{-1.2, -0.6}, {-0.4, 0.0}, {-0.9, -0.8}};
  tr.rewards = {0.5, -1.0, 1.0};
  tr.terminals = {0, 1, 0};
  return tr;
}

}  // namespace

TEST(ImportanceWeights, UnitRatio) {
  VTraceConfig cfg;
  cfg.rho_bar = 2.0;
  cfg.u_bar = 0.5;
  auto w = importance_weights({{-0.3, -1.0}}, {{-0.3, -1.0}}, cfg);
  EXPECT_EQ(w.rho[0], (std::vector<double>{1.0, 1.0}));
  EXPECT_EQ(w.u[0], (std::vector<double>{0.5, 0.5}));
  EXPECT_EQ(w.joint_rho[0], 1.0);
  EXPECT_EQ(w.joint_u[0], 0.25);
  EXPECT_EQ(w.clip_fraction, (std::vector<double>{0.0, 0.0}));
}

TEST(ImportanceWeights, ClipActive) {
  VTraceConfig cfg;
  auto w = importance_weights({{std::log(4.0) - 1.0}}, {{-1.0}}, cfg);
  EXPECT_EQ(w.rho[0][0], 1.0);
  EXPECT_EQ(w.clip_fraction[0], 1.0);
}

TEST(ImportanceWeights, UnclippedRatiosMatchProbabilityRatios) {
  Rng rng(12);
  VTraceConfig cfg;
  cfg.rho_bar = cfg.u_bar = 1e9;
  for (int i = 0; i < 500; ++i) {
    const double p = 0.01 + 0.98 * rng.uniform(), q = 0.01 + 0.98 * rng.uniform();
    auto w = importance_weights({{std::log(p)}}, {{std::log(q)}}, cfg);
    EXPECT_NEAR(w.rho[0][0], p / q, 1e-12 * std::max(1.0, p / q));
  }
}

TEST(ImportanceWeights, JointRatioIsClippedProductReclipped) {
  VTraceConfig cfg;
  cfg.rho_bar = 1.0;
  cfg.u_bar = 1.0;
  // ratios 0.5 and 3 -> clipped 0.5, 1 -> product 0.5
  auto w = importance_weights({{std::log(0.5), std::log(3.0)}}, {{0.0, 0.0}}, cfg);
  EXPECT_NEAR(w.joint_rho[0], 0.5, 1e-15);
  cfg.rho_bar = 4.0;
  w = importance_weights({{std::log(3.0), std::log(3.0)}}, {{0.0, 0.0}}, cfg);
  EXPECT_NEAR(w.joint_rho[0], 4.0, 1e-15);  // 9 re-clipped to 4
}

TEST(ImportanceWeights, RejectsNonFiniteRatios) {
  EXPECT_THROW(importance_weights({{1000.0}}, {{-1000.0}}, VTraceConfig{}), VTraceError);
  EXPECT_THROW(importance_weights({{0.0}}, {{0.0, 0.0}}, VTraceConfig{}), VTraceError);
}

TEST(VTraceTargets, OnPolicyTwoStepReturn) {
  VTraceConfig cfg;
  cfg.gamma = 1.0;
  std::vector<double> values = {0, 0, 0}, rewards = {1, 1};
  std::vector<std::uint8_t> terminals = {0, 0};
  auto out = vtrace_targets(values, rewards, terminals, unit_weights(2), cfg);
  EXPECT_EQ(out.v_targets, (std::vector<double>{2.0, 1.0}));
}

TEST(VTraceTargets, ZeroClipsReturnTheValues) {
  Rng rng(1);
  auto c = random_case(rng, 12, 0.2);
  VTraceConfig cfg;
  cfg.rho_bar = cfg.u_bar = 0.0;
  auto out = vtrace_targets(c.values, c.rewards, c.terminals, unit_weights(12, 0.0, 0.0), cfg);
  for (std::size_t t = 0; t < 12; ++t) EXPECT_EQ(out.v_targets[t], c.values[t]);
}

TEST(VTraceTargets, RecursionMatchesDoubleSum) {
  Rng rng(2);
  VTraceConfig cfg;
  cfg.gamma = 0.97;
  auto c = random_case(rng, 20, 0.15);
  auto out = vtrace_targets(c.values, c.rewards, c.terminals, weights_from(c), cfg);
  auto oracle = cat::testing::vtrace_double_sum(c.values, c.rewards, c.terminals, c.rho, c.u, cfg.gamma);
  for (std::size_t t = 0; t < 20; ++t) EXPECT_NEAR(out.v_targets[t], oracle[t], 1e-10);
}

TEST(VTraceTargets, OnPolicyReducesToNStepReturn) {
  Rng rng(3);
  VTraceConfig cfg;
  cfg.gamma = 0.9;
  auto c = random_case(rng, 15, 0.0);
  auto out = vtrace_targets(c.values, c.rewards, c.terminals, unit_weights(15), cfg);
  for (std::size_t t = 0; t < 15; ++t) {
    double ret = 0.0, disc = 1.0;
    for (std::size_t i = t; i < 15; ++i) {
      ret += disc * c.rewards[i];
      disc *= cfg.gamma;
    }
    ret += disc * c.values[15];
    EXPECT_NEAR(out.v_targets[t], ret, 1e-10);
  }
}

TEST(VTraceTargets, TerminalsSplitTheUnroll) {
  Rng rng(4);
  VTraceConfig cfg;
  auto c = random_case(rng, 10, 0.0);
  c.terminals[4] = 1;
  auto base = vtrace_targets(c.values, c.rewards, c.terminals, weights_from(c), cfg);
  // Changing post-terminal data leaves the first episode's targets alone.
  auto after = c;
  for (std::size_t t = 5; t < 10; ++t) after.rewards[t] += 3.0, after.values[t + 1] -= 2.0;
  auto a = vtrace_targets(after.values, after.rewards, after.terminals, weights_from(after), cfg);
  for (std::size_t t = 0; t <= 4; ++t) EXPECT_EQ(a.v_targets[t], base.v_targets[t]);
  // Changing pre-terminal data leaves the second episode's targets alone.
  auto before = c;
  for (std::size_t t = 0; t <= 4; ++t) before.rewards[t] -= 1.0, before.values[t] += 5.0;
  auto b = vtrace_targets(before.values, before.rewards, before.terminals, weights_from(before), cfg);
  for (std::size_t t = 5; t < 10; ++t) EXPECT_EQ(b.v_targets[t], base.v_targets[t]);
}

TEST(VTraceTargets, PolicyAdvantagePerComponent) {
  VTraceConfig cfg;
  cfg.gamma = 0.5;
  std::vector<double> values = {1.0, 2.0, 4.0}, rewards = {1.0, 3.0};
  std::vector<std::uint8_t> terminals = {0, 0};
  ImportanceWeights w = unit_weights(2);
  w.rho = {{0.5, 1.0}, {1.0, 0.25}};
  auto out = vtrace_targets(values, rewards, terminals, w, cfg);
  // v_1 = 2 + (3 + 0.5*4 - 2) = 5; adv_0 = 1 + 0.5*5 - 1 = 2.5; adv_1 = 3 + 0.5*4 - 2 = 3
  EXPECT_NEAR(out.v_targets[1], 5.0, 1e-15);
  EXPECT_NEAR(out.pg_advantages[0][0], 0.5 * 2.5, 1e-15);
  EXPECT_NEAR(out.pg_advantages[0][1], 2.5, 1e-15);
  EXPECT_NEAR(out.pg_advantages[1][1], 0.25 * 3.0, 1e-15);
}

TEST(VTraceTargets, LengthMismatch) {
  std::vector<double> values = {0, 0}, rewards = {1, 1};
  std::vector<std::uint8_t> terminals = {0, 0};
  EXPECT_THROW(vtrace_targets(values, rewards, terminals, unit_weights(2), VTraceConfig{}), VTraceError);
}

TEST(Losses, ZeroAdvantagesAndNoEntropyGiveZeroPolicyLoss) {
  auto tr = fixture();
  const std::vector<int> arities = {3, 2};
  std::vector<double> logits(15, 0.3), values = {0, 0, 0, 0};
  VTraceOutput vt;
  vt.v_targets = {0, 0, 0};
  vt.pg_advantages.assign(3, {0.0, 0.0});
  VTraceConfig cfg;
  cfg.entropy_cost = 0.0;
  LossGradients g;
  auto terms = vtrace_losses(logits, arities, tr, values, vt, cfg, &g);
  EXPECT_EQ(terms.policy, 0.0);
  EXPECT_EQ(terms.total, 0.0);
  for (double v : g.logits) EXPECT_EQ(v, 0.0);
}

TEST(Losses, ForcedActionsCarryNoPolicyGradient) {
  auto tr = fixture();
  for (std::size_t t = 0; t < 3; ++t)
    for (std::size_t k = 0; k < 2; ++k)
      tr.masks[t][k] = Mask::one_hot(k == 0 ? 3 : 2, static_cast<std::size_t>(tr.selections[t][k]));
  const std::vector<int> arities = {3, 2};
  Rng rng(5);
  std::vector<double> logits(15), values = {0.1, 0.2, 0.3, 0.4};
  for (auto& l : logits) l = rng.uniform();
  VTraceOutput vt;
  vt.v_targets = {0.1, 0.2, 0.3};
  vt.pg_advantages = {{1.0, -2.0}, {0.5, 3.0}, {-1.0, 1.0}};
  LossGradients g;
  auto terms = vtrace_losses(logits, arities, tr, values, vt, VTraceConfig{}, &g);
  EXPECT_EQ(terms.policy, 0.0);
  EXPECT_EQ(terms.entropy, 0.0);
  for (double v : g.logits) EXPECT_EQ(v, 0.0);
}

TEST(Losses, FiniteDifferenceCheckOfTheFullLoss) {
  auto tr = fixture();
  const std::vector<int> arities = {3, 2};
  Rng rng(6);
  std::vector<double> logits(15), values(4);
  for (auto& l : logits) l = 2 * rng.uniform() - 1;
  for (auto& v : values) v = rng.uniform();
  VTraceConfig cfg;
  cfg.entropy_cost = 0.3;
  cfg.baseline_cost = 0.7;
  // Targets and advantages come from the current logits, then stay fixed.
  const auto target = target_log_probs(logits, arities, tr);
  const auto w = importance_weights(target, tr.behaviour_log_probs, cfg);
  const auto vt = vtrace_targets(values, tr.rewards, tr.terminals, w, cfg);
  LossGradients g;
  vtrace_losses(logits, arities, tr, values, vt, cfg, &g);

  auto f_logits = [&](const std::vector<double>& x) { return vtrace_losses(x, arities, tr, values, vt, cfg).total; };
  auto num_l = cat::testing::numeric_gradient(f_logits, logits);
  EXPECT_LT(cat::testing::max_relative_error(g.logits, num_l), 1e-4);
  auto f_values = [&](const std::vector<double>& x) { return vtrace_losses(logits, arities, tr, x, vt, cfg).total; };
  auto num_v = cat::testing::numeric_gradient(f_values, values);
  num_v.pop_back();  // V(s_T) only enters through the fixed targets
  EXPECT_LT(cat::testing::max_relative_error(g.values, num_v), 1e-4);
}

TEST(Losses, MaskedLogitsReceiveNoGradient) {
  auto tr = fixture();
  const std::vector<int> arities = {3, 2};
  std::vector<double> logits(15, 0.2), values(4, 0.0);
  VTraceOutput vt;
  vt.v_targets = {1, 1, 1};
  vt.pg_advantages = {{1, 1}, {1, 1}, {1, 1}};
  LossGradients g;
  vtrace_losses(logits, arities, tr, values, vt, VTraceConfig{}, &g);
  EXPECT_EQ(g.logits[5 + 1], 0.0);  // step 1, component 0, value 1 masked
  EXPECT_EQ(g.logits[5 + 4], 0.0);  // step 1, component 1, value 1 masked
  EXPECT_EQ(g.logits[10 + 0], 0.0);
}

TEST(Trajectory, Validation) {
  auto tr = fixture();
  EXPECT_NO_THROW(tr.validate());
  auto bad = tr;
  bad.selections[1][0] = 1;  // masked out at step 1
  EXPECT_THROW(bad.validate(), VTraceError);
  bad = tr;
  bad.behaviour_log_probs[0][0] = 0.1;
  EXPECT_THROW(bad.validate(), VTraceError);
  bad = tr;
  bad.rewards.pop_back();
  EXPECT_THROW(bad.validate(), VTraceError);
  bad = tr;
  bad.observations = nn::Tensor<float>({3, 1, 1, 1});
  EXPECT_THROW(bad.validate(), VTraceError);
}

TEST(TargetLogProbs, NeverAssignMassOutsideStoredMasks) {
  Rng rng(7);
  const std::vector<int> arities = {4, 3};
  for (int i = 0; i < 200; ++i) {
    std::vector<double> row(7);
    for (auto& v : row) v = 4 * rng.uniform() - 2;
    auto valid = cat::testing::random_valid_tree(rng, arities, 0.5);
    auto s = sample_factored(split_logits(row, arities), valid, MaskingMode::Conditional, rng);
    ASSERT_TRUE(s);
    Trajectory tr;
    tr.observations = nn::Tensor<float>({2, 1, 1, 1});
    tr.selections = {s->path.selections};
    tr.masks = {s->path.masks};
    tr.behaviour_log_probs = {s->log_probs};
    tr.rewards = {0};
    tr.terminals = {0};
    auto lp = target_log_probs(row, arities, tr);
    for (std::size_t k = 0; k < 2; ++k) EXPECT_DOUBLE_EQ(lp[0][k], s->log_probs[k]);
    for (std::size_t k = 0; k < 2; ++k) {
      MaskedCategorical d(split_logits(row, arities)[k], s->path.masks[k]);
      for (std::size_t v = 0; v < d.size(); ++v)
        if (!s->path.masks[k].test(v)) {
          EXPECT_EQ(d.probabilities()[v], 0.0);
        }
    }
  }
}

TEST(Config, Validation) {
  VTraceConfig c;
  EXPECT_NO_THROW(c.validate());
  c.gamma = 0.0;
  EXPECT_THROW(c.validate(), VTraceError);
  c = VTraceConfig{};
  c.rho_bar = -1;
  EXPECT_THROW(c.validate(), VTraceError);
  c = VTraceConfig{};
  c.u_bar = 2.0;
  EXPECT_FALSE(c.clip_order_ok());
}
