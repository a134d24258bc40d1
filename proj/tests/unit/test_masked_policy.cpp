#include "cat/masked_policy.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

using namespace cat;

namespace {

Mask bits(const std::string& s) {
  Mask m(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) m.set(i, s[i] == '1');
  return m;
}

// Reference softmax over the dense masked logits l + m.
std::vector<double> dense_softmax(const std::vector<double>& logits, const Mask& mask) {
  auto z = mask_logits(logits, mask);
  const double mx = *std::max_element(z.begin(), z.end());
  std::vector<double> p(z.size());
  double s = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) s += p[i] = std::exp(z[i] - mx);
  for (auto& v : p) v /= s;
  return p;
}

}  // namespace

TEST(MaskedCategorical, MaskedEntriesAreExactlyZero) {
  std::vector<double> logits = {0.3, 2.0, -1.0, 5.0};
  MaskedCategorical d(logits, bits("1010"));
  EXPECT_EQ(d.probabilities()[1], 0.0);
  EXPECT_EQ(d.probabilities()[3], 0.0);
  EXPECT_NEAR(d.probabilities()[0] + d.probabilities()[2], 1.0, 1e-15);
  EXPECT_TRUE(std::isinf(d.log_prob(3)));
  const double expect0 = std::exp(0.3) / (std::exp(0.3) + std::exp(-1.0));
  EXPECT_NEAR(d.probabilities()[0], expect0, 1e-15);
}

TEST(MaskedCategorical, AgreesWithDenseOffsetForm) {
  Rng rng(3);
  for (int i = 0; i < 200; ++i) {
    const std::size_t n = 1 + rng.below(10);
    std::vector<double> logits(n);
    for (auto& l : logits) l = 10 * (rng.uniform() - 0.5);
    Mask m(n);
    for (std::size_t j = 0; j < n; ++j) m.set(j, rng.uniform() < 0.6);
    if (!m.any()) m.set(0);
    MaskedCategorical d(logits, m);
    const auto ref = dense_softmax(logits, m);
    for (std::size_t j = 0; j < n; ++j) EXPECT_NEAR(d.probabilities()[j], ref[j], 1e-12);
  }
}

TEST(MaskedCategorical, EntropyMatchesDefinition) {
  std::vector<double> logits = {1.0, 0.0, -2.0, 0.5};
  MaskedCategorical d(logits, bits("1101"));
  double h = 0.0;
  for (double p : d.probabilities())
    if (p > 0) h -= p * std::log(p);
  EXPECT_NEAR(d.entropy(), h, 1e-14);
  MaskedCategorical forced(logits, bits("0010"));
  EXPECT_EQ(forced.entropy(), 0.0);
  EXPECT_EQ(forced.log_prob(2), 0.0);
}

TEST(MaskedCategorical, InverseCdfDraws) {
  std::vector<double> logits = {0.0, 0.0, 0.0, 0.0};
  MaskedCategorical d(logits, bits("0101"));
  EXPECT_EQ(d.sample_with(0.0).index, 1);
  EXPECT_EQ(d.sample_with(0.49).index, 1);
  EXPECT_EQ(d.sample_with(0.51).index, 3);
  EXPECT_EQ(d.sample_with(0.999999).index, 3);
  EXPECT_NEAR(d.sample_with(0.2).log_prob, std::log(0.5), 1e-15);
}

TEST(MaskedCategorical, RejectsBadInput) {
  std::vector<double> logits = {0.0, 1.0};
  EXPECT_THROW(MaskedCategorical(logits, bits("00")), PolicyError);
  EXPECT_THROW(MaskedCategorical(logits, bits("1")), PolicyError);
  std::vector<double> bad = {0.0, std::nan("")};
  EXPECT_THROW(MaskedCategorical(bad, bits("11")), PolicyError);
}

TEST(MaskingMode, Parse) {
  EXPECT_EQ(parse_masking_mode("cd"), MaskingMode::Conditional);
  EXPECT_EQ(parse_masking_mode("cl"), MaskingMode::Collapsed);
  EXPECT_EQ(parse_masking_mode("none"), MaskingMode::None);
  EXPECT_THROW(parse_masking_mode("sometimes"), PolicyError);
}

TEST(SampleFactored, ConditionalStaysInsideTheValidTree) {
  ValidActionTree t({3, 4});
  t.insert(Path{0, 1});
  t.insert(Path{2, 3});
  std::vector<double> row(7, 0.0);
  const std::vector<int> arities = {3, 4};
  auto groups = split_logits(row, arities);
  Rng rng(1);
  for (int i = 0; i < 500; ++i) {
    auto s = sample_factored(groups, t, MaskingMode::Conditional, rng);
    ASSERT_TRUE(s);
    EXPECT_TRUE(t.contains(s->path.selections));
    EXPECT_NEAR(s->total_log_prob, std::log(0.5), 1e-12);
    for (std::size_t k = 0; k < 2; ++k) EXPECT_TRUE(s->path.masks[k].test(static_cast<std::size_t>(s->path.selections[k])));
  }
}

TEST(SampleFactored, CollapsedUsesUnionMasks) {
  ValidActionTree t({3, 4});
  t.insert(Path{0, 1});
  t.insert(Path{2, 3});
  std::vector<double> row(7, 0.0);
  const std::vector<int> arities = {3, 4};
  auto groups = split_logits(row, arities);
  Rng rng(2);
  bool saw_outside = false;
  for (int i = 0; i < 500; ++i) {
    auto s = sample_factored(groups, t, MaskingMode::Collapsed, rng);
    ASSERT_TRUE(s);
    EXPECT_EQ(s->path.masks[1].to_string(), "0101");
    saw_outside |= !t.contains(s->path.selections);
  }
  EXPECT_TRUE(saw_outside);  // (0,3) and (2,1) are reachable under the union
}

TEST(SampleFactored, NoneIgnoresTheTreeAndEmptyTreeSignalsNoAction) {
  ValidActionTree empty({3, 4});
  std::vector<double> row(7, 0.0);
  const std::vector<int> arities = {3, 4};
  auto groups = split_logits(row, arities);
  Rng rng(4);
  EXPECT_FALSE(sample_factored(groups, empty, MaskingMode::Conditional, rng));
  EXPECT_FALSE(sample_factored(groups, empty, MaskingMode::Collapsed, rng));
  auto s = sample_factored(groups, empty, MaskingMode::None, rng);
  ASSERT_TRUE(s);
  EXPECT_EQ(s->path.masks[0], Mask::all(3));
  EXPECT_EQ(s->path.masks[1], Mask::all(4));
}

TEST(LogProbOf, RecomputesUnderStoredMasksAndRejectsOutsiders) {
  std::vector<double> row = {0.1, 0.7, -0.3, 1.0, 2.0, 0.0, 0.5};
  const std::vector<int> arities = {3, 4};
  auto groups = split_logits(row, arities);
  std::vector<Mask> masks = {bits("110"), bits("0011")};
  const std::vector<int> sel = {1, 2};
  auto lp = log_prob_of(sel, groups, masks);
  EXPECT_NEAR(lp[0], 0.7 - std::log(std::exp(0.1) + std::exp(0.7)), 1e-14);
  EXPECT_NEAR(lp[1], 0.0 - std::log(std::exp(0.0) + std::exp(0.5)), 1e-14);
  const std::vector<int> outside = {2, 2};
  EXPECT_THROW(log_prob_of(outside, groups, masks), PolicyError);
}

TEST(ConditionalEntropy, ConditioningNeverIncreasesEntropy) {
  // Joint distribution of (C0, C1) induced by conditional sampling on a tree.
  Rng rng(8);
  for (int i = 0; i < 100; ++i) {
    const std::vector<int> arities = {1 + int(rng.below(5)), 1 + int(rng.below(5))};
    auto t = cat::testing::random_valid_tree(rng, arities, 0.5);
    std::vector<double> row(static_cast<std::size_t>(arities[0] + arities[1]));
    for (auto& v : row) v = 3 * (rng.uniform() - 0.5);
    auto groups = split_logits(row, arities);
    std::vector<std::vector<double>> joint(static_cast<std::size_t>(arities[0]),
                                           std::vector<double>(static_cast<std::size_t>(arities[1]), 0.0));
    MaskedCategorical d0(groups[0], derive_mask(t, Path{}));
    for (int a = 0; a < arities[0]; ++a) {
      if (d0.probabilities()[a] == 0.0) continue;
      MaskedCategorical d1(groups[1], derive_mask(t, Path{a}));
      for (int b = 0; b < arities[1]; ++b) joint[a][b] = d0.probabilities()[a] * d1.probabilities()[b];
    }
    std::vector<double> p1(static_cast<std::size_t>(arities[1]), 0.0);
    for (const auto& r : joint)
      for (std::size_t b = 0; b < r.size(); ++b) p1[b] += r[b];
    double h1 = 0.0, h1_given_0 = 0.0;
    for (double p : p1)
      if (p > 0) h1 -= p * std::log(p);
    for (std::size_t a = 0; a < joint.size(); ++a) {
      const double pa = d0.probabilities()[a];
      for (double pab : joint[a])
        if (pab > 0) h1_given_0 -= pab * std::log(pab / pa);
    }
    EXPECT_LE(h1_given_0, h1 + 1e-12);
  }
}
