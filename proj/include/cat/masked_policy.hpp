#pragma once

#include "cat/action_tree.hpp"
#include "cat/random.hpp"

#include <optional>
#include <span>
#include <string_view>
#include <vector>

namespace cat {

class PolicyError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// How masks are derived while sampling a factored action.
///  - Conditional: walk the valid tree; each component's mask depends on the
///    values already chosen (CAT_CD).
///  - Collapsed: one union mask per depth, independent of earlier choices (CAT_CL).
///  - None: all-ones masks; components are sampled independently.
enum class MaskingMode { Conditional, Collapsed, None };

MaskingMode parse_masking_mode(std::string_view text);
std::string_view to_string(MaskingMode mode);

/// Offset added to masked-out logits by `mask_logits`. Sampling and
/// log-probabilities never use it: masked entries are excluded from the
/// normalisation, which gives exact zeros.
inline constexpr double kMaskedLogitOffset = -1e9;

/// Dense masked logits l + m, with m_i = kMaskedLogitOffset where the mask is 0.
std::vector<double> mask_logits(std::span<const double> logits, const Mask& mask);

/// Categorical distribution over the mask's allowed entries.
class MaskedCategorical {
 public:
  MaskedCategorical(std::span<const double> logits, Mask mask);

  std::size_t size() const { return probs_.size(); }
  const Mask& mask() const { return mask_; }

  /// Exactly zero on masked entries.
  std::span<const double> probabilities() const { return probs_; }

  /// Log-probability of `index`; -infinity when it is masked out.
  double log_prob(std::size_t index) const { return log_probs_.at(index); }

  double entropy() const;

  struct Draw {
    int index;
    double log_prob;
  };

  /// Inverse-CDF draw over allowed indices from a single uniform variate.
  Draw sample(Rng& rng) const { return sample_with(rng.uniform()); }
  Draw sample_with(double u) const;

 private:
  Mask mask_;
  std::vector<double> log_probs_;
  std::vector<double> probs_;
};

/// Selections c_0..c_K together with the masks they were drawn under.
struct TreePath {
  Path selections;
  std::vector<Mask> masks;
};

struct FactoredSample {
  TreePath path;
  std::vector<double> log_probs;
  double total_log_prob = 0.0;
  std::vector<double> entropies;
};

using LogitGroups = std::vector<std::span<const double>>;

/// Splits one flat logit row into per-component views.
LogitGroups split_logits(std::span<const double> row, std::span<const int> arities);

/// Samples every component of an action. Returns nullopt when masks are
/// required (Conditional, Collapsed) and the valid tree is empty, so the
/// caller can issue an environment no-op.
std::optional<FactoredSample> sample_factored(const LogitGroups& logits, const ValidActionTree& valid,
                                              MaskingMode mode, Rng& rng);

/// Recomputes log pi(c_k | m_k, s) under the current logits and the stored
/// masks. Throws when a selection lies outside its stored mask.
std::vector<double> log_prob_of(std::span<const int> selections, const LogitGroups& logits,
                                std::span<const Mask> masks);

}  // namespace cat
