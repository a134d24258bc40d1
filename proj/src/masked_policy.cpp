#include "cat/masked_policy.hpp"

#include <fmt/format.h>

#include <cmath>
#include <limits>
#include <numeric>

namespace cat {

MaskingMode parse_masking_mode(std::string_view text) {
  if (text == "cd" || text == "conditional") return MaskingMode::Conditional;
  if (text == "cl" || text == "collapsed") return MaskingMode::Collapsed;
  if (text == "none") return MaskingMode::None;
  throw PolicyError(fmt::format("unknown masking mode '{}' (expected none, cl or cd)", text));
}

std::string_view to_string(MaskingMode mode) {
  switch (mode) {
    case MaskingMode::Conditional: return "cd";
    case MaskingMode::Collapsed: return "cl";
    case MaskingMode::None: return "none";
  }
  return "?";
}

std::vector<double> mask_logits(std::span<const double> logits, const Mask& mask) {
  if (logits.size() != mask.size())
    throw PolicyError(fmt::format("logit length {} does not match mask length {}", logits.size(), mask.size()));
  if (!mask.any()) throw PolicyError("mask has no allowed entries");
  std::vector<double> out(logits.begin(), logits.end());
  for (std::size_t i = 0; i < out.size(); ++i)
    if (!mask.test(i)) out[i] += kMaskedLogitOffset;
  return out;
}

MaskedCategorical::MaskedCategorical(std::span<const double> logits, Mask mask) : mask_(std::move(mask)) {
  if (logits.size() != mask_.size())
    throw PolicyError(fmt::format("logit length {} does not match mask length {}", logits.size(), mask_.size()));
  if (!mask_.any()) throw PolicyError("mask has no allowed entries");

  double max_logit = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < logits.size(); ++i) {
    if (!std::isfinite(logits[i])) throw PolicyError(fmt::format("logit {} is not finite", i));
    if (mask_.test(i)) max_logit = std::max(max_logit, logits[i]);
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i)
    if (mask_.test(i)) sum += std::exp(logits[i] - max_logit);
  const double log_norm = max_logit + std::log(sum);

  log_probs_.assign(logits.size(), -std::numeric_limits<double>::infinity());
  probs_.assign(logits.size(), 0.0);
  for (std::size_t i = 0; i < logits.size(); ++i) {
    if (!mask_.test(i)) continue;
    log_probs_[i] = logits[i] - log_norm;
    probs_[i] = std::exp(log_probs_[i]);
  }
}

double MaskedCategorical::entropy() const {
  double h = 0.0;
  for (std::size_t i = 0; i < probs_.size(); ++i)
    if (probs_[i] > 0.0) h -= probs_[i] * log_probs_[i];
  return h;
}

MaskedCategorical::Draw MaskedCategorical::sample_with(double u) const {
  double cumulative = 0.0;
  std::size_t last_allowed = 0;
  for (std::size_t i = 0; i < probs_.size(); ++i) {
    if (!mask_.test(i)) continue;
    last_allowed = i;
    cumulative += probs_[i];
    if (u < cumulative) return {static_cast<int>(i), log_probs_[i]};
  }
  // Rounding left u above the final cumulative sum.
  return {static_cast<int>(last_allowed), log_probs_[last_allowed]};
}

LogitGroups split_logits(std::span<const double> row, std::span<const int> arities) {
  LogitGroups groups;
  std::size_t offset = 0;
  for (int a : arities) {
    auto n = static_cast<std::size_t>(a);
    if (offset + n > row.size()) throw PolicyError("logit row is shorter than the summed arities");
    groups.push_back(row.subspan(offset, n));
    offset += n;
  }
  if (offset != row.size())
    throw PolicyError(fmt::format("logit row has {} entries, arities sum to {}", row.size(), offset));
  return groups;
}

std::optional<FactoredSample> sample_factored(const LogitGroups& logits, const ValidActionTree& valid,
                                              MaskingMode mode, Rng& rng) {
  const std::size_t depth = valid.depth();
  if (logits.size() != depth)
    throw PolicyError(fmt::format("{} logit groups for a tree of depth {}", logits.size(), depth));
  for (std::size_t k = 0; k < depth; ++k)
    if (logits[k].size() != static_cast<std::size_t>(valid.arities()[k]))
      throw PolicyError(fmt::format("logit group {} has width {}, component arity is {}", k, logits[k].size(),
                                    valid.arities()[k]));

  if (mode != MaskingMode::None && valid.empty()) return std::nullopt;

  std::vector<Mask> collapsed;
  if (mode == MaskingMode::Collapsed) collapsed = collapse_masks(valid);

  FactoredSample out;
  out.path.selections.reserve(depth);
  for (std::size_t k = 0; k < depth; ++k) {
    Mask mask;
    switch (mode) {
      case MaskingMode::Conditional: mask = derive_mask(valid, out.path.selections); break;
      case MaskingMode::Collapsed: mask = collapsed[k]; break;
      case MaskingMode::None: mask = Mask::all(logits[k].size()); break;
    }
    MaskedCategorical dist(logits[k], mask);
    auto draw = dist.sample(rng);
    out.path.selections.push_back(draw.index);
    out.path.masks.push_back(std::move(mask));
    out.log_probs.push_back(draw.log_prob);
    out.entropies.push_back(dist.entropy());
    out.total_log_prob += draw.log_prob;
  }
  return out;
}

std::vector<double> log_prob_of(std::span<const int> selections, const LogitGroups& logits,
                                std::span<const Mask> masks) {
  if (selections.size() != logits.size() || masks.size() != logits.size())
    throw PolicyError(fmt::format("replay shape mismatch: {} selections, {} logit groups, {} masks",
                                  selections.size(), logits.size(), masks.size()));
  std::vector<double> out;
  out.reserve(selections.size());
  for (std::size_t k = 0; k < selections.size(); ++k) {
    auto c = selections[k];
    if (c < 0 || static_cast<std::size_t>(c) >= masks[k].size() || !masks[k].test(static_cast<std::size_t>(c)))
      throw PolicyError(fmt::format("selection {} of component {} lies outside its stored mask {}", c, k,
                                    masks[k].to_string()));
    MaskedCategorical dist(logits[k], masks[k]);
    out.push_back(dist.log_prob(static_cast<std::size_t>(c)));
  }
  return out;
}

}  // namespace cat
