#pragma once

/**
 * Reward assignment for division and conquering responses.
 *
 * Conquering reward: indicator that the final boxed answer matches the
 * reference (optionally gated on the per-index "subproblem i" coverage
 * constraint). Division reward combines format validity, a minimum subproblem
 * count, and helpfulness: a group whose conquers all fail earns 0 only when
 * some sibling group of the same problem produced a correct conquer. The
 * accuracy-proportional variant (reward = group conquering accuracy) is kept
 * as a configurable mode; it is the scheme that drives the policy to solve
 * problems inside the division response instead of decomposing them.
 */

#include <span>
#include <stdexcept>
#include <vector>

#include "dacforge/parse.hpp"

namespace dacforge::reward {

struct ConquerOutcome {
  bool correct = false;
  bool truncated = false;  // truncated responses are never correct
  std::optional<bool> coverage_ok;
};

enum class DivisionRewardMode { eq2, accuracy_variant };

struct DivisionRewardInput {
  parse::SubproblemGroup group;
  int min_subproblems = 3;  // N_s
  std::vector<ConquerOutcome> group_outcomes;
  bool sibling_any_correct = false;
};

inline double conquer_reward(const ConquerOutcome& outcome, bool format_constraint) {
  if (format_constraint && !outcome.coverage_ok.has_value())
    throw std::invalid_argument("conquer_reward: format constraint requires coverage_ok");
  bool correct = outcome.correct && !outcome.truncated;
  if (format_constraint) return correct && *outcome.coverage_ok ? 1.0 : 0.0;
  return correct ? 1.0 : 0.0;
}

/// Fraction of correct conquers in a group (CA).
inline double conquer_accuracy(std::span<const ConquerOutcome> outcomes) {
  if (outcomes.empty()) throw std::invalid_argument("conquer_accuracy: empty outcome list");
  size_t correct = 0;
  for (const auto& o : outcomes) {
    if (o.correct && !o.truncated) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(outcomes.size());
}

inline double division_reward(const DivisionRewardInput& in) {
  if (!in.group.format_valid ||
      static_cast<int>(in.group.subproblems.size()) < in.min_subproblems)
    return 0.0;
  double ca = in.group_outcomes.empty()
                  ? 0.0
                  : conquer_accuracy(std::span<const ConquerOutcome>(in.group_outcomes));
  if (ca == 0.0 && in.sibling_any_correct) return 0.0;
  return 1.0;
}

inline double division_reward_accuracy_variant(const DivisionRewardInput& in) {
  if (!in.group.format_valid ||
      static_cast<int>(in.group.subproblems.size()) < in.min_subproblems)
    return 0.0;
  return in.group_outcomes.empty()
             ? 0.0
             : conquer_accuracy(std::span<const ConquerOutcome>(in.group_outcomes));
}

}  // namespace dacforge::reward
