#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "lte/grpo.hpp"
#include "lte/policy.hpp"
#include "lte/task.hpp"

namespace lte {

// G rollouts sampled for one query from its plain prompt.
struct RolloutGroup {
  Query query;
  std::vector<Rollout> rollouts;
};

enum class PassClass { NonePass, SomePass, AllPass };
enum class TruncClass { AllTruncated, SomeTruncated, NoneTruncated };

const char* to_string(PassClass c);
const char* to_string(TruncClass c);

struct GroupStatus {
  PassClass pass_class = PassClass::NonePass;
  TruncClass trunc_class = TruncClass::NoneTruncated;
  // Distinct answers extracted from non-truncated failed rollouts, sorted.
  // Never contains the query truth.
  std::vector<int> wrong_answers;
};

GroupStatus classify_group(const RolloutGroup& group);

// Census-driven template choice for a none-pass group: every rollout
// truncated means the budget is the problem (Concise, no answers to rule
// out); a mix adds the wrong answers to the brevity nudge (ConciseHint); no
// truncation means the policy commits to wrong answers (Hint). Throws unless
// status is NonePass.
HintSpec select_hint(const GroupStatus& status);

// Samples group_size rollouts conditioned on render_prompt(q, spec), verifies
// each, and marks them hinted/off-policy when the spec is not Plain. A Plain
// spec yields ordinary on-policy rollouts (the no-hint ablation).
std::vector<Rollout> hinted_extra_rollouts(const PolicyParams& params, const Vocab& vocab,
                                           const Query& q, const HintSpec& spec, int group_size,
                                           const SampleConfig& cfg, Rng& rng);

// Result of swapping correct extra rollouts into a none-pass group. Rollouts
// are ordered extras first, then the surviving initial rollouts in their
// original order. Advantages are recomputed over the post-replacement
// rewards.
struct MixedGroup {
  std::vector<Rollout> rollouts;
  std::vector<double> rewards;
  GroupAdvantages advantages;
  std::vector<int> replaced_indices;  // initial slots that were dropped, sorted
};

// Uniformly chooses |extras_correct| of the initial rollouts to drop (seeded,
// reproducible). Requires every extra to carry reward 1 and
// |extras_correct| <= G.
MixedGroup replace(const RolloutGroup& initial, std::span<const Rollout> extras_correct,
                   uint64_t seed);

// f(r) = r / (r + gamma): bounded in [0,1), monotone, f(gamma)=1/2. Throws on
// negative inputs.
double shape_ratio(double raw_ratio, double gamma);

// Off-policy importance ratio with the behavior-policy term fixed to 1, so it
// reduces to the new policy's token probability under the plain prompt.
double offpolicy_ratio(double new_logprob);

// Mixed objective: clipped surrogate over on-policy rollouts (normalizer Z)
// plus shaped unclipped terms over off-policy rollouts (normalizer Z'). With
// zero off-policy rollouts this is bit-identical to grpo_loss_and_grad.
LossBreakdown mixed_loss_and_grad(const PolicyParams& params, const PolicyParams* ref_params,
                                  std::span<const UpdateGroup> groups, const LossConfig& cfg,
                                  std::vector<double>& grad);

}  // namespace lte
