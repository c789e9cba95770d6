#pragma once

#include <span>
#include <vector>

#include "lte/policy.hpp"
#include "lte/task.hpp"

namespace lte {

// Group-relative advantages: (R_i - mean) / population std, broadcast to every
// token of rollout i. All-equal rewards give all zeros instead of dividing by
// a zero std; such a group carries no relative signal.
struct GroupAdvantages {
  std::vector<double> values;
  double mean = 0.0;
  double stddev = 0.0;
};

GroupAdvantages compute_advantages(std::span<const double> rewards);

double importance_ratio(double new_logprob, double old_logprob);

// min(r * A, clamp(r, 1-eps, 1+eps) * A), the pessimistic PPO clip.
double clipped_term(double ratio, double advantage, double clip_eps);

// Nonnegative per-token KL estimate exp(ref-new) - (ref-new) - 1.
double kl_penalty(double new_logprob, double ref_logprob);

struct LossConfig {
  double clip_eps = 0.2;
  double kl_beta = 0.001;
  double entropy_coef = 0.0;
  double shaping_gamma = 0.1;
  // When true, the KL and entropy terms also cover off-policy tokens (and
  // their normalizer grows accordingly). Off by default: the mixed objective
  // regularizes only the on-policy half.
  bool regularize_offpolicy = false;
};

// One prompt's worth of rollouts entering an update, with advantages already
// computed over its reward vector. plain_prompt is the unhinted prompt for
// the underlying query: off-policy rollouts are optimized conditioned on it
// rather than on the prompt they were generated from.
struct UpdateGroup {
  std::vector<Token> plain_prompt;
  std::vector<Rollout> rollouts;
  std::vector<double> advantages;
};

// All terms follow the maximization sign convention: total is the objective
// the optimizer ascends. kl and entropy are the raw normalized sums, so
// total = surrogate + offpolicy_surrogate - kl_beta*kl + entropy_coef*entropy.
struct LossBreakdown {
  double surrogate = 0.0;
  double offpolicy_surrogate = 0.0;
  double kl = 0.0;
  double entropy = 0.0;
  double total = 0.0;
  long long onpolicy_tokens = 0;   // Z, summed over the whole batch
  long long offpolicy_tokens = 0;  // Z'
};

// Token-normalized clipped-surrogate objective with KL penalty and entropy
// bonus, plus its exact gradient (accumulated into grad, which is zeroed
// first). ref_params may be null when kl_beta is 0. Throws on an empty batch,
// missing old_logprobs, or any off-policy rollout.
LossBreakdown grpo_loss_and_grad(const PolicyParams& params, const PolicyParams* ref_params,
                                 std::span<const UpdateGroup> groups, const LossConfig& cfg,
                                 std::vector<double>& grad);

namespace detail {
// Shared core for the plain and mixed objectives. The mixed objective with
// zero off-policy rollouts runs the identical instruction sequence as the
// plain one, so the two agree bitwise in that case.
LossBreakdown loss_and_grad(const PolicyParams& params, const PolicyParams* ref_params,
                            std::span<const UpdateGroup> groups, const LossConfig& cfg,
                            bool allow_offpolicy, std::vector<double>& grad);
}  // namespace detail

}  // namespace lte
