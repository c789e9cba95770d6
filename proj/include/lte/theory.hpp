#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "lte/policy.hpp"
#include "lte/task.hpp"

namespace lte {

// Marginal distribution over the extracted answer for responses to one
// prompt: mass per answer value plus the mass of responses with no valid
// answer (truncated, no marker, or a marker not followed by a digit).
struct AnswerDistribution {
  enum class Provenance { Exact, MonteCarlo };

  int modulus = 0;
  std::vector<double> answer_mass;
  double no_answer_mass = 0.0;
  Provenance provenance = Provenance::Exact;
  long long sample_count = 0;  // Monte-Carlo only

  double total() const;
};

// Exact forward dynamic programming over (context window, extraction state).
// The window is the policy's entire context, so the chain over windows is
// Markov and the state space stays bounded regardless of sequence length.
// Throws std::length_error when live_states * vocab exceeds work_budget.
AnswerDistribution enumerate_answer_distribution(const PolicyParams& params, const Vocab& vocab,
                                                 std::span<const Token> prompt, int max_new_tokens,
                                                 uint64_t work_budget = 50'000'000);

AnswerDistribution monte_carlo_answer_distribution(const PolicyParams& params, const Vocab& vocab,
                                                   std::span<const Token> prompt,
                                                   int max_new_tokens, long long samples,
                                                   uint64_t seed);

// Distribution of an idealized hint follower: the listed answers' mass is
// removed and the remainder renormalized. Throws when nothing remains.
AnswerDistribution prune_distribution(const AnswerDistribution& base, std::span<const int> wrongs);

struct RatioCheck {
  bool defined = false;  // false when the base puts zero mass on the truth
  double ratio = 0.0;
  bool exceeds_one = false;
};

// pruned P(truth) / base P(truth), the measured counterpart of the pruning
// lower bound.
RatioCheck verify_ratio_exceeds_one(const AnswerDistribution& base,
                                    const AnswerDistribution& pruned, int truth);

// alpha * (1 + delta / (1 - tau^(1/n))): lower bound on the success-probability
// ratio after pruning a delta-mass failure region at confidence tau over n
// candidate states. Strictly increasing in delta, tau, and n.
double pruning_bound(double alpha, double delta, double tau, double n);

struct InfoGain {
  double joint = 0.0;            // I(pi; D, H)
  double data_only = 0.0;        // I(pi; D)
  double hint_given_data = 0.0;  // I(pi; H | D)
};

// Brute-force mutual informations over a small finite joint p(pi, d, h),
// passed flattened with pi fastest-last: joint[(i*nd + j)*nh + k]. Verifies
// the chain rule joint = data_only + hint_given_data within 1e-9 and
// hint_given_data >= 0, throwing std::logic_error otherwise.
InfoGain information_gain_check(std::span<const double> joint, int n_pi, int n_d, int n_h);

// Rejection sampler realizing prune_distribution at the sequence level:
// resamples until the extracted answer avoids the listed wrong answers (a
// response with no valid answer is accepted; only wrong answers are pruned).
struct HintRespectingPolicy {
  const PolicyParams* base = nullptr;
  std::vector<int> wrong_answers;
  int max_tries = 10000;

  Rollout sample(const Vocab& vocab, std::span<const Token> prompt, const SampleConfig& cfg,
                 Rng& rng) const;
};

}  // namespace lte
