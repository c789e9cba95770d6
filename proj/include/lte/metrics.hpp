#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "lte/lte.hpp"
#include "lte/policy.hpp"
#include "lte/task.hpp"

namespace lte {

// Grand mean over a queries-by-k correctness matrix.
double mean_at_k(const std::vector<std::vector<int>>& correctness);

// Fraction of queries with at least one correct sample among their k.
double pass_at_k(const std::vector<std::vector<int>>& correctness);

// y_0 = x_0, y_t = alpha*x_t + (1-alpha)*y_{t-1}; alpha in (0, 1].
std::vector<double> ema(std::span<const double> series, double alpha);

struct StatusCounts {
  int none_pass = 0;
  int some_pass = 0;
  int all_pass = 0;
};

// Census over pre-replacement groups: replacement may flip rewards later, but
// these counters always describe the initial rollouts.
StatusCounts group_status_counts(std::span<const GroupStatus> statuses);

// Held-out evaluation decoding knobs. The seed pins the held-out task set and
// is deliberately separate from the training seed so the set stays fixed
// while training seeds vary.
struct EvalSettings {
  int queries_per_tier = 64;
  int k = 4;
  double temperature = 0.6;
  double top_p = 0.95;
  int top_k = 20;
  uint64_t seed = 1777;
};

struct TierReport {
  int difficulty = 0;
  int queries = 0;
  double mean_at_k = 0.0;
  double pass_at_k = 0.0;
};

struct EvalReport {
  int k = 0;
  double temperature = 0.0;
  double top_p = 1.0;
  int top_k = 0;
  int total_queries = 0;
  double overall_mean_at_k = 0.0;
  double overall_pass_at_k = 0.0;
  std::vector<TierReport> tiers;
};

// Decodes k responses per held-out query (plain prompts only, never hinted)
// and scores them. Tiers are difficulty levels; the task set depends only on
// settings.seed, the tier list, and queries_per_tier.
EvalReport evaluate(const PolicyParams& params, const Vocab& vocab,
                    std::span<const int> difficulties, int max_new_tokens,
                    const EvalSettings& settings);

std::string eval_report_json(const EvalReport& report);

}  // namespace lte
