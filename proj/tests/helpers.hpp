#pragma once

// Shared fixtures for the test binaries: near-deterministic rule policies,
// finite-difference harnesses, synthetic update batches, and subprocess
// helpers for the CLI tests.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "lte/grpo.hpp"
#include "lte/lte.hpp"
#include "lte/policy.hpp"
#include "lte/rng.hpp"
#include "lte/task.hpp"

namespace testutil {

// One firing condition: the window slot at `slot` (0 = oldest, W-1 = newest)
// holds one of `tokens`.
struct RuleCond {
  int slot = 0;
  std::vector<lte::Token> tokens;
};

// When every condition matches, the unit pushes ~2*strength logits onto
// `target`; the default makes the choice effectively deterministic, small
// strengths give a soft preference.
struct Rule {
  std::vector<RuleCond> conds;
  lte::Token target = 0;
  double strength = 30.0;
};

// Builds a policy that behaves like a lookup table over window patterns:
// one-hot embeddings, one hidden unit per rule with a crisp tanh gate, and
// output columns arranged so an inactive unit contributes ~0 rather than a
// negative vote. Windows matched by a rule emit its target with probability
// 1 - O(1e-20); unmatched windows fall back to a uniform distribution.
// Requires embed_dim == vocab_size >= rules.size().
inline lte::PolicyParams make_rule_policy(int window, int vocab_size,
                                          const std::vector<Rule>& rules) {
  const int E = vocab_size;
  lte::PolicyShape shape{window, E, vocab_size};
  lte::PolicyParams params = lte::zero_params(shape);
  lte::ParamLayout lay(shape);
  for (int t = 0; t < vocab_size; ++t) params.values[lay.emb + t * E + t] = 1.0;
  for (size_t k = 0; k < rules.size(); ++k) {
    const Rule& r = rules[k];
    for (const RuleCond& c : r.conds)
      for (lte::Token t : c.tokens) params.values[lay.a + k * (window * E) + c.slot * E + t] += 20.0;
    params.values[lay.b + k] = 10.0 - 20.0 * static_cast<double>(r.conds.size());
    params.values[lay.c_mat + r.target * E + k] = r.strength;
    params.values[lay.c_vec + r.target] += r.strength;
  }
  return params;
}

inline Rule last_token_rule(int window, std::vector<lte::Token> at_last, lte::Token target) {
  return Rule{{RuleCond{window - 1, std::move(at_last)}}, target};
}

// Directional finite-difference check: compares (J(p+hv) - J(p-hv)) / 2h
// against grad . v for a random unit direction. Returns the error relative to
// max(floor, |analytic|).
inline double fd_rel_error(const lte::PolicyParams& params, const std::vector<double>& grad,
                           const std::function<double(const lte::PolicyParams&)>& loss_at,
                           uint64_t seed, double h = 1e-5, double floor = 1e-8) {
  lte::Rng rng(seed);
  std::vector<double> v(params.values.size());
  double norm2 = 0.0;
  for (double& x : v) {
    x = rng.next_gaussian();
    norm2 += x * x;
  }
  const double inv = 1.0 / std::sqrt(norm2);
  double analytic = 0.0;
  for (size_t i = 0; i < v.size(); ++i) {
    v[i] *= inv;
    analytic += grad[i] * v[i];
  }
  lte::PolicyParams plus = params, minus = params;
  for (size_t i = 0; i < v.size(); ++i) {
    plus.values[i] += h * v[i];
    minus.values[i] -= h * v[i];
  }
  const double fd = (loss_at(plus) - loss_at(minus)) / (2.0 * h);
  return std::abs(fd - analytic) / std::max(floor, std::abs(analytic));
}

inline lte::PolicyParams perturbed(const lte::PolicyParams& params, uint64_t seed, double scale) {
  lte::PolicyParams out = params;
  lte::Rng rng(seed);
  for (double& x : out.values) x += scale * rng.next_gaussian();
  return out;
}

// Samples real rollouts from `sampler` params, then assigns synthetic
// Bernoulli rewards so the advantage vectors are non-degenerate regardless of
// what the policy actually produced.
inline std::vector<lte::UpdateGroup> synthetic_batch(const lte::PolicyParams& sampler,
                                                     const lte::Vocab& vocab, int n_queries,
                                                     int group_size, int difficulty,
                                                     int max_new_tokens, uint64_t seed) {
  std::vector<lte::UpdateGroup> out;
  lte::SampleConfig scfg;
  scfg.max_new_tokens = max_new_tokens;
  for (int i = 0; i < n_queries; ++i) {
    const lte::Query q = lte::generate_task(vocab, lte::mix_seed(seed, 101, i), difficulty);
    lte::UpdateGroup g;
    g.plain_prompt = lte::render_prompt(vocab, q, lte::HintSpec::plain());
    lte::Rng rng(lte::mix_seed(seed, 202, i));
    std::vector<double> rewards;
    for (int j = 0; j < group_size; ++j) {
      lte::Rollout r = lte::sample_rollout(sampler, g.plain_prompt, scfg, rng);
      r.reward = (rng.next_u64() & 1) ? 1.0 : 0.0;
      rewards.push_back(r.reward);
      g.rollouts.push_back(std::move(r));
    }
    g.advantages = lte::compute_advantages(rewards).values;
    out.push_back(std::move(g));
  }
  return out;
}

struct CmdResult {
  int status = -1;
  std::string out;
};

inline CmdResult run_cmd(const std::string& cmd) {
  CmdResult res;
  FILE* pipe = popen((cmd + " 2>&1").c_str(), "r");
  if (!pipe) return res;
  char buf[4096];
  size_t n;
  while ((n = fread(buf, 1, sizeof buf, pipe)) > 0) res.out.append(buf, n);
  const int rc = pclose(pipe);
  res.status = (rc >= 0 && (rc & 0x7f) == 0) ? (rc >> 8) & 0xff : -1;
  return res;
}

inline std::filesystem::path fresh_dir(const std::string& tag) {
  const auto dir = std::filesystem::temp_directory_path() / ("rlvr-lab-test-" + tag);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline std::string slurp(const std::filesystem::path& p) {
  FILE* f = fopen(p.string().c_str(), "rb");
  if (!f) return {};
  std::string out;
  char buf[4096];
  size_t n;
  while ((n = fread(buf, 1, sizeof buf, f)) > 0) out.append(buf, n);
  fclose(f);
  return out;
}

}  // namespace testutil
