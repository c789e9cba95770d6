#include "lte/lte.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace lte {

const char* to_string(PassClass c) {
  switch (c) {
    case PassClass::NonePass: return "none_pass";
    case PassClass::SomePass: return "some_pass";
    case PassClass::AllPass: return "all_pass";
  }
  return "?";
}

const char* to_string(TruncClass c) {
  switch (c) {
    case TruncClass::AllTruncated: return "all_truncated";
    case TruncClass::SomeTruncated: return "some_truncated";
    case TruncClass::NoneTruncated: return "none_truncated";
  }
  return "?";
}

GroupStatus classify_group(const RolloutGroup& group) {
  if (group.rollouts.empty()) throw std::invalid_argument("classify_group: empty group");
  size_t passed = 0, truncated = 0;
  GroupStatus st;
  for (const Rollout& r : group.rollouts) {
    if (r.reward != 0.0) ++passed;
    if (r.truncated) ++truncated;
    if (r.reward == 0.0 && !r.truncated && r.answer) st.wrong_answers.push_back(*r.answer);
  }
  const size_t n = group.rollouts.size();
  st.pass_class = passed == 0   ? PassClass::NonePass
                  : passed == n ? PassClass::AllPass
                                : PassClass::SomePass;
  st.trunc_class = truncated == n   ? TruncClass::AllTruncated
                   : truncated == 0 ? TruncClass::NoneTruncated
                                    : TruncClass::SomeTruncated;
  std::sort(st.wrong_answers.begin(), st.wrong_answers.end());
  st.wrong_answers.erase(std::unique(st.wrong_answers.begin(), st.wrong_answers.end()),
                         st.wrong_answers.end());
  return st;
}

HintSpec select_hint(const GroupStatus& status) {
  if (status.pass_class != PassClass::NonePass)
    throw std::invalid_argument("select_hint: only none-pass groups get hints");
  switch (status.trunc_class) {
    case TruncClass::AllTruncated: return HintSpec::concise();
    case TruncClass::SomeTruncated: return HintSpec::concise_hint(status.wrong_answers);
    case TruncClass::NoneTruncated: return HintSpec::hint(status.wrong_answers);
  }
  throw std::logic_error("select_hint: unreachable");
}

std::vector<Rollout> hinted_extra_rollouts(const PolicyParams& params, const Vocab& vocab,
                                           const Query& q, const HintSpec& spec, int group_size,
                                           const SampleConfig& cfg, Rng& rng) {
  const std::vector<Token> prompt = render_prompt(vocab, q, spec);
  const bool hinted = spec.variant != HintVariant::Plain;
  std::vector<Rollout> out;
  out.reserve(group_size);
  for (int i = 0; i < group_size; ++i) {
    Rollout r = sample_rollout(params, prompt, cfg, rng);
    r.hinted = hinted;
    r.origin = hinted ? Origin::OffPolicy : Origin::OnPolicy;
    r.answer = extract_answer(vocab, r.response, r.truncated);
    r.reward = verify(q, r.answer);
    out.push_back(std::move(r));
  }
  return out;
}

MixedGroup replace(const RolloutGroup& initial, std::span<const Rollout> extras_correct,
                   uint64_t seed) {
  const int G = static_cast<int>(initial.rollouts.size());
  const int Gp = static_cast<int>(extras_correct.size());
  if (Gp > G) throw std::invalid_argument("replace: more extras than group slots");
  for (const Rollout& r : extras_correct)
    if (r.reward != 1.0) throw std::invalid_argument("replace: extras must be verified correct");

  // Uniform G'-subset of initial indices via a partial Fisher-Yates pass.
  std::vector<int> idx(G);
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(mix_seed(seed, 0x7265706cu));
  for (int i = 0; i < Gp; ++i) {
    const int j = i + static_cast<int>(rng.next_int(static_cast<uint64_t>(G - i)));
    std::swap(idx[i], idx[j]);
  }
  std::vector<bool> dropped(G, false);
  MixedGroup out;
  out.replaced_indices.assign(idx.begin(), idx.begin() + Gp);
  std::sort(out.replaced_indices.begin(), out.replaced_indices.end());
  for (int i : out.replaced_indices) dropped[i] = true;

  out.rollouts.reserve(G);
  for (const Rollout& r : extras_correct) out.rollouts.push_back(r);
  for (int i = 0; i < G; ++i)
    if (!dropped[i]) out.rollouts.push_back(initial.rollouts[i]);

  out.rewards.reserve(G);
  for (const Rollout& r : out.rollouts) out.rewards.push_back(r.reward);
  out.advantages = compute_advantages(out.rewards);
  return out;
}

double shape_ratio(double raw_ratio, double gamma) {
  if (raw_ratio < 0.0 || gamma <= 0.0) throw std::invalid_argument("shape_ratio: bad inputs");
  return raw_ratio / (raw_ratio + gamma);
}

double offpolicy_ratio(double new_logprob) { return std::exp(new_logprob); }

LossBreakdown mixed_loss_and_grad(const PolicyParams& params, const PolicyParams* ref_params,
                                  std::span<const UpdateGroup> groups, const LossConfig& cfg,
                                  std::vector<double>& grad) {
  return detail::loss_and_grad(params, ref_params, groups, cfg, true, grad);
}

}  // namespace lte
