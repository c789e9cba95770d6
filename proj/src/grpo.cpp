#include "lte/grpo.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace lte {

GroupAdvantages compute_advantages(std::span<const double> rewards) {
  if (rewards.size() < 2) throw std::invalid_argument("compute_advantages: need at least 2 rewards");
  const size_t n = rewards.size();
  GroupAdvantages out;
  out.values.assign(n, 0.0);

  double sum = 0.0;
  for (double r : rewards) sum += r;
  out.mean = sum / static_cast<double>(n);

  double var = 0.0;
  for (double r : rewards) {
    const double d = r - out.mean;
    var += d * d;
  }
  out.stddev = std::sqrt(var / static_cast<double>(n));
  if (out.stddev == 0.0) return out;  // no relative signal in the group

  for (size_t i = 0; i < n; ++i) out.values[i] = (rewards[i] - out.mean) / out.stddev;
  return out;
}

double importance_ratio(double new_logprob, double old_logprob) {
  return std::exp(new_logprob - old_logprob);
}

double clipped_term(double ratio, double advantage, double clip_eps) {
  const double clipped = std::clamp(ratio, 1.0 - clip_eps, 1.0 + clip_eps) * advantage;
  return std::min(ratio * advantage, clipped);
}

double kl_penalty(double new_logprob, double ref_logprob) {
  const double d = ref_logprob - new_logprob;
  return std::exp(d) - d - 1.0;
}

namespace detail {

LossBreakdown loss_and_grad(const PolicyParams& params, const PolicyParams* ref_params,
                            std::span<const UpdateGroup> groups, const LossConfig& cfg,
                            bool allow_offpolicy, std::vector<double>& grad) {
  if (groups.empty()) throw std::invalid_argument("loss_and_grad: empty batch");
  const bool want_kl = cfg.kl_beta != 0.0;
  if (want_kl && !ref_params)
    throw std::invalid_argument("loss_and_grad: kl_beta != 0 requires ref_params");

  LossBreakdown out;
  for (const UpdateGroup& g : groups) {
    if (g.rollouts.empty()) throw std::invalid_argument("loss_and_grad: empty group");
    if (g.advantages.size() != g.rollouts.size())
      throw std::invalid_argument("loss_and_grad: advantages/rollouts size mismatch");
    for (const Rollout& r : g.rollouts) {
      if (r.old_logprobs.size() != r.response.size())
        throw std::invalid_argument("loss_and_grad: missing old_logprobs");
      if (r.origin == Origin::OffPolicy) {
        if (!allow_offpolicy)
          throw std::invalid_argument("loss_and_grad: off-policy rollout in a plain update");
        out.offpolicy_tokens += static_cast<long long>(r.response.size());
      } else {
        out.onpolicy_tokens += static_cast<long long>(r.response.size());
      }
    }
  }

  const double Z = static_cast<double>(out.onpolicy_tokens);
  const double Zp = static_cast<double>(out.offpolicy_tokens);
  // Denominator for the regularizers: the token count they run over.
  const long long reg_tokens =
      cfg.regularize_offpolicy ? out.onpolicy_tokens + out.offpolicy_tokens : out.onpolicy_tokens;
  const double Zreg = static_cast<double>(reg_tokens);

  grad.assign(params.values.size(), 0.0);
  ForwardScratch scratch;
  scratch.resize(params.shape);

  double surr_sum = 0.0, off_sum = 0.0, kl_sum = 0.0, ent_sum = 0.0;
  const int V = params.shape.vocab_size;

  for (const UpdateGroup& g : groups) {
    for (size_t i = 0; i < g.rollouts.size(); ++i) {
      const Rollout& r = g.rollouts[i];
      const double adv = g.advantages[i];
      const bool onpolicy = r.origin == Origin::OnPolicy;
      const bool surr_active = adv != 0.0;
      const bool reg_here = onpolicy || cfg.regularize_offpolicy;
      const bool kl_active = want_kl && reg_here;
      const bool ent_active = cfg.entropy_coef != 0.0 && reg_here;
      if (!surr_active && !kl_active && !ent_active) continue;

      std::span<const Token> prompt =
          onpolicy ? std::span<const Token>(r.prompt) : std::span<const Token>(g.plain_prompt);
      std::vector<double> ref_lps;
      if (kl_active) ref_lps = response_logprobs(*ref_params, prompt, r.response);

      for (size_t t = 0; t < r.response.size(); ++t) {
        fill_window(prompt, r.response, t, params.shape.window, scratch.window);
        forward_logits(params, scratch.window, scratch);
        const double lse = softmax_from_logits(scratch, 1.0);
        const double new_lp = scratch.z[r.response[t]] - lse;

        double lc = 0.0;  // coefficient on grad of log pi(o_t)
        double ec = 0.0;  // coefficient on grad of the entropy at this context
        if (surr_active) {
          if (onpolicy) {
            const double ratio = std::exp(new_lp - r.old_logprobs[t]);
            const double unclipped = ratio * adv;
            const double clipped =
                std::clamp(ratio, 1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps) * adv;
            surr_sum += std::min(unclipped, clipped);
            if (unclipped <= clipped) lc += unclipped / Z;
          } else {
            const double rhat = std::exp(new_lp);
            const double denom = rhat + cfg.shaping_gamma;
            off_sum += rhat / denom * adv;
            lc += adv * cfg.shaping_gamma * rhat / (denom * denom) / Zp;
          }
        }
        if (kl_active) {
          const double d = ref_lps[t] - new_lp;
          kl_sum += std::exp(d) - d - 1.0;
          lc += cfg.kl_beta * (std::exp(d) - 1.0) / Zreg;
        }

        if (lc == 0.0 && !ent_active) continue;
        if (ent_active) {
          double pz = 0.0;
          for (int v = 0; v < V; ++v) pz += scratch.p[v] * scratch.z[v];
          const double ent = lse - pz;
          ent_sum += ent;
          ec = cfg.entropy_coef / Zreg;
          for (int v = 0; v < V; ++v) {
            const double lp = scratch.z[v] - lse;
            scratch.dz[v] = -lc * scratch.p[v] + ec * (-scratch.p[v] * (lp + ent));
          }
        } else {
          for (int v = 0; v < V; ++v) scratch.dz[v] = -lc * scratch.p[v];
        }
        scratch.dz[r.response[t]] += lc;
        backward_from_dz(params, scratch.window, scratch, grad);
      }
    }
  }

  if (out.onpolicy_tokens > 0) out.surrogate = surr_sum / Z;
  if (out.offpolicy_tokens > 0) out.offpolicy_surrogate = off_sum / Zp;
  if (reg_tokens > 0) {
    out.kl = kl_sum / Zreg;
    out.entropy = ent_sum / Zreg;
  }
  out.total = out.surrogate + out.offpolicy_surrogate - cfg.kl_beta * out.kl +
              cfg.entropy_coef * out.entropy;
  return out;
}

}  // namespace detail

LossBreakdown grpo_loss_and_grad(const PolicyParams& params, const PolicyParams* ref_params,
                                 std::span<const UpdateGroup> groups, const LossConfig& cfg,
                                 std::vector<double>& grad) {
  return detail::loss_and_grad(params, ref_params, groups, cfg, false, grad);
}

}  // namespace lte
