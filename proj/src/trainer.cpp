#include "lte/trainer.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>

#include "json.hpp"

namespace lte {

namespace {
constexpr uint64_t kTagInit = 0x696e6974;
constexpr uint64_t kTagTask = 0x7461736b;
constexpr uint64_t kTagRoll = 0x726f6c6c;
constexpr uint64_t kTagExtra = 0x78747261;
constexpr uint64_t kTagReplace = 0x7265706c;
}  // namespace

TrainState init_train_state(const TrainConfig& cfg) {
  validate_config(cfg);
  const PolicyShape shape{cfg.window, cfg.embed_dim, Vocab::kDigitBase + cfg.modulus};
  TrainState st{Vocab(cfg.modulus), init_params(shape, mix_seed(cfg.seed, kTagInit), cfg.init_scale),
                {}, {}, 0};
  st.ref_params = st.params;
  return st;
}

std::vector<Query> sample_batch(const TrainConfig& cfg, int step) {
  const Vocab vocab(cfg.modulus);
  double total_weight = 0.0;
  for (const DifficultyTier& t : cfg.difficulty_mix) total_weight += t.weight;

  std::vector<Query> out;
  out.reserve(cfg.batch_size);
  for (int i = 0; i < cfg.batch_size; ++i) {
    Rng rng(mix_seed(cfg.seed, kTagTask, static_cast<uint64_t>(step), static_cast<uint64_t>(i)));
    double u = rng.next_double() * total_weight;
    int difficulty = cfg.difficulty_mix.back().difficulty;
    for (const DifficultyTier& t : cfg.difficulty_mix) {
      u -= t.weight;
      if (u < 0.0) {
        difficulty = t.difficulty;
        break;
      }
    }
    out.push_back(generate_task(vocab, rng.next_u64(), difficulty));
  }
  return out;
}

StepMetrics train_step(TrainState& st, std::span<const Query> batch, const TrainConfig& cfg) {
  // One update per step: the parameters used for sampling are the step's
  // theta_old, so the recorded old_logprobs are the snapshot.
  SampleConfig scfg;
  scfg.max_new_tokens = cfg.max_new_tokens;
  scfg.temperature = cfg.temperature;

  StepMetrics mx;
  mx.step = st.step;
  std::vector<UpdateGroup> groups;
  groups.reserve(batch.size());
  std::vector<GroupStatus> statuses;
  statuses.reserve(batch.size());
  double entropy_sum = 0.0, reward_sum = 0.0;
  long long token_sum = 0, rollout_count = 0;

  for (size_t i = 0; i < batch.size(); ++i) {
    const Query& q = batch[i];
    RolloutGroup group;
    group.query = q;
    const std::vector<Token> prompt = render_prompt(st.vocab, q, HintSpec::plain());
    Rng rng(mix_seed(cfg.seed, kTagRoll, static_cast<uint64_t>(st.step), static_cast<uint64_t>(i)));
    for (int g = 0; g < cfg.group_size; ++g) {
      Rollout r = sample_rollout(st.params, prompt, scfg, rng);
      r.answer = extract_answer(st.vocab, r.response, r.truncated);
      r.reward = verify(q, r.answer);
      entropy_sum += r.entropy_sum;
      token_sum += static_cast<long long>(r.response.size());
      reward_sum += r.reward;
      ++rollout_count;
      group.rollouts.push_back(std::move(r));
    }
    statuses.push_back(classify_group(group));
    const GroupStatus& status = statuses.back();

    UpdateGroup ug;
    ug.plain_prompt = prompt;
    if (cfg.mode != TrainMode::Grpo && status.pass_class == PassClass::NonePass) {
      const HintSpec spec =
          cfg.mode == TrainMode::Lte ? select_hint(status) : HintSpec::plain();
      Rng xrng(mix_seed(cfg.seed, kTagExtra, static_cast<uint64_t>(st.step),
                        static_cast<uint64_t>(i)));
      std::vector<Rollout> extras =
          hinted_extra_rollouts(st.params, st.vocab, q, spec, cfg.group_size, scfg, xrng);
      std::vector<Rollout> correct;
      for (Rollout& e : extras)
        if (e.reward == 1.0) correct.push_back(std::move(e));
      MixedGroup mixed = replace(group, correct,
                                 mix_seed(cfg.seed, kTagReplace, static_cast<uint64_t>(st.step),
                                          static_cast<uint64_t>(i)));
      ++mx.extra_groups;
      mx.extra_correct += static_cast<int>(correct.size());
      mx.replaced += static_cast<int>(correct.size());
      ug.rollouts = std::move(mixed.rollouts);
      ug.advantages = std::move(mixed.advantages.values);
    } else {
      std::vector<double> rewards;
      rewards.reserve(group.rollouts.size());
      for (const Rollout& r : group.rollouts) rewards.push_back(r.reward);
      ug.advantages = compute_advantages(rewards).values;
      ug.rollouts = std::move(group.rollouts);
    }
    groups.push_back(std::move(ug));
  }

  mx.census = group_status_counts(statuses);
  if (token_sum > 0) mx.mean_entropy = entropy_sum / static_cast<double>(token_sum);
  if (rollout_count > 0) {
    mx.mean_response_len = static_cast<double>(token_sum) / static_cast<double>(rollout_count);
    mx.mean_reward = reward_sum / static_cast<double>(rollout_count);
  }

  LossConfig lcfg;
  lcfg.clip_eps = cfg.clip_eps;
  lcfg.kl_beta = cfg.kl_beta;
  lcfg.entropy_coef = cfg.entropy_coef;
  lcfg.shaping_gamma = cfg.shaping_gamma;
  lcfg.regularize_offpolicy = cfg.regularize_offpolicy;

  std::vector<double> grad;
  mx.loss = mixed_loss_and_grad(st.params, &st.ref_params, groups, lcfg, grad);
  if (!std::isfinite(mx.loss.total))
    throw DivergenceError("non-finite loss at step " + std::to_string(st.step));

  double gnorm = 0.0;
  for (double g : grad) gnorm += g * g;
  mx.grad_norm = std::sqrt(gnorm);

  apply_update(st.params, grad, st.opt, cfg);

  double pnorm = 0.0;
  for (double p : st.params.values) {
    if (!std::isfinite(p))
      throw DivergenceError("non-finite parameter at step " + std::to_string(st.step));
    pnorm += p * p;
  }
  mx.param_norm = std::sqrt(pnorm);

  ++st.step;
  return mx;
}

void apply_update(PolicyParams& params, const std::vector<double>& grad, AdamState& opt,
                  const TrainConfig& cfg) {
  if (grad.size() != params.values.size())
    throw std::invalid_argument("apply_update: gradient size mismatch");
  if (opt.m.empty()) {
    opt.m.assign(params.values.size(), 0.0);
    opt.v.assign(params.values.size(), 0.0);
  }
  for (double g : grad)
    if (!std::isfinite(g)) throw DivergenceError("non-finite gradient");

  ++opt.t;
  const double bc1 = 1.0 - std::pow(cfg.adam_beta1, static_cast<double>(opt.t));
  const double bc2 = 1.0 - std::pow(cfg.adam_beta2, static_cast<double>(opt.t));
  for (size_t i = 0; i < params.values.size(); ++i) {
    opt.m[i] = cfg.adam_beta1 * opt.m[i] + (1.0 - cfg.adam_beta1) * grad[i];
    opt.v[i] = cfg.adam_beta2 * opt.v[i] + (1.0 - cfg.adam_beta2) * grad[i] * grad[i];
    const double mhat = opt.m[i] / bc1;
    const double vhat = opt.v[i] / bc2;
    params.values[i] += cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.adam_eps);
  }
}

std::vector<int> difficulty_tiers(const TrainConfig& cfg) {
  std::vector<int> tiers;
  for (const DifficultyTier& t : cfg.difficulty_mix) tiers.push_back(t.difficulty);
  std::sort(tiers.begin(), tiers.end());
  tiers.erase(std::unique(tiers.begin(), tiers.end()), tiers.end());
  return tiers;
}

TrainResult train(const TrainConfig& cfg, const TrainHooks& hooks) {
  TrainState st = init_train_state(cfg);
  TrainResult res{st.params, {}, {}};
  const std::vector<int> tiers = difficulty_tiers(cfg);

  for (int step = 0; step < cfg.steps; ++step) {
    const std::vector<Query> batch = sample_batch(cfg, step);
    const StepMetrics m = train_step(st, batch, cfg);
    res.metrics.push_back(m);
    if (hooks.on_step) hooks.on_step(m);
    const int done = step + 1;
    if (hooks.on_checkpoint && cfg.checkpoint_every > 0 && done % cfg.checkpoint_every == 0 &&
        done < cfg.steps)
      hooks.on_checkpoint(done, st.params);
    if (hooks.on_eval && cfg.eval_every > 0 && done % cfg.eval_every == 0 && done < cfg.steps)
      hooks.on_eval(done, evaluate(st.params, st.vocab, tiers, cfg.max_new_tokens, cfg.eval));
  }

  res.final_eval = evaluate(st.params, st.vocab, tiers, cfg.max_new_tokens, cfg.eval);
  if (hooks.on_eval) hooks.on_eval(cfg.steps, res.final_eval);
  res.params = st.params;
  return res;
}

std::string step_metrics_json(const StepMetrics& m) {
  nlohmann::ordered_json j;
  j["step"] = m.step;
  j["none_pass"] = m.census.none_pass;
  j["some_pass"] = m.census.some_pass;
  j["all_pass"] = m.census.all_pass;
  j["mean_entropy"] = m.mean_entropy;
  j["mean_response_len"] = m.mean_response_len;
  j["mean_reward"] = m.mean_reward;
  j["surrogate"] = m.loss.surrogate;
  j["offpolicy_surrogate"] = m.loss.offpolicy_surrogate;
  j["kl"] = m.loss.kl;
  j["loss_entropy"] = m.loss.entropy;
  j["total"] = m.loss.total;
  j["onpolicy_tokens"] = m.loss.onpolicy_tokens;
  j["offpolicy_tokens"] = m.loss.offpolicy_tokens;
  j["extra_groups"] = m.extra_groups;
  j["extra_correct"] = m.extra_correct;
  j["replaced"] = m.replaced;
  j["grad_norm"] = m.grad_norm;
  j["param_norm"] = m.param_norm;
  return j.dump();
}

std::string step_metrics_csv_header() {
  return "step,none_pass,some_pass,all_pass,mean_entropy,mean_response_len,mean_reward,"
         "surrogate,offpolicy_surrogate,kl,loss_entropy,total,onpolicy_tokens,offpolicy_tokens,"
         "extra_groups,extra_correct,replaced,grad_norm,param_norm";
}

std::string step_metrics_csv_row(const StepMetrics& m) {
  const auto d = [](double v) {
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, r.ptr);
  };
  std::string out;
  out += std::to_string(m.step);
  out += ',' + std::to_string(m.census.none_pass);
  out += ',' + std::to_string(m.census.some_pass);
  out += ',' + std::to_string(m.census.all_pass);
  out += ',' + d(m.mean_entropy);
  out += ',' + d(m.mean_response_len);
  out += ',' + d(m.mean_reward);
  out += ',' + d(m.loss.surrogate);
  out += ',' + d(m.loss.offpolicy_surrogate);
  out += ',' + d(m.loss.kl);
  out += ',' + d(m.loss.entropy);
  out += ',' + d(m.loss.total);
  out += ',' + std::to_string(m.loss.onpolicy_tokens);
  out += ',' + std::to_string(m.loss.offpolicy_tokens);
  out += ',' + std::to_string(m.extra_groups);
  out += ',' + std::to_string(m.extra_correct);
  out += ',' + std::to_string(m.replaced);
  out += ',' + d(m.grad_norm);
  out += ',' + d(m.param_norm);
  return out;
}

}  // namespace lte
