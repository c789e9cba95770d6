#include "lte/theory.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

namespace lte {

double AnswerDistribution::total() const {
  double t = no_answer_mass;
  for (double m : answer_mass) t += m;
  return t;
}

namespace {

// Extraction automaton: what extract_answer would return if the response
// stopped now. resolved(d) = last marker followed by digit d; kBroken = no
// marker, or marker followed by a non-digit; kPending = marker is the last
// token so far.
struct ExtractState {
  static int broken(int m) { return m; }
  static int pending(int m) { return m + 1; }
  static int count(int m) { return m + 2; }

  static int step(const Vocab& vocab, int state, Token w) {
    const int m = vocab.modulus;
    if (w == Vocab::kAns) return pending(m);
    if (state == pending(m)) return vocab.is_digit(w) ? vocab.digit_value(w) : broken(m);
    return state;  // resolved and broken absorb everything but a new marker
  }

  // state on termination: -1 for no valid answer, else the answer value
  static int stop_value(int m, int state) { return state < m ? state : -1; }
};

}  // namespace

AnswerDistribution enumerate_answer_distribution(const PolicyParams& params, const Vocab& vocab,
                                                 std::span<const Token> prompt, int max_new_tokens,
                                                 uint64_t work_budget) {
  const int W = params.shape.window, V = params.shape.vocab_size;
  const int m = vocab.modulus;
  const int n_astates = ExtractState::count(m);
  if (V != vocab.size())
    throw std::invalid_argument("enumerate_answer_distribution: vocab/policy size mismatch");

  AnswerDistribution out;
  out.modulus = m;
  out.answer_mass.assign(m, 0.0);
  out.provenance = AnswerDistribution::Provenance::Exact;

  const auto pack = [&](const std::vector<Token>& win, int astate) {
    uint64_t key = 0;
    for (Token t : win) key = key * static_cast<uint64_t>(V) + static_cast<uint64_t>(t);
    return key * static_cast<uint64_t>(n_astates) + static_cast<uint64_t>(astate);
  };
  const auto unpack = [&](uint64_t key, std::vector<Token>& win, int& astate) {
    astate = static_cast<int>(key % n_astates);
    key /= n_astates;
    for (int j = W - 1; j >= 0; --j) {
      win[j] = static_cast<Token>(key % V);
      key /= V;
    }
  };

  // std::map keeps per-level iteration in key order so the floating-point
  // summation order is reproducible.
  std::map<uint64_t, double> level;
  std::vector<Token> win;
  fill_window(prompt, {}, 0, W, win);
  level[pack(win, ExtractState::broken(m))] = 1.0;

  ForwardScratch scratch;
  scratch.resize(params.shape);
  std::vector<Token> next_win(W);

  const auto bank = [&](int astate, double mass) {
    const int v = ExtractState::stop_value(m, astate);
    if (v < 0)
      out.no_answer_mass += mass;
    else
      out.answer_mass[v] += mass;
  };

  for (int step = 1; step <= max_new_tokens; ++step) {
    if (level.size() * static_cast<uint64_t>(V) > work_budget)
      throw std::length_error("enumerate_answer_distribution: state space exceeds work budget");
    std::map<uint64_t, double> next;
    const bool last = step == max_new_tokens;
    for (const auto& [key, mass] : level) {
      int astate;
      unpack(key, win, astate);
      forward_logits(params, win, scratch);
      softmax_from_logits(scratch, 1.0);
      for (int w = 0; w < V; ++w) {
        const double p = mass * scratch.p[w];
        if (p == 0.0) continue;
        if (w == Vocab::kEnd) {
          bank(astate, p);
        } else if (last) {
          out.no_answer_mass += p;  // budget exhausted without END: truncated
        } else {
          std::copy(win.begin() + 1, win.end(), next_win.begin());
          next_win[W - 1] = w;
          next[pack(next_win, ExtractState::step(vocab, astate, w))] += p;
        }
      }
    }
    level.swap(next);
  }
  return out;
}

AnswerDistribution monte_carlo_answer_distribution(const PolicyParams& params, const Vocab& vocab,
                                                   std::span<const Token> prompt,
                                                   int max_new_tokens, long long samples,
                                                   uint64_t seed) {
  AnswerDistribution out;
  out.modulus = vocab.modulus;
  out.answer_mass.assign(vocab.modulus, 0.0);
  out.provenance = AnswerDistribution::Provenance::MonteCarlo;
  out.sample_count = samples;

  SampleConfig cfg;
  cfg.max_new_tokens = max_new_tokens;
  Rng rng(mix_seed(seed, 0x6d63u));
  long long no_answer = 0;
  std::vector<long long> hits(vocab.modulus, 0);
  for (long long i = 0; i < samples; ++i) {
    const Rollout r = sample_rollout(params, prompt, cfg, rng);
    const auto a = extract_answer(vocab, r.response, r.truncated);
    if (a)
      ++hits[*a];
    else
      ++no_answer;
  }
  for (int v = 0; v < vocab.modulus; ++v)
    out.answer_mass[v] = static_cast<double>(hits[v]) / static_cast<double>(samples);
  out.no_answer_mass = static_cast<double>(no_answer) / static_cast<double>(samples);
  return out;
}

AnswerDistribution prune_distribution(const AnswerDistribution& base, std::span<const int> wrongs) {
  AnswerDistribution out = base;
  double pruned = 0.0;
  for (int w : wrongs) {
    if (w < 0 || w >= base.modulus) throw std::invalid_argument("prune_distribution: bad answer");
    pruned += out.answer_mass[w];
    out.answer_mass[w] = 0.0;
  }
  const double remaining = base.total() - pruned;
  if (remaining <= 0.0)
    throw std::invalid_argument("prune_distribution: pruning removed all probability mass");
  for (double& v : out.answer_mass) v /= remaining;
  out.no_answer_mass /= remaining;
  return out;
}

RatioCheck verify_ratio_exceeds_one(const AnswerDistribution& base,
                                    const AnswerDistribution& pruned, int truth) {
  if (truth < 0 || truth >= base.modulus)
    throw std::invalid_argument("verify_ratio_exceeds_one: truth out of range");
  RatioCheck out;
  const double b = base.answer_mass[truth];
  if (b <= 0.0) return out;  // ratio undefined, reported rather than thrown
  out.defined = true;
  out.ratio = pruned.answer_mass[truth] / b;
  out.exceeds_one = out.ratio > 1.0;
  return out;
}

double pruning_bound(double alpha, double delta, double tau, double n) {
  if (alpha <= 0.0 || delta < 0.0 || tau <= 0.0 || tau >= 1.0 || n < 1.0)
    throw std::invalid_argument("pruning_bound: domain violation");
  return alpha * (1.0 + delta / (1.0 - std::pow(tau, 1.0 / n)));
}

InfoGain information_gain_check(std::span<const double> joint, int n_pi, int n_d, int n_h) {
  if (n_pi < 1 || n_d < 1 || n_h < 1 ||
      joint.size() != static_cast<size_t>(n_pi) * n_d * n_h)
    throw std::invalid_argument("information_gain_check: bad dimensions");
  double total = 0.0;
  for (double p : joint) {
    if (!(p >= 0.0)) throw std::invalid_argument("information_gain_check: negative entry");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-9)
    throw std::invalid_argument("information_gain_check: joint does not sum to 1");

  const auto at = [&](int i, int j, int k) {
    return joint[(static_cast<size_t>(i) * n_d + j) * n_h + k];
  };
  std::vector<double> p_pi(n_pi, 0.0), p_d(n_d, 0.0), p_dh(static_cast<size_t>(n_d) * n_h, 0.0);
  std::vector<double> p_pid(static_cast<size_t>(n_pi) * n_d, 0.0);
  for (int i = 0; i < n_pi; ++i)
    for (int j = 0; j < n_d; ++j)
      for (int k = 0; k < n_h; ++k) {
        const double p = at(i, j, k);
        p_pi[i] += p;
        p_d[j] += p;
        p_dh[static_cast<size_t>(j) * n_h + k] += p;
        p_pid[static_cast<size_t>(i) * n_d + j] += p;
      }

  InfoGain out;
  for (int i = 0; i < n_pi; ++i)
    for (int j = 0; j < n_d; ++j) {
      const double pij = p_pid[static_cast<size_t>(i) * n_d + j];
      if (pij > 0.0) out.data_only += pij * std::log(pij / (p_pi[i] * p_d[j]));
      for (int k = 0; k < n_h; ++k) {
        const double p = at(i, j, k);
        if (p == 0.0) continue;
        const double pdh = p_dh[static_cast<size_t>(j) * n_h + k];
        out.joint += p * std::log(p / (p_pi[i] * pdh));
        out.hint_given_data += p * std::log(p_d[j] * p / (pij * pdh));
      }
    }

  if (out.hint_given_data < -1e-12)
    throw std::logic_error("information_gain_check: negative conditional information");
  if (std::abs(out.joint - (out.data_only + out.hint_given_data)) >
      1e-9 * std::max(1.0, std::abs(out.joint)))
    throw std::logic_error("information_gain_check: chain rule violated");
  return out;
}

Rollout HintRespectingPolicy::sample(const Vocab& vocab, std::span<const Token> prompt,
                                     const SampleConfig& cfg, Rng& rng) const {
  for (int attempt = 0; attempt < max_tries; ++attempt) {
    Rollout r = sample_rollout(*base, prompt, cfg, rng);
    r.answer = extract_answer(vocab, r.response, r.truncated);
    if (!r.answer ||
        std::find(wrong_answers.begin(), wrong_answers.end(), *r.answer) == wrong_answers.end())
      return r;
  }
  throw std::runtime_error("HintRespectingPolicy: rejection sampling exhausted its tries");
}

}  // namespace lte
