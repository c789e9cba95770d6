#include "lte/task.hpp"

#include <algorithm>
#include <stdexcept>

#include "lte/rng.hpp"

namespace lte {

Vocab::Vocab(int modulus_) : modulus(modulus_) {
  if (modulus < 2) throw std::invalid_argument("Vocab: modulus must be >= 2");
}

Token Vocab::digit(int value) const {
  if (value < 0 || value >= modulus) throw std::invalid_argument("Vocab::digit: value out of range");
  return kDigitBase + value;
}

int Vocab::digit_value(Token t) const {
  if (!is_digit(t)) throw std::invalid_argument("Vocab::digit_value: not a digit token");
  return t - kDigitBase;
}

const char* to_string(HintVariant v) {
  switch (v) {
    case HintVariant::Plain: return "plain";
    case HintVariant::Concise: return "concise";
    case HintVariant::ConciseHint: return "concise_hint";
    case HintVariant::Hint: return "hint";
  }
  return "?";
}

static std::vector<int> normalize_wrongs(std::vector<int> wrongs) {
  std::sort(wrongs.begin(), wrongs.end());
  wrongs.erase(std::unique(wrongs.begin(), wrongs.end()), wrongs.end());
  return wrongs;
}

HintSpec HintSpec::hint(std::vector<int> wrongs) {
  return {HintVariant::Hint, normalize_wrongs(std::move(wrongs))};
}

HintSpec HintSpec::concise_hint(std::vector<int> wrongs) {
  return {HintVariant::ConciseHint, normalize_wrongs(std::move(wrongs))};
}

Query generate_task(const Vocab& vocab, uint64_t seed, int difficulty) {
  if (difficulty < 1) throw std::invalid_argument("generate_task: difficulty must be >= 1");
  const int m = vocab.modulus;
  Rng rng(mix_seed(seed, 0x7461736bu, static_cast<uint64_t>(difficulty)));

  Query q;
  q.id = seed;
  q.difficulty = difficulty;

  // Operand chain v0 op1 v1 op2 v2 ... op_d v_d, evaluated left to right
  // mod m. SUB uses the euclidean residue so the result stays in 0..m-1.
  int acc = rng.next_int(m);
  q.prompt_tokens.push_back(vocab.digit(acc));
  for (int i = 0; i < difficulty; ++i) {
    const int op = rng.next_int(3);
    const int operand = rng.next_int(m);
    switch (op) {
      case 0:
        q.prompt_tokens.push_back(Vocab::kOpAdd);
        acc = (acc + operand) % m;
        break;
      case 1:
        q.prompt_tokens.push_back(Vocab::kOpSub);
        acc = ((acc - operand) % m + m) % m;
        break;
      default:
        q.prompt_tokens.push_back(Vocab::kOpMul);
        acc = static_cast<int>((static_cast<int64_t>(acc) * operand) % m);
        break;
    }
    q.prompt_tokens.push_back(vocab.digit(operand));
  }
  q.prompt_tokens.push_back(Vocab::kEq);
  q.truth = acc;
  return q;
}

Query generate_task(uint64_t seed, int difficulty, int modulus) {
  return generate_task(Vocab(modulus), seed, difficulty);
}

static void check_spec(const Vocab& vocab, const Query& q, const HintSpec& h) {
  const bool hinting = h.variant == HintVariant::Hint || h.variant == HintVariant::ConciseHint;
  if (!hinting && !h.wrong_answers.empty())
    throw std::invalid_argument("render_prompt: wrong_answers on a non-hinting variant");
  for (int w : h.wrong_answers) {
    if (w < 0 || w >= vocab.modulus)
      throw std::invalid_argument("render_prompt: wrong answer out of range");
    if (w == q.truth) throw std::invalid_argument("render_prompt: wrong answer equals the truth");
  }
}

std::vector<Token> render_prompt(const Vocab& vocab, const Query& q, const HintSpec& h) {
  check_spec(vocab, q, h);
  std::vector<Token> out;
  out.reserve(rendered_prompt_length(q, h));
  if (h.variant == HintVariant::Concise || h.variant == HintVariant::ConciseHint)
    out.push_back(Vocab::kConcise);
  out.insert(out.end(), q.prompt_tokens.begin(), q.prompt_tokens.end());
  if (h.variant == HintVariant::Hint || h.variant == HintVariant::ConciseHint) {
    out.push_back(Vocab::kHintOpen);
    for (size_t i = 0; i < h.wrong_answers.size(); ++i) {
      if (i) out.push_back(Vocab::kHintSep);
      out.push_back(vocab.digit(h.wrong_answers[i]));
    }
    out.push_back(Vocab::kHintClose);
  }
  return out;
}

size_t rendered_prompt_length(const Query& q, const HintSpec& h) {
  size_t n = q.prompt_tokens.size();
  if (h.variant == HintVariant::Concise || h.variant == HintVariant::ConciseHint) n += 1;
  if (h.variant == HintVariant::Hint || h.variant == HintVariant::ConciseHint) {
    n += 2;  // brackets
    if (!h.wrong_answers.empty()) n += 2 * h.wrong_answers.size() - 1;
  }
  return n;
}

std::optional<int> extract_answer(const Vocab& vocab, std::span<const Token> response_tokens,
                                  bool truncated) {
  if (truncated) return std::nullopt;
  for (size_t i = response_tokens.size(); i-- > 0;) {
    if (response_tokens[i] == Vocab::kAns) {
      if (i + 1 < response_tokens.size() && vocab.is_digit(response_tokens[i + 1]))
        return vocab.digit_value(response_tokens[i + 1]);
      return std::nullopt;
    }
  }
  return std::nullopt;
}

int verify(const Query& q, const std::optional<int>& answer) {
  return answer.has_value() && *answer == q.truth ? 1 : 0;
}

}  // namespace lte
