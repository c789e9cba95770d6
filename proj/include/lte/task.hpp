#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace lte {

using Token = int;

// Token layout for the synthetic arithmetic tasks. Reserved ids come first,
// digit tokens for the answer values 0..M-1 form a contiguous tail so answer
// decoding is a subtraction.
struct Vocab {
  static constexpr Token kPad = 0;
  static constexpr Token kEnd = 1;
  static constexpr Token kAns = 2;
  static constexpr Token kHintOpen = 3;
  static constexpr Token kHintSep = 4;
  static constexpr Token kHintClose = 5;
  static constexpr Token kConcise = 6;
  static constexpr Token kOpAdd = 7;
  static constexpr Token kOpSub = 8;
  static constexpr Token kOpMul = 9;
  static constexpr Token kEq = 10;
  static constexpr Token kDigitBase = 11;

  explicit Vocab(int modulus);

  int modulus;

  int size() const { return kDigitBase + modulus; }

  Token digit(int value) const;
  bool is_digit(Token t) const { return t >= kDigitBase && t < kDigitBase + modulus; }
  int digit_value(Token t) const;
};

// One arithmetic chain instance. `truth` is the value of the encoded
// expression mod M; `difficulty` is the number of operations in the chain.
struct Query {
  uint64_t id = 0;
  std::vector<Token> prompt_tokens;
  int truth = 0;
  int difficulty = 0;
};

enum class HintVariant { Plain, Concise, ConciseHint, Hint };

const char* to_string(HintVariant v);

// Which prompt template to render and, for the hinting variants, the
// deduplicated incorrect answers to embed.
struct HintSpec {
  HintVariant variant = HintVariant::Plain;
  std::vector<int> wrong_answers;  // sorted, deduplicated answer values

  static HintSpec plain() { return {}; }
  static HintSpec concise() { return {HintVariant::Concise, {}}; }
  static HintSpec hint(std::vector<int> wrongs);
  static HintSpec concise_hint(std::vector<int> wrongs);
};

// Deterministic in (seed, difficulty, modulus). Throws std::invalid_argument
// for modulus < 2 or difficulty < 1.
Query generate_task(const Vocab& vocab, uint64_t seed, int difficulty);
Query generate_task(uint64_t seed, int difficulty, int modulus);

// Renders the prompt for the given template variant. Throws if the spec
// violates its invariants (answers out of range, wrong_answers on a
// non-hinting variant, or a wrong answer equal to q.truth).
std::vector<Token> render_prompt(const Vocab& vocab, const Query& q, const HintSpec& h);

// Token count render_prompt will produce, without rendering.
size_t rendered_prompt_length(const Query& q, const HintSpec& h);

// The digit immediately following the last answer marker, or nullopt for
// truncated or malformed responses.
std::optional<int> extract_answer(const Vocab& vocab, std::span<const Token> response_tokens,
                                  bool truncated);

// 1 iff the answer is present and equals q.truth.
int verify(const Query& q, const std::optional<int>& answer);

}  // namespace lte
