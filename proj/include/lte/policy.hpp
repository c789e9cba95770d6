#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lte/rng.hpp"
#include "lte/task.hpp"

namespace lte {

// One-hidden-layer MLP over a fixed window of the last `window` tokens:
//   x = concat(emb[t] for t in window)        (window*embed_dim)
//   h = tanh(A x + b)                         (embed_dim)
//   z = C h + c                               (vocab_size logits)
// Small enough that gradients are computed exactly in double precision.
struct PolicyShape {
  int window = 0;
  int embed_dim = 0;
  int vocab_size = 0;

  size_t param_count() const;
  bool operator==(const PolicyShape&) const = default;
};

// Offsets into the flat parameter vector. Layout order:
// [emb V*E][A E x W*E][b E][C V x E][c V], all row-major.
struct ParamLayout {
  explicit ParamLayout(const PolicyShape& s);

  size_t emb = 0, a = 0, b = 0, c_mat = 0, c_vec = 0, count = 0;
  PolicyShape shape;
};

struct PolicyParams {
  PolicyShape shape;
  std::vector<double> values;
};

PolicyParams zero_params(const PolicyShape& shape);
PolicyParams init_params(const PolicyShape& shape, uint64_t seed, double init_scale);

// Reused buffers for a forward (and optionally backward) pass.
struct ForwardScratch {
  std::vector<Token> window;
  std::vector<double> x, h, z, p, dz, dh, gpre, dx;

  void resize(const PolicyShape& s);
};

// Fills `window` (size W) with the last W tokens of prompt+response[0..idx),
// left-padded with kPad when the sequence is shorter than the window.
void fill_window(std::span<const Token> prompt, std::span<const Token> response, size_t idx,
                 int window_size, std::vector<Token>& window);

// Logits for the next token given the current window. Leaves x, h, z populated
// in the scratch.
void forward_logits(const PolicyParams& params, const std::vector<Token>& window,
                    ForwardScratch& scratch);

// In: scratch.z. Out: scratch.p = softmax(z / temperature). Returns
// logsumexp(z / temperature).
double softmax_from_logits(ForwardScratch& scratch, double temperature);

// Entropy of softmax(z) in nats, computed as logsumexp(z) - sum p*z so that
// all-equal logits give exactly log(vocab_size). Uses scratch.z and fills
// scratch.p.
double entropy_from_logits(ForwardScratch& scratch);

struct SampleConfig {
  int max_new_tokens = 64;
  double temperature = 1.0;
  int top_k = 0;      // 0 disables
  double top_p = 1.0; // 1 disables
};

enum class Origin { OnPolicy, OffPolicy };

// One sampled response with everything the losses need. old_logprobs are
// log-probabilities under the sampling-time parameters at temperature 1,
// whatever temperature was used to draw the tokens.
struct Rollout {
  std::vector<Token> prompt;  // tokens the response was conditioned on when generated
  std::vector<Token> response;
  std::vector<double> old_logprobs;
  double entropy_sum = 0.0;  // temperature-1 next-token entropies summed over positions
  bool truncated = false;
  bool hinted = false;
  Origin origin = Origin::OnPolicy;
  double reward = 0.0;
  std::optional<int> answer;
};

// Samples autoregressively until END is drawn or max_new_tokens is reached.
// END, when drawn, is kept as the final response token. truncated is set iff
// the budget was exhausted without END.
Rollout sample_rollout(const PolicyParams& params, std::span<const Token> prompt,
                       const SampleConfig& cfg, Rng& rng);

// Temperature-1 log-probabilities of each response token given the prompt.
std::vector<double> response_logprobs(const PolicyParams& params, std::span<const Token> prompt,
                                      std::span<const Token> response);

// Temperature-1 entropy of the next-token distribution at each of the L
// response positions.
std::vector<double> position_entropies(const PolicyParams& params, std::span<const Token> prompt,
                                       std::span<const Token> response);

// Backpropagates dJ/dz (in scratch.dz) for the current forward pass into
// grad, which has the same layout as params. scratch.x and scratch.h must
// still hold the forward values.
void backward_from_dz(const PolicyParams& params, const std::vector<Token>& window,
                      ForwardScratch& scratch, std::vector<double>& grad);

// Per-position scalar weights for one response:
//   dJ/dz_t = logp_coeff[t] * (onehot(o_t) - p) + entropy_coeff[t] * dH/dz
// Positions where both coefficients are exactly zero are skipped entirely.
void accumulate_response_grad(const PolicyParams& params, std::span<const Token> prompt,
                              std::span<const Token> response,
                              std::span<const double> logp_coeff,
                              std::span<const double> entropy_coeff, ForwardScratch& scratch,
                              std::vector<double>& grad);

bool save_params(const PolicyParams& params, const std::string& path);
std::optional<PolicyParams> load_params(const std::string& path);

}  // namespace lte
