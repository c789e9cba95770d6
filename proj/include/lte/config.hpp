#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "lte/metrics.hpp"

namespace lte {

enum class TrainMode { Grpo, GrpoExtra, Lte };

const char* to_string(TrainMode m);
TrainMode parse_mode(std::string_view s);

struct DifficultyTier {
  int difficulty = 1;
  double weight = 1.0;
};

// Flat training configuration. File format is one `key = value` per line,
// '#' comments; unknown keys are hard errors. CLI overrides reuse the same
// key names.
struct TrainConfig {
  TrainMode mode = TrainMode::Grpo;
  uint64_t seed = 1;
  int steps = 300;
  int batch_size = 32;   // queries per step
  int group_size = 8;    // rollouts per query, and extra rollouts per hint
  int modulus = 10;
  std::vector<DifficultyTier> difficulty_mix{{1, 0.5}, {4, 0.5}};
  int max_new_tokens = 64;
  int window = 8;
  int embed_dim = 16;
  double init_scale = 0.02;
  double learning_rate = 0.02;
  double clip_eps = 0.2;
  double kl_beta = 0.001;
  double entropy_coef = 0.0;
  double shaping_gamma = 0.1;
  double temperature = 1.0;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  bool regularize_offpolicy = false;
  int checkpoint_every = 0;  // 0: final checkpoint only
  int eval_every = 0;        // 0: evaluate only after the last step
  EvalSettings eval;
};

TrainConfig parse_config(std::string_view text);
TrainConfig load_config(const std::string& path);

// Sets one key from its textual value; throws on unknown keys or unparsable
// values. Used by both the file parser and CLI overrides.
void apply_override(TrainConfig& cfg, std::string_view key, std::string_view value);

void validate_config(const TrainConfig& cfg);

// Canonical textual form: fixed key order, shortest round-trip numerals.
// parse_config(serialize_config(c)) reproduces c exactly.
std::string serialize_config(const TrainConfig& cfg);

}  // namespace lte
