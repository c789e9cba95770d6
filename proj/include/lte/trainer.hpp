#pragma once

#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "lte/config.hpp"
#include "lte/lte.hpp"
#include "lte/metrics.hpp"

namespace lte {

// Raised when the loss, gradient, or parameters stop being finite.
struct DivergenceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct AdamState {
  std::vector<double> m, v;
  long long t = 0;
};

struct StepMetrics {
  int step = 0;
  StatusCounts census;  // measured on the initial rollouts, before replacement
  double mean_entropy = 0.0;
  double mean_response_len = 0.0;
  double mean_reward = 0.0;
  LossBreakdown loss;
  int extra_groups = 0;   // groups that received extra rollouts this step
  int extra_correct = 0;  // correct extras across those groups
  int replaced = 0;       // rollouts swapped out by replacement
  double grad_norm = 0.0;
  double param_norm = 0.0;
};

std::string step_metrics_json(const StepMetrics& m);
std::string step_metrics_csv_header();
std::string step_metrics_csv_row(const StepMetrics& m);

struct TrainState {
  Vocab vocab;
  PolicyParams params;
  PolicyParams ref_params;  // frozen at step 0, anchors the KL penalty
  AdamState opt;
  int step = 0;
};

TrainState init_train_state(const TrainConfig& cfg);

// Queries for one step, drawn from the difficulty mixture. Depends only on
// (cfg.seed, task parameters, step), not on execution order.
std::vector<Query> sample_batch(const TrainConfig& cfg, int step);

// One full pass: sample G rollouts per query, verify, census, mode-dependent
// extra rollouts and replacement for none-pass groups, advantages, one
// mixed-objective gradient ascent update. Throws DivergenceError when
// anything stops being finite.
StepMetrics train_step(TrainState& state, std::span<const Query> batch, const TrainConfig& cfg);

// Adam in ascent direction. Moments are lazily sized on first use.
void apply_update(PolicyParams& params, const std::vector<double>& grad, AdamState& opt,
                  const TrainConfig& cfg);

struct TrainHooks {
  std::function<void(const StepMetrics&)> on_step;
  std::function<void(int step, const PolicyParams&)> on_checkpoint;  // cadence only, not final
  std::function<void(int step, const EvalReport&)> on_eval;
};

struct TrainResult {
  PolicyParams params;
  std::vector<StepMetrics> metrics;
  EvalReport final_eval;
};

// Runs cfg.steps training steps and a final held-out evaluation.
TrainResult train(const TrainConfig& cfg, const TrainHooks& hooks = {});

// Distinct difficulties of the mixture, ascending; the evaluation tiers.
std::vector<int> difficulty_tiers(const TrainConfig& cfg);

}  // namespace lte
