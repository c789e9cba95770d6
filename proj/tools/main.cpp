#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "lte/config.hpp"
#include "lte/metrics.hpp"
#include "lte/theory.hpp"
#include "lte/trainer.hpp"

namespace fs = std::filesystem;

namespace {

constexpr const char* kToolVersion = "0.1.0";
constexpr int kExitUsage = 1;
constexpr int kExitRuntime = 2;

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string dir_stamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y%m%d-%H%M%S", &tm);
  return buf;
}

fs::path unique_run_dir(const fs::path& root, const std::string& base) {
  fs::path dir = root / base;
  for (int suffix = 2; fs::exists(dir); ++suffix)
    dir = root / (base + "-" + std::to_string(suffix));
  return dir;
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << content;
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

lte::TrainConfig merged_config(const std::string& config_path,
                               const std::vector<std::string>& overrides) {
  lte::TrainConfig cfg = lte::load_config(config_path);
  for (const std::string& kv : overrides) {
    const size_t eq = kv.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("override '" + kv + "' is not key=value");
    std::string_view key(kv.data(), eq), value(kv.data() + eq + 1, kv.size() - eq - 1);
    while (!key.empty() && key.back() == ' ') key.remove_suffix(1);
    while (!value.empty() && value.front() == ' ') value.remove_prefix(1);
    lte::apply_override(cfg, key, value);
  }
  lte::validate_config(cfg);
  return cfg;
}

struct RunOutcome {
  fs::path dir;
  lte::TrainResult result;
};

// Executes one training run into its own directory: config snapshot, JSONL
// and CSV metrics, checkpoints, eval reports, manifest.
RunOutcome run_training(const lte::TrainConfig& cfg, const fs::path& out_root,
                        const std::string& name_override) {
  const std::string base = name_override.empty()
                               ? dir_stamp() + "-" + lte::to_string(cfg.mode) + "-" +
                                     std::to_string(cfg.seed)
                               : name_override;
  const fs::path dir = unique_run_dir(out_root, base);
  fs::create_directories(dir);

  const std::string started = utc_timestamp();
  const std::string config_text = lte::serialize_config(cfg);
  write_file(dir / "config.conf", config_text);

  std::ofstream jsonl(dir / "metrics.jsonl", std::ios::binary);
  std::ofstream csv(dir / "metrics.csv", std::ios::binary);
  if (!jsonl || !csv) throw std::runtime_error("cannot open metrics sinks in " + dir.string());
  csv << lte::step_metrics_csv_header() << "\n";

  std::vector<std::string> ckpt_paths, eval_paths;
  lte::TrainHooks hooks;
  hooks.on_step = [&](const lte::StepMetrics& m) {
    jsonl << lte::step_metrics_json(m) << "\n";
    csv << lte::step_metrics_csv_row(m) << "\n";
  };
  hooks.on_checkpoint = [&](int step, const lte::PolicyParams& params) {
    const fs::path p = dir / ("ckpt-" + std::to_string(step) + ".bin");
    if (!lte::save_params(params, p.string()))
      throw std::runtime_error("checkpoint write failed: " + p.string());
    ckpt_paths.push_back(p.string());
  };
  hooks.on_eval = [&](int step, const lte::EvalReport& report) {
    if (step >= cfg.steps) return;  // the final report is written separately
    const fs::path p = dir / ("eval-" + std::to_string(step) + ".json");
    write_file(p, lte::eval_report_json(report) + "\n");
    eval_paths.push_back(p.string());
  };

  RunOutcome outcome{dir, lte::train(cfg, hooks)};
  jsonl.close();
  csv.close();

  const fs::path final_ckpt = dir / "ckpt-final.bin";
  if (!lte::save_params(outcome.result.params, final_ckpt.string()))
    throw std::runtime_error("checkpoint write failed: " + final_ckpt.string());
  write_file(dir / "eval.json", lte::eval_report_json(outcome.result.final_eval) + "\n");

  nlohmann::ordered_json manifest;
  manifest["tool_version"] = kToolVersion;
  manifest["mode"] = lte::to_string(cfg.mode);
  manifest["seed"] = cfg.seed;
  manifest["started"] = started;
  manifest["finished"] = utc_timestamp();
  manifest["config"] = config_text;
  manifest["artifacts"]["config"] = (dir / "config.conf").string();
  manifest["artifacts"]["metrics_jsonl"] = (dir / "metrics.jsonl").string();
  manifest["artifacts"]["metrics_csv"] = (dir / "metrics.csv").string();
  manifest["artifacts"]["checkpoint_final"] = final_ckpt.string();
  manifest["artifacts"]["eval"] = (dir / "eval.json").string();
  manifest["artifacts"]["checkpoints"] = ckpt_paths;
  manifest["artifacts"]["evals"] = eval_paths;
  write_file(dir / "manifest.json", manifest.dump(2) + "\n");
  return outcome;
}

std::string format_num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

int cmd_train(const std::string& config_path, const std::vector<std::string>& overrides,
              const std::string& out_root, const std::string& name) {
  const lte::TrainConfig cfg = merged_config(config_path, overrides);
  const RunOutcome out = run_training(cfg, out_root, name);
  const lte::EvalReport& e = out.result.final_eval;
  std::cout << "run " << out.dir.string() << "\n"
            << "  steps " << out.result.metrics.size() << ", mode " << lte::to_string(cfg.mode)
            << ", seed " << cfg.seed << "\n"
            << "  final mean@" << e.k << " " << format_num(e.overall_mean_at_k) << ", pass@" << e.k
            << " " << format_num(e.overall_pass_at_k) << "\n";
  return 0;
}

int cmd_eval(const std::string& ckpt_path, const std::string& config_path,
             const std::vector<std::string>& overrides, const std::string& out_path) {
  const lte::TrainConfig cfg = merged_config(config_path, overrides);
  const auto params = lte::load_params(ckpt_path);
  if (!params) throw std::invalid_argument("cannot load checkpoint '" + ckpt_path + "'");
  const lte::PolicyShape expect{cfg.window, cfg.embed_dim, lte::Vocab::kDigitBase + cfg.modulus};
  if (!(params->shape == expect))
    throw std::invalid_argument("checkpoint shape does not match the config");

  const lte::Vocab vocab(cfg.modulus);
  const std::vector<int> tiers = lte::difficulty_tiers(cfg);
  const lte::EvalReport report =
      lte::evaluate(*params, vocab, tiers, cfg.max_new_tokens, cfg.eval);
  write_file(out_path, lte::eval_report_json(report) + "\n");

  std::cout << "eval of " << ckpt_path << " (k=" << report.k << ", T=" << report.temperature
            << ")\n";
  for (const lte::TierReport& t : report.tiers)
    std::cout << "  difficulty " << t.difficulty << ": mean@" << report.k << " "
              << format_num(t.mean_at_k) << ", pass@" << report.k << " "
              << format_num(t.pass_at_k) << "\n";
  std::cout << "  overall: mean@" << report.k << " " << format_num(report.overall_mean_at_k)
            << ", pass@" << report.k << " " << format_num(report.overall_pass_at_k) << "\n"
            << "  report written to " << out_path << "\n";
  return 0;
}

int cmd_compare(const std::string& config_path, const std::vector<std::string>& overrides,
                const std::string& seeds_arg, const std::string& out_root, double ema_alpha) {
  std::vector<uint64_t> seeds;
  {
    size_t pos = 0;
    while (pos <= seeds_arg.size()) {
      size_t comma = seeds_arg.find(',', pos);
      if (comma == std::string::npos) comma = seeds_arg.size();
      seeds.push_back(std::stoull(seeds_arg.substr(pos, comma - pos)));
      pos = comma + 1;
    }
  }
  if (seeds.empty()) throw std::invalid_argument("no seeds given");

  const lte::TrainMode modes[] = {lte::TrainMode::Grpo, lte::TrainMode::GrpoExtra,
                                  lte::TrainMode::Lte};
  fs::create_directories(out_root);
  std::ofstream csv(fs::path(out_root) / "compare.csv", std::ios::binary);
  if (!csv) throw std::runtime_error("cannot write compare.csv");
  csv << "mode,seed,step,none_pass,some_pass,all_pass,none_pass_ema,final_mean_at_k,"
         "final_pass_at_k\n";

  for (const lte::TrainMode mode : modes) {
    for (const uint64_t seed : seeds) {
      lte::TrainConfig cfg = merged_config(config_path, overrides);
      cfg.mode = mode;
      cfg.seed = seed;
      const std::string name =
          std::string(lte::to_string(mode)) + "-seed" + std::to_string(seed);
      const RunOutcome out = run_training(cfg, out_root, name);

      std::vector<double> none_series;
      for (const lte::StepMetrics& m : out.result.metrics)
        none_series.push_back(m.census.none_pass);
      const std::vector<double> smoothed =
          none_series.empty() ? none_series : lte::ema(none_series, ema_alpha);
      const lte::EvalReport& e = out.result.final_eval;
      for (size_t i = 0; i < out.result.metrics.size(); ++i) {
        const lte::StepMetrics& m = out.result.metrics[i];
        csv << lte::to_string(mode) << ',' << seed << ',' << m.step << ','
            << m.census.none_pass << ',' << m.census.some_pass << ',' << m.census.all_pass << ','
            << format_num(smoothed[i]) << ',' << format_num(e.overall_mean_at_k) << ','
            << format_num(e.overall_pass_at_k) << "\n";
      }
      std::cout << "done " << lte::to_string(mode) << " seed " << seed << ": final none-pass ema "
                << format_num(smoothed.empty() ? 0.0 : smoothed.back()) << ", pass@" << e.k << " "
                << format_num(e.overall_pass_at_k) << "\n";
    }
  }
  std::cout << "merged table: " << (fs::path(out_root) / "compare.csv").string() << "\n";
  return 0;
}

std::vector<double> parse_list(const std::string& arg) {
  std::vector<double> out;
  size_t pos = 0;
  while (pos <= arg.size()) {
    size_t comma = arg.find(',', pos);
    if (comma == std::string::npos) comma = arg.size();
    out.push_back(std::stod(arg.substr(pos, comma - pos)));
    pos = comma + 1;
  }
  return out;
}

int cmd_bound(const std::string& alphas, const std::string& deltas, const std::string& taus,
              const std::string& ns) {
  std::printf("%10s %10s %10s %6s  %s\n", "alpha", "delta", "tau", "n", "bound");
  for (double a : parse_list(alphas))
    for (double d : parse_list(deltas))
      for (double t : parse_list(taus))
        for (double n : parse_list(ns)) {
          std::printf("%10g %10g %10g %6g  ", a, d, t, n);
          try {
            std::printf("%.10g\n", lte::pruning_bound(a, d, t, n));
          } catch (const std::invalid_argument&) {
            std::printf("domain error\n");
          }
        }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"desk-scale RLVR laboratory: GRPO, extra-rollout, and hinted-rollout training"};
  app.require_subcommand(1);

  std::string config_path, out_root = "runs", run_name, ckpt_path, eval_out = "eval.json";
  std::string seeds = "1,2,3,4,5";
  std::vector<std::string> overrides;
  double ema_alpha = 0.1;
  std::string b_alpha = "1", b_delta = "0.1", b_tau = "0.5", b_n = "8";

  CLI::App* train = app.add_subcommand("train", "run one training job");
  train->add_option("-c,--config", config_path, "config file")->required();
  train->add_option("-O,--set", overrides, "override, key=value (repeatable)");
  train->add_option("-o,--out", out_root, "runs root directory");
  train->add_option("--name", run_name, "run directory name (default: timestamp-mode-seed)");

  CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint on the held-out set");
  eval->add_option("ckpt", ckpt_path, "checkpoint file")->required();
  eval->add_option("-c,--config", config_path, "config file")->required();
  eval->add_option("-O,--set", overrides, "override, key=value (repeatable)");
  eval->add_option("-o,--out", eval_out, "output JSON path");

  CLI::App* compare = app.add_subcommand("compare", "run all three modes over a seed list");
  compare->add_option("-c,--config", config_path, "config file")->required();
  compare->add_option("-O,--set", overrides, "override, key=value (repeatable)");
  compare->add_option("-s,--seeds", seeds, "comma-separated seeds");
  compare->add_option("-o,--out", out_root, "output root directory");
  compare->add_option("--ema", ema_alpha, "EMA smoothing factor for none-pass curves");

  CLI::App* bound = app.add_subcommand("bound", "tabulate the pruning lower bound");
  bound->add_option("--alpha", b_alpha, "comma-separated alpha values");
  bound->add_option("--delta", b_delta, "comma-separated delta values");
  bound->add_option("--tau", b_tau, "comma-separated tau values");
  bound->add_option("-n", b_n, "comma-separated n values");

  CLI11_PARSE(app, argc, argv);

  try {
    if (train->parsed()) return cmd_train(config_path, overrides, out_root, run_name);
    if (eval->parsed()) return cmd_eval(ckpt_path, config_path, overrides, eval_out);
    if (compare->parsed()) return cmd_compare(config_path, overrides, seeds, out_root, ema_alpha);
    if (bound->parsed()) return cmd_bound(b_alpha, b_delta, b_tau, b_n);
  } catch (const lte::DivergenceError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}
