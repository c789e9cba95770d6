#include "lte/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace lte {

const char* to_string(TrainMode m) {
  switch (m) {
    case TrainMode::Grpo: return "grpo";
    case TrainMode::GrpoExtra: return "grpo_extra";
    case TrainMode::Lte: return "lte";
  }
  return "?";
}

TrainMode parse_mode(std::string_view s) {
  if (s == "grpo") return TrainMode::Grpo;
  if (s == "grpo_extra") return TrainMode::GrpoExtra;
  if (s == "lte") return TrainMode::Lte;
  throw std::invalid_argument("unknown mode '" + std::string(s) +
                              "' (expected grpo, grpo_extra, or lte)");
}

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

template <typename T>
T parse_number(std::string_view key, std::string_view value) {
  T out{};
  const char* end = value.data() + value.size();
  std::from_chars_result r;
  if constexpr (std::is_floating_point_v<T>)
    r = std::from_chars(value.data(), end, out);
  else
    r = std::from_chars(value.data(), end, out);
  if (r.ec != std::errc{} || r.ptr != end)
    throw std::invalid_argument("config key '" + std::string(key) + "': bad number '" +
                                std::string(value) + "'");
  return out;
}

bool parse_bool(std::string_view key, std::string_view value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw std::invalid_argument("config key '" + std::string(key) + "': bad bool '" +
                              std::string(value) + "'");
}

std::vector<DifficultyTier> parse_mix(std::string_view key, std::string_view value) {
  std::vector<DifficultyTier> out;
  size_t pos = 0;
  while (pos <= value.size()) {
    size_t comma = value.find(',', pos);
    if (comma == std::string_view::npos) comma = value.size();
    const std::string_view item = trim(value.substr(pos, comma - pos));
    const size_t colon = item.find(':');
    if (item.empty() || colon == std::string_view::npos)
      throw std::invalid_argument("config key '" + std::string(key) +
                                  "': expected difficulty:weight pairs, got '" +
                                  std::string(value) + "'");
    DifficultyTier tier;
    tier.difficulty = parse_number<int>(key, trim(item.substr(0, colon)));
    tier.weight = parse_number<double>(key, trim(item.substr(colon + 1)));
    out.push_back(tier);
    pos = comma + 1;
  }
  return out;
}

std::string format_double(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, r.ptr);
}

std::string format_mix(const std::vector<DifficultyTier>& mix) {
  std::string out;
  for (size_t i = 0; i < mix.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(mix[i].difficulty);
    out += ':';
    out += format_double(mix[i].weight);
  }
  return out;
}

}  // namespace

void apply_override(TrainConfig& cfg, std::string_view key, std::string_view value) {
  if (key == "mode") cfg.mode = parse_mode(value);
  else if (key == "seed") cfg.seed = parse_number<uint64_t>(key, value);
  else if (key == "steps") cfg.steps = parse_number<int>(key, value);
  else if (key == "batch_size") cfg.batch_size = parse_number<int>(key, value);
  else if (key == "group_size") cfg.group_size = parse_number<int>(key, value);
  else if (key == "modulus") cfg.modulus = parse_number<int>(key, value);
  else if (key == "difficulty_mix") cfg.difficulty_mix = parse_mix(key, value);
  else if (key == "max_new_tokens") cfg.max_new_tokens = parse_number<int>(key, value);
  else if (key == "window") cfg.window = parse_number<int>(key, value);
  else if (key == "embed_dim") cfg.embed_dim = parse_number<int>(key, value);
  else if (key == "init_scale") cfg.init_scale = parse_number<double>(key, value);
  else if (key == "learning_rate") cfg.learning_rate = parse_number<double>(key, value);
  else if (key == "clip_eps") cfg.clip_eps = parse_number<double>(key, value);
  else if (key == "kl_beta") cfg.kl_beta = parse_number<double>(key, value);
  else if (key == "entropy_coef") cfg.entropy_coef = parse_number<double>(key, value);
  else if (key == "shaping_gamma") cfg.shaping_gamma = parse_number<double>(key, value);
  else if (key == "temperature") cfg.temperature = parse_number<double>(key, value);
  else if (key == "adam_beta1") cfg.adam_beta1 = parse_number<double>(key, value);
  else if (key == "adam_beta2") cfg.adam_beta2 = parse_number<double>(key, value);
  else if (key == "adam_eps") cfg.adam_eps = parse_number<double>(key, value);
  else if (key == "regularize_offpolicy") cfg.regularize_offpolicy = parse_bool(key, value);
  else if (key == "checkpoint_every") cfg.checkpoint_every = parse_number<int>(key, value);
  else if (key == "eval_every") cfg.eval_every = parse_number<int>(key, value);
  else if (key == "eval_queries_per_tier") cfg.eval.queries_per_tier = parse_number<int>(key, value);
  else if (key == "eval_k") cfg.eval.k = parse_number<int>(key, value);
  else if (key == "eval_temperature") cfg.eval.temperature = parse_number<double>(key, value);
  else if (key == "eval_top_p") cfg.eval.top_p = parse_number<double>(key, value);
  else if (key == "eval_top_k") cfg.eval.top_k = parse_number<int>(key, value);
  else if (key == "eval_seed") cfg.eval.seed = parse_number<uint64_t>(key, value);
  else
    throw std::invalid_argument("unknown config key '" + std::string(key) + "'");
}

TrainConfig parse_config(std::string_view text) {
  TrainConfig cfg;
  size_t line_no = 0, pos = 0;
  while (pos <= text.size()) {
    size_t nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view line = text.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    const size_t hash = line.find('#');
    if (hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const size_t eq = line.find('=');
    if (eq == std::string_view::npos)
      throw std::invalid_argument("config line " + std::to_string(line_no) +
                                  ": expected key = value");
    apply_override(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return cfg;
}

TrainConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::invalid_argument("cannot open config file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

void validate_config(const TrainConfig& cfg) {
  const auto fail = [](const std::string& msg) { throw std::invalid_argument("config: " + msg); };
  if (cfg.steps < 0) fail("steps must be >= 0");
  if (cfg.batch_size < 1) fail("batch_size must be >= 1");
  if (cfg.group_size < 2) fail("group_size must be >= 2");
  if (cfg.modulus < 2) fail("modulus must be >= 2");
  if (cfg.difficulty_mix.empty()) fail("difficulty_mix must not be empty");
  double weight_sum = 0.0;
  for (const DifficultyTier& t : cfg.difficulty_mix) {
    if (t.difficulty < 1) fail("difficulty tiers must be >= 1");
    if (!(t.weight > 0.0)) fail("difficulty weights must be > 0");
    weight_sum += t.weight;
  }
  if (!(weight_sum > 0.0)) fail("difficulty weights must sum to > 0");
  if (cfg.max_new_tokens < 1) fail("max_new_tokens must be >= 1");
  if (cfg.window < 1) fail("window must be >= 1");
  if (cfg.embed_dim < 1) fail("embed_dim must be >= 1");
  if (!(cfg.init_scale >= 0.0)) fail("init_scale must be >= 0");
  if (!(cfg.learning_rate > 0.0)) fail("learning_rate must be > 0");
  if (!(cfg.clip_eps > 0.0 && cfg.clip_eps < 1.0)) fail("clip_eps must be in (0, 1)");
  if (cfg.kl_beta < 0.0) fail("kl_beta must be >= 0");
  if (cfg.entropy_coef < 0.0) fail("entropy_coef must be >= 0");
  if (!(cfg.shaping_gamma > 0.0)) fail("shaping_gamma must be > 0");
  if (!(cfg.temperature > 0.0)) fail("temperature must be > 0");
  if (!(cfg.adam_beta1 >= 0.0 && cfg.adam_beta1 < 1.0)) fail("adam_beta1 must be in [0, 1)");
  if (!(cfg.adam_beta2 >= 0.0 && cfg.adam_beta2 < 1.0)) fail("adam_beta2 must be in [0, 1)");
  if (!(cfg.adam_eps > 0.0)) fail("adam_eps must be > 0");
  if (cfg.checkpoint_every < 0) fail("checkpoint_every must be >= 0");
  if (cfg.eval_every < 0) fail("eval_every must be >= 0");
  if (cfg.eval.queries_per_tier < 1) fail("eval_queries_per_tier must be >= 1");
  if (cfg.eval.k < 1) fail("eval_k must be >= 1");
  if (!(cfg.eval.temperature > 0.0)) fail("eval_temperature must be > 0");
  if (!(cfg.eval.top_p > 0.0 && cfg.eval.top_p <= 1.0)) fail("eval_top_p must be in (0, 1]");
  if (cfg.eval.top_k < 0) fail("eval_top_k must be >= 0");
}

std::string serialize_config(const TrainConfig& cfg) {
  std::string out;
  const auto kv = [&](const char* key, const std::string& value) {
    out += key;
    out += " = ";
    out += value;
    out += '\n';
  };
  kv("mode", to_string(cfg.mode));
  kv("seed", std::to_string(cfg.seed));
  kv("steps", std::to_string(cfg.steps));
  kv("batch_size", std::to_string(cfg.batch_size));
  kv("group_size", std::to_string(cfg.group_size));
  kv("modulus", std::to_string(cfg.modulus));
  kv("difficulty_mix", format_mix(cfg.difficulty_mix));
  kv("max_new_tokens", std::to_string(cfg.max_new_tokens));
  kv("window", std::to_string(cfg.window));
  kv("embed_dim", std::to_string(cfg.embed_dim));
  kv("init_scale", format_double(cfg.init_scale));
  kv("learning_rate", format_double(cfg.learning_rate));
  kv("clip_eps", format_double(cfg.clip_eps));
  kv("kl_beta", format_double(cfg.kl_beta));
  kv("entropy_coef", format_double(cfg.entropy_coef));
  kv("shaping_gamma", format_double(cfg.shaping_gamma));
  kv("temperature", format_double(cfg.temperature));
  kv("adam_beta1", format_double(cfg.adam_beta1));
  kv("adam_beta2", format_double(cfg.adam_beta2));
  kv("adam_eps", format_double(cfg.adam_eps));
  kv("regularize_offpolicy", cfg.regularize_offpolicy ? "true" : "false");
  kv("checkpoint_every", std::to_string(cfg.checkpoint_every));
  kv("eval_every", std::to_string(cfg.eval_every));
  kv("eval_queries_per_tier", std::to_string(cfg.eval.queries_per_tier));
  kv("eval_k", std::to_string(cfg.eval.k));
  kv("eval_temperature", format_double(cfg.eval.temperature));
  kv("eval_top_p", format_double(cfg.eval.top_p));
  kv("eval_top_k", std::to_string(cfg.eval.top_k));
  kv("eval_seed", std::to_string(cfg.eval.seed));
  return out;
}

}  // namespace lte
