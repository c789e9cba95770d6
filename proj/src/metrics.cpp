#include "lte/metrics.hpp"

#include <stdexcept>

#include "json.hpp"

namespace lte {

static void check_matrix(const std::vector<std::vector<int>>& m) {
  if (m.empty() || m[0].empty()) throw std::invalid_argument("correctness matrix is empty");
  for (const auto& row : m)
    if (row.size() != m[0].size())
      throw std::invalid_argument("correctness matrix rows differ in length");
}

double mean_at_k(const std::vector<std::vector<int>>& correctness) {
  check_matrix(correctness);
  long long hits = 0, total = 0;
  for (const auto& row : correctness)
    for (int c : row) {
      hits += c != 0;
      ++total;
    }
  return static_cast<double>(hits) / static_cast<double>(total);
}

double pass_at_k(const std::vector<std::vector<int>>& correctness) {
  check_matrix(correctness);
  long long solved = 0;
  for (const auto& row : correctness) {
    for (int c : row)
      if (c != 0) {
        ++solved;
        break;
      }
  }
  return static_cast<double>(solved) / static_cast<double>(correctness.size());
}

std::vector<double> ema(std::span<const double> series, double alpha) {
  if (series.empty()) throw std::invalid_argument("ema: empty series");
  if (!(alpha > 0.0 && alpha <= 1.0)) throw std::invalid_argument("ema: alpha outside (0, 1]");
  std::vector<double> out(series.size());
  out[0] = series[0];
  for (size_t t = 1; t < series.size(); ++t)
    out[t] = alpha * series[t] + (1.0 - alpha) * out[t - 1];
  return out;
}

StatusCounts group_status_counts(std::span<const GroupStatus> statuses) {
  StatusCounts c;
  for (const GroupStatus& s : statuses) {
    switch (s.pass_class) {
      case PassClass::NonePass: ++c.none_pass; break;
      case PassClass::SomePass: ++c.some_pass; break;
      case PassClass::AllPass: ++c.all_pass; break;
    }
  }
  return c;
}

EvalReport evaluate(const PolicyParams& params, const Vocab& vocab,
                    std::span<const int> difficulties, int max_new_tokens,
                    const EvalSettings& settings) {
  if (settings.k < 1 || settings.queries_per_tier < 1)
    throw std::invalid_argument("evaluate: k and queries_per_tier must be positive");

  EvalReport report;
  report.k = settings.k;
  report.temperature = settings.temperature;
  report.top_p = settings.top_p;
  report.top_k = settings.top_k;

  SampleConfig decode;
  decode.max_new_tokens = max_new_tokens;
  decode.temperature = settings.temperature;
  decode.top_p = settings.top_p;
  decode.top_k = settings.top_k;

  std::vector<std::vector<int>> all_rows;
  for (int d : difficulties) {
    std::vector<std::vector<int>> rows;
    for (int i = 0; i < settings.queries_per_tier; ++i) {
      const uint64_t task_seed = mix_seed(settings.seed, 0x6576616cu, static_cast<uint64_t>(d),
                                          static_cast<uint64_t>(i));
      const Query q = generate_task(vocab, task_seed, d);
      const std::vector<Token> prompt = render_prompt(vocab, q, HintSpec::plain());
      std::vector<int> row(settings.k);
      for (int j = 0; j < settings.k; ++j) {
        Rng rng(mix_seed(task_seed, 0x6465636fu, static_cast<uint64_t>(j)));
        const Rollout r = sample_rollout(params, prompt, decode, rng);
        row[j] = verify(q, extract_answer(vocab, r.response, r.truncated));
      }
      rows.push_back(row);
      all_rows.push_back(std::move(row));
    }
    TierReport tier;
    tier.difficulty = d;
    tier.queries = settings.queries_per_tier;
    tier.mean_at_k = mean_at_k(rows);
    tier.pass_at_k = pass_at_k(rows);
    report.tiers.push_back(tier);
  }
  report.total_queries = static_cast<int>(all_rows.size());
  report.overall_mean_at_k = mean_at_k(all_rows);
  report.overall_pass_at_k = pass_at_k(all_rows);
  return report;
}

std::string eval_report_json(const EvalReport& report) {
  nlohmann::json j;
  j["k"] = report.k;
  j["temperature"] = report.temperature;
  j["top_p"] = report.top_p;
  j["top_k"] = report.top_k;
  j["total_queries"] = report.total_queries;
  j["overall_mean_at_k"] = report.overall_mean_at_k;
  j["overall_pass_at_k"] = report.overall_pass_at_k;
  j["tiers"] = nlohmann::json::array();
  for (const TierReport& t : report.tiers) {
    j["tiers"].push_back({{"difficulty", t.difficulty},
                          {"queries", t.queries},
                          {"mean_at_k", t.mean_at_k},
                          {"pass_at_k", t.pass_at_k}});
  }
  return j.dump();
}

}  // namespace lte
