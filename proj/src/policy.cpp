#include "lte/policy.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace lte {

size_t PolicyShape::param_count() const {
  const size_t w = window, e = embed_dim, v = vocab_size;
  return v * e + e * (w * e) + e + v * e + v;
}

ParamLayout::ParamLayout(const PolicyShape& s) : shape(s) {
  const size_t w = s.window, e = s.embed_dim, v = s.vocab_size;
  emb = 0;
  a = emb + v * e;
  b = a + e * (w * e);
  c_mat = b + e;
  c_vec = c_mat + v * e;
  count = c_vec + v;
}

PolicyParams zero_params(const PolicyShape& shape) {
  if (shape.window < 1 || shape.embed_dim < 1 || shape.vocab_size < 2)
    throw std::invalid_argument("zero_params: bad shape");
  return {shape, std::vector<double>(shape.param_count(), 0.0)};
}

PolicyParams init_params(const PolicyShape& shape, uint64_t seed, double init_scale) {
  PolicyParams p = zero_params(shape);
  Rng rng(mix_seed(seed, 0x696e6974u));
  for (double& v : p.values) v = init_scale * rng.next_gaussian();
  return p;
}

void ForwardScratch::resize(const PolicyShape& s) {
  window.assign(s.window, Vocab::kPad);
  x.assign(static_cast<size_t>(s.window) * s.embed_dim, 0.0);
  h.assign(s.embed_dim, 0.0);
  z.assign(s.vocab_size, 0.0);
  p.assign(s.vocab_size, 0.0);
  dz.assign(s.vocab_size, 0.0);
  dh.assign(s.embed_dim, 0.0);
  gpre.assign(s.embed_dim, 0.0);
  dx.assign(static_cast<size_t>(s.window) * s.embed_dim, 0.0);
}

void fill_window(std::span<const Token> prompt, std::span<const Token> response, size_t idx,
                 int window_size, std::vector<Token>& window) {
  window.assign(window_size, Vocab::kPad);
  const size_t total = prompt.size() + idx;
  for (int j = 0; j < window_size; ++j) {
    const long long pos = static_cast<long long>(total) - window_size + j;
    if (pos < 0) continue;
    const size_t u = static_cast<size_t>(pos);
    window[j] = u < prompt.size() ? prompt[u] : response[u - prompt.size()];
  }
}

void forward_logits(const PolicyParams& params, const std::vector<Token>& window,
                    ForwardScratch& scratch) {
  const ParamLayout lay(params.shape);
  const int W = params.shape.window, E = params.shape.embed_dim, V = params.shape.vocab_size;
  const double* theta = params.values.data();

  for (int j = 0; j < W; ++j) {
    const Token t = window[j];
    if (t < 0 || t >= V) throw std::out_of_range("forward_logits: token outside vocab");
    std::memcpy(&scratch.x[static_cast<size_t>(j) * E], theta + lay.emb + static_cast<size_t>(t) * E,
                sizeof(double) * E);
  }

  const size_t WE = static_cast<size_t>(W) * E;
  for (int e = 0; e < E; ++e) {
    const double* row = theta + lay.a + static_cast<size_t>(e) * WE;
    double acc = theta[lay.b + e];
    for (size_t k = 0; k < WE; ++k) acc += row[k] * scratch.x[k];
    scratch.h[e] = std::tanh(acc);
  }

  for (int v = 0; v < V; ++v) {
    const double* row = theta + lay.c_mat + static_cast<size_t>(v) * E;
    double acc = theta[lay.c_vec + v];
    for (int e = 0; e < E; ++e) acc += row[e] * scratch.h[e];
    scratch.z[v] = acc;
  }
}

double softmax_from_logits(ForwardScratch& scratch, double temperature) {
  const size_t V = scratch.z.size();
  double m = -std::numeric_limits<double>::infinity();
  for (size_t v = 0; v < V; ++v) m = std::max(m, scratch.z[v] / temperature);
  double sum = 0.0;
  for (size_t v = 0; v < V; ++v) {
    scratch.p[v] = std::exp(scratch.z[v] / temperature - m);
    sum += scratch.p[v];
  }
  for (size_t v = 0; v < V; ++v) scratch.p[v] /= sum;
  return m + std::log(sum);
}

double entropy_from_logits(ForwardScratch& scratch) {
  const double lse = softmax_from_logits(scratch, 1.0);
  double pz = 0.0;
  for (size_t v = 0; v < scratch.z.size(); ++v) pz += scratch.p[v] * scratch.z[v];
  return lse - pz;
}

// Keeps the top_k most probable tokens, then the smallest prefix of the
// survivors whose renormalized mass reaches top_p. Matches the usual
// sequential warper behavior; ties broken by lower token id.
static void filter_probs(std::vector<double>& p, int top_k, double top_p,
                         std::vector<int>& order) {
  const int V = static_cast<int>(p.size());
  const bool use_k = top_k > 0 && top_k < V;
  const bool use_p = top_p < 1.0;
  if (!use_k && !use_p) return;

  order.resize(V);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return p[a] > p[b]; });

  int keep = V;
  if (use_k) keep = top_k;
  if (use_p) {
    double kept_mass = 0.0;
    for (int i = 0; i < keep; ++i) kept_mass += p[order[i]];
    double cum = 0.0;
    int nucleus = keep;
    for (int i = 0; i < keep; ++i) {
      cum += p[order[i]] / kept_mass;
      if (cum >= top_p) {
        nucleus = i + 1;
        break;
      }
    }
    keep = nucleus;
  }
  double mass = 0.0;
  for (int i = 0; i < keep; ++i) mass += p[order[i]];
  for (int i = keep; i < V; ++i) p[order[i]] = 0.0;
  for (int i = 0; i < keep; ++i) p[order[i]] /= mass;
}

static int draw_from_probs(const std::vector<double>& p, Rng& rng) {
  const double u = rng.next_double();
  double cum = 0.0;
  int last_nonzero = 0;
  for (size_t v = 0; v < p.size(); ++v) {
    if (p[v] <= 0.0) continue;
    last_nonzero = static_cast<int>(v);
    cum += p[v];
    if (u < cum) return static_cast<int>(v);
  }
  return last_nonzero;
}

Rollout sample_rollout(const PolicyParams& params, std::span<const Token> prompt,
                       const SampleConfig& cfg, Rng& rng) {
  Rollout r;
  r.prompt.assign(prompt.begin(), prompt.end());
  ForwardScratch scratch;
  scratch.resize(params.shape);
  std::vector<int> order;

  for (int step = 0; step < cfg.max_new_tokens; ++step) {
    fill_window(prompt, r.response, r.response.size(), params.shape.window, scratch.window);
    forward_logits(params, scratch.window, scratch);
    const double lse1 = softmax_from_logits(scratch, 1.0);
    double pz = 0.0;
    for (size_t v = 0; v < scratch.p.size(); ++v) pz += scratch.p[v] * scratch.z[v];
    r.entropy_sum += lse1 - pz;
    if (cfg.temperature != 1.0) softmax_from_logits(scratch, cfg.temperature);
    filter_probs(scratch.p, cfg.top_k, cfg.top_p, order);
    const int tok = draw_from_probs(scratch.p, rng);
    r.response.push_back(tok);
    r.old_logprobs.push_back(scratch.z[tok] - lse1);
    if (tok == Vocab::kEnd) break;
  }
  r.truncated = static_cast<int>(r.response.size()) == cfg.max_new_tokens &&
                (r.response.empty() || r.response.back() != Vocab::kEnd);
  return r;
}

std::vector<double> response_logprobs(const PolicyParams& params, std::span<const Token> prompt,
                                      std::span<const Token> response) {
  ForwardScratch scratch;
  scratch.resize(params.shape);
  std::vector<double> out(response.size());
  for (size_t t = 0; t < response.size(); ++t) {
    fill_window(prompt, response, t, params.shape.window, scratch.window);
    forward_logits(params, scratch.window, scratch);
    const double lse = softmax_from_logits(scratch, 1.0);
    out[t] = scratch.z[response[t]] - lse;
  }
  return out;
}

std::vector<double> position_entropies(const PolicyParams& params, std::span<const Token> prompt,
                                       std::span<const Token> response) {
  ForwardScratch scratch;
  scratch.resize(params.shape);
  std::vector<double> out(response.size());
  for (size_t t = 0; t < response.size(); ++t) {
    fill_window(prompt, response, t, params.shape.window, scratch.window);
    forward_logits(params, scratch.window, scratch);
    out[t] = entropy_from_logits(scratch);
  }
  return out;
}

void backward_from_dz(const PolicyParams& params, const std::vector<Token>& window,
                      ForwardScratch& scratch, std::vector<double>& grad) {
  const ParamLayout lay(params.shape);
  const int W = params.shape.window, E = params.shape.embed_dim, V = params.shape.vocab_size;
  const size_t WE = static_cast<size_t>(W) * E;
  const double* theta = params.values.data();
  double* g = grad.data();

  std::fill(scratch.dh.begin(), scratch.dh.end(), 0.0);
  for (int v = 0; v < V; ++v) {
    const double d = scratch.dz[v];
    g[lay.c_vec + v] += d;
    if (d == 0.0) continue;
    double* gc = g + lay.c_mat + static_cast<size_t>(v) * E;
    const double* cr = theta + lay.c_mat + static_cast<size_t>(v) * E;
    for (int e = 0; e < E; ++e) {
      gc[e] += d * scratch.h[e];
      scratch.dh[e] += d * cr[e];
    }
  }

  for (int e = 0; e < E; ++e)
    scratch.gpre[e] = (1.0 - scratch.h[e] * scratch.h[e]) * scratch.dh[e];

  std::fill(scratch.dx.begin(), scratch.dx.end(), 0.0);
  for (int e = 0; e < E; ++e) {
    const double gp = scratch.gpre[e];
    g[lay.b + e] += gp;
    if (gp == 0.0) continue;
    double* ga = g + lay.a + static_cast<size_t>(e) * WE;
    const double* ar = theta + lay.a + static_cast<size_t>(e) * WE;
    for (size_t k = 0; k < WE; ++k) {
      ga[k] += gp * scratch.x[k];
      scratch.dx[k] += gp * ar[k];
    }
  }

  for (int j = 0; j < W; ++j) {
    double* ge = g + lay.emb + static_cast<size_t>(window[j]) * E;
    const double* dxj = scratch.dx.data() + static_cast<size_t>(j) * E;
    for (int e = 0; e < E; ++e) ge[e] += dxj[e];
  }
}

void accumulate_response_grad(const PolicyParams& params, std::span<const Token> prompt,
                              std::span<const Token> response,
                              std::span<const double> logp_coeff,
                              std::span<const double> entropy_coeff, ForwardScratch& scratch,
                              std::vector<double>& grad) {
  const int V = params.shape.vocab_size;
  for (size_t t = 0; t < response.size(); ++t) {
    const double lc = logp_coeff[t];
    const double ec = entropy_coeff.empty() ? 0.0 : entropy_coeff[t];
    if (lc == 0.0 && ec == 0.0) continue;

    fill_window(prompt, response, t, params.shape.window, scratch.window);
    forward_logits(params, scratch.window, scratch);
    const double lse = softmax_from_logits(scratch, 1.0);

    if (ec != 0.0) {
      double pz = 0.0;
      for (int v = 0; v < V; ++v) pz += scratch.p[v] * scratch.z[v];
      const double ent = lse - pz;
      for (int v = 0; v < V; ++v) {
        const double lp = scratch.z[v] - lse;
        scratch.dz[v] = -lc * scratch.p[v] + ec * (-scratch.p[v] * (lp + ent));
      }
    } else {
      for (int v = 0; v < V; ++v) scratch.dz[v] = -lc * scratch.p[v];
    }
    scratch.dz[response[t]] += lc;
    backward_from_dz(params, scratch.window, scratch, grad);
  }
}

static constexpr char kMagic[4] = {'p', 'o', 'l', '1'};

bool save_params(const PolicyParams& params, const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) return false;
  bool ok = std::fwrite(kMagic, 1, 4, f) == 4;
  const int32_t dims[3] = {params.shape.window, params.shape.embed_dim, params.shape.vocab_size};
  ok = ok && std::fwrite(dims, sizeof(int32_t), 3, f) == 3;
  const uint64_t n = params.values.size();
  ok = ok && std::fwrite(&n, sizeof(n), 1, f) == 1;
  ok = ok && std::fwrite(params.values.data(), sizeof(double), params.values.size(), f) ==
                 params.values.size();
  ok = std::fclose(f) == 0 && ok;
  return ok;
}

std::optional<PolicyParams> load_params(const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "rb");
  if (!f) return std::nullopt;
  char magic[4];
  int32_t dims[3];
  uint64_t n = 0;
  bool ok = std::fread(magic, 1, 4, f) == 4 && std::memcmp(magic, kMagic, 4) == 0;
  ok = ok && std::fread(dims, sizeof(int32_t), 3, f) == 3;
  ok = ok && std::fread(&n, sizeof(n), 1, f) == 1;
  PolicyParams p;
  if (ok) {
    p.shape = {dims[0], dims[1], dims[2]};
    ok = p.shape.window >= 1 && p.shape.embed_dim >= 1 && p.shape.vocab_size >= 2 &&
         n == p.shape.param_count();
  }
  if (ok) {
    p.values.resize(n);
    ok = std::fread(p.values.data(), sizeof(double), n, f) == n;
  }
  std::fclose(f);
  if (!ok) return std::nullopt;
  return p;
}

}  // namespace lte
