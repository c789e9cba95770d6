#include <algorithm>
#include <cmath>
#include <cstring>
#include <map>
#include <set>
#include <vector>

#include "doctest.h"
#include "helpers.hpp"
#include "lte/lte.hpp"
#include "lte/rng.hpp"

using namespace lte;

namespace {

Rollout stub_rollout(double reward, bool truncated, std::optional<int> answer) {
  Rollout r;
  r.response = {Vocab::kAns, Vocab::kEnd};
  r.old_logprobs = {-1.0, -1.0};
  r.reward = reward;
  r.truncated = truncated;
  r.answer = answer;
  return r;
}

RolloutGroup stub_group(const std::vector<Rollout>& rollouts) {
  RolloutGroup g;
  g.query.truth = 5;
  g.rollouts = rollouts;
  return g;
}

}  // namespace

TEST_CASE("group classification census") {
  SUBCASE("all failed, all truncated") {
    const RolloutGroup g = stub_group({stub_rollout(0, true, {}), stub_rollout(0, true, {})});
    const GroupStatus st = classify_group(g);
    CHECK(st.pass_class == PassClass::NonePass);
    CHECK(st.trunc_class == TruncClass::AllTruncated);
    CHECK(st.wrong_answers.empty());
  }
  SUBCASE("all failed, some truncated, wrong answers collected sorted unique") {
    const RolloutGroup g = stub_group({
        stub_rollout(0, true, {}),
        stub_rollout(0, false, 9),
        stub_rollout(0, false, 3),
        stub_rollout(0, false, 9),
        stub_rollout(0, false, {}),
    });
    const GroupStatus st = classify_group(g);
    CHECK(st.pass_class == PassClass::NonePass);
    CHECK(st.trunc_class == TruncClass::SomeTruncated);
    CHECK(st.wrong_answers == std::vector<int>{3, 9});
  }
  SUBCASE("no truncation, committed wrong answers") {
    const RolloutGroup g = stub_group({stub_rollout(0, false, 1), stub_rollout(0, false, 2)});
    const GroupStatus st = classify_group(g);
    CHECK(st.pass_class == PassClass::NonePass);
    CHECK(st.trunc_class == TruncClass::NoneTruncated);
    CHECK(st.wrong_answers == std::vector<int>{1, 2});
  }
  SUBCASE("mixed rewards") {
    const RolloutGroup g = stub_group({stub_rollout(1, false, 5), stub_rollout(0, false, 2)});
    const GroupStatus st = classify_group(g);
    CHECK(st.pass_class == PassClass::SomePass);
    CHECK(st.wrong_answers == std::vector<int>{2});
  }
  SUBCASE("all passed") {
    const RolloutGroup g = stub_group({stub_rollout(1, false, 5), stub_rollout(1, false, 5)});
    CHECK(classify_group(g).pass_class == PassClass::AllPass);
  }
  SUBCASE("passing answers never land in wrong_answers") {
    const RolloutGroup g = stub_group({stub_rollout(1, false, 5), stub_rollout(0, false, 4)});
    CHECK(classify_group(g).wrong_answers == std::vector<int>{4});
  }
  SUBCASE("empty group throws") {
    CHECK_THROWS_AS(classify_group(stub_group({})), std::invalid_argument);
  }
}

TEST_CASE("hint selection follows the truncation census") {
  GroupStatus st;
  st.pass_class = PassClass::NonePass;

  st.trunc_class = TruncClass::AllTruncated;
  st.wrong_answers = {};
  CHECK(select_hint(st).variant == HintVariant::Concise);

  st.trunc_class = TruncClass::SomeTruncated;
  st.wrong_answers = {2, 7};
  HintSpec h = select_hint(st);
  CHECK(h.variant == HintVariant::ConciseHint);
  CHECK(h.wrong_answers == std::vector<int>{2, 7});

  st.trunc_class = TruncClass::NoneTruncated;
  h = select_hint(st);
  CHECK(h.variant == HintVariant::Hint);
  CHECK(h.wrong_answers == std::vector<int>{2, 7});

  st.pass_class = PassClass::SomePass;
  CHECK_THROWS_AS(select_hint(st), std::invalid_argument);
  st.pass_class = PassClass::AllPass;
  CHECK_THROWS_AS(select_hint(st), std::invalid_argument);
}

TEST_CASE("extra rollouts are conditioned on the hinted prompt and flagged off-policy") {
  Vocab vocab(10);
  const PolicyShape s{8, 16, vocab.size()};
  const PolicyParams p = init_params(s, 5, 0.3);
  const Query q = generate_task(vocab, 77, 2);
  const int wrong = (q.truth + 1) % 10;
  SampleConfig cfg;
  cfg.max_new_tokens = 12;

  SUBCASE("hinting spec") {
    Rng rng(61);
    const std::vector<Rollout> extras =
        hinted_extra_rollouts(p, vocab, q, HintSpec::hint({wrong}), 6, cfg, rng);
    REQUIRE(extras.size() == 6);
    const std::vector<Token> want = render_prompt(vocab, q, HintSpec::hint({wrong}));
    for (const Rollout& r : extras) {
      CHECK(r.prompt == want);
      CHECK(r.hinted);
      CHECK(r.origin == Origin::OffPolicy);
      CHECK(r.reward == verify(q, r.answer));
    }
  }
  SUBCASE("concise spec") {
    Rng rng(62);
    const std::vector<Rollout> extras =
        hinted_extra_rollouts(p, vocab, q, HintSpec::concise(), 3, cfg, rng);
    for (const Rollout& r : extras) {
      CHECK(r.prompt.front() == Vocab::kConcise);
      CHECK(r.hinted);
      CHECK(r.origin == Origin::OffPolicy);
    }
  }
  SUBCASE("plain spec yields ordinary on-policy rollouts") {
    Rng rng(63);
    const std::vector<Rollout> extras =
        hinted_extra_rollouts(p, vocab, q, HintSpec::plain(), 3, cfg, rng);
    for (const Rollout& r : extras) {
      CHECK(r.prompt == render_prompt(vocab, q, HintSpec::plain()));
      CHECK(!r.hinted);
      CHECK(r.origin == Origin::OnPolicy);
    }
  }
}

namespace {

RolloutGroup failing_group(int n) {
  std::vector<Rollout> rs;
  for (int i = 0; i < n; ++i) {
    Rollout r = stub_rollout(0, false, 1);
    r.response = {Vocab::kAns, static_cast<Token>(Vocab::kDigitBase + i), Vocab::kEnd};
    r.old_logprobs = {-1, -1, -1};
    rs.push_back(r);
  }
  return stub_group(rs);
}

Rollout correct_extra(int tag) {
  Rollout r = stub_rollout(1, false, 5);
  r.hinted = true;
  r.origin = Origin::OffPolicy;
  r.response = {static_cast<Token>(Vocab::kDigitBase + tag)};
  r.old_logprobs = {-0.5};
  return r;
}

}  // namespace

TEST_CASE("replacement swaps in extras and recomputes advantages") {
  const RolloutGroup initial = failing_group(8);

  SUBCASE("no extras leaves the group unchanged with zero advantages") {
    const MixedGroup m = replace(initial, {}, 99);
    REQUIRE(m.rollouts.size() == 8);
    for (int i = 0; i < 8; ++i) CHECK(m.rollouts[i].response == initial.rollouts[i].response);
    CHECK(m.replaced_indices.empty());
    for (double a : m.advantages.values) CHECK(a == 0.0);
  }
  SUBCASE("three extras, extras lead and survivors keep their order") {
    const std::vector<Rollout> extras{correct_extra(0), correct_extra(1), correct_extra(2)};
    const MixedGroup m = replace(initial, extras, 99);
    REQUIRE(m.rollouts.size() == 8);
    REQUIRE(m.replaced_indices.size() == 3);
    CHECK(std::is_sorted(m.replaced_indices.begin(), m.replaced_indices.end()));
    for (int i = 0; i < 3; ++i) {
      CHECK(m.rollouts[i].hinted);
      CHECK(m.rollouts[i].reward == 1.0);
      CHECK(m.rewards[i] == 1.0);
    }
    // Survivors appear in their original relative order.
    std::vector<int> survivors;
    for (int i = 0; i < 8; ++i)
      if (!std::count(m.replaced_indices.begin(), m.replaced_indices.end(), i))
        survivors.push_back(i);
    REQUIRE(survivors.size() == 5);
    for (int i = 0; i < 5; ++i)
      CHECK(m.rollouts[3 + i].response == initial.rollouts[survivors[i]].response);

    // (1,1,1,0,0,0,0,0) advantages: 5/sqrt(15) and -3/sqrt(15).
    for (int i = 0; i < 3; ++i)
      CHECK(m.advantages.values[i] == doctest::Approx(5.0 / std::sqrt(15.0)).epsilon(1e-12));
    for (int i = 3; i < 8; ++i)
      CHECK(m.advantages.values[i] == doctest::Approx(-3.0 / std::sqrt(15.0)).epsilon(1e-12));
  }
  SUBCASE("full replacement gives an all-pass group with zero advantages") {
    std::vector<Rollout> extras;
    for (int i = 0; i < 8; ++i) extras.push_back(correct_extra(i));
    const MixedGroup m = replace(initial, extras, 99);
    CHECK(m.replaced_indices.size() == 8);
    for (double a : m.advantages.values) CHECK(a == 0.0);
    for (const Rollout& r : m.rollouts) CHECK(r.hinted);
  }
  SUBCASE("determinism in the seed") {
    const std::vector<Rollout> extras{correct_extra(0), correct_extra(1)};
    const MixedGroup a = replace(initial, extras, 4242);
    const MixedGroup b = replace(initial, extras, 4242);
    CHECK(a.replaced_indices == b.replaced_indices);
    const MixedGroup c = replace(initial, extras, 4243);
    CHECK((a.replaced_indices != c.replaced_indices ||
           replace(initial, extras, 4244).replaced_indices != a.replaced_indices));
  }
  SUBCASE("too many extras or unverified extras are rejected") {
    std::vector<Rollout> extras;
    for (int i = 0; i < 9; ++i) extras.push_back(correct_extra(i));
    CHECK_THROWS_AS(replace(initial, extras, 1), std::invalid_argument);
    std::vector<Rollout> bad{correct_extra(0)};
    bad[0].reward = 0.0;
    CHECK_THROWS_AS(replace(initial, bad, 1), std::invalid_argument);
  }
}

TEST_CASE("replacement picks uniformly among initial slots") {
  const RolloutGroup initial = failing_group(8);
  const std::vector<Rollout> extras{correct_extra(0), correct_extra(1)};
  const int trials = 10000;
  std::vector<int> hits(8, 0);
  for (int t = 0; t < trials; ++t) {
    const MixedGroup m = replace(initial, extras, mix_seed(31337, t));
    REQUIRE(m.replaced_indices.size() == 2);
    for (int i : m.replaced_indices) ++hits[i];
  }
  // Each slot should be dropped with frequency G'/G = 0.25.
  for (int i = 0; i < 8; ++i) {
    const double freq = static_cast<double>(hits[i]) / trials;
    CHECK(freq == doctest::Approx(0.25).epsilon(0.08));
  }
  // And every 2-subset should be reachable.
  std::set<std::pair<int, int>> pairs;
  for (int t = 0; t < 2000; ++t) {
    const MixedGroup m = replace(initial, extras, mix_seed(999, t));
    pairs.insert({m.replaced_indices[0], m.replaced_indices[1]});
  }
  CHECK(pairs.size() == 28);
}

TEST_CASE("ratio shaping is bounded, monotone, and half at gamma") {
  CHECK(shape_ratio(1.0, 0.1) == doctest::Approx(1.0 / 1.1).epsilon(1e-15));
  CHECK(shape_ratio(0.0, 0.1) == 0.0);
  for (double g : {0.05, 0.1, 0.5, 2.0}) CHECK(shape_ratio(g, g) == 0.5);

  Rng rng(5);
  double prev = -1.0;
  for (int i = 0; i <= 100; ++i) {
    const double r = 0.05 * i;
    const double f = shape_ratio(r, 0.1);
    CHECK(f >= 0.0);
    CHECK(f < 1.0);
    CHECK(f > prev);
    prev = f;
  }
  CHECK_THROWS_AS(shape_ratio(-0.1, 0.1), std::invalid_argument);
  CHECK_THROWS_AS(shape_ratio(0.5, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(shape_ratio(0.5, -1.0), std::invalid_argument);
}

TEST_CASE("off-policy ratio is the plain-prompt token probability") {
  CHECK(offpolicy_ratio(0.0) == 1.0);
  CHECK(offpolicy_ratio(std::log(0.5)) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(shape_ratio(offpolicy_ratio(std::log(0.5)), 0.1) ==
        doctest::Approx(0.5 / 0.6).epsilon(1e-12));
}

TEST_CASE("mixed objective without off-policy rollouts is bit-identical to the plain one") {
  Vocab vocab(10);
  const PolicyShape s{6, 10, vocab.size()};
  const PolicyParams sampler = init_params(s, 41, 0.3);
  const std::vector<UpdateGroup> groups =
      testutil::synthetic_batch(sampler, vocab, 4, 6, 2, 10, 910);
  const PolicyParams at = testutil::perturbed(sampler, 11, 1e-3);
  const PolicyParams ref = init_params(s, 42, 0.3);

  LossConfig cfg;
  cfg.kl_beta = 0.002;
  cfg.entropy_coef = 0.01;

  std::vector<double> g1, g2;
  const LossBreakdown a = grpo_loss_and_grad(at, &ref, groups, cfg, g1);
  const LossBreakdown b = mixed_loss_and_grad(at, &ref, groups, cfg, g2);
  CHECK(a.total == b.total);
  CHECK(a.surrogate == b.surrogate);
  CHECK(a.kl == b.kl);
  CHECK(a.entropy == b.entropy);
  CHECK(b.offpolicy_surrogate == 0.0);
  REQUIRE(g1.size() == g2.size());
  CHECK(std::memcmp(g1.data(), g2.data(), g1.size() * sizeof(double)) == 0);
}

namespace {

// A none-pass group plus hinted correct extras, assembled the way the trainer
// does it: replacement output, plain prompt attached, advantages recomputed.
UpdateGroup mixed_fixture_group(const PolicyParams& sampler, const Vocab& vocab, uint64_t seed) {
  const Query q = generate_task(vocab, seed, 2);
  RolloutGroup initial;
  initial.query = q;
  const std::vector<Token> plain = render_prompt(vocab, q, HintSpec::plain());
  SampleConfig cfg;
  cfg.max_new_tokens = 10;
  Rng rng(mix_seed(seed, 1));
  for (int i = 0; i < 6; ++i) {
    Rollout r = sample_rollout(sampler, plain, cfg, rng);
    r.reward = 0.0;
    initial.rollouts.push_back(std::move(r));
  }
  const int wrong = (q.truth + 1) % vocab.modulus;
  Rng xrng(mix_seed(seed, 2));
  std::vector<Rollout> extras =
      hinted_extra_rollouts(sampler, vocab, q, HintSpec::hint({wrong}), 2, cfg, xrng);
  for (Rollout& e : extras) e.reward = 1.0;  // treat them as verified correct
  const MixedGroup mixed = replace(initial, extras, mix_seed(seed, 3));

  UpdateGroup ug;
  ug.plain_prompt = plain;
  ug.rollouts = mixed.rollouts;
  ug.advantages = mixed.advantages.values;
  return ug;
}

}  // namespace

TEST_CASE("mixed objective gradient matches finite differences with off-policy rollouts") {
  Vocab vocab(10);
  const PolicyShape s{6, 10, vocab.size()};
  const PolicyParams sampler = init_params(s, 43, 0.3);
  std::vector<UpdateGroup> groups;
  for (uint64_t i = 0; i < 3; ++i) groups.push_back(mixed_fixture_group(sampler, vocab, 700 + i));
  const PolicyParams ref = init_params(s, 44, 0.3);
  const PolicyParams at = testutil::perturbed(sampler, 12, 1e-3);

  for (const bool reg_off : {false, true}) {
    LossConfig cfg;
    cfg.kl_beta = 0.002;
    cfg.entropy_coef = 0.01;
    cfg.regularize_offpolicy = reg_off;

    std::vector<double> grad;
    const LossBreakdown loss = mixed_loss_and_grad(at, &ref, groups, cfg, grad);
    CHECK(loss.offpolicy_tokens > 0);
    CHECK(loss.offpolicy_surrogate != 0.0);

    auto value_at = [&](const PolicyParams& pp) {
      std::vector<double> g;
      return mixed_loss_and_grad(pp, &ref, groups, cfg, g).total;
    };
    for (uint64_t dir = 0; dir < 5; ++dir) {
      const double rel = testutil::fd_rel_error(at, grad, value_at, mix_seed(46, reg_off, dir));
      CHECK(rel < 1e-5);
    }
  }
}

TEST_CASE("positive-advantage off-policy tokens are pushed up under the plain prompt") {
  Vocab vocab(10);
  const PolicyShape s{6, 10, vocab.size()};
  const PolicyParams p = init_params(s, 45, 0.2);
  const Query q = generate_task(vocab, 555, 1);
  const std::vector<Token> plain = render_prompt(vocab, q, HintSpec::plain());

  // One hinted single-token rollout with positive advantage; the survivors
  // have empty responses so the whole gradient is the off-policy term.
  UpdateGroup g;
  g.plain_prompt = plain;
  Rollout hint;
  hint.prompt = render_prompt(vocab, q, HintSpec::hint({(q.truth + 1) % 10}));
  hint.response = {vocab.digit(q.truth)};
  hint.old_logprobs = {-0.7};
  hint.origin = Origin::OffPolicy;
  hint.hinted = true;
  hint.reward = 1.0;
  g.rollouts.push_back(hint);
  for (int i = 0; i < 3; ++i) {
    Rollout empty;
    empty.prompt = plain;
    empty.reward = 0.0;
    g.rollouts.push_back(empty);
  }
  g.advantages = compute_advantages(std::vector<double>{1, 0, 0, 0}).values;
  REQUIRE(g.advantages[0] > 0.0);

  LossConfig cfg;
  cfg.kl_beta = 0.0;
  cfg.entropy_coef = 0.0;
  std::vector<double> grad;
  const std::vector<UpdateGroup> groups{g};
  mixed_loss_and_grad(p, nullptr, groups, cfg, grad);

  double norm2 = 0.0;
  for (double x : grad) norm2 += x * x;
  REQUIRE(norm2 > 0.0);

  // Stepping along the gradient raises the plain-prompt logprob of the token.
  const double before = response_logprobs(p, plain, hint.response)[0];
  PolicyParams stepped = p;
  for (size_t i = 0; i < grad.size(); ++i) stepped.values[i] += 1e-4 * grad[i] / std::sqrt(norm2);
  const double after = response_logprobs(stepped, plain, hint.response)[0];
  CHECK(after > before);
}
