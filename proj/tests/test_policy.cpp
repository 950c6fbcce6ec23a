#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <map>
#include <sstream>

#include "helpers.hpp"
#include "tgpo/policy.hpp"
#include "tgpo/rewards.hpp"

using namespace tgpo;
using namespace tgpo::testing;

namespace {

const Vocabulary kVocab{4};  // |V| = 13
const ContextEncoder kEncoder(6, kVocab, 16);

TaskInstance fixed_instance() {
  TaskInstance inst;
  inst.kind = TaskKind::Temporal;
  inst.question_id = question_id_last();
  inst.video.frames = {{0}, {1}, {2}, {1}};
  inst.options = {symbol_option(1), symbol_option(0), symbol_option(4)};
  inst.gold = 0;
  return inst;
}

}  // namespace

TEST_CASE("encoding channels split by permutation invariance") {
  TaskInstance ab = fixed_instance();
  ab.video.frames = {{0}, {1}};
  TaskInstance ba = ab;
  ba.video.frames = {{1}, {0}};

  const auto& L = kEncoder.layout();
  const Encoding ea = kEncoder.encode(ab, {});
  const Encoding eb = kEncoder.encode(ba, {});
  for (int i = L.order_invariant_begin; i < L.order_invariant_end; ++i) {
    REQUIRE(ea.features[i] == eb.features[i]);
  }
  bool differs = false;
  for (int i = L.order_sensitive_begin; i < L.order_sensitive_end; ++i) {
    differs = differs || ea.features[i] != eb.features[i];
  }
  REQUIRE(differs);

  TaskInstance aa = ab;
  aa.video.frames = {{0}, {0}};
  TaskInstance aa2 = aa;
  std::swap(aa2.video.frames[0], aa2.video.frames[1]);
  REQUIRE(kEncoder.encode(aa, {}).features == kEncoder.encode(aa2, {}).features);
}

TEST_CASE("encoding rejects over-long prefixes and foreign symbols") {
  const TaskInstance inst = fixed_instance();
  std::vector<int> prefix(16, kFillerBase);
  REQUIRE_THROWS_AS(kEncoder.encode(inst, prefix), std::invalid_argument);
  TaskInstance bad = inst;
  bad.video.frames[0].symbol = 6;
  REQUIRE_THROWS_AS(kEncoder.encode(bad, {}), std::invalid_argument);
}

TEST_CASE("zero weights give the uniform distribution") {
  PolicyParams zero;
  zero.weights = Matrix(kVocab.size(), kEncoder.dim());
  const Encoding enc = kEncoder.encode(fixed_instance(), {});
  for (int t = 0; t < kVocab.size(); ++t) {
    REQUIRE_THAT(token_logprob(zero, enc, t),
                 Catch::Matchers::WithinAbs(-2.5649493574615367, 1e-12));  // log(1/13)
  }
}

TEST_CASE("log-softmax normalizes to 1") {
  Rng rng(31);
  const TaskInstance inst = fixed_instance();
  for (int trial = 0; trial < 50; ++trial) {
    const PolicyParams params = random_params(kEncoder, rng, 2.0);
    const Encoding enc = kEncoder.encode(inst, random_tokens(kVocab, rng, trial % 8));
    double total = 0.0;
    for (int t = 0; t < kVocab.size(); ++t) total += std::exp(token_logprob(params, enc, t));
    REQUIRE_THAT(total, Catch::Matchers::WithinAbs(1.0, 1e-12));
  }
}

TEST_CASE("adding a constant row vector shifts no probability") {
  Rng rng(32);
  PolicyParams params = random_params(kEncoder, rng);
  const Encoding enc = kEncoder.encode(fixed_instance(), {});
  std::vector<double> before;
  for (int t = 0; t < kVocab.size(); ++t) before.push_back(token_logprob(params, enc, t));

  std::vector<double> shift(static_cast<std::size_t>(kEncoder.dim()));
  for (double& v : shift) v = 2.0 * rng.uniform() - 1.0;
  for (int t = 0; t < kVocab.size(); ++t) {
    for (int i = 0; i < kEncoder.dim(); ++i) params.weights(t, i) += shift[i];
  }
  for (int t = 0; t < kVocab.size(); ++t) {
    REQUIRE_THAT(token_logprob(params, enc, t),
                 Catch::Matchers::WithinAbs(before[static_cast<std::size_t>(t)], 1e-9));
  }
}

TEST_CASE("softmax kernel matches hand-computed values for logits (1,0,0)") {
  const std::vector<double> logits{1.0, 0.0, 0.0};
  const std::vector<double> p = softmax(logits);
  CHECK_THAT(p[0], Catch::Matchers::WithinAbs(0.5761168847658291, 1e-15));
  CHECK_THAT(p[1], Catch::Matchers::WithinAbs(0.21194155761708547, 1e-15));
  CHECK_THAT(p[2], Catch::Matchers::WithinAbs(0.21194155761708547, 1e-15));
  const std::vector<double> lp = log_softmax(logits);
  CHECK_THAT(lp[0], Catch::Matchers::WithinAbs(-0.5514447139320511, 1e-15));
  CHECK_THAT(lp[1], Catch::Matchers::WithinAbs(-1.551444713932051, 1e-15));
}

TEST_CASE("response logprob sums per-token terms") {
  Rng rng(33);
  const TaskInstance inst = fixed_instance();
  const PolicyParams params = random_params(kEncoder, rng);

  const std::vector<int> one{kEos};
  const ResponseLogProb single = response_logprob(params, kEncoder, inst, one);
  REQUIRE(single.per_token.size() == 1);
  REQUIRE(single.total == single.per_token[0]);

  PolicyParams zero;
  zero.weights = Matrix(kVocab.size(), kEncoder.dim());
  const std::vector<int> five = random_tokens(kVocab, rng, 5);
  const ResponseLogProb under_zero = response_logprob(zero, kEncoder, inst, five);
  REQUIRE_THAT(under_zero.total, Catch::Matchers::WithinAbs(5 * -2.5649493574615367, 1e-12));

  // Self-consistency: sampled responses report their own logprobs.
  Rng sample_rng(derive_seed(9, {1}));
  const Response resp = sample(params, kEncoder, inst, 1.0, sample_rng);
  const ResponseLogProb recomputed = response_logprob(params, kEncoder, inst, resp.tokens);
  REQUIRE(recomputed.per_token.size() == resp.logprobs.size());
  for (std::size_t t = 0; t < resp.logprobs.size(); ++t) {
    REQUIRE_THAT(recomputed.per_token[t], Catch::Matchers::WithinAbs(resp.logprobs[t], 1e-12));
    REQUIRE(resp.logprobs[t] <= 0.0);
  }
}

TEST_CASE("sampling is deterministic per seed and matches greedy at low temperature") {
  Rng rng(34);
  const TaskInstance inst = fixed_instance();
  const PolicyParams params = random_params(kEncoder, rng);

  Rng a(derive_seed(5, {2})), b(derive_seed(5, {2}));
  const Response ra = sample(params, kEncoder, inst, 1.0, a);
  const Response rb = sample(params, kEncoder, inst, 1.0, b);
  REQUIRE(ra.tokens == rb.tokens);
  REQUIRE(ra.logprobs == rb.logprobs);

  Rng c(99);
  const Response cold = sample(params, kEncoder, inst, 1e-4, c);
  const Response greedy = greedy_decode(params, kEncoder, inst);
  REQUIRE(cold.tokens == greedy.tokens);

  REQUIRE_THROWS_AS(sample(params, kEncoder, inst, 0.0, c), std::invalid_argument);
}

TEST_CASE("greedy ties break toward the lowest token index") {
  PolicyParams zero;
  zero.weights = Matrix(kVocab.size(), kEncoder.dim());
  const Response r = greedy_decode(zero, kEncoder, fixed_instance());
  REQUIRE(r.tokens.size() == 16);  // token 0 forever, no <eos>
  for (int t : r.tokens) REQUIRE(t == kThinkOpen);
}

TEST_CASE("greedy follows a dominant-logit construction exactly") {
  // Reward the path <answer> A </answer> <eos> through the prefix states.
  PolicyParams p;
  p.weights = Matrix(kVocab.size(), kEncoder.dim());
  const auto& L = kEncoder.layout();
  p.weights(kAnsOpen, L.state + kStateStart) = 10.0;
  p.weights(Vocabulary::option_token(0), L.state + kStateInAnswerEmpty) = 10.0;
  p.weights(kAnsClose, L.state + kStateInAnswerFilled) = 10.0;
  p.weights(kEos, L.state + kStateDone) = 10.0;
  const Response r = greedy_decode(p, kEncoder, fixed_instance());
  REQUIRE(r.tokens == std::vector<int>{kAnsOpen, Vocabulary::option_token(0), kAnsClose, kEos});
}

TEST_CASE("greedy choice maximizes each step's log-probability") {
  Rng rng(35);
  for (int trial = 0; trial < 10; ++trial) {
    const TaskInstance inst = random_instance(rng);
    const PolicyParams params = random_params(kEncoder, rng);
    const Response greedy = greedy_decode(params, kEncoder, inst);
    for (std::size_t t = 0; t < greedy.tokens.size(); ++t) {
      const Encoding enc =
          kEncoder.encode(inst, std::span<const int>(greedy.tokens).subspan(0, t));
      for (int alt = 0; alt < kVocab.size(); ++alt) {
        REQUIRE(token_logprob(params, enc, greedy.tokens[t]) >=
                token_logprob(params, enc, alt) - 1e-12);
      }
    }
  }
}

TEST_CASE("empirical sampling frequencies match softmax probabilities") {
  // Three tokens carry all the probability mass; the rest sit ~e^-30 below.
  PolicyParams p;
  p.weights = Matrix(kVocab.size(), kEncoder.dim());
  const auto& L = kEncoder.layout();
  for (int t = 0; t < kVocab.size(); ++t) p.weights(t, L.bias) = -30.0;
  p.weights(kEos, L.bias) = 0.0;
  p.weights(kFillerBase, L.bias) = 1.0;
  p.weights(kFillerBase + 1, L.bias) = 0.5;

  const TaskInstance inst = fixed_instance();
  const Encoding enc = kEncoder.encode(inst, {});
  const std::vector<double> probs = softmax(policy_logits(p, enc));

  const int n = 20000;
  std::map<int, int> counts;
  Rng rng(20260810);
  for (int i = 0; i < n; ++i) {
    const Response r = sample(p, kEncoder, inst, 1.0, rng);
    counts[r.tokens[0]]++;
  }
  for (int t : {kEos, kFillerBase, kFillerBase + 1}) {
    const double expected = probs[static_cast<std::size_t>(t)];
    const double se = std::sqrt(expected * (1.0 - expected) / n);
    REQUIRE(std::fabs(counts[t] / static_cast<double>(n) - expected) <= 3.0 * se);
  }
}

TEST_CASE("analytic gradient matches finite differences") {
  Rng rng(36);
  for (int trial = 0; trial < 20; ++trial) {
    const TaskInstance inst = random_instance(rng);
    const PolicyParams params = random_params(kEncoder, rng);
    Rng sample_rng(derive_seed(11, {static_cast<std::uint64_t>(trial)}));
    const Response resp = sample(params, kEncoder, inst, 1.0, sample_rng);

    const Matrix analytic = grad_response_logprob(params, kEncoder, inst, resp.tokens);
    const Matrix fd = finite_difference_grad(
        [&](const PolicyParams& q) {
          return response_logprob(q, kEncoder, inst, resp.tokens).total;
        },
        params);
    REQUIRE(max_rel_error(analytic, fd) <= 1e-4);
  }
}

TEST_CASE("gradient is additive over steps and vanishes at saturation") {
  Rng rng(37);
  const TaskInstance inst = fixed_instance();
  const PolicyParams params = random_params(kEncoder, rng);
  const std::vector<int> two{kThinkOpen, kThinkClose};

  const Matrix full = grad_response_logprob(params, kEncoder, inst, two);
  Matrix sum = grad_response_logprob(params, kEncoder, inst, std::vector<int>{kThinkOpen});
  // Second step in isolation: gradient of that token's logprob given the prefix.
  Matrix second(params.weights.rows, params.weights.cols);
  {
    const std::vector<int> prefix{kThinkOpen};
    const Encoding enc = kEncoder.encode(inst, prefix);
    const std::vector<double> probs = softmax(policy_logits(params, enc));
    for (int v = 0; v < second.rows; ++v) {
      const double coef = (v == kThinkClose ? 1.0 : 0.0) - probs[static_cast<std::size_t>(v)];
      for (int i = 0; i < second.cols; ++i) second(v, i) += coef * enc.features[i];
    }
  }
  sum.add_scaled(second, 1.0);
  REQUIRE(max_rel_error(full, sum, 1e-9) <= 1e-9);

  // Saturated policy: softmax ~ onehot on the realized path, gradient ~ 0.
  PolicyParams hard;
  hard.weights = Matrix(kVocab.size(), kEncoder.dim());
  const auto& L = kEncoder.layout();
  hard.weights(kThinkOpen, L.state + kStateStart) = 200.0;
  hard.weights(kThinkClose, L.state + kStateInThink) = 200.0;
  const Matrix sat = grad_response_logprob(hard, kEncoder, inst, two);
  for (double v : sat.a) REQUIRE(std::fabs(v) < 1e-12);
}

TEST_CASE("identical frames make the response distribution shuffle-blind") {
  Rng rng(38);
  TaskInstance inst = fixed_instance();
  inst.video.frames = {{2}, {2}, {2}, {2}};
  TaskInstance shuffled = inst;  // any permutation of identical frames is itself
  const PolicyParams params = random_params(kEncoder, rng);
  Rng a(42), b(42);
  const Response ra = sample(params, kEncoder, inst, 1.0, a);
  const Response rb = sample(params, kEncoder, shuffled, 1.0, b);
  REQUIRE(ra.tokens == rb.tokens);
}

TEST_CASE("base policy mostly emits the tag scaffold and spreads options") {
  const PolicyParams base = make_base_policy(kEncoder, 5.0);
  const TaskInstance inst = fixed_instance();
  Rng rng(20260811);
  int well_formed = 0;
  std::map<int, int> answer_counts;
  const int n = 2000;
  for (int i = 0; i < n; ++i) {
    const Response r = sample(base, kEncoder, inst, 1.0, rng);
    const ParsedResponse parsed = parse_response(r.tokens, 3);
    well_formed += parsed.well_formed;
    if (parsed.answer_slot >= 0) answer_counts[parsed.answer_slot]++;
  }
  REQUIRE(well_formed > n / 3);        // format is common from the start
  REQUIRE(answer_counts.size() == 3);  // no preference among bound options
  for (const auto& [slot, count] : answer_counts) {
    REQUIRE(count > n / 10);
  }
}

TEST_CASE("params round-trip through the textual format") {
  Rng rng(39);
  PolicyParams params = random_params(kEncoder, rng);
  params.role = Role::Reference;
  std::stringstream buf;
  save_params(buf, params);
  const PolicyParams back = load_params(buf);
  REQUIRE(back.role == Role::Reference);
  REQUIRE(back.weights.rows == params.weights.rows);
  REQUIRE(back.weights.cols == params.weights.cols);
  REQUIRE(back.weights.a == params.weights.a);

  std::stringstream bad("tgpo-params v2\n");
  REQUIRE_THROWS(load_params(bad));
}
