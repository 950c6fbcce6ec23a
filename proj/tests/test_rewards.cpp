#include <catch2/catch_amalgamated.hpp>

#include <optional>
#include <vector>

#include "helpers.hpp"
#include "tgpo/rewards.hpp"

using namespace tgpo;
using namespace tgpo::testing;

namespace {

const int A = Vocabulary::option_token(0);
const int B = Vocabulary::option_token(1);
const int C = Vocabulary::option_token(2);
const int F0 = kFillerBase;
const int F1 = kFillerBase + 1;

// Declarative restatement of the format rules, used as an independent oracle
// for the scanning parser: collect all positions per structural token and
// apply the span conditions directly.
struct OracleParse {
  bool well_formed = false;
  std::optional<int> extracted;
};

OracleParse oracle_parse(const std::vector<int>& raw, int n_options) {
  std::vector<int> tokens;
  for (int t : raw) {
    if (t == kEos) break;
    tokens.push_back(t);
  }
  std::vector<std::size_t> to, tc, ao, ac;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (tokens[i] == kThinkOpen) to.push_back(i);
    if (tokens[i] == kThinkClose) tc.push_back(i);
    if (tokens[i] == kAnsOpen) ao.push_back(i);
    if (tokens[i] == kAnsClose) ac.push_back(i);
  }
  OracleParse out;
  if (ao.size() == 1 && ac.size() == 1 && ao[0] < ac[0]) {
    std::vector<int> options_in_span;
    for (std::size_t i = ao[0] + 1; i < ac[0]; ++i) {
      if (Vocabulary::is_option(tokens[i])) {
        options_in_span.push_back(Vocabulary::option_slot(tokens[i]));
      }
    }
    if (options_in_span.size() == 1 && options_in_span[0] < n_options) {
      out.extracted = options_in_span[0];
    }
  }
  out.well_formed = to.size() == 1 && tc.size() == 1 && ao.size() == 1 && ac.size() == 1 &&
                    to[0] < tc[0] && tc[0] < ao[0] && ao[0] < ac[0] && out.extracted.has_value();
  return out;
}

}  // namespace

TEST_CASE("well-formed response parses and scores") {
  const std::vector<int> tokens{kThinkOpen, F0, kThinkClose, kAnsOpen, B, kAnsClose, kEos};
  const ParsedResponse p = parse_response(tokens, 2);
  REQUIRE(p.well_formed);
  REQUIRE(p.answer_slot == 1);
  REQUIRE(p.think == std::vector<int>{F0});
  REQUIRE(p.answer == std::vector<int>{B});
  REQUIRE(format_reward(p) == 1);
  REQUIRE(accuracy_reward(p, 1) == 1);
  REQUIRE(accuracy_reward(p, 0) == 0);
}

TEST_CASE("missing think block fails format but still extracts the answer") {
  const std::vector<int> tokens{kAnsOpen, A, kAnsClose, kEos};
  const ParsedResponse p = parse_response(tokens, 2);
  REQUIRE_FALSE(p.well_formed);
  REQUIRE(format_reward(p) == 0);
  REQUIRE(p.answer_slot == 0);
  REQUIRE(accuracy_reward(p, 0) == 1);
}

TEST_CASE("empty answer block is malformed") {
  const std::vector<int> tokens{kThinkOpen, kThinkClose, kAnsOpen, kAnsClose, kEos};
  const ParsedResponse p = parse_response(tokens, 2);
  REQUIRE_FALSE(p.well_formed);
  REQUIRE(p.answer_slot == -1);
  REQUIRE(accuracy_reward(p, 0) == 0);
}

TEST_CASE("empty think block is fine") {
  const std::vector<int> tokens{kThinkOpen, kThinkClose, kAnsOpen, A, kAnsClose, kEos};
  REQUIRE(parse_response(tokens, 2).well_formed);
}

TEST_CASE("format edge cases") {
  // two answer blocks
  REQUIRE_FALSE(parse_response(std::vector<int>{kThinkOpen, kThinkClose, kAnsOpen, A, kAnsClose,
                                                kAnsOpen, B, kAnsClose},
                               2)
                    .well_formed);
  // two options inside the answer span
  REQUIRE_FALSE(
      parse_response(std::vector<int>{kThinkOpen, kThinkClose, kAnsOpen, A, B, kAnsClose}, 2)
          .well_formed);
  // option outside the candidate set
  REQUIRE_FALSE(
      parse_response(std::vector<int>{kThinkOpen, kThinkClose, kAnsOpen, C, kAnsClose}, 2)
          .well_formed);
  // spans out of order
  REQUIRE_FALSE(
      parse_response(std::vector<int>{kAnsOpen, A, kAnsClose, kThinkOpen, kThinkClose}, 2)
          .well_formed);
  // everything after <eos> is ignored
  const std::vector<int> cut{kEos, kThinkOpen, kThinkClose, kAnsOpen, A, kAnsClose};
  REQUIRE_FALSE(parse_response(cut, 2).well_formed);
  // filler next to the option inside the span is allowed
  REQUIRE(parse_response(std::vector<int>{kThinkOpen, kThinkClose, kAnsOpen, F1, A, kAnsClose}, 2)
              .well_formed);
  // truncated stream without <eos> can still be well-formed
  REQUIRE(parse_response(std::vector<int>{kThinkOpen, kThinkClose, kAnsOpen, A, kAnsClose}, 2)
              .well_formed);
}

TEST_CASE("combined reward matches the weighted formula") {
  const std::vector<int> good{kThinkOpen, F0, kThinkClose, kAnsOpen, B, kAnsClose, kEos};
  const ParsedResponse p = parse_response(good, 2);

  const RewardBreakdown right = combined_reward(p, 1, 0.1);
  REQUIRE(right.r_accu == 1);
  REQUIRE(right.r_form == 1);
  REQUIRE(right.total == 1.1);

  const RewardBreakdown wrong = combined_reward(p, 0, 0.1);
  REQUIRE(wrong.total == 0.1);

  const ParsedResponse junk = parse_response(std::vector<int>{F0, F1, kEos}, 2);
  REQUIRE(combined_reward(junk, 0, 0.1).total == 0.0);
  REQUIRE(combined_reward(junk, 0, 7.5).total == 0.0);

  REQUIRE_THROWS_AS(combined_reward(p, 1, -0.1), std::invalid_argument);
}

TEST_CASE("total is monotone in lambda only through the format component") {
  const std::vector<int> good{kThinkOpen, kThinkClose, kAnsOpen, A, kAnsClose};
  const ParsedResponse formed = parse_response(good, 2);  // r_form = 1
  double prev = -1.0;
  for (double lambda : {0.0, 0.05, 0.1, 0.5, 1.0}) {
    const double total = combined_reward(formed, 1, lambda).total;  // wrong answer
    REQUIRE(total >= prev);
    prev = total;
  }
  const ParsedResponse junk = parse_response(std::vector<int>{A}, 2);  // r_form = 0
  REQUIRE(combined_reward(junk, 0, 0.1).total == combined_reward(junk, 0, 0.9).total);
}

TEST_CASE("fuzz: parser is total and reward stays in range") {
  const Vocabulary vocab{4};
  Rng rng(20260812);
  const double lambda = 0.1;
  for (int trial = 0; trial < 20000; ++trial) {
    const int len = 1 + static_cast<int>(rng.bounded(16));
    const std::vector<int> tokens = random_tokens(vocab, rng, len);
    const int n_options = 2 + static_cast<int>(rng.bounded(3));
    const ParsedResponse p = parse_response(tokens, n_options);
    const int gold = static_cast<int>(rng.bounded(n_options));
    const RewardBreakdown r = combined_reward(p, gold, lambda);
    const bool in_range =
        r.total == 0.0 || r.total == lambda || r.total == 1.0 || r.total == 1.0 + lambda;
    REQUIRE(in_range);
    // accuracy == 1 implies the answer block itself was valid
    if (r.r_accu == 1) REQUIRE(p.answer_slot == gold);

    const OracleParse oracle = oracle_parse(tokens, n_options);
    REQUIRE(oracle.well_formed == p.well_formed);
    REQUIRE(oracle.extracted.value_or(-1) == p.answer_slot);
  }
}

TEST_CASE("exhaustive small-vocabulary enumeration agrees with the oracle") {
  // All sequences up to length 5 over a reduced 8-token alphabet; the longer
  // exhaustive sweep lives in the acceptance suite.
  const std::vector<int> alphabet{kThinkOpen, kThinkClose, kAnsOpen, kAnsClose,
                                  kEos,       A,           B,        F0};
  std::vector<int> seq;
  const double lambda = 0.1;
  long long checked = 0;
  const auto visit = [&](const auto& self, int depth) -> void {
    if (depth == 0) return;
    for (int t : alphabet) {
      seq.push_back(t);
      const ParsedResponse p = parse_response(seq, 2);
      const OracleParse oracle = oracle_parse(seq, 2);
      REQUIRE(oracle.well_formed == p.well_formed);
      REQUIRE(oracle.extracted.value_or(-1) == p.answer_slot);
      const RewardBreakdown r = combined_reward(p, 0, lambda);
      const bool in_range =
          r.total == 0.0 || r.total == lambda || r.total == 1.0 || r.total == 1.0 + lambda;
      REQUIRE(in_range);
      ++checked;
      self(self, depth - 1);
      seq.pop_back();
    }
  };
  visit(visit, 5);
  REQUIRE(checked == 8 + 8 * 8 + 8 * 8 * 8 + 8 * 8 * 8 * 8 + 8 * 8 * 8 * 8 * 8);
}
