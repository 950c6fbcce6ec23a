#pragma once

#include <span>
#include <stdexcept>
#include <vector>

#include "tgpo/policy.hpp"

namespace tgpo {

// Verifiable reward for structured responses: a binary accuracy check on the
// option extracted from the answer block, a binary format check on the full
// think/answer scaffold, and their weighted combination.

struct ParsedResponse {
  bool well_formed = false;
  int answer_slot = -1;      // extracted option slot, -1 when not extractable
  std::vector<int> think;    // tokens strictly between <think> and </think>
  std::vector<int> answer;   // tokens strictly between <answer> and </answer>
};

// Scans the token stream up to the first <eos>. The full format requires
// exactly one <think>..</think> span followed by exactly one
// <answer>..</answer> span, and an answer span holding exactly one option
// token that belongs to the candidate set. Answer extraction needs only the
// answer part, so a response missing the think block can still score on
// accuracy while failing format. The think span may be empty. Never throws:
// arbitrary garbage yields well_formed = false.
inline ParsedResponse parse_response(std::span<const int> tokens, int n_options) {
  ParsedResponse out;
  std::size_t end = tokens.size();
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (tokens[i] == kEos) {
      end = i;
      break;
    }
  }

  int n_to = 0, n_tc = 0, n_ao = 0, n_ac = 0;
  std::ptrdiff_t p_to = -1, p_tc = -1, p_ao = -1, p_ac = -1;
  for (std::size_t i = 0; i < end; ++i) {
    switch (tokens[i]) {
      case kThinkOpen: ++n_to; p_to = static_cast<std::ptrdiff_t>(i); break;
      case kThinkClose: ++n_tc; p_tc = static_cast<std::ptrdiff_t>(i); break;
      case kAnsOpen: ++n_ao; p_ao = static_cast<std::ptrdiff_t>(i); break;
      case kAnsClose: ++n_ac; p_ac = static_cast<std::ptrdiff_t>(i); break;
      default: break;
    }
  }

  const bool answer_span_ok = n_ao == 1 && n_ac == 1 && p_ao < p_ac;
  if (answer_span_ok) {
    int options_in_span = 0;
    int slot = -1;
    for (std::ptrdiff_t i = p_ao + 1; i < p_ac; ++i) {
      const int t = tokens[static_cast<std::size_t>(i)];
      out.answer.push_back(t);
      if (Vocabulary::is_option(t)) {
        ++options_in_span;
        slot = Vocabulary::option_slot(t);
      }
    }
    if (options_in_span == 1 && slot >= 0 && slot < n_options) out.answer_slot = slot;
  }

  const bool think_span_ok = n_to == 1 && n_tc == 1 && p_to < p_tc;
  if (think_span_ok) {
    for (std::ptrdiff_t i = p_to + 1; i < p_tc; ++i) {
      out.think.push_back(tokens[static_cast<std::size_t>(i)]);
    }
  }

  out.well_formed =
      think_span_ok && answer_span_ok && p_tc < p_ao && out.answer_slot >= 0;
  return out;
}

// 1 iff exactly one option was extracted and it matches the gold label.
inline int accuracy_reward(const ParsedResponse& parsed, int gold) {
  return (parsed.answer_slot >= 0 && parsed.answer_slot == gold) ? 1 : 0;
}

inline int format_reward(const ParsedResponse& parsed) { return parsed.well_formed ? 1 : 0; }

struct RewardBreakdown {
  int r_accu = 0;
  int r_form = 0;
  double lambda = 0.0;
  double total = 0.0;  // r_accu + lambda * r_form, exactly
};

inline RewardBreakdown combined_reward(const ParsedResponse& parsed, int gold, double lambda) {
  if (lambda < 0.0) throw std::invalid_argument("combined_reward: lambda must be >= 0");
  RewardBreakdown b;
  b.r_accu = accuracy_reward(parsed, gold);
  b.r_form = format_reward(parsed);
  b.lambda = lambda;
  b.total = b.r_accu + lambda * b.r_form;
  return b;
}

}  // namespace tgpo
