#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "tgpo/math.hpp"
#include "tgpo/rng.hpp"
#include "tgpo/vqaenv.hpp"

namespace tgpo {

// --- vocabulary -------------------------------------------------------------
//
// Structured response alphabet: think/answer tags, end-of-sequence, four
// option tokens (one per answer label), and m filler tokens for think-block
// content. Token ids are fixed; fillers occupy the tail.

constexpr int kThinkOpen = 0;
constexpr int kThinkClose = 1;
constexpr int kAnsOpen = 2;
constexpr int kAnsClose = 3;
constexpr int kEos = 4;
constexpr int kOptBase = 5;  // kOptBase + slot, slot in [0, kMaxOptions)
constexpr int kFillerBase = kOptBase + kMaxOptions;

struct Vocabulary {
  int fillers = 4;  // m >= 1

  int size() const { return kFillerBase + fillers; }

  static bool is_option(int token) { return token >= kOptBase && token < kFillerBase; }
  static int option_slot(int token) { return token - kOptBase; }
  static int option_token(int slot) { return kOptBase + slot; }
  bool is_filler(int token) const { return token >= kFillerBase && token < size(); }
  static bool is_structural(int token) { return token <= kAnsClose; }

  std::string token_name(int token) const {
    switch (token) {
      case kThinkOpen: return "<think>";
      case kThinkClose: return "</think>";
      case kAnsOpen: return "<answer>";
      case kAnsClose: return "</answer>";
      case kEos: return "<eos>";
      default:
        if (is_option(token)) return std::string(1, static_cast<char>('A' + option_slot(token)));
        if (is_filler(token)) return "f" + std::to_string(token - kFillerBase);
        throw std::invalid_argument("token out of range");
    }
  }
};

inline void validate_vocabulary(const Vocabulary& v) {
  if (v.fillers < 1) throw std::invalid_argument("Vocabulary: fillers must be >= 1");
}

// --- response structure state ----------------------------------------------

// Coarse scan state of a generated prefix; drives the prefix features so a
// linear policy can represent the tag grammar.
enum PrefixState {
  kStateStart = 0,
  kStateInThink = 1,
  kStateAfterThink = 2,
  kStateInAnswerEmpty = 3,
  kStateInAnswerFilled = 4,
  kStateDone = 5,
};
constexpr int kNumPrefixStates = 6;

inline int prefix_state(std::span<const int> prefix) {
  bool seen_to = false, seen_tc = false, seen_ao = false, seen_ac = false;
  bool option_after_ao = false;
  for (int t : prefix) {
    if (t == kThinkOpen) seen_to = true;
    if (t == kThinkClose) seen_tc = true;
    if (t == kAnsOpen) seen_ao = true;
    if (t == kAnsClose && seen_ao) seen_ac = true;
    if (seen_ao && !seen_ac && Vocabulary::is_option(t)) option_after_ao = true;
  }
  if (seen_ac) return kStateDone;
  if (seen_ao) return option_after_ao ? kStateInAnswerFilled : kStateInAnswerEmpty;
  if (seen_tc) return kStateAfterThink;
  if (seen_to) return kStateInThink;
  return kStateStart;
}

// --- context encoding --------------------------------------------------------

struct Encoding {
  std::vector<double> features;
};

// Feature map for the policy, split into four channels:
//   order-invariant : per-symbol histogram + per-option presence mass
//   order-sensitive : ramp-weighted histogram, last-frame one-hot, and
//                     per-option last/ramp/ordering interactions
//   question        : template one-hot + per-option bound flags
//   prefix          : scan state, previous token, position, bias
// The order-invariant channel is equal for a clip and any permutation of it;
// the order-sensitive channel changes under some permutation whenever the
// frames are not all identical.
class ContextEncoder {
 public:
  struct Layout {
    int histogram;      // S
    int opt_present;    // kMaxOptions
    int ramp;           // S
    int last_frame;     // S
    int opt_last;       // kMaxOptions
    int opt_ramp;       // kMaxOptions
    int opt_order;      // kMaxOptions
    int question_kind;  // 3
    int opt_bound;      // kMaxOptions
    int state;          // kNumPrefixStates
    int last_token;     // |V|
    int len_frac;       // 1
    int bias;           // 1
    int dim;

    int order_invariant_begin, order_invariant_end;
    int order_sensitive_begin, order_sensitive_end;
    int question_begin, question_end;
    int prefix_begin, prefix_end;
  };

  ContextEncoder(int alphabet, Vocabulary vocab, int max_len)
      : alphabet_(alphabet), vocab_(vocab), max_len_(max_len) {
    if (alphabet < 1) throw std::invalid_argument("ContextEncoder: alphabet must be >= 1");
    if (max_len < 1) throw std::invalid_argument("ContextEncoder: max_len must be >= 1");
    validate_vocabulary(vocab);
    int off = 0;
    layout_.order_invariant_begin = off;
    layout_.histogram = off;
    off += alphabet_;
    layout_.opt_present = off;
    off += kMaxOptions;
    layout_.order_invariant_end = off;

    layout_.order_sensitive_begin = off;
    layout_.ramp = off;
    off += alphabet_;
    layout_.last_frame = off;
    off += alphabet_;
    layout_.opt_last = off;
    off += kMaxOptions;
    layout_.opt_ramp = off;
    off += kMaxOptions;
    layout_.opt_order = off;
    off += kMaxOptions;
    layout_.order_sensitive_end = off;

    layout_.question_begin = off;
    layout_.question_kind = off;
    off += 3;
    layout_.opt_bound = off;
    off += kMaxOptions;
    layout_.question_end = off;

    layout_.prefix_begin = off;
    layout_.state = off;
    off += kNumPrefixStates;
    layout_.last_token = off;
    off += vocab_.size();
    layout_.len_frac = off;
    off += 1;
    layout_.bias = off;
    off += 1;
    layout_.prefix_end = off;
    layout_.dim = off;
  }

  int dim() const { return layout_.dim; }
  const Layout& layout() const { return layout_; }
  int alphabet() const { return alphabet_; }
  const Vocabulary& vocab() const { return vocab_; }
  int max_len() const { return max_len_; }

  Encoding encode(const TaskInstance& instance, std::span<const int> prefix) const {
    if (static_cast<int>(prefix.size()) >= max_len_) {
      throw std::invalid_argument("encode: prefix length must be < max_len");
    }
    Encoding enc;
    enc.features.assign(static_cast<std::size_t>(layout_.dim), 0.0);
    double* f = enc.features.data();

    const auto& frames = instance.video.frames;
    const int len = static_cast<int>(frames.size());
    if (len == 0) throw std::invalid_argument("encode: empty video");
    for (int t = 0; t < len; ++t) {
      const int s = frames[static_cast<std::size_t>(t)].symbol;
      if (s < 0 || s >= alphabet_) throw std::invalid_argument("encode: symbol out of alphabet");
      f[layout_.histogram + s] += 1.0 / len;
      f[layout_.ramp + s] += static_cast<double>(t + 1) / (static_cast<double>(len) * len);
    }
    f[layout_.last_frame + frames.back().symbol] = 1.0;

    const Question q = unpack_question(instance.question_id);
    f[layout_.question_kind + static_cast<int>(q.kind)] = 1.0;

    bool before_yes = false;
    if (q.kind == QuestionKind::Before) {
      before_yes = detail::appears_before(instance.video, q.x, q.y);
    }
    const int n_options = static_cast<int>(instance.options.size());
    for (int slot = 0; slot < n_options && slot < kMaxOptions; ++slot) {
      const OptionValue& v = instance.options[static_cast<std::size_t>(slot)];
      f[layout_.opt_bound + slot] = 1.0;
      if (v.is_symbol) {
        if (v.symbol >= 0 && v.symbol < alphabet_) {
          f[layout_.opt_present + slot] = f[layout_.histogram + v.symbol];
          f[layout_.opt_ramp + slot] = f[layout_.ramp + v.symbol];
          f[layout_.opt_last + slot] = f[layout_.last_frame + v.symbol];
        }
      } else {
        f[layout_.opt_order + slot] = (v.yes == before_yes) ? 1.0 : 0.0;
      }
    }

    f[layout_.state + prefix_state(prefix)] = 1.0;
    if (!prefix.empty()) {
      const int last = prefix.back();
      if (last < 0 || last >= vocab_.size()) {
        throw std::invalid_argument("encode: prefix token out of vocabulary");
      }
      f[layout_.last_token + last] = 1.0;
    }
    f[layout_.len_frac] = static_cast<double>(prefix.size()) / max_len_;
    f[layout_.bias] = 1.0;
    return enc;
  }

 private:
  int alphabet_;
  Vocabulary vocab_;
  int max_len_;
  Layout layout_;
};

// --- policy parameters --------------------------------------------------------

enum class Role { Current, Old, Reference };

inline const char* role_name(Role r) {
  switch (r) {
    case Role::Current: return "current";
    case Role::Old: return "old";
    case Role::Reference: return "reference";
  }
  return "current";
}

inline Role role_from_name(const std::string& s) {
  if (s == "current") return Role::Current;
  if (s == "old") return Role::Old;
  if (s == "reference") return Role::Reference;
  throw std::invalid_argument("bad role: " + s);
}

struct PolicyParams {
  Matrix weights;  // |V| x d
  Role role = Role::Current;
};

struct Response {
  std::vector<int> tokens;       // terminated by <eos> or cut at max_len
  std::vector<double> logprobs;  // per token, under the generating params at T=1
};

// --- core policy math ---------------------------------------------------------

inline std::vector<double> policy_logits(const PolicyParams& params, const Encoding& enc) {
  const Matrix& w = params.weights;
  if (w.cols != static_cast<int>(enc.features.size())) {
    throw std::invalid_argument("policy_logits: feature dim mismatch");
  }
  std::vector<double> logits(static_cast<std::size_t>(w.rows), 0.0);
  for (int v = 0; v < w.rows; ++v) {
    const double* row = w.a.data() + static_cast<std::size_t>(v) * w.cols;
    double acc = 0.0;
    for (int i = 0; i < w.cols; ++i) acc += row[i] * enc.features[static_cast<std::size_t>(i)];
    if (!std::isfinite(acc)) throw std::runtime_error("policy_logits: non-finite logit");
    logits[static_cast<std::size_t>(v)] = acc;
  }
  return logits;
}

inline double token_logprob(const PolicyParams& params, const Encoding& enc, int token) {
  const std::vector<double> logits = policy_logits(params, enc);
  if (token < 0 || token >= static_cast<int>(logits.size())) {
    throw std::invalid_argument("token_logprob: token out of vocabulary");
  }
  return log_softmax(logits)[static_cast<std::size_t>(token)];
}

struct ResponseLogProb {
  double total = 0.0;
  std::vector<double> per_token;
};

inline ResponseLogProb response_logprob(const PolicyParams& params, const ContextEncoder& encoder,
                                        const TaskInstance& instance,
                                        std::span<const int> tokens) {
  ResponseLogProb out;
  out.per_token.reserve(tokens.size());
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    const Encoding enc = encoder.encode(instance, tokens.subspan(0, t));
    const double lp = token_logprob(params, enc, tokens[t]);
    out.per_token.push_back(lp);
    out.total += lp;
  }
  return out;
}

namespace detail {

inline int sample_index(std::span<const double> probs, double u) {
  double acc = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    acc += probs[i];
    if (u < acc) return static_cast<int>(i);
  }
  return static_cast<int>(probs.size()) - 1;  // guard against rounding
}

}  // namespace detail

// Temperature sampling until <eos> or max_len. Recorded log-probabilities are
// those of the untempered (temperature-1) policy: the importance ratios are
// defined over pi_theta itself, and training runs at temperature 1 where the
// two coincide.
inline Response sample(const PolicyParams& params, const ContextEncoder& encoder,
                       const TaskInstance& instance, double temperature, Rng& rng) {
  if (!(temperature > 0.0)) throw std::invalid_argument("sample: temperature must be > 0");
  Response r;
  while (static_cast<int>(r.tokens.size()) < encoder.max_len()) {
    const Encoding enc = encoder.encode(instance, r.tokens);
    std::vector<double> logits = policy_logits(params, enc);
    const std::vector<double> logp = log_softmax(logits);
    std::vector<double> probs;
    if (temperature == 1.0) {
      probs.resize(logp.size());
      for (std::size_t i = 0; i < logp.size(); ++i) probs[i] = std::exp(logp[i]);
    } else {
      for (double& z : logits) z /= temperature;
      probs = softmax(logits);
    }
    const int token = detail::sample_index(probs, rng.uniform());
    r.tokens.push_back(token);
    r.logprobs.push_back(logp[static_cast<std::size_t>(token)]);
    if (token == kEos) break;
  }
  return r;
}

// Argmax decoding; ties break toward the lowest token index.
inline Response greedy_decode(const PolicyParams& params, const ContextEncoder& encoder,
                              const TaskInstance& instance) {
  Response r;
  while (static_cast<int>(r.tokens.size()) < encoder.max_len()) {
    const Encoding enc = encoder.encode(instance, r.tokens);
    const std::vector<double> logits = policy_logits(params, enc);
    int best = 0;
    for (std::size_t i = 1; i < logits.size(); ++i) {
      if (logits[i] > logits[static_cast<std::size_t>(best)]) best = static_cast<int>(i);
    }
    r.tokens.push_back(best);
    r.logprobs.push_back(log_softmax(logits)[static_cast<std::size_t>(best)]);
    if (best == kEos) break;
  }
  return r;
}

// d(log pi(y|x))/dW, summed over steps: (onehot(y_t) - softmax(logits_t)) (x) features_t.
inline Matrix grad_response_logprob(const PolicyParams& params, const ContextEncoder& encoder,
                                    const TaskInstance& instance, std::span<const int> tokens) {
  Matrix grad(params.weights.rows, params.weights.cols);
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    const Encoding enc = encoder.encode(instance, tokens.subspan(0, t));
    const std::vector<double> probs = softmax(policy_logits(params, enc));
    const int y = tokens[t];
    for (int v = 0; v < grad.rows; ++v) {
      const double coef = (v == y ? 1.0 : 0.0) - probs[static_cast<std::size_t>(v)];
      if (coef == 0.0) continue;
      double* row = grad.a.data() + static_cast<std::size_t>(v) * grad.cols;
      for (int i = 0; i < grad.cols; ++i) {
        row[i] += coef * enc.features[static_cast<std::size_t>(i)];
      }
    }
  }
  return grad;
}

// --- initialization -------------------------------------------------------------

// Starting point and frozen reference for training: zero weights except a
// structural prior wired through the prefix-state features, mirroring a base
// model that already follows the tag format most of the time but has no
// preference among answer options.
inline PolicyParams make_base_policy(const ContextEncoder& encoder, double format_bias) {
  const auto& L = encoder.layout();
  const Vocabulary& vocab = encoder.vocab();
  PolicyParams p;
  p.weights = Matrix(vocab.size(), encoder.dim());
  Matrix& w = p.weights;
  w(kThinkOpen, L.state + kStateStart) = format_bias;
  w(kThinkClose, L.state + kStateInThink) = format_bias;
  for (int m = 0; m < vocab.fillers; ++m) {
    w(kFillerBase + m, L.state + kStateInThink) = format_bias / 2.0;
  }
  w(kAnsOpen, L.state + kStateAfterThink) = format_bias;
  for (int slot = 0; slot < kMaxOptions; ++slot) {
    w(Vocabulary::option_token(slot), L.state + kStateInAnswerEmpty) = format_bias;
    // Mild pull toward options that exist for this instance, and away from a
    // second option once the answer slot is filled.
    w(Vocabulary::option_token(slot), L.opt_bound + slot) = format_bias / 2.0;
    w(Vocabulary::option_token(slot), L.state + kStateInAnswerFilled) = -format_bias / 2.0;
  }
  w(kAnsClose, L.state + kStateInAnswerFilled) = format_bias;
  w(kEos, L.state + kStateDone) = format_bias;
  return p;
}

// --- serialization ----------------------------------------------------------------
//
// Textual, versioned:
//   tgpo-params v1
//   vocab <V> dim <d> role <current|old|reference>
//   <V lines of d doubles, printf %.17g>

inline void save_params(std::ostream& out, const PolicyParams& params) {
  out << "tgpo-params v1\n";
  out << "vocab " << params.weights.rows << " dim " << params.weights.cols << " role "
      << role_name(params.role) << "\n";
  char buf[40];
  for (int v = 0; v < params.weights.rows; ++v) {
    for (int i = 0; i < params.weights.cols; ++i) {
      std::snprintf(buf, sizeof(buf), "%.17g", params.weights(v, i));
      out << buf << (i + 1 == params.weights.cols ? "" : " ");
    }
    out << "\n";
  }
}

inline PolicyParams load_params(std::istream& in) {
  std::string magic, version;
  in >> magic >> version;
  if (magic != "tgpo-params" || version != "v1") {
    throw std::runtime_error("load_params: bad header");
  }
  std::string kw_vocab, kw_dim, kw_role, role;
  int vocab = 0, dim = 0;
  in >> kw_vocab >> vocab >> kw_dim >> dim >> kw_role >> role;
  if (kw_vocab != "vocab" || kw_dim != "dim" || kw_role != "role" || vocab <= 0 || dim <= 0) {
    throw std::runtime_error("load_params: bad shape line");
  }
  PolicyParams p;
  p.role = role_from_name(role);
  p.weights = Matrix(vocab, dim);
  for (double& v : p.weights.a) {
    if (!(in >> v)) throw std::runtime_error("load_params: truncated data");
  }
  return p;
}

inline void save_params_file(const std::string& path, const PolicyParams& params) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  save_params(out, params);
}

inline PolicyParams load_params_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open params: " + path);
  return load_params(in);
}

}  // namespace tgpo
