#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "tgpo/calibrate.hpp"
#include "tgpo/math.hpp"
#include "tgpo/policy.hpp"
#include "tgpo/vqaenv.hpp"

namespace tgpo {

enum class Variant { Grpo, Gspo, TgpoGrpo, TgpoGspo };

inline const char* variant_name(Variant v) {
  switch (v) {
    case Variant::Grpo: return "grpo";
    case Variant::Gspo: return "gspo";
    case Variant::TgpoGrpo: return "tgpo_grpo";
    case Variant::TgpoGspo: return "tgpo_gspo";
  }
  return "grpo";
}

inline Variant variant_from_name(const std::string& s) {
  if (s == "grpo") return Variant::Grpo;
  if (s == "gspo") return Variant::Gspo;
  if (s == "tgpo_grpo") return Variant::TgpoGrpo;
  if (s == "tgpo_gspo") return Variant::TgpoGspo;
  throw std::invalid_argument("unknown variant: " + s);
}

inline bool variant_is_tgpo(Variant v) {
  return v == Variant::TgpoGrpo || v == Variant::TgpoGspo;
}

namespace detail {

inline bool all_equal(std::span<const double> x) {
  for (double v : x) {
    if (v != x[0]) return false;
  }
  return true;
}

}  // namespace detail

// (r_i - mu) / max(sigma, eps) with population sigma, within one group. The
// eps floor only guards the degenerate denominator; an all-equal group
// short-circuits to exact zeros so that no signal means no update.
inline std::vector<double> group_normalize(std::span<const double> rewards, double eps) {
  if (rewards.size() < 2) throw std::invalid_argument("group_normalize: need at least 2 rewards");
  if (detail::all_equal(rewards)) return std::vector<double>(rewards.size(), 0.0);
  const double mu = population_mean(rewards);
  const double sigma = std::max(population_std(rewards), eps);
  std::vector<double> out(rewards.size());
  for (std::size_t i = 0; i < rewards.size(); ++i) out[i] = (rewards[i] - mu) / sigma;
  return out;
}

// Same, pooled over all |B| x |G| samples of the mini-batch.
inline std::vector<std::vector<double>> global_normalize(
    const std::vector<std::vector<double>>& batch_rewards, double eps) {
  std::vector<double> pooled;
  for (const auto& g : batch_rewards) pooled.insert(pooled.end(), g.begin(), g.end());
  if (pooled.size() < 2) throw std::invalid_argument("global_normalize: need at least 2 samples");
  std::vector<std::vector<double>> out(batch_rewards.size());
  if (detail::all_equal(pooled)) {
    for (std::size_t j = 0; j < batch_rewards.size(); ++j) {
      out[j].assign(batch_rewards[j].size(), 0.0);
    }
    return out;
  }
  const double mu = population_mean(pooled);
  const double sigma = std::max(population_std(pooled), eps);
  for (std::size_t j = 0; j < batch_rewards.size(); ++j) {
    out[j].resize(batch_rewards[j].size());
    for (std::size_t i = 0; i < batch_rewards[j].size(); ++i) {
      out[j][i] = (batch_rewards[j][i] - mu) / sigma;
    }
  }
  return out;
}

// exp(logpi_theta(t) - logpi_theta_old(t)) per token.
inline std::vector<double> token_ratios(const PolicyParams& current, const ContextEncoder& encoder,
                                        const TaskInstance& instance, const Response& response,
                                        std::span<const double> old_logprobs) {
  if (old_logprobs.size() != response.tokens.size()) {
    throw std::invalid_argument("token_ratios: old_logprobs length mismatch");
  }
  const ResponseLogProb cur = response_logprob(current, encoder, instance, response.tokens);
  std::vector<double> out(old_logprobs.size());
  for (std::size_t t = 0; t < out.size(); ++t) {
    out[t] = std::exp(cur.per_token[t] - old_logprobs[t]);
    if (!std::isfinite(out[t]) || out[t] <= 0.0) {
      throw std::runtime_error("token_ratios: non-finite ratio");
    }
  }
  return out;
}

// Sequence-level ratio: exp of the length-averaged log-ratio, i.e. the
// geometric mean of the token ratios.
inline double sequence_ratio(const PolicyParams& current, const ContextEncoder& encoder,
                             const TaskInstance& instance, const Response& response,
                             std::span<const double> old_logprobs) {
  if (old_logprobs.size() != response.tokens.size()) {
    throw std::invalid_argument("sequence_ratio: old_logprobs length mismatch");
  }
  if (old_logprobs.empty()) throw std::invalid_argument("sequence_ratio: empty response");
  const ResponseLogProb cur = response_logprob(current, encoder, instance, response.tokens);
  double acc = 0.0;
  for (std::size_t t = 0; t < old_logprobs.size(); ++t) {
    acc += cur.per_token[t] - old_logprobs[t];
  }
  const double rho = std::exp(acc / static_cast<double>(old_logprobs.size()));
  if (!std::isfinite(rho) || rho <= 0.0) throw std::runtime_error("sequence_ratio: non-finite");
  return rho;
}

struct GroupRollout {
  TaskInstance instance;
  std::vector<Response> responses;                // |G| samples on the ordered clip
  std::vector<double> rewards;                    // combined rewards r(y_i)
  std::vector<std::vector<double>> old_logprobs;  // per response, under theta_old
  bool has_calibrated = false;
  std::vector<double> calibrated;                 // r_T(y_i), for TGPO variants
  double baseline_reward = 0.0;
};

struct MiniBatch {
  std::vector<GroupRollout> groups;
};

struct AdvantageReport {
  Variant variant = Variant::Grpo;
  double objective = 0.0;
  std::vector<std::vector<double>> advantages;  // |B| x |G|
  Matrix gradient;                              // d objective / d theta
  double kl = 0.0;                              // exact KL(pi_theta || pi_ref)
  Matrix kl_gradient;
};

namespace detail {

struct TokenEval {
  Encoding enc;
  std::vector<double> probs;     // softmax under current params
  std::vector<double> logp;      // log-softmax under current params
  double cur_lp = 0.0;           // current log-prob of the realized token
  int token = 0;
};

inline void accumulate_outer(Matrix& grad, std::span<const double> coef_per_token,
                             const std::vector<double>& features) {
  for (int v = 0; v < grad.rows; ++v) {
    const double c = coef_per_token[static_cast<std::size_t>(v)];
    if (c == 0.0) continue;
    double* row = grad.a.data() + static_cast<std::size_t>(v) * grad.cols;
    for (int i = 0; i < grad.cols; ++i) row[i] += c * features[static_cast<std::size_t>(i)];
  }
}

// Shared engine for the four estimators. `sequence_level` picks the GSPO
// ratio; `global_norm` switches group-wise raw rewards for globally
// normalized calibrated rewards. Normalization statistics and rewards are
// treated as constants during differentiation.
inline AdvantageReport compute_advantage(Variant variant, const MiniBatch& batch,
                                         const PolicyParams& current,
                                         const PolicyParams& reference,
                                         const ContextEncoder& encoder, double eps, double clip) {
  const bool sequence_level = variant == Variant::Gspo || variant == Variant::TgpoGspo;
  const bool calibrated = variant_is_tgpo(variant);
  if (batch.groups.empty()) throw std::invalid_argument("compute_advantage: empty batch");
  const std::size_t group_size = batch.groups.front().responses.size();
  for (const GroupRollout& g : batch.groups) {
    if (g.responses.size() != group_size) {
      throw std::invalid_argument("compute_advantage: ragged group sizes");
    }
    if (g.responses.size() != g.rewards.size() || g.responses.size() != g.old_logprobs.size()) {
      throw std::invalid_argument("compute_advantage: inconsistent group rollout");
    }
    if (calibrated && !g.has_calibrated) {
      throw std::invalid_argument("compute_advantage: calibrated rewards missing");
    }
  }

  AdvantageReport report;
  report.variant = variant;
  if (calibrated) {
    std::vector<std::vector<double>> raw(batch.groups.size());
    for (std::size_t j = 0; j < batch.groups.size(); ++j) raw[j] = batch.groups[j].calibrated;
    report.advantages = global_normalize(raw, eps);
  } else {
    report.advantages.reserve(batch.groups.size());
    for (const GroupRollout& g : batch.groups) {
      report.advantages.push_back(group_normalize(g.rewards, eps));
    }
  }

  const int vocab_size = current.weights.rows;
  report.gradient = Matrix(vocab_size, current.weights.cols);
  report.kl_gradient = Matrix(vocab_size, current.weights.cols);
  const double inv_bg =
      1.0 / (static_cast<double>(batch.groups.size()) * static_cast<double>(group_size));

  double objective = 0.0;
  double kl_sum = 0.0;
  std::size_t kl_contexts = 0;
  std::vector<double> coef(static_cast<std::size_t>(vocab_size));

  for (std::size_t j = 0; j < batch.groups.size(); ++j) {
    const GroupRollout& group = batch.groups[j];
    for (std::size_t i = 0; i < group_size; ++i) {
      const Response& resp = group.responses[i];
      const std::vector<double>& old_lp = group.old_logprobs[i];
      if (old_lp.size() != resp.tokens.size() || resp.tokens.empty()) {
        throw std::invalid_argument("compute_advantage: bad old_logprobs");
      }
      const double adv = report.advantages[j][i];
      const std::size_t len = resp.tokens.size();
      const double inv_len = 1.0 / static_cast<double>(len);

      std::vector<TokenEval> evals;
      evals.reserve(len);
      double log_rho = 0.0;
      for (std::size_t t = 0; t < len; ++t) {
        TokenEval ev;
        ev.enc = encoder.encode(group.instance,
                                std::span<const int>(resp.tokens).subspan(0, t));
        const std::vector<double> logits = policy_logits(current, ev.enc);
        ev.logp = log_softmax(logits);
        ev.probs.resize(ev.logp.size());
        for (std::size_t v = 0; v < ev.logp.size(); ++v) ev.probs[v] = std::exp(ev.logp[v]);
        ev.token = resp.tokens[t];
        ev.cur_lp = ev.logp[static_cast<std::size_t>(ev.token)];
        log_rho += ev.cur_lp - old_lp[t];
        evals.push_back(std::move(ev));
      }

      if (sequence_level) {
        const double rho = std::exp(log_rho * inv_len);
        double term = rho * adv;
        bool pass_gradient = true;
        if (clip > 0.0) {
          const double clipped = std::clamp(rho, 1.0 - clip, 1.0 + clip) * adv;
          if (clipped < term) {
            term = clipped;
            pass_gradient = rho >= 1.0 - clip && rho <= 1.0 + clip;
          }
        }
        objective += inv_bg * term;
        if (pass_gradient && adv != 0.0) {
          const double scale = inv_bg * adv * rho * inv_len;
          for (const TokenEval& ev : evals) {
            for (int v = 0; v < vocab_size; ++v) {
              coef[static_cast<std::size_t>(v)] =
                  scale * ((v == ev.token ? 1.0 : 0.0) - ev.probs[static_cast<std::size_t>(v)]);
            }
            accumulate_outer(report.gradient, coef, ev.enc.features);
          }
        }
      } else {
        for (std::size_t t = 0; t < len; ++t) {
          const TokenEval& ev = evals[t];
          const double ratio = std::exp(ev.cur_lp - old_lp[t]);
          double term = ratio * adv;
          bool pass_gradient = true;
          if (clip > 0.0) {
            const double clipped = std::clamp(ratio, 1.0 - clip, 1.0 + clip) * adv;
            if (clipped < term) {
              term = clipped;
              pass_gradient = ratio >= 1.0 - clip && ratio <= 1.0 + clip;
            }
          }
          objective += inv_bg * inv_len * term;
          if (pass_gradient && adv != 0.0) {
            const double scale = inv_bg * inv_len * adv * ratio;
            for (int v = 0; v < vocab_size; ++v) {
              coef[static_cast<std::size_t>(v)] =
                  scale * ((v == ev.token ? 1.0 : 0.0) - ev.probs[static_cast<std::size_t>(v)]);
            }
            accumulate_outer(report.gradient, coef, ev.enc.features);
          }
        }
      }

      // Exact per-step KL against the frozen reference over the contexts this
      // response visited.
      for (const TokenEval& ev : evals) {
        const std::vector<double> ref_logp = log_softmax(policy_logits(reference, ev.enc));
        double kl_ctx = 0.0;
        for (std::size_t v = 0; v < ev.probs.size(); ++v) {
          kl_ctx += ev.probs[v] * (ev.logp[v] - ref_logp[v]);
        }
        kl_sum += kl_ctx;
        for (std::size_t v = 0; v < ev.probs.size(); ++v) {
          coef[v] = ev.probs[v] * ((ev.logp[v] - ref_logp[v]) - kl_ctx);
        }
        accumulate_outer(report.kl_gradient, coef, ev.enc.features);
        ++kl_contexts;
      }
    }
  }

  report.objective = objective;
  if (kl_contexts > 0) {
    report.kl = kl_sum / static_cast<double>(kl_contexts);
    report.kl_gradient.scale(1.0 / static_cast<double>(kl_contexts));
  }
  if (!report.gradient.finite() || !report.kl_gradient.finite() ||
      !std::isfinite(report.objective)) {
    throw std::runtime_error("compute_advantage: non-finite result");
  }
  return report;
}

}  // namespace detail

inline AdvantageReport advantage_grpo(const MiniBatch& batch, const PolicyParams& current,
                                      const PolicyParams& reference, const ContextEncoder& encoder,
                                      double eps, double clip = 0.0) {
  return detail::compute_advantage(Variant::Grpo, batch, current, reference, encoder, eps, clip);
}

inline AdvantageReport advantage_gspo(const MiniBatch& batch, const PolicyParams& current,
                                      const PolicyParams& reference, const ContextEncoder& encoder,
                                      double eps, double clip = 0.0) {
  return detail::compute_advantage(Variant::Gspo, batch, current, reference, encoder, eps, clip);
}

inline AdvantageReport advantage_tgpo_grpo(const MiniBatch& batch, const PolicyParams& current,
                                           const PolicyParams& reference,
                                           const ContextEncoder& encoder, double eps,
                                           double clip = 0.0) {
  return detail::compute_advantage(Variant::TgpoGrpo, batch, current, reference, encoder, eps,
                                   clip);
}

inline AdvantageReport advantage_tgpo_gspo(const MiniBatch& batch, const PolicyParams& current,
                                           const PolicyParams& reference,
                                           const ContextEncoder& encoder, double eps,
                                           double clip = 0.0) {
  return detail::compute_advantage(Variant::TgpoGspo, batch, current, reference, encoder, eps,
                                   clip);
}

inline AdvantageReport compute_advantage(Variant variant, const MiniBatch& batch,
                                         const PolicyParams& current,
                                         const PolicyParams& reference,
                                         const ContextEncoder& encoder, double eps,
                                         double clip = 0.0) {
  return detail::compute_advantage(variant, batch, current, reference, encoder, eps, clip);
}

// Exact KL(pi_theta || pi_ref), averaged over a sample of contexts. The toy
// vocabulary makes the full sum affordable, so no estimator is involved.
inline double kl_regularizer(const PolicyParams& current, const PolicyParams& reference,
                             std::span<const Encoding> contexts) {
  if (reference.role != Role::Reference) {
    throw std::invalid_argument("kl_regularizer: reference params must have role Reference");
  }
  if (contexts.empty()) return 0.0;
  double acc = 0.0;
  for (const Encoding& enc : contexts) {
    const std::vector<double> logp = log_softmax(policy_logits(current, enc));
    const std::vector<double> logq = log_softmax(policy_logits(reference, enc));
    acc += kl_from_logprobs(logp, logq);
  }
  return acc / static_cast<double>(contexts.size());
}

struct UpdateOptions {
  double lr = 1e-3;
  double beta = 1e-4;        // KL coefficient
  double weight_decay = 0.0; // decoupled
};

// Ascend the regularized objective:
//   theta <- theta + lr * (grad_objective - beta * grad_kl) - lr * wd * theta
inline PolicyParams update_step(const PolicyParams& params, const AdvantageReport& report,
                                const UpdateOptions& opts) {
  if (!report.gradient.same_shape(params.weights)) {
    throw std::invalid_argument("update_step: gradient shape mismatch");
  }
  PolicyParams next;
  next.role = Role::Current;
  next.weights = params.weights;
  next.weights.add_scaled(report.gradient, opts.lr);
  if (opts.beta != 0.0) next.weights.add_scaled(report.kl_gradient, -opts.lr * opts.beta);
  if (opts.weight_decay != 0.0) next.weights.add_scaled(params.weights, -opts.lr * opts.weight_decay);
  if (!next.weights.finite()) throw std::runtime_error("update_step: non-finite parameters");
  return next;
}

}  // namespace tgpo
