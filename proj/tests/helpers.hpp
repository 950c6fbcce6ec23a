#pragma once

// Shared helpers for the unit and acceptance suites: random instance and
// parameter generators, a finite-difference oracle, and hand-built policies
// used to probe specific behaviors.

#include <cmath>
#include <functional>
#include <span>
#include <vector>

#include "tgpo/calibrate.hpp"
#include "tgpo/optim.hpp"
#include "tgpo/policy.hpp"
#include "tgpo/rewards.hpp"
#include "tgpo/rng.hpp"
#include "tgpo/vqaenv.hpp"

namespace tgpo::testing {

inline PolicyParams random_params(const ContextEncoder& encoder, Rng& rng, double scale = 0.5) {
  PolicyParams p;
  p.weights = Matrix(encoder.vocab().size(), encoder.dim());
  for (double& v : p.weights.a) v = scale * (2.0 * rng.uniform() - 1.0);
  return p;
}

inline TaskInstance random_instance(Rng& rng, const EnvSpec& spec = EnvSpec{6, 8}) {
  return rng.coin() ? make_temporal_task(rng, spec) : make_spatial_task(rng, spec);
}

// Random token sequence that stays inside the vocabulary; not necessarily
// well-formed.
inline std::vector<int> random_tokens(const Vocabulary& vocab, Rng& rng, int len) {
  std::vector<int> out;
  for (int i = 0; i < len; ++i) out.push_back(static_cast<int>(rng.bounded(vocab.size())));
  return out;
}

// Central finite differences of a scalar function of the weights.
inline Matrix finite_difference_grad(const std::function<double(const PolicyParams&)>& f,
                                     const PolicyParams& at, double step = 1e-5) {
  Matrix grad(at.weights.rows, at.weights.cols);
  PolicyParams probe = at;
  for (std::size_t idx = 0; idx < at.weights.a.size(); ++idx) {
    const double saved = probe.weights.a[idx];
    probe.weights.a[idx] = saved + step;
    const double up = f(probe);
    probe.weights.a[idx] = saved - step;
    const double down = f(probe);
    probe.weights.a[idx] = saved;
    grad.a[idx] = (up - down) / (2.0 * step);
  }
  return grad;
}

inline double max_rel_error(const Matrix& a, const Matrix& b, double floor = 1e-6) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.a.size(); ++i) {
    const double denom = std::max({floor, std::fabs(a.a[i]), std::fabs(b.a[i])});
    worst = std::max(worst, std::fabs(a.a[i] - b.a[i]) / denom);
  }
  return worst;
}

// Policy that reads only the last-frame interaction feature: answers the
// label whose symbol sits in the final frame, with the structural prior on
// top so responses stay well-formed. The interaction strength stays below
// the format bias because these features are prefix-independent and must not
// outbid structural tokens outside the answer state.
inline PolicyParams last_frame_policy(const ContextEncoder& encoder, double strength = 4.0) {
  PolicyParams p = make_base_policy(encoder, 12.0);
  const auto& L = encoder.layout();
  for (int slot = 0; slot < kMaxOptions; ++slot) {
    p.weights(Vocabulary::option_token(slot), L.opt_last + slot) = strength;
  }
  return p;
}

// Policy whose option choice depends only on order-invariant features
// (presence mass), so its output distribution is shuffle-invariant.
inline PolicyParams presence_policy(const ContextEncoder& encoder, double strength = 4.0) {
  PolicyParams p = make_base_policy(encoder, 12.0);
  const auto& L = encoder.layout();
  for (int slot = 0; slot < kMaxOptions; ++slot) {
    p.weights(Vocabulary::option_token(slot), L.opt_present + slot) = strength;
  }
  return p;
}

// Builds a |B| x |G| batch of sampled rollouts with synthetic old_logprobs
// recorded from the sampling params (theta_old = generating params).
inline MiniBatch random_batch(const ContextEncoder& encoder, const PolicyParams& params, Rng& rng,
                              int batch_size, int group_size, double lambda,
                              bool with_calibration) {
  MiniBatch batch;
  for (int j = 0; j < batch_size; ++j) {
    GroupRollout group;
    group.instance = random_instance(rng);
    const int n_options = static_cast<int>(group.instance.options.size());
    for (int i = 0; i < group_size; ++i) {
      Response resp = sample(params, encoder, group.instance, 1.0, rng);
      const RewardBreakdown r =
          combined_reward(parse_response(resp.tokens, n_options), group.instance.gold, lambda);
      group.rewards.push_back(r.total);
      group.old_logprobs.push_back(resp.logprobs);
      group.responses.push_back(std::move(resp));
    }
    if (with_calibration) {
      const BaselineResult baseline = make_baseline(params, encoder, group.instance, lambda, rng);
      group.baseline_reward = baseline.reward.total;
      group.calibrated = calibrated_rewards(group.rewards, group.baseline_reward);
      group.has_calibrated = true;
    }
    batch.groups.push_back(std::move(group));
  }
  return batch;
}

}  // namespace tgpo::testing
