#pragma once

#include <cstdint>
#include <numeric>
#include <span>
#include <vector>

#include "tgpo/policy.hpp"
#include "tgpo/rewards.hpp"
#include "tgpo/rng.hpp"
#include "tgpo/vqaenv.hpp"

namespace tgpo {

// Temporal calibration: the reward of a greedy decode on a frame-shuffled
// clip anchors the rewards of the ordered-clip samples. A response earns a
// positive calibrated reward only where correct frame order actually helped.

// Uniformly random permutation of the frames; the identity is allowed.
inline Video shuffle_frames(const Video& video, Rng& rng) {
  std::vector<int> perm(video.frames.size());
  std::iota(perm.begin(), perm.end(), 0);
  rng.shuffle(perm);
  return permuted_video(video, perm);
}

struct BaselineResult {
  Response response;        // greedy decode on the shuffled clip
  RewardBreakdown reward;   // scored against the instance's original gold
};

// One shuffle and one greedy baseline per instance per rollout phase, shared
// by every group member. Uses the same current-policy snapshot that produced
// the group samples.
inline BaselineResult make_baseline(const PolicyParams& params, const ContextEncoder& encoder,
                                    const TaskInstance& instance, double lambda, Rng& rng) {
  TaskInstance shuffled = instance;
  shuffled.video = shuffle_frames(instance.video, rng);
  BaselineResult out;
  out.response = greedy_decode(params, encoder, shuffled);
  const ParsedResponse parsed =
      parse_response(out.response.tokens, static_cast<int>(instance.options.size()));
  out.reward = combined_reward(parsed, instance.gold, lambda);
  return out;
}

// r_T(y) = r(y) - r(y_hat), elementwise over the group.
inline std::vector<double> calibrated_rewards(std::span<const double> rewards,
                                              double baseline_reward) {
  std::vector<double> out(rewards.size());
  for (std::size_t i = 0; i < rewards.size(); ++i) out[i] = rewards[i] - baseline_reward;
  return out;
}

struct CalibratedGroup {
  std::int64_t instance_id = 0;
  std::vector<Response> responses;
  std::vector<RewardBreakdown> rewards;
  Response baseline_response;
  double baseline_reward = 0.0;
  std::vector<double> calibrated;
};

}  // namespace tgpo
