#pragma once

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "tgpo/calibrate.hpp"
#include "tgpo/config.hpp"
#include "tgpo/optim.hpp"
#include "tgpo/policy.hpp"
#include "tgpo/rewards.hpp"
#include "tgpo/rng.hpp"
#include "tgpo/vqaenv.hpp"

namespace tgpo {

// Cold-start RL loop: every step draws a mini-batch, refreshes theta_old,
// samples |G| responses per instance on the ordered clip, adds one shuffled
// greedy baseline per instance for TGPO variants, and applies one update.
// Runs are bit-reproducible from (config, seed): all randomness flows through
// derive_seed substreams keyed by (stream, step, instance, sample) and every
// reduction is sequential in index order.

struct TrainState {
  int step = 0;
  PolicyParams params;          // current theta
  PolicyParams params_old;      // theta_old, refreshed at each rollout phase
  PolicyParams reference;       // pi_ref, frozen at the initial theta
  std::uint64_t seed = 0;
};

struct MetricsRow {
  int step = 0;
  double mean_reward = 0.0;
  std::optional<double> mean_calibrated;  // TGPO variants only
  double objective = 0.0;
  double kl = 0.0;
  std::optional<double> eval_ordered;     // eval steps only
  std::optional<double> eval_shuffled;
  std::optional<double> temporal_gap;
};

struct EvalResult {
  double ordered = 0.0;   // mean accuracy-only reward, frames in order
  double shuffled = 0.0;  // same instances, one seeded shuffle each
  double gap = 0.0;       // ordered - shuffled
  double ordered_temporal = 0.0;
  double ordered_spatial = 0.0;
  int n_temporal = 0;
  int n_spatial = 0;
};

// Greedy-decodes each instance twice (ordered and once-shuffled frames) and
// scores accuracy only; format shaping is a training device, not a metric.
inline EvalResult evaluate(const PolicyParams& params, const ContextEncoder& encoder,
                           std::span<const TaskInstance> corpus, Rng& rng) {
  if (corpus.empty()) throw std::invalid_argument("evaluate: empty corpus");
  EvalResult r;
  double ordered_temporal = 0.0, ordered_spatial = 0.0;
  for (const TaskInstance& inst : corpus) {
    const int n_options = static_cast<int>(inst.options.size());
    const Response ordered = greedy_decode(params, encoder, inst);
    const int acc_ordered = accuracy_reward(parse_response(ordered.tokens, n_options), inst.gold);

    TaskInstance shuffled = inst;
    shuffled.video = shuffle_frames(inst.video, rng);
    const Response shuf = greedy_decode(params, encoder, shuffled);
    const int acc_shuffled = accuracy_reward(parse_response(shuf.tokens, n_options), inst.gold);

    r.ordered += acc_ordered;
    r.shuffled += acc_shuffled;
    if (inst.kind == TaskKind::Temporal) {
      ordered_temporal += acc_ordered;
      ++r.n_temporal;
    } else {
      ordered_spatial += acc_ordered;
      ++r.n_spatial;
    }
  }
  const double n = static_cast<double>(corpus.size());
  r.ordered /= n;
  r.shuffled /= n;
  r.gap = r.ordered - r.shuffled;
  r.ordered_temporal = r.n_temporal > 0 ? ordered_temporal / r.n_temporal : 0.0;
  r.ordered_spatial = r.n_spatial > 0 ? ordered_spatial / r.n_spatial : 0.0;
  return r;
}

struct TrainResult {
  TrainState state;
  std::vector<MetricsRow> metrics;
};

inline bool is_eval_step(int step, int eval_every, int max_steps) {
  return step % eval_every == 0 || step == max_steps;
}

inline TrainResult run_training(const RunConfig& config, std::span<const TaskInstance> corpus,
                                std::span<const TaskInstance> eval_corpus) {
  validate_config(config);
  if (corpus.empty()) throw std::invalid_argument("run_training: empty corpus");
  const Variant variant = variant_from_name(config.variant);
  const Vocabulary vocab{config.fillers};
  const ContextEncoder encoder(config.alphabet, vocab, config.l_max);

  TrainResult result;
  TrainState& state = result.state;
  state.seed = config.seed;
  state.params = make_base_policy(encoder, config.init_format_bias);
  state.params.role = Role::Current;
  state.params_old = state.params;
  state.params_old.role = Role::Old;
  state.reference = state.params;
  state.reference.role = Role::Reference;

  const UpdateOptions opts{config.lr, config.beta, config.weight_decay};
  for (int step = 1; step <= config.max_steps; ++step) {
    Rng batch_rng(derive_seed(config.seed, Stream::Batch, {static_cast<std::uint64_t>(step)}));
    state.params_old = state.params;
    state.params_old.role = Role::Old;

    MiniBatch batch;
    batch.groups.reserve(static_cast<std::size_t>(config.batch_size));
    double reward_sum = 0.0;
    double calibrated_sum = 0.0;
    for (int j = 0; j < config.batch_size; ++j) {
      GroupRollout group;
      group.instance = corpus[batch_rng.bounded(corpus.size())];
      const int n_options = static_cast<int>(group.instance.options.size());
      for (int i = 0; i < config.group_size; ++i) {
        Rng sample_rng(derive_seed(config.seed, Stream::Sample,
                                   {static_cast<std::uint64_t>(step), static_cast<std::uint64_t>(j),
                                    static_cast<std::uint64_t>(i)}));
        Response resp = sample(state.params, encoder, group.instance, config.temperature,
                               sample_rng);
        const ParsedResponse parsed = parse_response(resp.tokens, n_options);
        const RewardBreakdown breakdown = combined_reward(parsed, group.instance.gold,
                                                          config.lambda);
        group.rewards.push_back(breakdown.total);
        reward_sum += breakdown.total;
        group.old_logprobs.push_back(resp.logprobs);
        group.responses.push_back(std::move(resp));
      }
      if (variant_is_tgpo(variant)) {
        Rng shuffle_rng(derive_seed(config.seed, Stream::Shuffle,
                                    {static_cast<std::uint64_t>(step),
                                     static_cast<std::uint64_t>(j)}));
        const BaselineResult baseline =
            make_baseline(state.params, encoder, group.instance, config.lambda, shuffle_rng);
        group.baseline_reward = baseline.reward.total;
        group.calibrated = calibrated_rewards(group.rewards, group.baseline_reward);
        group.has_calibrated = true;
        for (double c : group.calibrated) calibrated_sum += c;
      }
      batch.groups.push_back(std::move(group));
    }

    const AdvantageReport report =
        compute_advantage(variant, batch, state.params, state.reference, encoder, config.eps,
                          config.clip);
    state.params = update_step(state.params, report, opts);
    state.step = step;

    MetricsRow row;
    row.step = step;
    const double samples = static_cast<double>(config.batch_size) * config.group_size;
    row.mean_reward = reward_sum / samples;
    if (variant_is_tgpo(variant)) row.mean_calibrated = calibrated_sum / samples;
    row.objective = report.objective;
    row.kl = report.kl;
    if (!eval_corpus.empty() && is_eval_step(step, config.eval_every, config.max_steps)) {
      Rng eval_rng(derive_seed(config.seed, Stream::Eval, {static_cast<std::uint64_t>(step)}));
      const EvalResult ev = evaluate(state.params, encoder, eval_corpus, eval_rng);
      row.eval_ordered = ev.ordered;
      row.eval_shuffled = ev.shuffled;
      row.temporal_gap = ev.gap;
    }
    result.metrics.push_back(row);
  }
  return result;
}

// --- reward curve metrics ----------------------------------------------------

// Trapezoidal integral of (step, reward) pairs from the first step to `upto`,
// in reward*step units. Steps must be strictly increasing.
inline double reward_auc(std::span<const std::pair<double, double>> series, double upto) {
  if (series.size() < 2) throw std::invalid_argument("reward_auc: need at least 2 points");
  for (std::size_t i = 1; i < series.size(); ++i) {
    if (!(series[i].first > series[i - 1].first)) {
      throw std::invalid_argument("reward_auc: steps must be strictly increasing");
    }
  }
  if (upto < series.front().first) {
    throw std::invalid_argument("reward_auc: upto precedes the first step");
  }
  double auc = 0.0;
  for (std::size_t i = 1; i < series.size(); ++i) {
    const auto [x0, y0] = series[i - 1];
    const auto [x1, y1] = series[i];
    if (upto >= x1) {
      auc += 0.5 * (y0 + y1) * (x1 - x0);
    } else if (upto > x0) {
      const double t = (upto - x0) / (x1 - x0);
      const double y_mid = y0 + t * (y1 - y0);
      auc += 0.5 * (y0 + y_mid) * (upto - x0);
      break;
    } else {
      break;
    }
  }
  return auc;
}

// s_0 = x_0; s_t = alpha * x_t + (1 - alpha) * s_{t-1}, computed in the
// residual form s + alpha * (x - s) so constant series pass through exactly.
inline std::vector<double> ema_smooth(std::span<const double> series, double alpha) {
  if (series.empty()) throw std::invalid_argument("ema_smooth: empty series");
  if (!(alpha > 0.0) || alpha > 1.0) throw std::invalid_argument("ema_smooth: alpha in (0, 1]");
  std::vector<double> out(series.size());
  out[0] = series[0];
  for (std::size_t t = 1; t < series.size(); ++t) {
    out[t] = out[t - 1] + alpha * (series[t] - out[t - 1]);
  }
  return out;
}

// --- metrics CSV ---------------------------------------------------------------
//
//   # tgpo-metrics v1 eval_every=<n>
//   step,mean_reward,mean_calibrated,objective,kl,eval_ordered,eval_shuffled,temporal_gap
//
// One row per step; non-applicable fields are empty; floats use 9 significant
// digits.

inline std::string metrics_csv_header() {
  return "step,mean_reward,mean_calibrated,objective,kl,eval_ordered,eval_shuffled,temporal_gap";
}

namespace detail {

inline std::string format_metric(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

}  // namespace detail

inline void write_metrics_csv(std::ostream& out, std::span<const MetricsRow> rows,
                              int eval_every) {
  out << "# tgpo-metrics v1 eval_every=" << eval_every << "\n";
  out << metrics_csv_header() << "\n";
  for (const MetricsRow& r : rows) {
    out << r.step << "," << detail::format_metric(r.mean_reward) << ",";
    if (r.mean_calibrated) out << detail::format_metric(*r.mean_calibrated);
    out << "," << detail::format_metric(r.objective) << "," << detail::format_metric(r.kl) << ",";
    if (r.eval_ordered) out << detail::format_metric(*r.eval_ordered);
    out << ",";
    if (r.eval_shuffled) out << detail::format_metric(*r.eval_shuffled);
    out << ",";
    if (r.temporal_gap) out << detail::format_metric(*r.temporal_gap);
    out << "\n";
  }
}

inline void write_metrics_csv_file(const std::string& path, std::span<const MetricsRow> rows,
                                   int eval_every) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  write_metrics_csv(out, rows, eval_every);
}

// Reads eval-step (step, eval_ordered) pairs back from a metrics CSV.
inline std::vector<std::pair<double, double>> read_eval_series_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open metrics csv: " + path);
  std::vector<std::pair<double, double>> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#' || line.rfind("step,", 0) == 0) continue;
    std::vector<std::string> fields;
    std::string cur;
    for (char ch : line) {
      if (ch == ',') {
        fields.push_back(cur);
        cur.clear();
      } else {
        cur.push_back(ch);
      }
    }
    fields.push_back(cur);
    if (fields.size() != 8) throw std::runtime_error("metrics csv: bad row: " + line);
    if (fields[5].empty()) continue;
    out.emplace_back(std::stod(fields[0]), std::stod(fields[5]));
  }
  return out;
}

// --- checkpoints -----------------------------------------------------------------
//
//   tgpo-checkpoint v1
//   step <n> seed <s>
//   <current params block>
//   <reference params block>
//
// The master seed plus the step counter is the complete RNG state: substreams
// are derived statelessly from (seed, stream, step, ...).

inline void save_checkpoint(const std::string& path, const TrainState& state) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << "tgpo-checkpoint v1\n";
  out << "step " << state.step << " seed " << state.seed << "\n";
  save_params(out, state.params);
  save_params(out, state.reference);
}

inline TrainState load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
  std::string magic, version, kw_step, kw_seed;
  TrainState state;
  in >> magic >> version >> kw_step >> state.step >> kw_seed >> state.seed;
  if (magic != "tgpo-checkpoint" || version != "v1" || kw_step != "step" || kw_seed != "seed") {
    throw std::runtime_error("load_checkpoint: bad header");
  }
  state.params = load_params(in);
  state.reference = load_params(in);
  state.params_old = state.params;
  state.params_old.role = Role::Old;
  return state;
}

}  // namespace tgpo
