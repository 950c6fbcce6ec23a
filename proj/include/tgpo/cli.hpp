#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iomanip>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "tgpo/config.hpp"
#include "tgpo/trainer.hpp"

namespace tgpo {

// Subcommand bodies, separated from argv handling so they are callable
// in-process. All file outputs land under config.out_dir.

inline void ensure_out_dir(const RunConfig& config) {
  std::filesystem::create_directories(config.out_dir);
}

// Writes <out_dir>/train.jsonl and <out_dir>/eval.jsonl with an exact
// temporal/spatial partition: round(size * ratio) temporal instances first
// in generation order, ids sequential, then shuffled placement is left to
// batching (the trainer samples uniformly anyway).
inline void cmd_gen_corpus(const RunConfig& config, std::ostream& out) {
  validate_config(config);
  if (config.ratio > 0.0 && config.video_len < 2) {
    throw ConfigError("gen-corpus: temporal instances need video_len >= 2");
  }
  ensure_out_dir(config);
  const EnvSpec spec{config.alphabet, config.video_len};

  const auto generate = [&](int size, Stream stream, const std::string& path,
                            const char* label) {
    const int n_temporal = static_cast<int>(std::lround(size * config.ratio));
    std::vector<TaskInstance> instances;
    instances.reserve(static_cast<std::size_t>(size));
    for (int i = 0; i < size; ++i) {
      Rng rng(derive_seed(config.seed, stream, {static_cast<std::uint64_t>(i)}));
      TaskInstance inst = i < n_temporal ? make_temporal_task(rng, spec)
                                         : make_spatial_task(rng, spec);
      inst.id = i;
      instances.push_back(std::move(inst));
    }
    write_corpus(path, instances);
    out << label << ": " << path << " temporal=" << n_temporal
        << " spatial=" << (size - n_temporal) << "\n";
  };

  generate(config.corpus_size, Stream::Corpus, resolved_corpus_path(config), "train");
  // Eval instances draw from a distinct substream path so the two corpora are
  // independent for any seed.
  const auto eval_path = resolved_eval_corpus_path(config);
  const int n_temporal = static_cast<int>(std::lround(config.eval_size * config.ratio));
  std::vector<TaskInstance> instances;
  for (int i = 0; i < config.eval_size; ++i) {
    Rng rng(derive_seed(config.seed, Stream::Corpus,
                        {0x45564cULL, static_cast<std::uint64_t>(i)}));
    TaskInstance inst = i < n_temporal ? make_temporal_task(rng, spec)
                                       : make_spatial_task(rng, spec);
    inst.id = i;
    instances.push_back(std::move(inst));
  }
  write_corpus(eval_path, instances);
  out << "eval: " << eval_path << " temporal=" << n_temporal
      << " spatial=" << (config.eval_size - n_temporal) << "\n";
}

struct TrainOutputs {
  std::string metrics_path;
  std::string checkpoint_path;
  TrainResult result;
};

inline TrainOutputs cmd_train(const RunConfig& config, std::ostream& out) {
  validate_config(config);
  const std::vector<TaskInstance> corpus = read_corpus(resolved_corpus_path(config));
  const std::vector<TaskInstance> eval_corpus = read_corpus(resolved_eval_corpus_path(config));
  for (const TaskInstance& inst : corpus) {
    for (const Frame& f : inst.video.frames) {
      if (f.symbol >= config.alphabet) {
        throw ConfigError("corpus symbol " + std::to_string(f.symbol) +
                          " exceeds alphabet " + std::to_string(config.alphabet));
      }
    }
  }
  ensure_out_dir(config);

  TrainOutputs outputs;
  outputs.result = run_training(config, corpus, eval_corpus);
  outputs.metrics_path = config.out_dir + "/metrics.csv";
  outputs.checkpoint_path = config.out_dir + "/checkpoint.txt";
  write_metrics_csv_file(outputs.metrics_path, outputs.result.metrics, config.eval_every);
  save_checkpoint(outputs.checkpoint_path, outputs.result.state);
  out << "trained " << config.variant << " for " << config.max_steps << " steps; metrics: "
      << outputs.metrics_path << "\n";
  return outputs;
}

inline EvalResult cmd_eval(const RunConfig& config, const std::string& checkpoint_path,
                           std::ostream& out) {
  validate_config(config);
  const TrainState state = load_checkpoint(checkpoint_path);
  const std::vector<TaskInstance> eval_corpus = read_corpus(resolved_eval_corpus_path(config));
  const Vocabulary vocab{config.fillers};
  const ContextEncoder encoder(config.alphabet, vocab, config.l_max);
  Rng rng(derive_seed(state.seed, Stream::Eval, {static_cast<std::uint64_t>(state.step)}));
  const EvalResult ev = evaluate(state.params, encoder, eval_corpus, rng);
  out << "ordered " << detail::format_metric(ev.ordered) << " shuffled "
      << detail::format_metric(ev.shuffled) << " temporal_gap " << detail::format_metric(ev.gap)
      << "\n";
  return ev;
}

struct CompareCell {
  std::string variant;
  std::uint64_t seed = 0;
  double auc = 0.0;                    // trapezoidal AUC of eval_ordered over steps
  double final_gap = 0.0;              // temporal gap at the last eval step
  double final_ordered_temporal = 0.0; // ordered accuracy on temporal eval instances
};

struct CompareVariantSummary {
  std::string variant;
  std::vector<CompareCell> cells;
  double mean_auc = 0.0;
  double mean_final_gap = 0.0;
};

struct CompareSummary {
  std::vector<CompareVariantSummary> variants;
};

inline std::string compare_summary_json(const CompareSummary& summary) {
  std::ostringstream os;
  os << "{\"variants\":[";
  for (std::size_t v = 0; v < summary.variants.size(); ++v) {
    const CompareVariantSummary& s = summary.variants[v];
    if (v > 0) os << ",";
    os << "{\"variant\":\"" << s.variant << "\",\"mean_auc\":" << detail::format_metric(s.mean_auc)
       << ",\"mean_final_gap\":" << detail::format_metric(s.mean_final_gap) << ",\"cells\":[";
    for (std::size_t c = 0; c < s.cells.size(); ++c) {
      const CompareCell& cell = s.cells[c];
      if (c > 0) os << ",";
      os << "{\"seed\":" << cell.seed << ",\"auc\":" << detail::format_metric(cell.auc)
         << ",\"final_gap\":" << detail::format_metric(cell.final_gap)
         << ",\"final_ordered_temporal\":" << detail::format_metric(cell.final_ordered_temporal)
         << "}";
    }
    os << "]}";
  }
  os << "]}";
  return os.str();
}

// Runs every (variant, seed) cell with otherwise identical configuration and
// reports reward AUC plus the final temporal gap per cell. Each cell's
// metrics land in <out_dir>/compare_<variant>_s<seed>.csv; the summary in
// <out_dir>/compare.json.
inline CompareSummary cmd_compare(const RunConfig& base, std::span<const std::string> variants,
                                  std::span<const std::uint64_t> seeds, std::ostream& out) {
  validate_config(base);
  if (variants.size() < 2) throw ConfigError("compare: need at least 2 variants");
  if (seeds.empty()) throw ConfigError("compare: need at least 1 seed");
  const std::vector<TaskInstance> corpus = read_corpus(resolved_corpus_path(base));
  const std::vector<TaskInstance> eval_corpus = read_corpus(resolved_eval_corpus_path(base));
  ensure_out_dir(base);

  CompareSummary summary;
  for (const std::string& variant : variants) {
    variant_from_name(variant);
    CompareVariantSummary vs;
    vs.variant = variant;
    for (std::uint64_t seed : seeds) {
      RunConfig config = base;
      config.variant = variant;
      config.seed = seed;
      TrainResult result;
      try {
        result = run_training(config, corpus, eval_corpus);
      } catch (const std::exception& e) {
        throw std::runtime_error("compare cell (" + variant + ", seed " + std::to_string(seed) +
                                 ") failed: " + e.what());
      }
      const std::string cell_path =
          base.out_dir + "/compare_" + variant + "_s" + std::to_string(seed) + ".csv";
      write_metrics_csv_file(cell_path, result.metrics, config.eval_every);

      CompareCell cell;
      cell.variant = variant;
      cell.seed = seed;
      // AUC comes from the published per-cell CSV so the summary and the log
      // agree exactly, including the 9-digit float rendering.
      const auto series = read_eval_series_csv(cell_path);
      if (series.size() >= 2) {
        cell.auc = reward_auc(series, static_cast<double>(config.max_steps));
      }
      for (auto it = result.metrics.rbegin(); it != result.metrics.rend(); ++it) {
        if (it->temporal_gap) {
          cell.final_gap = *it->temporal_gap;
          break;
        }
      }
      {
        const Vocabulary vocab{config.fillers};
        const ContextEncoder encoder(config.alphabet, vocab, config.l_max);
        Rng eval_rng(derive_seed(config.seed, Stream::Eval,
                                 {static_cast<std::uint64_t>(config.max_steps)}));
        const EvalResult ev = evaluate(result.state.params, encoder, eval_corpus, eval_rng);
        cell.final_ordered_temporal = ev.ordered_temporal;
      }
      vs.cells.push_back(cell);
      vs.mean_auc += cell.auc;
      vs.mean_final_gap += cell.final_gap;
    }
    vs.mean_auc /= static_cast<double>(vs.cells.size());
    vs.mean_final_gap /= static_cast<double>(vs.cells.size());
    summary.variants.push_back(std::move(vs));
  }

  {
    std::ofstream json(base.out_dir + "/compare.json", std::ios::binary);
    json << compare_summary_json(summary) << "\n";
  }

  out << std::left << std::setw(12) << "variant" << std::setw(8) << "seed" << std::setw(14)
      << "auc" << std::setw(14) << "final_gap" << "ordered_temporal\n";
  for (const CompareVariantSummary& vs : summary.variants) {
    for (const CompareCell& cell : vs.cells) {
      out << std::left << std::setw(12) << cell.variant << std::setw(8) << cell.seed
          << std::setw(14) << detail::format_metric(cell.auc) << std::setw(14)
          << detail::format_metric(cell.final_gap)
          << detail::format_metric(cell.final_ordered_temporal) << "\n";
    }
    out << std::left << std::setw(12) << vs.variant << std::setw(8) << "mean" << std::setw(14)
        << detail::format_metric(vs.mean_auc) << std::setw(14)
        << detail::format_metric(vs.mean_final_gap) << "\n";
  }
  return summary;
}

}  // namespace tgpo
