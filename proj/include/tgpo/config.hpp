#pragma once

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "tgpo/optim.hpp"

namespace tgpo {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// One flat configuration for every subcommand. Each key has a documented
// default; unknown keys and out-of-range values are rejected before any
// computation starts.
struct RunConfig {
  std::string variant = "grpo";    // grpo | gspo | tgpo_grpo | tgpo_gspo
  int group_size = 4;              // |G|, samples per instance
  int batch_size = 8;              // |B|, instances per step
  double lambda = 0.1;             // format-reward weight
  double beta = 1e-4;              // KL coefficient
  double lr = 1e-3;                // constant learning rate
  double weight_decay = 0.01;      // decoupled weight decay
  double temperature = 1.0;        // rollout sampling temperature
  double eps = 1e-8;               // normalization denominator guard
  double clip = 0.0;               // optional ratio clip half-width, 0 = off
  int max_steps = 500;
  int eval_every = 25;             // held-out eval cadence (also at the final step)
  std::uint64_t seed = 1;          // master seed for all substreams
  std::string corpus;              // training corpus path; default <out_dir>/train.jsonl
  std::string eval_corpus;         // eval corpus path; default <out_dir>/eval.jsonl
  int alphabet = 6;                // S, frame symbol alphabet size
  int video_len = 8;               // k, frames per generated clip
  int l_max = 16;                  // response length cap
  int fillers = 4;                 // filler tokens in the vocabulary
  double init_format_bias = 5.0;   // structural prior strength of the base policy
  int corpus_size = 512;           // gen-corpus: training instances
  int eval_size = 200;             // gen-corpus: eval instances
  double ratio = 0.5;              // gen-corpus: temporal fraction
  std::string out_dir = "out";
};

namespace detail {

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline double parse_double(const std::string& key, const std::string& s) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': expected a number, got '" + s + "'");
  }
}

inline long long parse_int(const std::string& key, const std::string& s) {
  try {
    std::size_t pos = 0;
    const long long v = std::stoll(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': expected an integer, got '" + s + "'");
  }
}

}  // namespace detail

struct ConfigKey {
  std::string name;
  std::string help;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

inline const std::vector<ConfigKey>& config_keys() {
  using detail::format_double;
  using detail::parse_double;
  using detail::parse_int;
  static const std::vector<ConfigKey> keys = {
      {"variant", "advantage estimator: grpo, gspo, tgpo_grpo, tgpo_gspo",
       [](const RunConfig& c) { return c.variant; },
       [](RunConfig& c, const std::string& v) { c.variant = v; }},
      {"group_size", "samples per instance |G|",
       [](const RunConfig& c) { return std::to_string(c.group_size); },
       [](RunConfig& c, const std::string& v) { c.group_size = static_cast<int>(parse_int("group_size", v)); }},
      {"batch_size", "instances per step |B|",
       [](const RunConfig& c) { return std::to_string(c.batch_size); },
       [](RunConfig& c, const std::string& v) { c.batch_size = static_cast<int>(parse_int("batch_size", v)); }},
      {"lambda", "format-reward weight",
       [](const RunConfig& c) { return format_double(c.lambda); },
       [](RunConfig& c, const std::string& v) { c.lambda = parse_double("lambda", v); }},
      {"beta", "KL regularization coefficient",
       [](const RunConfig& c) { return format_double(c.beta); },
       [](RunConfig& c, const std::string& v) { c.beta = parse_double("beta", v); }},
      {"lr", "learning rate (constant schedule)",
       [](const RunConfig& c) { return format_double(c.lr); },
       [](RunConfig& c, const std::string& v) { c.lr = parse_double("lr", v); }},
      {"weight_decay", "decoupled weight decay",
       [](const RunConfig& c) { return format_double(c.weight_decay); },
       [](RunConfig& c, const std::string& v) { c.weight_decay = parse_double("weight_decay", v); }},
      {"temperature", "rollout sampling temperature",
       [](const RunConfig& c) { return format_double(c.temperature); },
       [](RunConfig& c, const std::string& v) { c.temperature = parse_double("temperature", v); }},
      {"eps", "normalization epsilon",
       [](const RunConfig& c) { return format_double(c.eps); },
       [](RunConfig& c, const std::string& v) { c.eps = parse_double("eps", v); }},
      {"clip", "optional importance-ratio clip half-width (0 disables)",
       [](const RunConfig& c) { return format_double(c.clip); },
       [](RunConfig& c, const std::string& v) { c.clip = parse_double("clip", v); }},
      {"max_steps", "training steps",
       [](const RunConfig& c) { return std::to_string(c.max_steps); },
       [](RunConfig& c, const std::string& v) { c.max_steps = static_cast<int>(parse_int("max_steps", v)); }},
      {"eval_every", "evaluate the held-out corpus every N steps",
       [](const RunConfig& c) { return std::to_string(c.eval_every); },
       [](RunConfig& c, const std::string& v) { c.eval_every = static_cast<int>(parse_int("eval_every", v)); }},
      {"seed", "master seed; all substreams derive from it",
       [](const RunConfig& c) { return std::to_string(c.seed); },
       [](RunConfig& c, const std::string& v) { c.seed = static_cast<std::uint64_t>(parse_int("seed", v)); }},
      {"corpus", "training corpus path (default <out_dir>/train.jsonl)",
       [](const RunConfig& c) { return c.corpus; },
       [](RunConfig& c, const std::string& v) { c.corpus = v; }},
      {"eval_corpus", "eval corpus path (default <out_dir>/eval.jsonl)",
       [](const RunConfig& c) { return c.eval_corpus; },
       [](RunConfig& c, const std::string& v) { c.eval_corpus = v; }},
      {"alphabet", "frame symbol alphabet size S",
       [](const RunConfig& c) { return std::to_string(c.alphabet); },
       [](RunConfig& c, const std::string& v) { c.alphabet = static_cast<int>(parse_int("alphabet", v)); }},
      {"video_len", "frames per clip k",
       [](const RunConfig& c) { return std::to_string(c.video_len); },
       [](RunConfig& c, const std::string& v) { c.video_len = static_cast<int>(parse_int("video_len", v)); }},
      {"l_max", "response token limit",
       [](const RunConfig& c) { return std::to_string(c.l_max); },
       [](RunConfig& c, const std::string& v) { c.l_max = static_cast<int>(parse_int("l_max", v)); }},
      {"fillers", "filler tokens in the vocabulary",
       [](const RunConfig& c) { return std::to_string(c.fillers); },
       [](RunConfig& c, const std::string& v) { c.fillers = static_cast<int>(parse_int("fillers", v)); }},
      {"init_format_bias", "structural prior strength of the initial policy",
       [](const RunConfig& c) { return format_double(c.init_format_bias); },
       [](RunConfig& c, const std::string& v) { c.init_format_bias = parse_double("init_format_bias", v); }},
      {"corpus_size", "gen-corpus: number of training instances",
       [](const RunConfig& c) { return std::to_string(c.corpus_size); },
       [](RunConfig& c, const std::string& v) { c.corpus_size = static_cast<int>(parse_int("corpus_size", v)); }},
      {"eval_size", "gen-corpus: number of eval instances",
       [](const RunConfig& c) { return std::to_string(c.eval_size); },
       [](RunConfig& c, const std::string& v) { c.eval_size = static_cast<int>(parse_int("eval_size", v)); }},
      {"ratio", "gen-corpus: fraction of temporal instances",
       [](const RunConfig& c) { return format_double(c.ratio); },
       [](RunConfig& c, const std::string& v) { c.ratio = parse_double("ratio", v); }},
      {"out_dir", "directory for all file outputs",
       [](const RunConfig& c) { return c.out_dir; },
       [](RunConfig& c, const std::string& v) { c.out_dir = v; }},
  };
  return keys;
}

inline const ConfigKey* find_config_key(const std::string& name) {
  for (const ConfigKey& k : config_keys()) {
    if (k.name == name) return &k;
  }
  return nullptr;
}

inline void set_config_value(RunConfig& config, const std::string& key, const std::string& value) {
  const ConfigKey* k = find_config_key(key);
  if (k == nullptr) throw ConfigError("unknown config key: " + key);
  k->set(config, value);
}

inline void validate_config(const RunConfig& config) {
  variant_from_name(config.variant);  // throws on unknown
  if (config.group_size < 2) throw ConfigError("group_size: must be >= 2");
  if (config.batch_size < 1) throw ConfigError("batch_size: must be >= 1");
  if (config.lambda < 0.0) throw ConfigError("lambda: must be >= 0");
  if (config.beta < 0.0) throw ConfigError("beta: must be >= 0");
  if (!(config.lr > 0.0)) throw ConfigError("lr: must be > 0");
  if (config.weight_decay < 0.0) throw ConfigError("weight_decay: must be >= 0");
  if (!(config.temperature > 0.0)) throw ConfigError("temperature: must be > 0");
  if (!(config.eps > 0.0)) throw ConfigError("eps: must be > 0");
  if (config.clip < 0.0) throw ConfigError("clip: must be >= 0");
  if (config.max_steps < 0) throw ConfigError("max_steps: must be >= 0");
  if (config.eval_every < 1) throw ConfigError("eval_every: must be >= 1");
  if (config.alphabet < 3) throw ConfigError("alphabet: must be >= 3");
  if (config.video_len < 1) throw ConfigError("video_len: must be >= 1");
  if (config.l_max < 6) throw ConfigError("l_max: must be >= 6 (room for tags and an answer)");
  if (config.fillers < 1) throw ConfigError("fillers: must be >= 1");
  if (config.corpus_size < 1) throw ConfigError("corpus_size: must be >= 1");
  if (config.eval_size < 1) throw ConfigError("eval_size: must be >= 1");
  if (config.ratio < 0.0 || config.ratio > 1.0) throw ConfigError("ratio: must be in [0, 1]");
  if (config.out_dir.empty()) throw ConfigError("out_dir: must be non-empty");
}

inline std::string serialize_config(const RunConfig& config) {
  std::ostringstream os;
  for (const ConfigKey& k : config_keys()) os << k.name << " = " << k.get(config) << "\n";
  return os.str();
}

// Flat "key = value" lines; '#' starts a comment; blank lines ignored.
inline RunConfig parse_config_text(const std::string& text, RunConfig base = RunConfig{}) {
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    }
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      const auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
    };
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) {
      throw ConfigError("config line " + std::to_string(lineno) + ": empty key");
    }
    set_config_value(base, key, value);
  }
  return base;
}

inline RunConfig load_config_file(const std::string& path, RunConfig base = RunConfig{}) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config_text(text.str(), base);
}

inline std::string resolved_corpus_path(const RunConfig& c) {
  return c.corpus.empty() ? c.out_dir + "/train.jsonl" : c.corpus;
}

inline std::string resolved_eval_corpus_path(const RunConfig& c) {
  return c.eval_corpus.empty() ? c.out_dir + "/eval.jsonl" : c.eval_corpus;
}

}  // namespace tgpo
