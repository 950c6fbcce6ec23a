#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "tgpo/rng.hpp"

namespace tgpo {

// Synthetic multiple-choice video QA over symbolic frames. Instances are
// either order-dependent (the answer changes under some frame permutation)
// or order-invariant (the answer survives every permutation).

struct Frame {
  int symbol = 0;
};

struct Video {
  std::vector<Frame> frames;

  std::size_t size() const { return frames.size(); }
};

enum class TaskKind { Temporal, Spatial };

enum class QuestionKind { LastSymbol = 0, Presence = 1, Before = 2 };

// Question ids encode both the template and, for before-questions, the two
// queried symbols: 0 = "last symbol shown", 1 = "which symbol appears",
// 10000 + 100*x + y = "did x appear before y". The corpus record format has
// no separate parameter field, so the id carries them.
struct Question {
  QuestionKind kind;
  int x = -1;
  int y = -1;
};

constexpr int kBeforeIdBase = 10000;

inline int question_id_last() { return 0; }
inline int question_id_presence() { return 1; }
inline int question_id_before(int x, int y) { return kBeforeIdBase + 100 * x + y; }

inline Question unpack_question(int question_id) {
  if (question_id == 0) return {QuestionKind::LastSymbol};
  if (question_id == 1) return {QuestionKind::Presence};
  if (question_id >= kBeforeIdBase) {
    const int packed = question_id - kBeforeIdBase;
    const int x = packed / 100;
    const int y = packed % 100;
    if (x < 100 && y < 100 && x != y) return {QuestionKind::Before, x, y};
  }
  throw std::invalid_argument("unknown question_id: " + std::to_string(question_id));
}

// An option is either a symbol or a yes/no answer, bound per instance to a
// label A..D by its position in the option list.
struct OptionValue {
  bool is_symbol = true;
  int symbol = 0;
  bool yes = false;

  friend bool operator==(const OptionValue& a, const OptionValue& b) {
    if (a.is_symbol != b.is_symbol) return false;
    return a.is_symbol ? a.symbol == b.symbol : a.yes == b.yes;
  }
};

inline OptionValue symbol_option(int symbol) { return {true, symbol, false}; }
inline OptionValue polar_option(bool yes) { return {false, 0, yes}; }

inline std::string option_value_string(const OptionValue& v) {
  return v.is_symbol ? std::to_string(v.symbol) : (v.yes ? "yes" : "no");
}

inline OptionValue option_value_from_string(const std::string& s) {
  if (s == "yes") return polar_option(true);
  if (s == "no") return polar_option(false);
  std::size_t pos = 0;
  const int sym = std::stoi(s, &pos);
  if (pos != s.size() || sym < 0) {
    throw std::invalid_argument("bad option value: " + s);
  }
  return symbol_option(sym);
}

constexpr int kMaxOptions = 4;

inline std::string option_label(int index) {
  static const char* labels[kMaxOptions] = {"A", "B", "C", "D"};
  if (index < 0 || index >= kMaxOptions) throw std::invalid_argument("option label out of range");
  return labels[index];
}

inline int option_index_from_label(const std::string& label) {
  if (label.size() == 1 && label[0] >= 'A' && label[0] <= 'D') return label[0] - 'A';
  throw std::invalid_argument("bad option label: " + label);
}

struct TaskInstance {
  std::int64_t id = 0;
  TaskKind kind = TaskKind::Temporal;
  Video video;
  int question_id = 0;
  std::vector<OptionValue> options;  // 2..4, pairwise distinct
  int gold = 0;                      // index into options
};

struct EnvSpec {
  int alphabet = 6;   // S: symbols are in [0, alphabet)
  int video_len = 8;  // k: frames per clip
};

inline void validate_env_spec(const EnvSpec& spec) {
  if (spec.alphabet < 3) throw std::invalid_argument("EnvSpec: alphabet must be >= 3");
  if (spec.video_len < 1) throw std::invalid_argument("EnvSpec: video_len must be >= 1");
}

namespace detail {

inline int find_option(const std::vector<OptionValue>& options, const OptionValue& v) {
  for (std::size_t i = 0; i < options.size(); ++i) {
    if (options[i] == v) return static_cast<int>(i);
  }
  return -1;
}

inline bool appears_before(const Video& video, int x, int y) {
  // True iff some occurrence of x precedes some occurrence of y.
  bool seen_x = false;
  for (const Frame& f : video.frames) {
    if (f.symbol == y && seen_x) return true;
    if (f.symbol == x) seen_x = true;
  }
  return false;
}

}  // namespace detail

// Exact answer for the instance's question over its current frame order.
// Returns the option index, or -1 when no option matches the true answer
// (possible only for hand-built or permuted instances).
inline int oracle_answer(const TaskInstance& instance) {
  const Question q = unpack_question(instance.question_id);
  if (instance.video.frames.empty()) throw std::invalid_argument("oracle_answer: empty video");
  switch (q.kind) {
    case QuestionKind::LastSymbol:
      return detail::find_option(instance.options,
                                 symbol_option(instance.video.frames.back().symbol));
    case QuestionKind::Before:
      return detail::find_option(instance.options,
                                 polar_option(detail::appears_before(instance.video, q.x, q.y)));
    case QuestionKind::Presence:
      for (std::size_t i = 0; i < instance.options.size(); ++i) {
        const OptionValue& v = instance.options[i];
        if (!v.is_symbol) continue;
        for (const Frame& f : instance.video.frames) {
          if (f.symbol == v.symbol) return static_cast<int>(i);
        }
      }
      return -1;
  }
  return -1;
}

inline Video permuted_video(const Video& video, std::span<const int> perm) {
  Video out;
  out.frames.resize(video.frames.size());
  for (std::size_t i = 0; i < perm.size(); ++i) out.frames[i] = video.frames[perm[i]];
  return out;
}

// True iff some permutation of the frames changes the oracle answer.
// Exhaustive for videos up to 5 frames, otherwise `probes` random draws.
inline bool order_sensitivity_probe(const TaskInstance& instance, Rng& rng, int probes = 20) {
  const int k = static_cast<int>(instance.video.frames.size());
  const int base = oracle_answer(instance);
  std::vector<int> perm(k);
  std::iota(perm.begin(), perm.end(), 0);
  TaskInstance probe = instance;
  if (k <= 5) {
    std::sort(perm.begin(), perm.end());
    do {
      probe.video = permuted_video(instance.video, perm);
      if (oracle_answer(probe) != base) return true;
    } while (std::next_permutation(perm.begin(), perm.end()));
    return false;
  }
  for (int p = 0; p < probes; ++p) {
    rng.shuffle(perm);
    probe.video = permuted_video(instance.video, perm);
    if (oracle_answer(probe) != base) return true;
  }
  return false;
}

namespace detail {

inline Video random_video(Rng& rng, const EnvSpec& spec) {
  Video v;
  v.frames.resize(static_cast<std::size_t>(spec.video_len));
  for (Frame& f : v.frames) f.symbol = static_cast<int>(rng.bounded(spec.alphabet));
  return v;
}

inline std::vector<int> symbols_present(const Video& video, int alphabet) {
  std::vector<bool> seen(static_cast<std::size_t>(alphabet), false);
  for (const Frame& f : video.frames) seen[static_cast<std::size_t>(f.symbol)] = true;
  std::vector<int> out;
  for (int s = 0; s < alphabet; ++s) {
    if (seen[static_cast<std::size_t>(s)]) out.push_back(s);
  }
  return out;
}

// Places the gold value plus distractors in a random order; returns the gold index.
inline int place_options(std::vector<OptionValue>& options, const OptionValue& gold,
                         std::vector<OptionValue> distractors, Rng& rng) {
  options.clear();
  options.push_back(gold);
  for (auto& d : distractors) options.push_back(d);
  rng.shuffle(options);
  return find_option(options, gold);
}

inline TaskInstance make_last_symbol_task(Rng& rng, const EnvSpec& spec) {
  for (;;) {
    TaskInstance inst;
    inst.kind = TaskKind::Temporal;
    inst.question_id = question_id_last();
    inst.video = random_video(rng, spec);
    const int last = inst.video.frames.back().symbol;
    int count_last = 0;
    for (const Frame& f : inst.video.frames) count_last += (f.symbol == last);
    // A majority symbol in last position makes order sensitivity rare under
    // random permutations; resample so probes stay reliable.
    if (2 * count_last > spec.video_len) continue;

    std::vector<int> present_others;
    std::vector<int> absent;
    for (int s = 0; s < spec.alphabet; ++s) {
      if (s == last) continue;
      bool found = false;
      for (const Frame& f : inst.video.frames) found = found || (f.symbol == s);
      (found ? present_others : absent).push_back(s);
    }
    rng.shuffle(present_others);
    rng.shuffle(absent);

    std::vector<OptionValue> distractors;
    if (!present_others.empty()) distractors.push_back(symbol_option(present_others[0]));
    for (int s : absent) {
      if (distractors.size() >= static_cast<std::size_t>(kMaxOptions - 1)) break;
      distractors.push_back(symbol_option(s));
    }
    for (std::size_t i = 1; i < present_others.size(); ++i) {
      if (distractors.size() >= static_cast<std::size_t>(kMaxOptions - 1)) break;
      distractors.push_back(symbol_option(present_others[i]));
    }
    if (distractors.empty()) continue;

    inst.gold = place_options(inst.options, symbol_option(last), std::move(distractors), rng);
    if (!order_sensitivity_probe(inst, rng)) continue;
    return inst;
  }
}

inline TaskInstance make_before_task(Rng& rng, const EnvSpec& spec) {
  for (;;) {
    TaskInstance inst;
    inst.kind = TaskKind::Temporal;

    // The two queried symbols occur exactly once each, so the yes/no answer
    // flips with probability ~1/2 under a uniform shuffle.
    const int x = static_cast<int>(rng.bounded(spec.alphabet));
    int y = static_cast<int>(rng.bounded(spec.alphabet - 1));
    if (y >= x) ++y;
    std::vector<int> fill;
    for (int s = 0; s < spec.alphabet; ++s) {
      if (s != x && s != y) fill.push_back(s);
    }
    inst.video.frames.resize(static_cast<std::size_t>(spec.video_len));
    for (Frame& f : inst.video.frames) {
      f.symbol = fill[static_cast<std::size_t>(rng.bounded(fill.size()))];
    }
    const int pos_x = static_cast<int>(rng.bounded(spec.video_len));
    int pos_y = static_cast<int>(rng.bounded(spec.video_len - 1));
    if (pos_y >= pos_x) ++pos_y;
    inst.video.frames[static_cast<std::size_t>(pos_x)].symbol = x;
    inst.video.frames[static_cast<std::size_t>(pos_y)].symbol = y;

    inst.question_id = question_id_before(x, y);
    const bool yes = pos_x < pos_y;
    inst.gold = place_options(inst.options, polar_option(yes), {polar_option(!yes)}, rng);
    if (!order_sensitivity_probe(inst, rng)) continue;
    return inst;
  }
}

}  // namespace detail

// Order-dependent instance: "last symbol shown" or "did x appear before y".
// Sensitivity to frame order is verified by permutation probes before the
// instance is accepted.
inline TaskInstance make_temporal_task(Rng& rng, const EnvSpec& spec) {
  validate_env_spec(spec);
  if (spec.video_len < 2) {
    throw std::invalid_argument("make_temporal_task: video_len must be >= 2");
  }
  return rng.coin() ? detail::make_last_symbol_task(rng, spec)
                    : detail::make_before_task(rng, spec);
}

// Order-invariant instance: "which symbol appears anywhere in the video".
// Exactly one option value is present in the clip, so the answer survives
// any permutation.
inline TaskInstance make_spatial_task(Rng& rng, const EnvSpec& spec) {
  validate_env_spec(spec);
  for (;;) {
    TaskInstance inst;
    inst.kind = TaskKind::Spatial;
    inst.question_id = question_id_presence();
    inst.video = detail::random_video(rng, spec);

    std::vector<int> present = detail::symbols_present(inst.video, spec.alphabet);
    std::vector<int> absent;
    for (int s = 0; s < spec.alphabet; ++s) {
      if (std::find(present.begin(), present.end(), s) == present.end()) absent.push_back(s);
    }
    if (absent.empty()) continue;

    const int gold_symbol = present[static_cast<std::size_t>(rng.bounded(present.size()))];
    rng.shuffle(absent);
    std::vector<OptionValue> distractors;
    for (int s : absent) {
      if (distractors.size() >= static_cast<std::size_t>(kMaxOptions - 1)) break;
      distractors.push_back(symbol_option(s));
    }
    inst.gold = detail::place_options(inst.options, symbol_option(gold_symbol), std::move(distractors), rng);
    return inst;
  }
}

// --- corpus record format -------------------------------------------------
//
// One instance per line, fields in fixed order:
//   {"id":0,"kind":"temporal","frames":[3,1],"question_id":0,
//    "options":["3","0"],"gold":"A"}
// Symbols are decimal; polar options are "yes"/"no"; gold is the label of
// the correct option.

inline std::string to_json_line(const TaskInstance& inst) {
  std::ostringstream os;
  os << "{\"id\":" << inst.id << ",\"kind\":\""
     << (inst.kind == TaskKind::Temporal ? "temporal" : "spatial") << "\",\"frames\":[";
  for (std::size_t i = 0; i < inst.video.frames.size(); ++i) {
    if (i > 0) os << ",";
    os << inst.video.frames[i].symbol;
  }
  os << "],\"question_id\":" << inst.question_id << ",\"options\":[";
  for (std::size_t i = 0; i < inst.options.size(); ++i) {
    if (i > 0) os << ",";
    os << "\"" << option_value_string(inst.options[i]) << "\"";
  }
  os << "],\"gold\":\"" << option_label(inst.gold) << "\"}";
  return os.str();
}

inline TaskInstance parse_json_line(const std::string& line) {
  const nlohmann::json j = nlohmann::json::parse(line);
  if (!j.is_object() || j.size() != 6) {
    throw std::invalid_argument("corpus record must have exactly the 6 schema fields");
  }
  TaskInstance inst;
  inst.id = j.at("id").get<std::int64_t>();
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "temporal") {
    inst.kind = TaskKind::Temporal;
  } else if (kind == "spatial") {
    inst.kind = TaskKind::Spatial;
  } else {
    throw std::invalid_argument("bad kind: " + kind);
  }
  for (const auto& f : j.at("frames")) {
    inst.video.frames.push_back({f.get<int>()});
  }
  if (inst.video.frames.empty()) throw std::invalid_argument("empty frames");
  inst.question_id = j.at("question_id").get<int>();
  unpack_question(inst.question_id);
  for (const auto& o : j.at("options")) {
    inst.options.push_back(option_value_from_string(o.get<std::string>()));
  }
  if (inst.options.size() < 2 || inst.options.size() > kMaxOptions) {
    throw std::invalid_argument("options must number 2..4");
  }
  inst.gold = option_index_from_label(j.at("gold").get<std::string>());
  if (inst.gold >= static_cast<int>(inst.options.size())) {
    throw std::invalid_argument("gold label out of range");
  }
  return inst;
}

inline void write_corpus(const std::string& path, std::span<const TaskInstance> instances) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  for (const TaskInstance& inst : instances) out << to_json_line(inst) << "\n";
}

inline std::vector<TaskInstance> read_corpus(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open corpus: " + path);
  std::vector<TaskInstance> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    out.push_back(parse_json_line(line));
  }
  return out;
}

}  // namespace tgpo
