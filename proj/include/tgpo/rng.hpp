#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <vector>

namespace tgpo {

// Seed derivation for reproducible substreams.
//
// All randomness in a run flows from one master seed. A substream seed is
// derived as a splitmix64 fold over (master, stream id, path...), so any
// (step, instance, sample) cell can be regenerated without replaying the
// stream that preceded it. The fold is fixed; changing it invalidates
// recorded golden values.
constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

enum class Stream : std::uint64_t {
  Corpus = 1,
  Batch = 2,
  Sample = 3,
  Shuffle = 4,
  Eval = 5,
};

inline std::uint64_t derive_seed(std::uint64_t master,
                                 std::initializer_list<std::uint64_t> path) {
  std::uint64_t s = splitmix64(master);
  for (std::uint64_t id : path) {
    s = splitmix64(s ^ (id * 0x9e3779b97f4a7c15ULL + 0x2545f4914f6cdd1dULL));
  }
  return s;
}

inline std::uint64_t derive_seed(std::uint64_t master, Stream stream,
                                 std::initializer_list<std::uint64_t> path) {
  std::uint64_t s = derive_seed(master, {static_cast<std::uint64_t>(stream)});
  for (std::uint64_t id : path) {
    s = splitmix64(s ^ (id * 0x9e3779b97f4a7c15ULL + 0x2545f4914f6cdd1dULL));
  }
  return s;
}

// mt19937_64 with explicit, standard-specified draw transformations. The
// std::*_distribution adapters are implementation-defined, so uniform(),
// bounded() and shuffle() are done by hand to keep runs bit-reproducible.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t next_u64() { return gen_(); }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() {
    return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
  }

  // Uniform in [0, n), unbiased via rejection. n must be > 0.
  std::uint64_t bounded(std::uint64_t n) {
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t r;
    do {
      r = gen_();
    } while (r >= limit);
    return r % n;
  }

  int uniform_int(int lo, int hi) {  // inclusive range [lo, hi]
    return lo + static_cast<int>(bounded(static_cast<std::uint64_t>(hi - lo + 1)));
  }

  bool coin() { return (gen_() >> 63) != 0; }

  // Fisher-Yates, uniform over permutations.
  template <class T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(bounded(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  template <class T>
  const T& pick(const std::vector<T>& v) {
    return v[static_cast<std::size_t>(bounded(v.size()))];
  }

 private:
  std::mt19937_64 gen_;
};

}  // namespace tgpo
