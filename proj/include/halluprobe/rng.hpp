#pragma once

#include <cstdint>
#include <numeric>
#include <random>
#include <utility>
#include <vector>

#include "halluprobe/errors.hpp"

namespace halluprobe {

/// Deterministic random source used by every sampling step in the toolkit.
///
/// Wraps std::mt19937_64 (whose output sequence is fixed by the standard)
/// and draws bounded integers by rejection sampling instead of
/// std::uniform_int_distribution, whose mapping is implementation-defined.
/// Identical seeds therefore reproduce identical samples on any platform.
class SeededRng {
 public:
  explicit SeededRng(std::uint64_t seed) : seed_(seed), engine_(mix(seed)) {}

  std::uint64_t seed() const { return seed_; }

  std::uint64_t next() { return engine_(); }

  /// Uniform integer in [0, bound). bound must be nonzero.
  std::uint64_t below(std::uint64_t bound) {
    if (bound == 0) throw ConfigError("SeededRng::below: bound must be > 0");
    if (bound == 1) return 0;
    // Reject the low non-multiple-of-bound range so the modulo is unbiased.
    const std::uint64_t min = (0 - bound) % bound;
    std::uint64_t r = next();
    while (r < min) r = next();
    return r % bound;
  }

  /// Derive an independent stream, e.g. one per model row or per stage.
  SeededRng fork(std::uint64_t stream) const {
    return SeededRng(mix(seed_ ^ mix(stream + 0x9e3779b97f4a7c15ull)));
  }

  /// In-place Fisher-Yates shuffle.
  template <typename T>
  void shuffle(std::vector<T>& values) {
    for (std::size_t i = values.size(); i > 1; --i) {
      std::swap(values[i - 1], values[below(i)]);
    }
  }

  /// k distinct indices drawn uniformly from [0, n), in draw order.
  std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k) {
    if (k > n) throw ConfigError("sample_without_replacement: k exceeds population size");
    std::vector<std::size_t> pool(n);
    std::iota(pool.begin(), pool.end(), std::size_t{0});
    for (std::size_t i = 0; i < k; ++i) {
      std::swap(pool[i], pool[i + below(n - i)]);
    }
    pool.resize(k);
    return pool;
  }

 private:
  // splitmix64 finalizer; spreads small seeds before feeding the engine.
  static std::uint64_t mix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
  }

  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

}  // namespace halluprobe
