#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string_view>
#include <utility>

namespace contextfed {

/// splitmix64 finalizer; the mixing step used for all seed derivation.
std::uint64_t mix64(std::uint64_t x);

/// Stable 64-bit FNV-1a over bytes. Independent of the standard library's
/// std::hash so hashed features are identical across platforms.
std::uint64_t fnv1a64(std::string_view bytes);

/// Derives a child seed from a parent seed and up to two integer coordinates.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0);

/// Thin wrapper around mt19937_64 with portable distributions. The standard
/// distributions are implementation-defined, these are not. The engine is
/// seeded on first draw, so generators that never draw cost nothing.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed) {}

  std::uint64_t next() { return engine()(); }

  /// Uniform in [0, 1) with 53 bits of resolution.
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n). n must be positive.
  std::uint64_t below(std::uint64_t n);

  /// Standard normal via Box-Muller (one value per call, no caching).
  double normal();
  double normal(double mean, double sd) { return mean + sd * normal(); }

  bool bernoulli(double p) { return uniform() < p; }

  template <typename T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::size_t j = below(i);
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  std::mt19937_64& engine() {
    if (!engine_) engine_.emplace(seed_);
    return *engine_;
  }

  std::uint64_t seed_;
  std::optional<std::mt19937_64> engine_;
};

}  // namespace contextfed
