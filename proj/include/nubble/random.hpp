#pragma once

#include <cstdint>
#include <initializer_list>
#include <optional>
#include <random>
#include <vector>

#include "nubble/grid.hpp"

namespace nubble {

/// SplitMix64 finalizer (Steele, Lea & Flood), used for seed derivation.
std::uint64_t splitmix64(std::uint64_t x);

/// Derives an independent child seed from a parent seed and an index path:
///   h = seed;  for x in path: h = splitmix64(h + 0x9E3779B97F4A7C15 * (x + 1))
/// The result depends only on its arguments, never on call order.
std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> path);

/// Seeded random source with a platform-independent output stream.
///
/// The engine is std::mt19937_64, whose sequence is fixed by the C++
/// standard. The std::*_distribution adaptors are implementation-defined, so
/// bounded integers, uniforms and normals are derived here instead.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  /// Uniform integer in [0, bound) by rejection; bound must be > 0.
  std::uint64_t below(std::uint64_t bound);

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform01() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  /// Standard normal via the Marsaglia polar method. Bit-stable wherever
  /// std::log is; integer-only paths (masks, subsets) are stable everywhere.
  double normal();

 private:
  std::mt19937_64 engine_;
  std::optional<double> spare_;
};

/// k distinct indices from [0, n), uniform without replacement (partial
/// Fisher-Yates), returned in ascending order.
std::vector<Index> sample_indices(Rng& rng, Index n, Index k);

}  // namespace nubble
