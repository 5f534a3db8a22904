#include "nubble/random.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace nubble {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> path) {
  std::uint64_t h = seed;
  for (auto x : path) h = splitmix64(h + 0x9E3779B97F4A7C15ULL * (x + 1));
  return h;
}

std::uint64_t Rng::below(std::uint64_t bound) {
  if (bound == 0) throw ArgumentError("Rng::below: bound must be positive");
  // Largest multiple of bound that fits; values at or above it are rejected.
  const std::uint64_t limit = bound * (~std::uint64_t{0} / bound);
  std::uint64_t v;
  do {
    v = next();
  } while (v >= limit);
  return v % bound;
}

double Rng::normal() {
  if (spare_) {
    const double v = *spare_;
    spare_.reset();
    return v;
  }
  double u, v, s;
  do {
    u = 2.0 * uniform01() - 1.0;
    v = 2.0 * uniform01() - 1.0;
    s = u * u + v * v;
  } while (s >= 1.0 || s == 0.0);
  const double factor = std::sqrt(-2.0 * std::log(s) / s);
  spare_ = v * factor;
  return u * factor;
}

std::vector<Index> sample_indices(Rng& rng, Index n, Index k) {
  if (k < 0 || k > n) throw ArgumentError("sample_indices: need 0 <= k <= n");
  std::vector<Index> pool(static_cast<std::size_t>(n));
  std::iota(pool.begin(), pool.end(), Index{0});
  for (Index i = 0; i < k; ++i) {
    const auto j = i + static_cast<Index>(rng.below(static_cast<std::uint64_t>(n - i)));
    std::swap(pool[static_cast<std::size_t>(i)], pool[static_cast<std::size_t>(j)]);
  }
  pool.resize(static_cast<std::size_t>(k));
  std::sort(pool.begin(), pool.end());
  return pool;
}

}  // namespace nubble
