#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "nubble/grid.hpp"
#include "nubble/parallel.hpp"
#include "nubble/report.hpp"

namespace nubble {

/// Set of zeroed channel indices, shared by the reference and target grids of
/// one matching call.
struct DropMask {
  Index total_channels = 0;
  std::vector<Index> dropped;          // ascending, unique
  std::optional<std::uint64_t> seed;   // absent for deterministic masks
  double ratio = 0.0;

  bool empty() const { return dropped.empty(); }
  bool contains(Index channel) const;

  /// Throws ArgumentError unless indices are sorted, unique, in range and
  /// leave at least one channel.
  void validate() const;
};

/// round(ratio * n) with ties to even.
Index drop_count(Index n, double ratio);

/// Uniform sample of drop_count(n, ratio) channels without replacement,
/// seeded through Rng (mt19937_64), so equal (n, ratio, seed) give equal
/// masks on every platform.
DropMask sample_drop_mask(Index n, double ratio, std::uint64_t seed);

/// Deterministic mask over explicit channels; ratio is recorded as |dropped| / n.
DropMask make_drop_mask(Index n, std::vector<Index> channels);

/// Copy of `grid` with every dropped channel zeroed in every patch. Vectors
/// are not renormalized; the normalized flag is cleared unless nothing was dropped.
FeatureGrid apply_drop(const FeatureGrid& grid, const DropMask& mask);

/// Zeroes, per patch, the `per_patch` channels of largest |value| (ties to
/// the lower channel index).
FeatureGrid trim_extremes(const FeatureGrid& grid, Index per_patch, Exec exec = {});

struct PruneStep {
  Index dropped_so_far = 0;
  Index mismatch_count = 0;
  friend bool operator==(const PruneStep&, const PruneStep&) = default;
};

struct PruneResult {
  DropMask mask;
  std::vector<PruneStep> error_history;  // baseline entry first; budget + 1 entries
};

inline constexpr Index kMaxPrunePatches = 4096;

/// Greedy forward channel selection against foreground mismatches.
///
/// Each foreground patch competes over the other foreground patches plus its
/// `k_bg` most similar background patches (baseline cosine, ties to lower
/// index). Every step tries each remaining channel, keeps the one leaving the
/// fewest foreground patches best-matched to background (ties to lower
/// channel), and records the count. Runs all `budget` steps even once the
/// count reaches zero.
PruneResult greedy_channel_prune(const FeatureGrid& ref, const BinaryMask& fg, Index budget,
                                 Index k_bg, Exec exec = {});

Json to_json(const DropMask& mask);
DropMask drop_mask_from_json(const Json& doc);
Json to_json(const PruneResult& result);

}  // namespace nubble
