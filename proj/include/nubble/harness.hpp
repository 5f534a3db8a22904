#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "nubble/drop.hpp"
#include "nubble/grid.hpp"
#include "nubble/matching.hpp"
#include "nubble/parallel.hpp"
#include "nubble/report.hpp"

namespace nubble {

/// Parameters of a two-cluster synthetic reference/target pair.
struct SynthSpec {
  Index height = 8;
  Index width = 8;
  Index channels = 64;
  double fg_fraction = 0.3;
  double margin = 0.5;        // prototypes satisfy cos(u_fg, u_bg) = 1 - margin
  double noise_sigma = 0.0;   // per-channel Gaussian noise before renormalization
  std::optional<Index> noise_channel;  // the injected "nubble" channel
  double dominant_value = 4.0;         // value written into noise_channel
  double nubble_fraction = 0.05;       // share of patches receiving it (>= 1 fg and 1 bg)
  std::uint64_t seed = 0;

  void validate() const;
};

struct Instance {
  FeatureGrid ref;
  BinaryMask fg;
  FeatureGrid tgt;
  BinaryMask tgt_gt;
};

/// Deterministic in spec.seed. Prototypes come from derive_seed(seed, {0}),
/// the reference grid from {1}, the target grid from {2}. Each grid gets
/// exactly round(fg_fraction * H * W) foreground patches (clamped so both
/// classes exist); every patch is its prototype plus N(0, sigma^2) noise per
/// channel, optionally overwritten at noise_channel, then L2-normalized.
/// Prototypes are zero on noise_channel.
Instance synth_clusters(const SynthSpec& spec);

enum class Metric { ProxyIou, MismatchRate, PromptHitRate };

std::string_view to_string(Metric metric);
Metric metric_from_string(std::string_view name);

struct SweepOptions {
  Metric metric = Metric::ProxyIou;
  double tau = 0.5;
  Aggregator aggregator = Aggregator::Max;
  Index prompt_k = 3;            // prompt-hit-rate only
  Index prompt_separation = 1;   // prompt-hit-rate only
  bool record_cells = false;
};

/// One (ratio, trial, instance) evaluation, kept when record_cells is set.
struct SweepCell {
  std::size_t ratio_index = 0;
  Index trial = 0;
  std::size_t instance = 0;
  DropMask mask;
  double metric = 0.0;
};

struct SweepRow {
  double ratio = 0.0;
  Index trials = 0;
  double mean = 0.0;      // mean over trials of the per-trial batch mean
  double std = 0.0;       // population std over trials of the batch mean
  double baseline = 0.0;  // batch mean with no drop
};

struct SweepResult {
  Metric metric = Metric::ProxyIou;
  std::vector<SweepRow> rows;
  std::vector<SweepCell> cells;
};

struct CurveRow {
  Index n_instances = 0;
  double mean_improvement = 0.0;
};

struct CurveResult {
  Metric metric = Metric::ProxyIou;
  std::vector<CurveRow> rows;
};

/// Metric of one instance with an optional drop applied to both grids.
double evaluate_metric(const Instance& inst, const std::optional<DropMask>& drop,
                       const SweepOptions& options);

/// Seed of the drop mask for one sweep cell:
/// derive_seed(seed, {ratio_index, trial, instance}).
std::uint64_t cell_seed(std::uint64_t seed, std::size_t ratio_index, Index trial,
                        std::size_t instance);

/// For each ratio and trial, samples a fresh mask per instance and evaluates
/// the metric. Cells run in parallel; aggregation is in (ratio, trial,
/// instance) order, so results do not depend on the thread count.
SweepResult run_drop_sweep(const std::vector<Instance>& instances,
                           const std::vector<double>& ratios, Index trials, std::uint64_t seed,
                           const SweepOptions& options = {}, Exec exec = {});

/// improvement(s) = mean over trials of metric(s, drop) - metric(s); row n is
/// the mean of the first n improvements. Masks use ratio index 0 in cell_seed.
CurveResult run_cumulative_curve(const std::vector<Instance>& instances, double ratio,
                                 Index trials, std::uint64_t seed,
                                 const SweepOptions& options = {}, Exec exec = {});

std::string sweep_csv(const SweepResult& result, const SweepOptions& options);
std::string curve_csv(const CurveResult& result, const SweepOptions& options);
Json to_json(const SweepResult& result);
Json to_json(const CurveResult& result);

/// Reads a manifest {"instances": [{"ref", "fg", "tgt", "tgt_gt"}, ...]};
/// relative paths resolve against the manifest's directory.
std::vector<Instance> load_manifest(const std::filesystem::path& path);

}  // namespace nubble
