#pragma once

#include <optional>
#include <string_view>
#include <vector>

#include "nubble/drop.hpp"
#include "nubble/grid.hpp"
#include "nubble/kernel.hpp"
#include "nubble/parallel.hpp"
#include "nubble/report.hpp"

namespace nubble {

/// Per-target-patch similarity, row-major over the target grid.
struct SimilarityMap {
  Index height = 0;
  Index width = 0;
  Eigen::VectorXd scores;

  double at(Coord c) const { return scores[c.row * width + c.col]; }
};

struct BestMatch {
  Coord coord;        // in the reference grid
  Index linear = 0;   // row-major reference index
  double score = 0.0;
  friend bool operator==(const BestMatch&, const BestMatch&) = default;
};

struct BestMatchMap {
  Index height = 0;  // target grid
  Index width = 0;
  std::vector<BestMatch> matches;
};

struct PromptPoint {
  Index row = 0;
  Index col = 0;
  double score = 0.0;
  friend bool operator==(const PromptPoint&, const PromptPoint&) = default;
};

struct Box {
  Index row_min = 0;
  Index col_min = 0;
  Index row_max = 0;
  Index col_max = 0;
  friend bool operator==(const Box&, const Box&) = default;
};

struct PromptSet {
  std::vector<PromptPoint> points;
  std::optional<Box> box;
};

enum class Aggregator { Max, Mean };

std::string_view to_string(Aggregator agg);
Aggregator aggregator_from_string(std::string_view name);

/// For every target patch, the reference patch of highest cosine similarity.
/// `drop` is applied to both grids first. Ties go to the lowest reference
/// linear index. With `exclude_self`, tgt and ref must be the same grid and
/// no patch may match itself.
BestMatchMap best_match_map(const FeatureGrid& tgt, const FeatureGrid& ref,
                            const std::optional<DropMask>& drop = std::nullopt,
                            bool exclude_self = false, Exec exec = {});

/// score(t) = max or mean over foreground reference patches r of cos(t, r).
SimilarityMap foreground_similarity_map(const FeatureGrid& ref, const BinaryMask& fg,
                                        const FeatureGrid& tgt, Aggregator agg = Aggregator::Max,
                                        const std::optional<DropMask>& drop = std::nullopt,
                                        Exec exec = {});

/// Greedy peak picking: highest score first (ties to lower linear index),
/// skipping patches closer than `min_separation` (Chebyshev) to an accepted
/// point, up to `k` points. The box bounds every patch scoring >= tau.
PromptSet extract_prompts(const SimilarityMap& map, Index k, Index min_separation, double tau);

/// Threshold segmentation: bit = score >= tau. Stand-in for a promptable
/// segmenter when scoring matches.
BinaryMask proxy_segment(const SimilarityMap& map, double tau);

/// |pred & gt| / |pred | gt|, and 1 when both are empty.
double iou(const BinaryMask& pred, const BinaryMask& gt);

Json to_json(const SimilarityMap& map);
Json to_json(const BestMatchMap& map);
Json to_json(const PromptSet& prompts);

}  // namespace nubble
