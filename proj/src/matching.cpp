#include "nubble/matching.hpp"

#include <algorithm>
#include <numeric>

namespace nubble {
namespace {

FeatureGrid maybe_drop(const FeatureGrid& grid, const std::optional<DropMask>& drop) {
  return drop ? apply_drop(grid, *drop) : grid;
}

void require_same_channels(const FeatureGrid& a, const FeatureGrid& b, const char* what) {
  if (a.channels() != b.channels())
    throw DimensionError(std::string(what) + ": channel counts differ (" +
                         std::to_string(a.channels()) + " vs " + std::to_string(b.channels()) +
                         ")");
}

}  // namespace

std::string_view to_string(Aggregator agg) { return agg == Aggregator::Max ? "max" : "mean"; }

Aggregator aggregator_from_string(std::string_view name) {
  if (name == "max") return Aggregator::Max;
  if (name == "mean") return Aggregator::Mean;
  throw ArgumentError("unknown aggregator '" + std::string(name) + "' (expected max or mean)");
}

BestMatchMap best_match_map(const FeatureGrid& tgt, const FeatureGrid& ref,
                            const std::optional<DropMask>& drop, bool exclude_self, Exec exec) {
  require_same_channels(tgt, ref, "best_match_map");
  if (exclude_self) {
    if (tgt.height() != ref.height() || tgt.width() != ref.width() || tgt.values() != ref.values())
      throw ArgumentError("best_match_map: exclude_self requires tgt and ref to be the same grid");
    if (ref.patches() < 2)
      throw ArgumentError("best_match_map: exclude_self needs at least two patches");
  }
  const FeatureGrid t = maybe_drop(tgt, drop);
  const FeatureGrid r = maybe_drop(ref, drop);

  BestMatchMap out{tgt.height(), tgt.width(), std::vector<BestMatch>(tgt.patches())};
  for_each_cosine_chunk(t.values(), r.values(), exec,
                        [&](Index i0, Index i1, const RowMatrix<double>& block) {
                          for (Index i = i0; i < i1; ++i) {
                            Index best = -1;
                            double best_score = 0.0;
                            for (Index j = 0; j < block.cols(); ++j) {
                              if (exclude_self && j == i) continue;
                              const double s = block(i - i0, j);
                              if (best < 0 || s > best_score) {
                                best = j;
                                best_score = s;
                              }
                            }
                            out.matches[static_cast<std::size_t>(i)] = {ref.coord(best), best,
                                                                        best_score};
                          }
                        });
  return out;
}

SimilarityMap foreground_similarity_map(const FeatureGrid& ref, const BinaryMask& fg,
                                        const FeatureGrid& tgt, Aggregator agg,
                                        const std::optional<DropMask>& drop, Exec exec) {
  require_same_dims(fg, ref.height(), ref.width(), "foreground_similarity_map");
  require_same_channels(ref, tgt, "foreground_similarity_map");
  const Index fg_count = fg.count();
  if (fg_count == 0) throw ArgumentError("foreground_similarity_map: empty foreground mask");

  const FeatureGrid r = maybe_drop(ref, drop);
  const FeatureGrid t = maybe_drop(tgt, drop);
  RowMatrix<double> fg_rows(fg_count, r.channels());
  for (Index p = 0, k = 0; p < fg.size(); ++p)
    if (fg[p]) fg_rows.row(k++) = r.patch(p);

  SimilarityMap map{tgt.height(), tgt.width(), Eigen::VectorXd(tgt.patches())};
  for_each_cosine_chunk(t.values(), fg_rows, exec,
                        [&](Index i0, Index i1, const RowMatrix<double>& block) {
                          for (Index i = i0; i < i1; ++i) {
                            double acc = block(i - i0, 0);
                            for (Index j = 1; j < block.cols(); ++j) {
                              const double s = block(i - i0, j);
                              acc = agg == Aggregator::Max ? std::max(acc, s) : acc + s;
                            }
                            if (agg == Aggregator::Mean)
                              acc = std::clamp(acc / static_cast<double>(fg_count), -1.0, 1.0);
                            map.scores[i] = acc;
                          }
                        });
  return map;
}

PromptSet extract_prompts(const SimilarityMap& map, Index k, Index min_separation, double tau) {
  if (k < 1) throw ArgumentError("extract_prompts: k must be >= 1");
  if (min_separation < 0) throw ArgumentError("extract_prompts: min_separation must be >= 0");
  const Index n = map.scores.size();
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Index a, Index b) { return map.scores[a] > map.scores[b]; });

  PromptSet set;
  for (Index idx : order) {
    if (static_cast<Index>(set.points.size()) == k) break;
    const Index row = idx / map.width;
    const Index col = idx % map.width;
    const bool clear = std::all_of(set.points.begin(), set.points.end(), [&](const PromptPoint& p) {
      return std::max(std::abs(p.row - row), std::abs(p.col - col)) >= min_separation;
    });
    if (clear) set.points.push_back({row, col, map.scores[idx]});
  }

  for (Index idx = 0; idx < n; ++idx) {
    if (!(map.scores[idx] >= tau)) continue;
    const Index row = idx / map.width;
    const Index col = idx % map.width;
    if (!set.box) {
      set.box = Box{row, col, row, col};
    } else {
      set.box->row_min = std::min(set.box->row_min, row);
      set.box->col_min = std::min(set.box->col_min, col);
      set.box->row_max = std::max(set.box->row_max, row);
      set.box->col_max = std::max(set.box->col_max, col);
    }
  }
  return set;
}

BinaryMask proxy_segment(const SimilarityMap& map, double tau) {
  BinaryMask mask(map.height, map.width);
  mask.bits = map.scores.array() >= tau;
  return mask;
}

double iou(const BinaryMask& pred, const BinaryMask& gt) {
  require_same_dims(pred, gt.height, gt.width, "iou");
  const Index uni = (pred.bits || gt.bits).count();
  if (uni == 0) return 1.0;
  return static_cast<double>((pred.bits && gt.bits).count()) / static_cast<double>(uni);
}

Json to_json(const SimilarityMap& map) {
  return {{"height", map.height},
          {"width", map.width},
          {"scores", std::vector<double>(map.scores.begin(), map.scores.end())}};
}

Json to_json(const BestMatchMap& map) {
  Json matches = Json::array();
  for (const auto& m : map.matches)
    matches.push_back({{"row", m.coord.row}, {"col", m.coord.col}, {"score", m.score}});
  return {{"height", map.height}, {"width", map.width}, {"matches", matches}};
}

Json to_json(const PromptSet& prompts) {
  Json points = Json::array();
  for (const auto& p : prompts.points)
    points.push_back({{"row", p.row}, {"col", p.col}, {"score", p.score}});
  Json box = nullptr;
  if (prompts.box)
    box = {{"row_min", prompts.box->row_min},
           {"col_min", prompts.box->col_min},
           {"row_max", prompts.box->row_max},
           {"col_max", prompts.box->col_max}};
  return {{"points", points}, {"box", box}};
}

}  // namespace nubble
