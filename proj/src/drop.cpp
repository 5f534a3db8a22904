#include "nubble/drop.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "nubble/kernel.hpp"
#include "nubble/random.hpp"

namespace nubble {

bool DropMask::contains(Index channel) const {
  return std::binary_search(dropped.begin(), dropped.end(), channel);
}

void DropMask::validate() const {
  if (total_channels < 1) throw ArgumentError("drop mask: total_channels must be >= 1");
  if (!(ratio >= 0.0 && ratio < 1.0)) throw ArgumentError("drop mask: ratio must lie in [0, 1)");
  if (static_cast<Index>(dropped.size()) >= total_channels)
    throw ArgumentError("drop mask would drop every channel");
  for (std::size_t i = 0; i < dropped.size(); ++i) {
    if (dropped[i] < 0 || dropped[i] >= total_channels)
      throw ArgumentError("drop mask: channel " + std::to_string(dropped[i]) + " out of range");
    if (i > 0 && dropped[i] <= dropped[i - 1])
      throw ArgumentError("drop mask: channels must be strictly ascending");
  }
}

Index drop_count(Index n, double ratio) {
  const double x = ratio * static_cast<double>(n);
  const double lower = std::floor(x);
  const double frac = x - lower;
  auto k = static_cast<Index>(lower);
  if (frac > 0.5 || (frac == 0.5 && k % 2 != 0)) ++k;
  return k;
}

DropMask sample_drop_mask(Index n, double ratio, std::uint64_t seed) {
  if (n < 1) throw ArgumentError("sample_drop_mask: channel count must be >= 1");
  if (!(ratio >= 0.0 && ratio < 1.0))
    throw ArgumentError("sample_drop_mask: ratio must lie in [0, 1)");
  const Index k = drop_count(n, ratio);
  if (k >= n)
    throw ArgumentError("sample_drop_mask: ratio " + std::to_string(ratio) + " drops all " +
                        std::to_string(n) + " channels");
  Rng rng(seed);
  return {n, sample_indices(rng, n, k), seed, ratio};
}

DropMask make_drop_mask(Index n, std::vector<Index> channels) {
  std::sort(channels.begin(), channels.end());
  if (std::adjacent_find(channels.begin(), channels.end()) != channels.end())
    throw ArgumentError("make_drop_mask: duplicate channel");
  const double ratio = n > 0 ? static_cast<double>(channels.size()) / static_cast<double>(n) : 0.0;
  DropMask mask{n, std::move(channels), std::nullopt, ratio};
  mask.validate();
  return mask;
}

FeatureGrid apply_drop(const FeatureGrid& grid, const DropMask& mask) {
  if (mask.total_channels != grid.channels())
    throw DimensionError("apply_drop: mask covers " + std::to_string(mask.total_channels) +
                         " channels, grid has " + std::to_string(grid.channels()));
  FeatureGrid out = grid;
  if (mask.empty()) return out;
  for (Index c : mask.dropped) out.values().col(c).setZero();
  out.set_normalized(false);
  return out;
}

FeatureGrid trim_extremes(const FeatureGrid& grid, Index per_patch, Exec exec) {
  if (per_patch < 0 || per_patch >= grid.channels())
    throw ArgumentError("trim_extremes: per-patch count must lie in [0, " +
                        std::to_string(grid.channels()) + ")");
  FeatureGrid out = grid;
  if (per_patch == 0) return out;
  auto& values = out.values();
  parallel_for(values.rows(), exec, [&](Index p) {
    auto row = values.row(p);
    std::vector<Index> order(static_cast<std::size_t>(row.size()));
    std::iota(order.begin(), order.end(), Index{0});
    std::partial_sort(order.begin(), order.begin() + per_patch, order.end(),
                      [&](Index a, Index b) {
                        const double x = std::abs(row[a]);
                        const double y = std::abs(row[b]);
                        return x != y ? x > y : a < b;
                      });
    for (Index i = 0; i < per_patch; ++i) row[order[static_cast<std::size_t>(i)]] = 0.0;
  });
  out.set_normalized(false);
  return out;
}

namespace {

double kept_dot(const double* u, const double* v, const std::vector<Index>& keep) {
  double acc = 0.0;
  for (Index c : keep) acc += u[c] * v[c];
  return acc;
}

// Foreground mismatches over the restricted candidate lists with `keep` as
// the surviving channels.
Index restricted_mismatches(const FeatureGrid& ref, const BinaryMask& fg,
                            const std::vector<Index>& fg_points,
                            const std::vector<std::vector<Index>>& candidates,
                            const std::vector<Index>& keep) {
  const auto& v = ref.values();
  Eigen::VectorXd norms(v.rows());
  for (Index p = 0; p < v.rows(); ++p) {
    const double* row = v.row(p).data();
    norms[p] = std::sqrt(kept_dot(row, row, keep));
  }
  Index mismatches = 0;
  for (std::size_t f = 0; f < fg_points.size(); ++f) {
    const Index p = fg_points[f];
    Index best = -1;
    double best_score = 0.0;
    for (Index q : candidates[f]) {
      const double s = cosine_from_parts(kept_dot(v.row(p).data(), v.row(q).data(), keep),
                                         norms[p], norms[q]);
      if (best < 0 || s > best_score) {
        best = q;
        best_score = s;
      }
    }
    if (best >= 0 && !fg[best]) ++mismatches;
  }
  return mismatches;
}

}  // namespace

PruneResult greedy_channel_prune(const FeatureGrid& ref, const BinaryMask& fg, Index budget,
                                 Index k_bg, Exec exec) {
  if (ref.patches() > kMaxPrunePatches)
    throw BoundError("greedy_channel_prune: " + std::to_string(ref.patches()) +
                     " patches exceeds the bound of " + std::to_string(kMaxPrunePatches));
  if (budget < 0 || budget >= ref.channels())
    throw ArgumentError("greedy_channel_prune: budget must lie in [0, channels)");
  if (k_bg < 1) throw ArgumentError("greedy_channel_prune: k_bg must be >= 1");
  require_same_dims(fg, ref.height(), ref.width(), "greedy_channel_prune");
  const Index fg_count = fg.count();
  if (fg_count < 1 || fg_count == fg.size())
    throw ArgumentError("greedy_channel_prune: mask needs both foreground and background");

  std::vector<Index> fg_points;
  std::vector<Index> bg_points;
  for (Index p = 0; p < fg.size(); ++p) (fg[p] ? fg_points : bg_points).push_back(p);

  const auto baseline = cosine_matrix(ref.values(), ref.values(), exec);
  std::vector<std::vector<Index>> candidates(fg_points.size());
  for (std::size_t f = 0; f < fg_points.size(); ++f) {
    const Index p = fg_points[f];
    std::vector<Index> near = bg_points;
    const auto take = std::min<std::size_t>(static_cast<std::size_t>(k_bg), near.size());
    std::partial_sort(near.begin(), near.begin() + static_cast<std::ptrdiff_t>(take), near.end(),
                      [&](Index a, Index b) {
                        const double x = baseline(p, a);
                        const double y = baseline(p, b);
                        return x != y ? x > y : a < b;
                      });
    near.resize(take);
    auto& list = candidates[f];
    for (Index q : fg_points)
      if (q != p) list.push_back(q);
    list.insert(list.end(), near.begin(), near.end());
    std::sort(list.begin(), list.end());
  }

  std::vector<Index> keep(static_cast<std::size_t>(ref.channels()));
  std::iota(keep.begin(), keep.end(), Index{0});
  std::vector<Index> dropped;

  PruneResult result;
  result.error_history.push_back({0, restricted_mismatches(ref, fg, fg_points, candidates, keep)});
  for (Index step = 0; step < budget; ++step) {
    std::vector<Index> counts(keep.size());
    parallel_for(static_cast<Index>(keep.size()), exec, [&](Index i) {
      std::vector<Index> trial;
      trial.reserve(keep.size() - 1);
      for (std::size_t j = 0; j < keep.size(); ++j)
        if (static_cast<Index>(j) != i) trial.push_back(keep[j]);
      counts[static_cast<std::size_t>(i)] =
          restricted_mismatches(ref, fg, fg_points, candidates, trial);
    });
    // keep is ascending, so the first minimum is the lowest channel.
    const auto best = std::min_element(counts.begin(), counts.end()) - counts.begin();
    dropped.push_back(keep[static_cast<std::size_t>(best)]);
    keep.erase(keep.begin() + best);
    result.error_history.push_back({step + 1, counts[static_cast<std::size_t>(best)]});
  }
  result.mask = make_drop_mask(ref.channels(), dropped);
  return result;
}

Json to_json(const DropMask& mask) {
  Json doc = Json::object();
  doc["n"] = mask.total_channels;
  doc["ratio"] = mask.ratio;
  doc["seed"] = mask.seed ? Json(*mask.seed) : Json(nullptr);
  doc["dropped"] = mask.dropped;
  return doc;
}

DropMask drop_mask_from_json(const Json& doc) {
  try {
    DropMask mask;
    mask.total_channels = doc.at("n").get<Index>();
    mask.ratio = doc.at("ratio").get<double>();
    if (doc.contains("seed") && !doc.at("seed").is_null())
      mask.seed = doc.at("seed").get<std::uint64_t>();
    mask.dropped = doc.at("dropped").get<std::vector<Index>>();
    mask.validate();
    return mask;
  } catch (const Json::exception& e) {
    throw FormatError(std::string("drop mask JSON: ") + e.what());
  }
}

Json to_json(const PruneResult& result) {
  Json history = Json::array();
  for (const auto& step : result.error_history)
    history.push_back({{"dropped_so_far", step.dropped_so_far},
                       {"mismatch_count", step.mismatch_count}});
  return {{"mask", to_json(result.mask)}, {"error_history", history}};
}

}  // namespace nubble
