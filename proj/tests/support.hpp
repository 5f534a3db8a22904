#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <filesystem>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <unistd.h>

#include "nubble/diagnostics.hpp"
#include "nubble/grid.hpp"

namespace testing {

using nubble::BinaryMask;
using nubble::FeatureGrid;
using nubble::Index;

inline FeatureGrid random_grid(std::mt19937_64& rng, Index h, Index w, Index c) {
  std::normal_distribution<double> n01(0.0, 1.0);
  nubble::RowMatrix<double> m(h * w, c);
  for (Index i = 0; i < m.rows(); ++i)
    for (Index j = 0; j < c; ++j) m(i, j) = n01(rng);
  return FeatureGrid(h, w, m);
}

// Random mask with at least one set and one clear bit (needs h*w >= 2).
inline BinaryMask random_mask(std::mt19937_64& rng, Index h, Index w) {
  BinaryMask mask(h, w, false);
  std::bernoulli_distribution coin(0.4);
  for (Index i = 0; i < mask.size(); ++i) mask.bits[i] = coin(rng);
  mask.bits[0] = true;
  mask.bits[mask.size() - 1] = false;
  return mask;
}

// Plain cosine over the channels not in `skip`.
inline double naive_cosine(const FeatureGrid& a, Index i, const FeatureGrid& b, Index j,
                           const std::set<Index>& skip = {}) {
  double dot = 0, na = 0, nb = 0;
  for (Index c = 0; c < a.channels(); ++c) {
    if (skip.count(c)) continue;
    dot += a.values()(i, c) * b.values()(j, c);
    na += a.values()(i, c) * a.values()(i, c);
    nb += b.values()(j, c) * b.values()(j, c);
  }
  if (na == 0 || nb == 0) return 0.0;
  return std::max(-1.0, std::min(1.0, dot / (std::sqrt(na) * std::sqrt(nb))));
}

struct NaiveMatch {
  Index linear;
  double score;
};

inline std::vector<NaiveMatch> naive_best_match(const FeatureGrid& tgt, const FeatureGrid& ref,
                                                const std::set<Index>& skip = {},
                                                bool exclude_self = false) {
  std::vector<NaiveMatch> out;
  for (Index i = 0; i < tgt.patches(); ++i) {
    NaiveMatch best{-1, -2.0};
    for (Index j = 0; j < ref.patches(); ++j) {
      if (exclude_self && i == j) continue;
      const double s = naive_cosine(tgt, i, ref, j, skip);
      if (s > best.score) best = {j, s};
    }
    out.push_back(best);
  }
  return out;
}

inline std::vector<double> naive_fg_map(const FeatureGrid& ref, const BinaryMask& fg,
                                        const FeatureGrid& tgt, bool mean,
                                        const std::set<Index>& skip = {}) {
  std::vector<double> out;
  for (Index i = 0; i < tgt.patches(); ++i) {
    double best = -2.0, sum = 0.0;
    Index n = 0;
    for (Index j = 0; j < ref.patches(); ++j) {
      if (!fg[j]) continue;
      const double s = naive_cosine(tgt, i, ref, j, skip);
      best = std::max(best, s);
      sum += s;
      ++n;
    }
    out.push_back(mean ? sum / static_cast<double>(n) : best);
  }
  return out;
}

// Sum over every path from `unit` of layer `layer` to the output of the
// product of absolute weights along it.
inline double path_weight(const nubble::InteractionQuery& q, std::size_t layer, Index unit) {
  if (layer + 1 == q.weights.size()) return std::abs(q.output_weights[unit]);
  double total = 0.0;
  const auto& next = q.weights[layer + 1];
  for (Index k = 0; k < next.rows(); ++k)
    total += std::abs(next(k, unit)) * path_weight(q, layer + 1, k);
  return total;
}

inline double oracle_strength(const nubble::InteractionQuery& q, Index unit) {
  const bool use_min = q.aggregator == nubble::StrengthAggregator::Min;
  const auto& w = q.weights.front();
  double agg = use_min ? 1e300 : 0.0;
  for (Index j : q.interaction)
    agg = use_min ? std::min(agg, std::abs(w(unit, j))) : agg + std::abs(w(unit, j));
  if (!use_min) agg /= static_cast<double>(q.interaction.size());
  return path_weight(q, 0, unit) * agg;
}

// Random network of 1-3 layers, widths 1-8, with a random interaction set.
inline nubble::InteractionQuery random_network(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> width(1, 8), layers(1, 3);
  std::normal_distribution<double> n01;
  nubble::InteractionQuery q;
  const int inputs = width(rng);
  int prev = inputs;
  const int depth = layers(rng);
  for (int l = 0; l < depth; ++l) {
    const int units = width(rng);
    Eigen::MatrixXd w(units, prev);
    for (Index i = 0; i < w.size(); ++i) w.data()[i] = n01(rng);
    q.weights.push_back(w);
    prev = units;
  }
  q.output_weights.resize(prev);
  for (Index i = 0; i < prev; ++i) q.output_weights[i] = n01(rng);
  std::vector<Index> all(static_cast<std::size_t>(inputs));
  std::iota(all.begin(), all.end(), 0);
  std::shuffle(all.begin(), all.end(), rng);
  q.interaction.assign(all.begin(), all.begin() + std::uniform_int_distribution<int>(1, inputs)(rng));
  return q;
}

/// Scratch directory removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("nubble_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::string file(const std::string& name) const { return (path_ / name).string(); }

 private:
  std::filesystem::path path_;
};

}  // namespace testing
