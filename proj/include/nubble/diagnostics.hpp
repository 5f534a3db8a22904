#pragma once

#include <optional>
#include <string>
#include <vector>

#include "nubble/drop.hpp"
#include "nubble/grid.hpp"
#include "nubble/parallel.hpp"
#include "nubble/report.hpp"

namespace nubble {

struct MismatchRecord {
  Coord point;
  Coord best_match;
  double best_score = 0.0;
  bool best_is_foreground = false;
};

struct MismatchReport {
  std::vector<MismatchRecord> records;  // one per foreground patch, row-major order
  Index mismatch_count = 0;
  Index total_fg = 0;
  bool image_flagged = false;
};

/// Best match of every foreground patch among all other patches of the same
/// grid (after the optional drop), and how many of them land on background.
MismatchReport mismatch_report(const FeatureGrid& ref, const BinaryMask& fg,
                               const std::optional<DropMask>& drop = std::nullopt,
                               Exec exec = {});

inline constexpr double kDefaultKappa = 0.5;
inline constexpr double kDefaultNu = 0.0004;

/// Per-patch magnitude statistics of a normalized grid.
struct ChannelDiagnostics {
  Eigen::VectorXd max_abs;        // per patch: max_c |v_c|
  Eigen::VectorXd variance_abs;   // per patch: population variance of |v_c|
  double mean_abs_overall = 0.0;  // mean over patches of mean_c |v_c|
  double mean_variance = 0.0;     // mean over patches of variance_abs
  double kappa = kDefaultKappa;
  double nu = kDefaultNu;
  Index dominant_patch_count = 0;  // #{max_abs > kappa}
  bool submergence_flag = false;   // mean_variance > nu

  bool dominant(Index patch) const { return max_abs[patch] > kappa; }
};

/// Dominant-channel and channel-submergence statistics. Both comparisons are
/// strict. Throws PreconditionError unless the grid is flagged normalized.
ChannelDiagnostics channel_diagnostics(const FeatureGrid& grid, double kappa = kDefaultKappa,
                                       double nu = kDefaultNu);

/// count(threshold) = #{values > threshold} for each threshold, as
/// "threshold,count" CSV rows under a header.
std::string threshold_counts_csv(const Eigen::VectorXd& values,
                                 const std::vector<double>& thresholds);

enum class StrengthAggregator { Mean, Min };

/// Feed-forward weights W(1)..W(L) (each rows = units out, cols = units in),
/// output weights w_y and a candidate interaction over input indices (0-based).
struct InteractionQuery {
  std::vector<Eigen::MatrixXd> weights;
  Eigen::VectorXd output_weights;
  std::vector<Index> interaction;
  StrengthAggregator aggregator = StrengthAggregator::Mean;
};

/// Interaction strength of `interaction` at each first-hidden-layer unit i:
///
///   z      = |w_y|^T |W(L)| |W(L-1)| ... |W(2)|      (z = |w_y|^T when L = 1)
///   w_i    = z_i * mu(|W(1)_{i, I}|)
Eigen::VectorXd interaction_strength(const InteractionQuery& query);

InteractionQuery interaction_query_from_json(const Json& doc);

Json to_json(const MismatchReport& report);
Json to_json(const ChannelDiagnostics& diag);

}  // namespace nubble
