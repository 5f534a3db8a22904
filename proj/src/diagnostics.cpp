#include "nubble/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "nubble/matching.hpp"

namespace nubble {

MismatchReport mismatch_report(const FeatureGrid& ref, const BinaryMask& fg,
                               const std::optional<DropMask>& drop, Exec exec) {
  require_same_dims(fg, ref.height(), ref.width(), "mismatch_report");
  const Index fg_count = fg.count();
  if (fg_count == 0 || fg_count == fg.size())
    throw ArgumentError("mismatch_report: mask must contain both foreground and background");

  const auto matches = best_match_map(ref, ref, drop, /*exclude_self=*/true, exec);
  MismatchReport report;
  report.total_fg = fg_count;
  for (Index p = 0; p < fg.size(); ++p) {
    if (!fg[p]) continue;
    const auto& m = matches.matches[static_cast<std::size_t>(p)];
    const bool hit = fg[m.linear];
    report.records.push_back({ref.coord(p), m.coord, m.score, hit});
    if (!hit) ++report.mismatch_count;
  }
  report.image_flagged = report.mismatch_count > 0;
  return report;
}

ChannelDiagnostics channel_diagnostics(const FeatureGrid& grid, double kappa, double nu) {
  if (!grid.normalized())
    throw PreconditionError("channel_diagnostics: grid must be normalized first");
  const auto abs_values = grid.values().cwiseAbs();
  const Index patches = grid.patches();
  const auto channels = static_cast<double>(grid.channels());

  ChannelDiagnostics d;
  d.kappa = kappa;
  d.nu = nu;
  d.max_abs.resize(patches);
  d.variance_abs.resize(patches);
  double sum_mean = 0.0;
  double sum_var = 0.0;
  for (Index p = 0; p < patches; ++p) {
    const auto row = abs_values.row(p);
    double sum = 0.0;
    double peak = 0.0;
    for (Index c = 0; c < row.size(); ++c) {
      sum += row[c];
      peak = std::max(peak, row[c]);
    }
    const double mean = sum / channels;
    double sq = 0.0;
    for (Index c = 0; c < row.size(); ++c) sq += (row[c] - mean) * (row[c] - mean);
    d.max_abs[p] = peak;
    d.variance_abs[p] = sq / channels;
    sum_mean += mean;
    sum_var += d.variance_abs[p];
    if (peak > kappa) ++d.dominant_patch_count;
  }
  d.mean_abs_overall = sum_mean / static_cast<double>(patches);
  d.mean_variance = sum_var / static_cast<double>(patches);
  d.submergence_flag = d.mean_variance > nu;
  return d;
}

std::string threshold_counts_csv(const Eigen::VectorXd& values,
                                 const std::vector<double>& thresholds) {
  std::string out = "threshold,count\n";
  for (double t : thresholds) {
    const Index count = (values.array() > t).count();
    out += format_real(t) + "," + std::to_string(count) + "\n";
  }
  return out;
}

Eigen::VectorXd interaction_strength(const InteractionQuery& q) {
  if (q.weights.empty()) throw ArgumentError("interaction_strength: no weight matrices");
  for (std::size_t l = 1; l < q.weights.size(); ++l)
    if (q.weights[l].cols() != q.weights[l - 1].rows())
      throw DimensionError("interaction_strength: W(" + std::to_string(l + 1) + ") has " +
                           std::to_string(q.weights[l].cols()) + " columns, W(" +
                           std::to_string(l) + ") has " + std::to_string(q.weights[l - 1].rows()) +
                           " rows");
  if (q.output_weights.size() != q.weights.back().rows())
    throw DimensionError("interaction_strength: output weights do not match the last layer");
  const auto& first = q.weights.front();
  if (q.interaction.empty()) throw ArgumentError("interaction_strength: empty interaction set");
  if (std::set<Index>(q.interaction.begin(), q.interaction.end()).size() != q.interaction.size())
    throw ArgumentError("interaction_strength: duplicate interaction index");
  for (Index j : q.interaction)
    if (j < 0 || j >= first.cols())
      throw ArgumentError("interaction_strength: input index " + std::to_string(j) +
                          " out of range");

  // Aggregated weight of each first-layer unit on the output.
  Eigen::RowVectorXd z = q.output_weights.cwiseAbs().transpose();
  for (auto l = q.weights.size() - 1; l >= 1; --l) z = z * q.weights[l].cwiseAbs();

  Eigen::VectorXd strength(first.rows());
  for (Index i = 0; i < first.rows(); ++i) {
    double agg = q.aggregator == StrengthAggregator::Mean ? 0.0 : std::abs(first(i, q.interaction[0]));
    for (Index j : q.interaction) {
      const double w = std::abs(first(i, j));
      agg = q.aggregator == StrengthAggregator::Mean ? agg + w : std::min(agg, w);
    }
    if (q.aggregator == StrengthAggregator::Mean) agg /= static_cast<double>(q.interaction.size());
    strength[i] = z[i] * agg;
  }
  return strength;
}

InteractionQuery interaction_query_from_json(const Json& doc) {
  try {
    InteractionQuery q;
    for (const auto& layer : doc.at("weights")) {
      const auto rows = static_cast<Index>(layer.size());
      const auto cols = rows > 0 ? static_cast<Index>(layer[0].size()) : Index{0};
      if (rows == 0 || cols == 0) throw FormatError("interaction query: empty weight matrix");
      Eigen::MatrixXd w(rows, cols);
      for (Index i = 0; i < rows; ++i) {
        if (static_cast<Index>(layer[i].size()) != cols)
          throw FormatError("interaction query: ragged weight matrix");
        for (Index j = 0; j < cols; ++j) w(i, j) = layer[i][j].get<double>();
      }
      require_finite(w);
      q.weights.push_back(std::move(w));
    }
    const auto out = doc.at("output_weights").get<std::vector<double>>();
    q.output_weights = Eigen::Map<const Eigen::VectorXd>(out.data(), static_cast<Index>(out.size()));
    require_finite(q.output_weights);
    q.interaction = doc.at("interaction").get<std::vector<Index>>();
    const auto agg = doc.value("aggregator", std::string("mean"));
    if (agg == "mean") {
      q.aggregator = StrengthAggregator::Mean;
    } else if (agg == "min") {
      q.aggregator = StrengthAggregator::Min;
    } else {
      throw ArgumentError("interaction query: aggregator must be mean or min");
    }
    return q;
  } catch (const Json::exception& e) {
    throw FormatError(std::string("interaction query JSON: ") + e.what());
  }
}

Json to_json(const MismatchReport& report) {
  Json records = Json::array();
  for (const auto& r : report.records)
    records.push_back({{"row", r.point.row},
                       {"col", r.point.col},
                       {"best_row", r.best_match.row},
                       {"best_col", r.best_match.col},
                       {"best_score", r.best_score},
                       {"best_is_foreground", r.best_is_foreground}});
  return {{"records", records},
          {"mismatch_count", report.mismatch_count},
          {"total_fg", report.total_fg},
          {"image_flagged", report.image_flagged}};
}

Json to_json(const ChannelDiagnostics& d) {
  return {{"max_abs", std::vector<double>(d.max_abs.begin(), d.max_abs.end())},
          {"variance_abs", std::vector<double>(d.variance_abs.begin(), d.variance_abs.end())},
          {"mean_abs_overall", d.mean_abs_overall},
          {"mean_variance", d.mean_variance},
          {"kappa", d.kappa},
          {"nu", d.nu},
          {"dominant_patch_count", d.dominant_patch_count},
          {"submergence_flag", d.submergence_flag}};
}

}  // namespace nubble
