#include "nubble/harness.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "nubble/diagnostics.hpp"
#include "nubble/random.hpp"
#include "nubble/tensor_io.hpp"

namespace nubble {

void SynthSpec::validate() const {
  if (height < 1 || width < 1 || channels < 1)
    throw ArgumentError("synth: height, width and channels must be >= 1");
  if (height * width < 2) throw ArgumentError("synth: need at least two patches");
  if (!(fg_fraction > 0.0 && fg_fraction < 1.0))
    throw ArgumentError("synth: fg_fraction must lie in (0, 1)");
  if (!(margin >= 0.0 && margin <= 1.0)) throw ArgumentError("synth: margin must lie in [0, 1]");
  if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma))
    throw ArgumentError("synth: noise_sigma must be finite and >= 0");
  if (!std::isfinite(dominant_value)) throw ArgumentError("synth: dominant_value must be finite");
  if (!(nubble_fraction >= 0.0 && nubble_fraction <= 1.0))
    throw ArgumentError("synth: nubble_fraction must lie in [0, 1]");
  if (noise_channel && (*noise_channel < 0 || *noise_channel >= channels))
    throw ArgumentError("synth: noise_channel out of range");
  const Index free = channels - (noise_channel ? 1 : 0);
  if (free < 1) throw ArgumentError("synth: no channel left for the prototypes");
  if (free < 2 && margin > 0.0)
    throw ArgumentError("synth: a positive margin needs two prototype channels");
}

namespace {

Eigen::VectorXd random_unit(Rng& rng, Index channels, std::optional<Index> skip) {
  Eigen::VectorXd v(channels);
  do {
    for (Index c = 0; c < channels; ++c) v[c] = rng.normal();
    if (skip) v[*skip] = 0.0;
  } while (v.norm() == 0.0);
  return v / v.norm();
}

struct Prototypes {
  Eigen::VectorXd fg;
  Eigen::VectorXd bg;
};

Prototypes make_prototypes(const SynthSpec& spec) {
  Rng rng(derive_seed(spec.seed, {0}));
  Prototypes p;
  p.fg = random_unit(rng, spec.channels, spec.noise_channel);
  const Index free = spec.channels - (spec.noise_channel ? 1 : 0);
  if (free < 2) {
    p.bg = p.fg;
    return p;
  }
  Eigen::VectorXd ortho;
  do {
    ortho = random_unit(rng, spec.channels, spec.noise_channel);
    ortho -= ortho.dot(p.fg) * p.fg;
  } while (ortho.norm() < 1e-8);
  ortho /= ortho.norm();
  const double c = 1.0 - spec.margin;
  p.bg = c * p.fg + std::sqrt(1.0 - c * c) * ortho;
  return p;
}

void make_grid(const SynthSpec& spec, const Prototypes& protos, std::uint64_t seed,
               FeatureGrid& grid, BinaryMask& mask) {
  Rng rng(seed);
  const Index n = spec.height * spec.width;
  const Index n_fg = std::clamp(drop_count(n, spec.fg_fraction), Index{1}, n - 1);

  mask = BinaryMask(spec.height, spec.width);
  for (Index p : sample_indices(rng, n, n_fg)) mask.bits[p] = true;

  FeatureGrid::Matrix values(n, spec.channels);
  for (Index p = 0; p < n; ++p) {
    values.row(p) = (mask[p] ? protos.fg : protos.bg).transpose();
    if (spec.noise_sigma > 0.0)
      for (Index c = 0; c < spec.channels; ++c) values(p, c) += spec.noise_sigma * rng.normal();
  }

  if (spec.noise_channel) {
    std::vector<Index> fg_idx, bg_idx;
    for (Index p = 0; p < n; ++p) (mask[p] ? fg_idx : bg_idx).push_back(p);
    const Index total = std::clamp(drop_count(n, spec.nubble_fraction), Index{2}, n);
    std::vector<Index> chosen = {
        fg_idx[static_cast<std::size_t>(rng.below(fg_idx.size()))],
        bg_idx[static_cast<std::size_t>(rng.below(bg_idx.size()))]};
    std::vector<Index> rest;
    for (Index p = 0; p < n; ++p)
      if (p != chosen[0] && p != chosen[1]) rest.push_back(p);
    for (Index i : sample_indices(rng, static_cast<Index>(rest.size()), total - 2))
      chosen.push_back(rest[static_cast<std::size_t>(i)]);
    for (Index p : chosen) values(p, *spec.noise_channel) = spec.dominant_value;
  }

  grid = normalize_grid(FeatureGrid(spec.height, spec.width, std::move(values)));
}

}  // namespace

Instance synth_clusters(const SynthSpec& spec) {
  spec.validate();
  const auto protos = make_prototypes(spec);
  Instance inst;
  make_grid(spec, protos, derive_seed(spec.seed, {1}), inst.ref, inst.fg);
  make_grid(spec, protos, derive_seed(spec.seed, {2}), inst.tgt, inst.tgt_gt);
  inst.ref.set_source_id("synth-ref-" + std::to_string(spec.seed));
  inst.tgt.set_source_id("synth-tgt-" + std::to_string(spec.seed));
  return inst;
}

std::string_view to_string(Metric metric) {
  switch (metric) {
    case Metric::ProxyIou:
      return "proxy_iou";
    case Metric::MismatchRate:
      return "mismatch_rate";
    case Metric::PromptHitRate:
      return "prompt_hit_rate";
  }
  return "unknown";
}

Metric metric_from_string(std::string_view name) {
  if (name == "proxy_iou" || name == "proxy-iou") return Metric::ProxyIou;
  if (name == "mismatch_rate" || name == "mismatch-rate") return Metric::MismatchRate;
  if (name == "prompt_hit_rate" || name == "prompt-hit-rate") return Metric::PromptHitRate;
  throw ArgumentError("unknown metric '" + std::string(name) + "'");
}

double evaluate_metric(const Instance& inst, const std::optional<DropMask>& drop,
                       const SweepOptions& options) {
  switch (options.metric) {
    case Metric::MismatchRate: {
      const auto report = mismatch_report(inst.ref, inst.fg, drop);
      return static_cast<double>(report.mismatch_count) / static_cast<double>(report.total_fg);
    }
    case Metric::PromptHitRate: {
      const auto map =
          foreground_similarity_map(inst.ref, inst.fg, inst.tgt, options.aggregator, drop);
      const auto prompts =
          extract_prompts(map, options.prompt_k, options.prompt_separation, options.tau);
      Index hits = 0;
      for (const auto& p : prompts.points)
        if (inst.tgt_gt.at({p.row, p.col})) ++hits;
      return static_cast<double>(hits) / static_cast<double>(prompts.points.size());
    }
    case Metric::ProxyIou:
    default: {
      const auto map =
          foreground_similarity_map(inst.ref, inst.fg, inst.tgt, options.aggregator, drop);
      return iou(proxy_segment(map, options.tau), inst.tgt_gt);
    }
  }
}

std::uint64_t cell_seed(std::uint64_t seed, std::size_t ratio_index, Index trial,
                        std::size_t instance) {
  return derive_seed(seed, {static_cast<std::uint64_t>(ratio_index),
                            static_cast<std::uint64_t>(trial),
                            static_cast<std::uint64_t>(instance)});
}

namespace {

void check_inputs(const std::vector<Instance>& instances, Index trials) {
  if (instances.empty()) throw ArgumentError("no instances given");
  if (trials < 1) throw ArgumentError("trials must be >= 1");
}

void check_ratio(double ratio) {
  if (!(ratio >= 0.0 && ratio < 1.0)) throw ArgumentError("drop ratios must lie in [0, 1)");
}

std::vector<double> baselines(const std::vector<Instance>& instances, const SweepOptions& options,
                              Exec exec) {
  std::vector<double> out(instances.size());
  parallel_for(static_cast<Index>(instances.size()), exec, [&](Index s) {
    out[static_cast<std::size_t>(s)] =
        evaluate_metric(instances[static_cast<std::size_t>(s)], std::nullopt, options);
  });
  return out;
}

double batch_mean(const double* values, std::size_t count) {
  double sum = 0.0;
  for (std::size_t i = 0; i < count; ++i) sum += values[i];
  return sum / static_cast<double>(count);
}

}  // namespace

SweepResult run_drop_sweep(const std::vector<Instance>& instances,
                           const std::vector<double>& ratios, Index trials, std::uint64_t seed,
                           const SweepOptions& options, Exec exec) {
  check_inputs(instances, trials);
  for (double r : ratios) check_ratio(r);
  for (double r : ratios)
    for (const auto& inst : instances)
      if (drop_count(inst.ref.channels(), r) >= inst.ref.channels())
        throw ArgumentError("drop ratio " + format_real(r) + " would drop every channel");

  const std::size_t n_inst = instances.size();
  const auto n_trials = static_cast<std::size_t>(trials);
  const auto base = baselines(instances, options, exec);
  const double baseline = batch_mean(base.data(), n_inst);

  const std::size_t cells = ratios.size() * n_trials * n_inst;
  std::vector<double> values(cells);
  std::vector<DropMask> masks(options.record_cells ? cells : 0);
  parallel_for(static_cast<Index>(cells), exec, [&](Index flat) {
    const auto f = static_cast<std::size_t>(flat);
    const std::size_t r = f / (n_trials * n_inst);
    const Index t = static_cast<Index>((f / n_inst) % n_trials);
    const std::size_t s = f % n_inst;
    const auto& inst = instances[s];
    auto mask = sample_drop_mask(inst.ref.channels(), ratios[r], cell_seed(seed, r, t, s));
    values[f] = evaluate_metric(inst, mask, options);
    if (options.record_cells) masks[f] = std::move(mask);
  });

  SweepResult result;
  result.metric = options.metric;
  for (std::size_t r = 0; r < ratios.size(); ++r) {
    std::vector<double> trial_means(n_trials);
    for (std::size_t t = 0; t < n_trials; ++t)
      trial_means[t] = batch_mean(values.data() + (r * n_trials + t) * n_inst, n_inst);
    // Shifted mean: exactly trial_means[0] when every trial agrees.
    double shift = 0.0;
    for (double m : trial_means) shift += m - trial_means[0];
    const double mean = trial_means[0] + shift / static_cast<double>(n_trials);
    double sq = 0.0;
    for (double m : trial_means) sq += (m - mean) * (m - mean);
    result.rows.push_back(
        {ratios[r], trials, mean, std::sqrt(sq / static_cast<double>(n_trials)), baseline});
  }
  if (options.record_cells) {
    for (std::size_t f = 0; f < cells; ++f)
      result.cells.push_back({f / (n_trials * n_inst), static_cast<Index>((f / n_inst) % n_trials),
                              f % n_inst, std::move(masks[f]), values[f]});
  }
  return result;
}

CurveResult run_cumulative_curve(const std::vector<Instance>& instances, double ratio,
                                 Index trials, std::uint64_t seed, const SweepOptions& options,
                                 Exec exec) {
  check_inputs(instances, trials);
  check_ratio(ratio);
  const std::size_t n_inst = instances.size();
  const auto n_trials = static_cast<std::size_t>(trials);
  const auto base = baselines(instances, options, exec);

  std::vector<double> values(n_inst * n_trials);
  parallel_for(static_cast<Index>(values.size()), exec, [&](Index flat) {
    const auto f = static_cast<std::size_t>(flat);
    const std::size_t s = f / n_trials;
    const Index t = static_cast<Index>(f % n_trials);
    const auto& inst = instances[s];
    const auto mask = sample_drop_mask(inst.ref.channels(), ratio, cell_seed(seed, 0, t, s));
    values[f] = evaluate_metric(inst, mask, options);
  });

  CurveResult result;
  result.metric = options.metric;
  double running = 0.0;
  for (std::size_t s = 0; s < n_inst; ++s) {
    double gain = 0.0;
    for (std::size_t t = 0; t < n_trials; ++t) gain += values[s * n_trials + t] - base[s];
    running += gain / static_cast<double>(n_trials);
    result.rows.push_back({static_cast<Index>(s + 1), running / static_cast<double>(s + 1)});
  }
  return result;
}

namespace {

std::string csv_preamble(Metric metric, const SweepOptions& options) {
  return "# metric=" + std::string(to_string(metric)) + " tau=" + format_real(options.tau) +
         " aggregator=" + std::string(to_string(options.aggregator)) +
         " unit=reference/target pair\n";
}

}  // namespace

std::string sweep_csv(const SweepResult& result, const SweepOptions& options) {
  std::string out = csv_preamble(result.metric, options) + "ratio,trials,mean,std,baseline\n";
  for (const auto& row : result.rows)
    out += format_real(row.ratio) + "," + std::to_string(row.trials) + "," +
           format_real(row.mean) + "," + format_real(row.std) + "," + format_real(row.baseline) +
           "\n";
  return out;
}

std::string curve_csv(const CurveResult& result, const SweepOptions& options) {
  std::string out = csv_preamble(result.metric, options) + "n,mean_improvement\n";
  for (const auto& row : result.rows)
    out += std::to_string(row.n_instances) + "," + format_real(row.mean_improvement) + "\n";
  return out;
}

Json to_json(const SweepResult& result) {
  Json rows = Json::array();
  for (const auto& r : result.rows)
    rows.push_back({{"ratio", r.ratio},
                    {"trials", r.trials},
                    {"mean", r.mean},
                    {"std", r.std},
                    {"baseline", r.baseline}});
  return {{"metric", std::string(to_string(result.metric))}, {"rows", rows}};
}

Json to_json(const CurveResult& result) {
  Json rows = Json::array();
  for (const auto& r : result.rows)
    rows.push_back({{"n", r.n_instances}, {"mean_improvement", r.mean_improvement}});
  return {{"metric", std::string(to_string(result.metric))}, {"rows", rows}};
}

std::vector<Instance> load_manifest(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  Json doc;
  try {
    doc = Json::parse(bytes.begin(), bytes.end());
  } catch (const Json::parse_error& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  if (!doc.is_object() || !doc.contains("instances") || !doc["instances"].is_array())
    throw FormatError(path.string() + ": manifest needs an \"instances\" array");
  const auto base = path.parent_path();
  auto resolve = [&](const Json& entry, const char* key) {
    if (!entry.contains(key) || !entry[key].is_string())
      throw FormatError(path.string() + ": instance is missing \"" + key + "\"");
    std::filesystem::path p = entry[key].get<std::string>();
    return p.is_absolute() ? p : base / p;
  };

  // Resolve every entry before reading any tensor.
  std::vector<std::array<std::filesystem::path, 4>> files;
  for (const auto& entry : doc["instances"])
    files.push_back({resolve(entry, "ref"), resolve(entry, "fg"), resolve(entry, "tgt"),
                     resolve(entry, "tgt_gt")});

  std::vector<Instance> out;
  for (const auto& f : files) {
    Instance inst{normalize_grid(read_grid(f[0])), read_mask(f[1]), normalize_grid(read_grid(f[2])),
                  read_mask(f[3])};
    require_same_dims(inst.fg, inst.ref.height(), inst.ref.width(), "manifest fg");
    require_same_dims(inst.tgt_gt, inst.tgt.height(), inst.tgt.width(), "manifest tgt_gt");
    if (inst.ref.channels() != inst.tgt.channels())
      throw DimensionError(path.string() + ": ref and tgt channel counts differ");
    out.push_back(std::move(inst));
  }
  if (out.empty()) throw ArgumentError(path.string() + ": manifest lists no instances");
  return out;
}

}  // namespace nubble
