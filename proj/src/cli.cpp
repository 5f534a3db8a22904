#include "nubble/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>

#include "nubble/diagnostics.hpp"
#include "nubble/drop.hpp"
#include "nubble/harness.hpp"
#include "nubble/matching.hpp"
#include "nubble/random.hpp"
#include "nubble/report.hpp"
#include "nubble/tensor_io.hpp"

namespace nubble {
namespace {

namespace fs = std::filesystem;

struct RunConfig {
  std::string command;
  // paths
  std::string in, out, ref, tgt, fg, pred, gt, manifest;
  std::string mask_in, mask_out, map_out, grid_out, json_out, out_dir;
  std::string max_hist_out, var_hist_out;
  // numeric flags
  std::optional<double> ratio;
  std::optional<std::uint64_t> seed;
  double kappa = kDefaultKappa;
  double nu = kDefaultNu;
  double tau = 0.5;
  Index k = 1;
  Index min_separation = 0;
  Index trials = 1;
  Index budget = 0;
  Index k_bg = 1;
  Index m_per_patch = 0;
  Index prompt_k = 3;
  Index prompt_separation = 1;
  unsigned threads = 1;
  bool exclude_self = false;
  std::vector<double> ratios;
  std::string aggregator = "max";
  std::string metric = "proxy_iou";
  // synth
  SynthSpec synth;
  std::optional<Index> noise_channel;
  Index count = 1;
};

/// Collects every output of a run and writes them only once all succeeded,
/// through temporary files renamed into place.
class OutputStage {
 public:
  void add(const std::string& path, std::string bytes) {
    files_.emplace_back(path, std::move(bytes));
  }
  void add(const std::string& path, const std::vector<std::uint8_t>& bytes) {
    add(path, std::string(bytes.begin(), bytes.end()));
  }

  std::vector<std::string> paths() const {
    std::vector<std::string> p;
    for (const auto& f : files_) p.push_back(f.first.string());
    return p;
  }

  void commit() {
    std::vector<fs::path> temps;
    std::vector<fs::path> placed;
    try {
      for (const auto& [path, bytes] : files_) {
        fs::path tmp = path;
        tmp += ".partial";
        temps.push_back(tmp);
        write_file(tmp, bytes);
      }
      for (std::size_t i = 0; i < files_.size(); ++i) {
        fs::rename(temps[i], files_[i].first);
        placed.push_back(files_[i].first);
      }
    } catch (...) {
      std::error_code ec;
      for (const auto& t : temps) fs::remove(t, ec);
      for (const auto& p : placed) fs::remove(p, ec);
      try {
        throw;
      } catch (const fs::filesystem_error& e) {
        throw IoError(e.what());
      }
    }
  }

 private:
  std::vector<std::pair<fs::path, std::string>> files_;
};

// Appends config-file values for every flag not given explicitly, so that
// explicit flags always win.
std::vector<std::string> merge_config(std::vector<std::string> args) {
  std::string path;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) path = args[i + 1];
    if (args[i].rfind("--config=", 0) == 0) path = args[i].substr(9);
  }
  if (path.empty()) return args;

  const auto bytes = read_file(path);
  Json doc;
  try {
    doc = Json::parse(bytes.begin(), bytes.end());
  } catch (const Json::parse_error& e) {
    throw FormatError(path + ": " + e.what());
  }
  if (!doc.is_object()) throw FormatError(path + ": config must be a JSON object");

  auto given = [&](const std::string& flag) {
    for (const auto& a : args)
      if (a == flag || a.rfind(flag + "=", 0) == 0) return true;
    return false;
  };
  auto scalar = [](const Json& v) {
    return v.is_string() ? v.get<std::string>() : v.dump();
  };
  for (auto it = doc.begin(); it != doc.end(); ++it) {
    std::string name = it.key();
    std::replace(name.begin(), name.end(), '_', '-');
    const std::string flag = "--" + name;
    if (name == "config" || given(flag)) continue;
    const Json& v = it.value();
    if (v.is_boolean()) {
      if (v.get<bool>()) args.push_back(flag);
    } else if (v.is_array()) {
      std::string joined;
      for (std::size_t i = 0; i < v.size(); ++i) joined += (i ? "," : "") + scalar(v[i]);
      args.push_back(flag);
      args.push_back(joined);
    } else if (!v.is_null()) {
      args.push_back(flag);
      args.push_back(scalar(v));
    }
  }
  return args;
}

void require(bool ok, const std::string& message) {
  if (!ok) throw ArgumentError(message);
}

void check_ratio(double ratio) {
  require(std::isfinite(ratio) && ratio >= 0.0 && ratio < 1.0, "--ratio must lie in [0, 1)");
}

// Range checks that must pass before any file is touched.
void validate(const RunConfig& c) {
  require(c.threads >= 1, "--threads must be >= 1");
  require(std::isfinite(c.tau), "--tau must be finite");
  const std::string& cmd = c.command;
  const bool masked = cmd == "drop" || cmd == "match" || cmd == "prompts" || cmd == "segment" ||
                      cmd == "mismatch";
  if (masked) {
    require(!(c.ratio && !c.mask_in.empty()), "give either --ratio/--seed or --mask-in, not both");
    if (c.ratio) {
      check_ratio(*c.ratio);
      require(c.seed.has_value(), "--ratio samples a random mask and requires --seed");
    }
    if (cmd == "drop")
      require(c.ratio || !c.mask_in.empty(), "drop needs --ratio with --seed, or --mask-in");
    require(c.mask_out.empty() || c.ratio || !c.mask_in.empty(),
            "--mask-out needs a mask from --ratio or --mask-in");
  }
  if (cmd == "trim") require(c.m_per_patch >= 0, "--m-per-patch must be >= 0");
  if (cmd == "prune") {
    require(c.budget >= 0, "--budget must be >= 0");
    require(c.k_bg >= 1, "--k-bg must be >= 1");
  }
  if (cmd == "prompts") {
    require(c.k >= 1, "--k must be >= 1");
    require(c.min_separation >= 0, "--min-separation must be >= 0");
  }
  if (cmd == "prompts" || cmd == "segment" || cmd == "sweep" || cmd == "curve")
    (void)aggregator_from_string(c.aggregator);
  if (cmd == "diagnose")
    require(std::isfinite(c.kappa) && std::isfinite(c.nu), "--kappa and --nu must be finite");
  if (cmd == "sweep" || cmd == "curve") {
    (void)metric_from_string(c.metric);
    require(c.trials >= 1, "--trials must be >= 1");
    require(c.seed.has_value(), cmd + " is randomized and requires --seed");
    require(c.prompt_k >= 1 && c.prompt_separation >= 0, "invalid prompt settings");
    for (double r : c.ratios) check_ratio(r);
    if (cmd == "curve") {
      require(c.ratio.has_value(), "curve requires --ratio");
      check_ratio(*c.ratio);
    }
  }
  if (cmd == "synth") {
    require(c.seed.has_value(), "synth is randomized and requires --seed");
    require(c.count >= 1, "--count must be >= 1");
    SynthSpec spec = c.synth;
    spec.noise_channel = c.noise_channel;
    spec.validate();
  }
}

std::optional<DropMask> resolve_mask(const RunConfig& c, Index channels) {
  if (!c.mask_in.empty()) {
    const auto bytes = read_file(c.mask_in);
    Json doc;
    try {
      doc = Json::parse(bytes.begin(), bytes.end());
    } catch (const Json::parse_error& e) {
      throw FormatError(c.mask_in + ": " + e.what());
    }
    auto mask = drop_mask_from_json(doc);
    if (mask.total_channels != channels)
      throw DimensionError(c.mask_in + ": mask covers " + std::to_string(mask.total_channels) +
                           " channels, grid has " + std::to_string(channels));
    return mask;
  }
  if (c.ratio) return sample_drop_mask(channels, *c.ratio, *c.seed);
  return std::nullopt;
}

void stage_mask(const RunConfig& c, const std::optional<DropMask>& mask, OutputStage& stage) {
  if (!c.mask_out.empty() && mask) stage.add(c.mask_out, canonical_json(to_json(*mask)));
}

SweepOptions sweep_options(const RunConfig& c) {
  SweepOptions o;
  o.metric = metric_from_string(c.metric);
  o.tau = c.tau;
  o.aggregator = aggregator_from_string(c.aggregator);
  o.prompt_k = c.prompt_k;
  o.prompt_separation = c.prompt_separation;
  return o;
}

using Command = std::function<Json(const RunConfig&, OutputStage&)>;

Json cmd_normalize(const RunConfig& c, OutputStage& stage) {
  const auto grid = normalize_grid(read_grid(c.in));
  stage.add(c.out, encode_npy(grid));
  Index zero = 0;
  for (Index p = 0; p < grid.patches(); ++p)
    if (grid.patch(p).isZero(0.0)) ++zero;
  return {{"patches", grid.patches()}, {"channels", grid.channels()}, {"zero_patches", zero}};
}

Json cmd_drop(const RunConfig& c, OutputStage& stage) {
  const auto grid = read_grid(c.in);
  const auto mask = resolve_mask(c, grid.channels());
  stage.add(c.out, encode_npy(apply_drop(grid, *mask)));
  stage_mask(c, mask, stage);
  return {{"n", mask->total_channels}, {"dropped", mask->dropped.size()}};
}

Json cmd_trim(const RunConfig& c, OutputStage& stage) {
  const auto grid = normalize_grid(read_grid(c.in));
  stage.add(c.out, encode_npy(trim_extremes(grid, c.m_per_patch, {c.threads})));
  return {{"m_per_patch", c.m_per_patch}, {"patches", grid.patches()}};
}

Json cmd_prune(const RunConfig& c, OutputStage& stage) {
  const auto ref = normalize_grid(read_grid(c.in));
  const auto fg = read_mask(c.fg);
  const auto result = greedy_channel_prune(ref, fg, c.budget, c.k_bg, {c.threads});
  stage.add(c.out, serialize({ReportKind::Prune, to_json(result)}));
  if (!c.grid_out.empty()) stage.add(c.grid_out, encode_npy(apply_drop(ref, result.mask)));
  return {{"baseline_mismatch", result.error_history.front().mismatch_count},
          {"final_mismatch", result.error_history.back().mismatch_count},
          {"dropped", result.mask.dropped}};
}

Json cmd_match(const RunConfig& c, OutputStage& stage) {
  const auto tgt = read_grid(c.tgt);
  const auto ref = read_grid(c.ref);
  const auto mask = resolve_mask(c, ref.channels());
  const auto map = best_match_map(tgt, ref, mask, c.exclude_self, {c.threads});
  stage.add(c.out, serialize({ReportKind::BestMatch, to_json(map)}));
  stage_mask(c, mask, stage);
  return {{"patches", map.matches.size()}};
}

SimilarityMap similarity_for(const RunConfig& c, std::optional<DropMask>& mask) {
  const auto ref = read_grid(c.ref);
  const auto fg = read_mask(c.fg);
  const auto tgt = read_grid(c.tgt);
  mask = resolve_mask(c, ref.channels());
  return foreground_similarity_map(ref, fg, tgt, aggregator_from_string(c.aggregator), mask,
                                   {c.threads});
}

Json cmd_prompts(const RunConfig& c, OutputStage& stage) {
  std::optional<DropMask> mask;
  const auto map = similarity_for(c, mask);
  const auto prompts = extract_prompts(map, c.k, c.min_separation, c.tau);
  stage.add(c.out, serialize({ReportKind::Prompts,
                              {{"prompts", to_json(prompts)}, {"similarity_map", to_json(map)}}}));
  if (!c.map_out.empty()) stage.add(c.map_out, encode_npy(map.scores, map.height, map.width));
  stage_mask(c, mask, stage);
  return {{"points", prompts.points.size()}, {"has_box", prompts.box.has_value()}};
}

Json cmd_segment(const RunConfig& c, OutputStage& stage) {
  std::optional<DropMask> mask;
  const auto map = similarity_for(c, mask);
  const auto seg = proxy_segment(map, c.tau);
  stage.add(c.out, encode_npy(seg));
  if (!c.map_out.empty()) stage.add(c.map_out, encode_npy(map.scores, map.height, map.width));
  stage_mask(c, mask, stage);
  return {{"foreground_patches", seg.count()}};
}

Json cmd_iou(const RunConfig& c, OutputStage& stage) {
  const double value = iou(read_mask(c.pred), read_mask(c.gt));
  if (!c.out.empty()) stage.add(c.out, canonical_json({{"iou", value}}));
  return {{"iou", value}};
}

Json cmd_mismatch(const RunConfig& c, OutputStage& stage) {
  const auto ref = normalize_grid(read_grid(c.in));
  const auto fg = read_mask(c.fg);
  const auto mask = resolve_mask(c, ref.channels());
  const auto report = mismatch_report(ref, fg, mask, {c.threads});
  stage.add(c.out, serialize({ReportKind::Mismatch, to_json(report)}));
  stage_mask(c, mask, stage);
  return {{"mismatch_count", report.mismatch_count},
          {"total_fg", report.total_fg},
          {"image_flagged", report.image_flagged}};
}

Json cmd_diagnose(const RunConfig& c, OutputStage& stage) {
  const auto grid = normalize_grid(read_grid(c.in));
  const auto d = channel_diagnostics(grid, c.kappa, c.nu);
  stage.add(c.out, serialize({ReportKind::Diagnostics, to_json(d)}));
  if (!c.max_hist_out.empty()) {
    std::vector<double> t;
    for (int i = 0; i <= 20; ++i) t.push_back(i / 20.0);
    stage.add(c.max_hist_out, threshold_counts_csv(d.max_abs, t));
  }
  if (!c.var_hist_out.empty()) {
    std::vector<double> t;
    for (int i = 0; i <= 20; ++i) t.push_back(i / 10000.0);
    stage.add(c.var_hist_out, threshold_counts_csv(d.variance_abs, t));
  }
  return {{"dominant_patch_count", d.dominant_patch_count},
          {"submergence_flag", d.submergence_flag},
          {"mean_abs_overall", d.mean_abs_overall},
          {"mean_variance", d.mean_variance}};
}

Json cmd_interaction(const RunConfig& c, OutputStage& stage) {
  const auto bytes = read_file(c.in);
  Json doc;
  try {
    doc = Json::parse(bytes.begin(), bytes.end());
  } catch (const Json::parse_error& e) {
    throw FormatError(c.in + ": " + e.what());
  }
  const auto strengths = interaction_strength(interaction_query_from_json(doc));
  const std::vector<double> values(strengths.begin(), strengths.end());
  stage.add(c.out, serialize({ReportKind::Interaction, {{"strengths", values}}}));
  return {{"units", values.size()}};
}

Json cmd_synth(const RunConfig& c, OutputStage& stage) {
  std::error_code ec;
  fs::create_directories(c.out_dir, ec);
  if (ec) throw IoError("cannot create '" + c.out_dir + "': " + ec.message());
  Json entries = Json::array();
  for (Index i = 0; i < c.count; ++i) {
    SynthSpec spec = c.synth;
    spec.noise_channel = c.noise_channel;
    spec.seed = c.count == 1 ? *c.seed : derive_seed(*c.seed, {static_cast<std::uint64_t>(i)});
    const auto inst = synth_clusters(spec);
    char stem[32];
    std::snprintf(stem, sizeof stem, "inst_%03lld", static_cast<long long>(i));
    const std::string s(stem);
    const fs::path dir(c.out_dir);
    stage.add((dir / (s + "_ref.npy")).string(), encode_npy(inst.ref));
    stage.add((dir / (s + "_fg.npy")).string(), encode_npy(inst.fg));
    stage.add((dir / (s + "_tgt.npy")).string(), encode_npy(inst.tgt));
    stage.add((dir / (s + "_tgt_gt.npy")).string(), encode_npy(inst.tgt_gt));
    entries.push_back({{"ref", s + "_ref.npy"},
                       {"fg", s + "_fg.npy"},
                       {"tgt", s + "_tgt.npy"},
                       {"tgt_gt", s + "_tgt_gt.npy"},
                       {"seed", spec.seed}});
  }
  const auto manifest = (fs::path(c.out_dir) / "manifest.json").string();
  stage.add(manifest, canonical_json({{"instances", entries}}));
  return {{"instances", c.count}, {"manifest", manifest}};
}

Json cmd_sweep(const RunConfig& c, OutputStage& stage) {
  const auto instances = load_manifest(c.manifest);
  std::vector<double> ratios = c.ratios;
  if (ratios.empty())
    for (int i = 0; i <= 10; ++i) ratios.push_back(i / 20.0);
  const auto options = sweep_options(c);
  const auto result = run_drop_sweep(instances, ratios, c.trials, *c.seed, options, {c.threads});
  stage.add(c.out, sweep_csv(result, options));
  if (!c.json_out.empty()) stage.add(c.json_out, serialize({ReportKind::Sweep, to_json(result)}));
  return {{"rows", result.rows.size()}, {"metric", std::string(to_string(result.metric))}};
}

Json cmd_curve(const RunConfig& c, OutputStage& stage) {
  const auto instances = load_manifest(c.manifest);
  const auto options = sweep_options(c);
  const auto result =
      run_cumulative_curve(instances, *c.ratio, c.trials, *c.seed, options, {c.threads});
  stage.add(c.out, curve_csv(result, options));
  if (!c.json_out.empty()) stage.add(c.json_out, serialize({ReportKind::Curve, to_json(result)}));
  return {{"rows", result.rows.size()}, {"metric", std::string(to_string(result.metric))}};
}

void add_mask_flags(CLI::App* sub, RunConfig& c) {
  sub->add_option("--ratio", c.ratio, "Sample a drop mask with this channel fraction");
  sub->add_option("--seed", c.seed, "Seed for the sampled mask");
  sub->add_option("--mask-in", c.mask_in, "Apply a saved drop mask (JSON)");
  sub->add_option("--mask-out", c.mask_out, "Save the drop mask used (JSON)");
}

void add_similarity_flags(CLI::App* sub, RunConfig& c) {
  sub->add_option("--ref", c.ref, "Reference grid (.npy)")->required();
  sub->add_option("--fg", c.fg, "Reference foreground mask (.npy)")->required();
  sub->add_option("--tgt", c.tgt, "Target grid (.npy)")->required();
  sub->add_option("--aggregator", c.aggregator, "max or mean over foreground patches");
  sub->add_option("--tau", c.tau, "Score threshold");
  sub->add_option("--map-out", c.map_out, "Export the similarity map as (H,W) .npy");
  add_mask_flags(sub, c);
}

}  // namespace

int run_cli(const std::vector<std::string>& raw_args, std::ostream& out, std::ostream& err) {
  RunConfig c;
  CLI::App app{"Channel-drop patch matching toolkit", "nubblematch"};
  app.require_subcommand(1);
  app.fallthrough();
  app.add_option("--threads", c.threads, "Worker threads (results do not depend on it)");
  std::string config_path;
  app.add_option("--config", config_path, "JSON file of flag defaults; explicit flags win");

  std::map<std::string, Command> commands;
  auto sub = [&](const std::string& name, const std::string& help, Command fn) {
    commands[name] = std::move(fn);
    return app.add_subcommand(name, help);
  };

  auto* s = sub("normalize", "L2-normalize every patch", cmd_normalize);
  s->add_option("--in", c.in)->required();
  s->add_option("--out", c.out)->required();

  s = sub("drop", "Zero a random or saved set of channels", cmd_drop);
  s->add_option("--in", c.in)->required();
  s->add_option("--out", c.out)->required();
  add_mask_flags(s, c);

  s = sub("trim", "Zero the largest-magnitude channels of each patch", cmd_trim);
  s->add_option("--in", c.in)->required();
  s->add_option("--out", c.out)->required();
  s->add_option("--m-per-patch", c.m_per_patch)->required();

  s = sub("prune", "Greedy channel pruning against foreground mismatches", cmd_prune);
  s->add_option("--in", c.in)->required();
  s->add_option("--fg", c.fg)->required();
  s->add_option("--out", c.out, "Prune report (JSON)")->required();
  s->add_option("--grid-out", c.grid_out, "Pruned grid (.npy)");
  s->add_option("--budget", c.budget)->required();
  s->add_option("--k-bg", c.k_bg, "Background candidates per foreground patch");

  s = sub("match", "Best reference match for every target patch", cmd_match);
  s->add_option("--tgt", c.tgt)->required();
  s->add_option("--ref", c.ref)->required();
  s->add_option("--out", c.out)->required();
  s->add_flag("--exclude-self", c.exclude_self);
  add_mask_flags(s, c);

  s = sub("prompts", "Prompt points and box from the foreground similarity map", cmd_prompts);
  add_similarity_flags(s, c);
  s->add_option("--out", c.out)->required();
  s->add_option("--k", c.k, "Maximum number of points");
  s->add_option("--min-separation", c.min_separation, "Chebyshev spacing between points");

  s = sub("segment", "Threshold segmentation of the target", cmd_segment);
  add_similarity_flags(s, c);
  s->add_option("--out", c.out)->required();

  s = sub("iou", "Intersection over union of two masks", cmd_iou);
  s->add_option("--pred", c.pred)->required();
  s->add_option("--gt", c.gt)->required();
  s->add_option("--out", c.out);

  s = sub("mismatch", "Foreground patches whose best match is background", cmd_mismatch);
  s->add_option("--in", c.in)->required();
  s->add_option("--fg", c.fg)->required();
  s->add_option("--out", c.out)->required();
  add_mask_flags(s, c);

  s = sub("diagnose", "Dominant-channel and channel-submergence statistics", cmd_diagnose);
  s->add_option("--in", c.in)->required();
  s->add_option("--out", c.out)->required();
  s->add_option("--kappa", c.kappa);
  s->add_option("--nu", c.nu);
  s->add_option("--max-hist-out", c.max_hist_out, "CSV of patch counts with max |v| above thresholds");
  s->add_option("--var-hist-out", c.var_hist_out, "CSV of patch counts with variance above thresholds");

  s = sub("interaction", "Interaction strength at the first hidden layer", cmd_interaction);
  s->add_option("--in", c.in, "Query JSON")->required();
  s->add_option("--out", c.out)->required();

  s = sub("synth", "Generate synthetic reference/target instances", cmd_synth);
  s->add_option("--out-dir", c.out_dir)->required();
  s->add_option("--seed", c.seed);
  s->add_option("--count", c.count);
  s->add_option("--height", c.synth.height);
  s->add_option("--width", c.synth.width);
  s->add_option("--channels", c.synth.channels);
  s->add_option("--fg-fraction", c.synth.fg_fraction);
  s->add_option("--margin", c.synth.margin);
  s->add_option("--noise-sigma", c.synth.noise_sigma);
  s->add_option("--noise-channel", c.noise_channel);
  s->add_option("--dominant-value", c.synth.dominant_value);
  s->add_option("--nubble-fraction", c.synth.nubble_fraction);

  for (const char* name : {"sweep", "curve"}) {
    const bool is_sweep = std::string(name) == "sweep";
    s = is_sweep ? sub(name, "Metric versus drop ratio", cmd_sweep)
                 : sub(name, "Cumulative mean improvement over instances", cmd_curve);
    s->add_option("--manifest", c.manifest)->required();
    s->add_option("--out", c.out, "CSV output")->required();
    s->add_option("--json-out", c.json_out, "Report output (JSON)");
    s->add_option("--trials", c.trials);
    s->add_option("--seed", c.seed);
    s->add_option("--metric", c.metric, "proxy_iou, mismatch_rate or prompt_hit_rate");
    s->add_option("--tau", c.tau);
    s->add_option("--aggregator", c.aggregator);
    s->add_option("--prompt-k", c.prompt_k);
    s->add_option("--prompt-separation", c.prompt_separation);
    if (is_sweep)
      s->add_option("--ratios", c.ratios)->delimiter(',');
    else
      s->add_option("--ratio", c.ratio)->required();
  }

  try {
    auto args = merge_config(raw_args);
    std::reverse(args.begin(), args.end());
    app.parse(args);
    c.command = app.get_subcommands().front()->get_name();
    validate(c);

    OutputStage stage;
    Json summary = commands.at(c.command)(c, stage);
    stage.commit();
    summary["command"] = c.command;
    summary["status"] = "ok";
    summary["outputs"] = stage.paths();
    out << canonical_json(summary);
    return 0;
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    std::string what = e.what();
    for (std::size_t i = 0; i < raw_args.size(); ++i) {
      const std::string& a = raw_args[i];
      if (a == "--threads" || a == "--config") {
        ++i;
        continue;
      }
      if (a.empty() || a[0] == '-') continue;
      if (!commands.count(a)) what = "unknown subcommand '" + a + "'";
      break;
    }
    err << "nubblematch: " << what << "\n\n" << app.help();
    return 2;
  } catch (const IoError& e) {
    err << "nubblematch: I/O error: " << e.what() << "\n";
    return 1;
  } catch (const Error& e) {
    err << "nubblematch: " << e.what() << "\n";
    return 2;
  } catch (const Json::exception& e) {
    err << "nubblematch: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "nubblematch: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace nubble
