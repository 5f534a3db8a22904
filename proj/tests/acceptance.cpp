// Acceptance gate: one PASS/FAIL line per criterion.
//   nubble_acceptance            run everything
//   nubble_acceptance --only ID  run one criterion
//   nubble_acceptance --list     print the criterion ids

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <sstream>
#include <thread>

#include "nubble/cli.hpp"
#include "nubble/diagnostics.hpp"
#include "nubble/drop.hpp"
#include "nubble/harness.hpp"
#include "nubble/kernel.hpp"
#include "nubble/matching.hpp"
#include "nubble/random.hpp"
#include "nubble/report.hpp"
#include "nubble/tensor_io.hpp"
#include "support.hpp"

using namespace nubble;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  std::string id;
  std::function<Outcome()> run;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* pattern, double a, double b = 0, double c = 0, double d = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, pattern, a, b, c, d);
  return buf;
}

Exec all_cores() { return {std::max(1u, std::thread::hardware_concurrency())}; }

std::string slurp(const fs::path& path) {
  const auto bytes = read_file(path);
  return std::string(bytes.begin(), bytes.end());
}

// --- criteria ----------------------------------------------------------------

Outcome brute_force_equivalence() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(2024);
  Index coord_mismatches = 0;
  double max_err = 0.0;
  for (int k = 0; k < 100; ++k) {
    const auto ref = testing::random_grid(rng, 8, 8, 32);
    const auto tgt = testing::random_grid(rng, 8, 8, 32);
    const auto fg = testing::random_mask(rng, 8, 8);
    std::optional<DropMask> drop;
    std::set<Index> skip;
    if (k % 2) {
      drop = sample_drop_mask(32, 0.2, static_cast<std::uint64_t>(k));
      skip.insert(drop->dropped.begin(), drop->dropped.end());
    }

    const auto map = best_match_map(tgt, ref, drop);
    const auto oracle = testing::naive_best_match(tgt, ref, skip);
    for (Index i = 0; i < 64; ++i) {
      coord_mismatches += map.matches[i].linear != oracle[i].linear;
      max_err = std::max(max_err, std::abs(map.matches[i].score - oracle[i].score));
    }
    for (bool mean : {false, true}) {
      const auto fmap = foreground_similarity_map(ref, fg, tgt, mean ? Aggregator::Mean : Aggregator::Max, drop);
      const auto fo = testing::naive_fg_map(ref, fg, tgt, mean, skip);
      for (Index i = 0; i < 64; ++i) max_err = std::max(max_err, std::abs(fmap.scores[i] - fo[i]));
    }
  }
  const double elapsed = seconds_since(t0);
  return {coord_mismatches == 0 && max_err <= 1e-12 && elapsed < 10.0,
          fmt("coord mismatches %.0f, max score error %.3g, %.2f s (limit 10 s)",
              static_cast<double>(coord_mismatches), max_err, elapsed)};
}

Outcome no_drop_identity() {
  int differences = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    SynthSpec spec;
    spec.noise_channel = 1;
    spec.noise_sigma = 0.03;
    spec.seed = seed;
    const auto inst = synth_clusters(spec);
    const auto zero = sample_drop_mask(spec.channels, 0.0, seed);
    const auto empty = make_drop_mask(spec.channels, {});
    differences += !zero.empty();
    differences += apply_drop(inst.ref, zero).values() != inst.ref.values();

    const auto bm = canonical_json(to_json(best_match_map(inst.tgt, inst.ref)));
    differences += canonical_json(to_json(best_match_map(inst.tgt, inst.ref, zero))) != bm;
    differences += canonical_json(to_json(best_match_map(inst.tgt, inst.ref, empty))) != bm;
    for (auto agg : {Aggregator::Max, Aggregator::Mean}) {
      const auto fm = canonical_json(to_json(foreground_similarity_map(inst.ref, inst.fg, inst.tgt, agg)));
      differences += canonical_json(to_json(foreground_similarity_map(inst.ref, inst.fg, inst.tgt, agg, zero))) != fm;
    }
    const auto mr = serialize({ReportKind::Mismatch, to_json(mismatch_report(inst.ref, inst.fg))});
    differences += serialize({ReportKind::Mismatch, to_json(mismatch_report(inst.ref, inst.fg, empty))}) != mr;
  }

  // Sweep rows at ratio 0: mean and baseline print the same bytes, std is 0.
  std::vector<Instance> batch;
  for (std::uint64_t s = 0; s < 6; ++s) {
    SynthSpec spec;
    spec.noise_channel = 2;
    spec.noise_sigma = 0.02;
    spec.seed = 100 + s;
    batch.push_back(synth_clusters(spec));
  }
  for (auto metric : {Metric::ProxyIou, Metric::MismatchRate, Metric::PromptHitRate}) {
    SweepOptions opts;
    opts.metric = metric;
    const auto sweep = run_drop_sweep(batch, {0.0}, 7, 3, opts, all_cores());
    const auto& row = sweep.rows.front();
    differences += format_real(row.mean) != format_real(row.baseline);
    differences += row.std != 0.0;
  }

  // End to end: `match` with and without a ratio-0 mask.
  testing::TempDir dir("accept_nodrop");
  write_tensor(batch[0].ref, dir.file("ref.npy"));
  write_tensor(batch[0].tgt, dir.file("tgt.npy"));
  std::ostringstream out, err;
  int codes = run_cli({"match", "--tgt", dir.file("tgt.npy"), "--ref", dir.file("ref.npy"), "--out", dir.file("a.json")}, out, err);
  codes += run_cli({"match", "--tgt", dir.file("tgt.npy"), "--ref", dir.file("ref.npy"), "--ratio", "0", "--seed", "1",
                    "--out", dir.file("b.json")},
                   out, err);
  differences += codes != 0 || slurp(dir.file("a.json")) != slurp(dir.file("b.json"));

  return {differences == 0, fmt("%.0f differences across maps, reports, sweep rows and CLI output", differences)};
}

Outcome determinism() {
  testing::TempDir dir("accept_det");
  const std::string cli = NUBBLE_CLI_PATH;
  auto sh = [&](const std::string& args) {
    const std::string cmd = "\"" + cli + "\" " + args + " > /dev/null 2>&1";
    return std::system(cmd.c_str());
  };
  auto p = [&](const std::string& name) { return "\"" + dir.file(name) + "\""; };
  int failures = 0;
  int compared = 0;
  auto same = [&](const std::string& a, const std::string& b) {
    ++compared;
    if (slurp(dir.file(a)) != slurp(dir.file(b))) ++failures;
  };

  for (const char* tag : {"a", "b"}) {
    const std::string t = tag;
    failures += sh("synth --out-dir " + p("syn_" + t) +
                   " --seed 31 --count 3 --noise-channel 4 --noise-sigma 0.03 --channels 48") != 0;
  }
  for (const char* f : {"manifest.json", "inst_000_ref.npy", "inst_001_fg.npy", "inst_002_tgt.npy",
                        "inst_002_tgt_gt.npy"})
    same(std::string("syn_a/") + f, std::string("syn_b/") + f);

  const std::string manifest = p("syn_a/manifest.json");
  const std::string in = p("syn_a/inst_000_ref.npy");
  for (const char* t : {"1", "8"}) {
    const std::string s = t;
    failures += sh("drop --threads " + s + " --in " + in + " --ratio 0.3 --seed 77 --out " + p("drop_" + s + ".npy") +
                   " --mask-out " + p("mask_" + s + ".json")) != 0;
    failures += sh("sweep --threads " + s + " --manifest " + manifest +
                   " --ratios 0,0.1,0.2,0.3 --trials 25 --seed 5 --out " + p("sweep_" + s + ".csv") +
                   " --json-out " + p("sweep_" + s + ".json")) != 0;
    failures += sh("curve --threads " + s + " --manifest " + manifest + " --ratio 0.2 --trials 10 --seed 5 --out " +
                   p("curve_" + s + ".csv")) != 0;
  }
  failures += sh("sweep --threads 1 --manifest " + manifest +
                 " --ratios 0,0.1,0.2,0.3 --trials 25 --seed 5 --out " + p("sweep_again.csv")) != 0;
  same("drop_1.npy", "drop_8.npy");
  same("mask_1.json", "mask_8.json");
  same("sweep_1.csv", "sweep_8.csv");
  same("sweep_1.json", "sweep_8.json");
  same("sweep_1.csv", "sweep_again.csv");
  same("curve_1.csv", "curve_8.csv");

  // The library paths directly, with records of every cell.
  std::vector<Instance> batch;
  for (std::uint64_t s = 0; s < 3; ++s) {
    SynthSpec spec;
    spec.noise_channel = 0;
    spec.noise_sigma = 0.05;
    spec.seed = s;
    batch.push_back(synth_clusters(spec));
  }
  SweepOptions opts;
  opts.record_cells = true;
  const auto a = run_drop_sweep(batch, {0.1, 0.4}, 9, 12, opts, {1});
  const auto b = run_drop_sweep(batch, {0.1, 0.4}, 9, 12, opts, {8});
  ++compared;
  failures += sweep_csv(a, opts) != sweep_csv(b, opts);
  for (std::size_t i = 0; i < a.cells.size(); ++i) failures += a.cells[i].mask.dropped != b.cells[i].mask.dropped;

  return {failures == 0, fmt("%.0f comparisons across processes and thread counts 1/8, %.0f failures", compared, failures)};
}

Outcome dominant_threshold() {
  std::mt19937_64 rng(404);
  Index violations = 0, flagged = 0, patches = 0;
  for (int rep = 0; rep < 200; ++rep) {
    auto raw = testing::random_grid(rng, 4, 4, 16);
    RowMatrix<double> m = raw.values();
    for (Index p = 0; p < m.rows(); p += 3) m(p, rep % 16) *= 1.0 + (rep % 7);  // push some peaks up
    const auto g = normalize_grid(FeatureGrid(4, 4, m));
    const auto d = channel_diagnostics(g);
    Index count = 0;
    for (Index p = 0; p < g.patches(); ++p) {
      double peak = 0.0;
      for (Index c = 0; c < 16; ++c) peak = std::max(peak, std::abs(g.values()(p, c)));
      const bool expect = peak > 0.5;
      violations += d.dominant(p) != expect;
      if (d.dominant(p)) {
        ++flagged;
        violations += !(d.max_abs[p] * d.max_abs[p] > 0.25);
      }
      count += expect;
      ++patches;
    }
    violations += count != d.dominant_patch_count;
  }

  // Exactly 0.5 is not flagged; the next double up is.
  RowMatrix<double> edge(2, 4);
  edge << 0.5, -0.5, 0.5, 0.5, std::nextafter(0.5, 1.0), 0.5, 0.5, 0.4999;
  FeatureGrid e(1, 2, edge);
  e.set_normalized(true);
  const auto de = channel_diagnostics(e);
  const bool boundary_ok = !de.dominant(0) && de.dominant(1) && de.dominant_patch_count == 1;
  return {violations == 0 && boundary_ok && flagged > 0 && flagged < patches,
          fmt("%.0f violations over %.0f patches (%.0f flagged); ", static_cast<double>(violations),
              static_cast<double>(patches), static_cast<double>(flagged)) +
              "max_abs = 0.5 flagged: " + (de.dominant(0) ? "yes" : "no") +
              ", next double above flagged: " + (de.dominant(1) ? "yes" : "no")};
}

Outcome interaction_oracle() {
  InteractionQuery q;
  Eigen::MatrixXd w(2, 3);
  w << 1, -2, 3, 4, 5, -6;
  q.weights = {w};
  q.output_weights = Eigen::Vector2d(2, -1);
  q.interaction = {0, 1};
  const auto worked = interaction_strength(q);
  const bool worked_ok = std::abs(worked[0] - 3.0) <= 1e-12 && std::abs(worked[1] - 4.5) <= 1e-12;

  std::mt19937_64 rng(55);
  double max_err = 0.0;
  for (int rep = 0; rep < 50; ++rep) {
    auto net = testing::random_network(rng);
    net.aggregator = rep % 2 ? StrengthAggregator::Min : StrengthAggregator::Mean;
    const auto s = interaction_strength(net);
    for (Index i = 0; i < s.size(); ++i) max_err = std::max(max_err, std::abs(s[i] - testing::oracle_strength(net, i)));
  }
  return {worked_ok && max_err <= 1e-12,
          fmt("worked example [%.17g, %.17g]; max error over 50 networks %.3g", worked[0], worked[1], max_err)};
}

Outcome nubble_recovery() {
  const auto t0 = Clock::now();
  const Index channels = 128, nubble = 9;
  std::vector<Instance> batch;
  for (std::uint64_t seed = 0; batch.size() < 4 && seed < 100; ++seed) {
    SynthSpec spec;
    spec.channels = channels;
    spec.noise_channel = nubble;
    spec.noise_sigma = 0.02;
    spec.seed = seed;
    auto inst = synth_clusters(spec);
    if (mismatch_report(inst.ref, inst.fg).mismatch_count > 0) batch.push_back(std::move(inst));
  }
  if (batch.size() < 4) return {false, "could not build instances with a baseline mismatch"};

  SweepOptions opts;
  opts.metric = Metric::MismatchRate;
  opts.record_cells = true;
  const double ratio = 0.25;
  const Index trials = 150;
  const auto sweep = run_drop_sweep(batch, {ratio}, trials, 2718, opts, all_cores());

  Index included = 0, recovered = 0, other_recovered = 0;
  for (const auto& cell : sweep.cells) {
    if (cell.mask.contains(nubble)) {
      ++included;
      recovered += cell.metric == 0.0;
    } else {
      other_recovered += cell.metric == 0.0;
    }
  }
  const double n = static_cast<double>(sweep.cells.size());
  const double p = static_cast<double>(drop_count(channels, ratio)) / static_cast<double>(channels);
  const double sigma = std::sqrt(n * p * (1 - p));
  const double z = (static_cast<double>(included) - n * p) / sigma;
  const double rate = included ? static_cast<double>(recovered) / static_cast<double>(included) : 0.0;
  const double elapsed = seconds_since(t0);
  const bool pass = rate >= 0.95 && std::abs(z) <= 3.0 && n >= 500 && elapsed < 60.0;
  return {pass, fmt("recovered %.1f%% of %.0f trials dropping the channel; inclusion z = %.2f over %.0f trials", 100 * rate,
                    static_cast<double>(included), z, n) +
                    fmt(" (without it: %.1f%%); %.1f s", 100.0 * other_recovered / std::max(1.0, n - included), elapsed)};
}

struct ChangeRates {
  double coord = 0.0;
  double cls = 0.0;
};

// Share of target patches whose best reference match moves (coordinate, and
// fg/bg class of the match) when a random channel subset is dropped.
ChangeRates match_change(double margin, double sigma, double ratio, Index trials) {
  std::vector<Index> changed(static_cast<std::size_t>(trials)), class_changed(static_cast<std::size_t>(trials));
  SynthSpec spec;
  spec.margin = margin;
  spec.noise_sigma = sigma;
  parallel_for(trials, all_cores(), [&](Index t) {
    SynthSpec s = spec;
    s.seed = static_cast<std::uint64_t>(t);
    const auto inst = synth_clusters(s);
    const auto mask = sample_drop_mask(s.channels, ratio, derive_seed(1234, {static_cast<std::uint64_t>(t)}));
    const auto base = best_match_map(inst.tgt, inst.ref);
    const auto dropped = best_match_map(inst.tgt, inst.ref, mask);
    for (std::size_t i = 0; i < base.matches.size(); ++i) {
      const Index a = base.matches[i].linear, b = dropped.matches[i].linear;
      changed[t] += a != b;
      class_changed[t] += inst.fg[a] != inst.fg[b];
    }
  });
  double total = 0, total_class = 0;
  for (Index t = 0; t < trials; ++t) total += changed[t], total_class += class_changed[t];
  const double n = static_cast<double>(trials * spec.height * spec.width);
  return {total / n, total_class / n};
}

Outcome low_impact() {
  // Worst corner of the stated region: margin 0.5, noise 0.05, ratio 0.3.
  const auto corner = match_change(0.5, 0.05, 0.3, 200);
  const auto clean = match_change(0.5, 0.0, 0.3, 200);
  return {corner.coord < 0.05,
          fmt("best-match coordinate changed for %.2f%% of patches (limit 5%%); fg/bg class of the match "
              "changed for %.2f%%; same drop without noise: %.2f%%",
              100 * corner.coord, 100 * corner.cls, 100 * clean.coord)};
}

Outcome sweep_shape() {
  std::vector<Instance> batch;
  for (std::uint64_t seed = 0; seed < 16; ++seed) {
    SynthSpec spec;
    spec.height = spec.width = 12;
    spec.channels = 128;
    spec.margin = 0.8;
    spec.noise_sigma = 0.02;
    spec.noise_channel = 5;
    spec.nubble_fraction = 0.1;
    spec.dominant_value = 4.0;
    spec.seed = 500 + seed;
    batch.push_back(synth_clusters(spec));
  }
  SweepOptions opts;
  const auto sweep = run_drop_sweep(batch, {0.0, 0.1, 0.2, 0.3}, 20, 8, opts, all_cores());
  bool pass = sweep.rows[0].mean == sweep.rows[0].baseline;
  for (std::size_t r = 1; r < sweep.rows.size(); ++r) pass = pass && sweep.rows[r].mean > sweep.rows[r].baseline;
  const auto curve = run_cumulative_curve(batch, 0.0, 20, 8, opts, all_cores());
  bool curve_zero = true;
  for (const auto& row : curve.rows) curve_zero = curve_zero && row.mean_improvement == 0.0;
  pass = pass && curve_zero;
  return {pass, fmt("proxy IoU baseline %.4f; ratio 0.1 %.4f, 0.2 %.4f, 0.3 %.4f", sweep.rows[0].baseline,
                    sweep.rows[1].mean, sweep.rows[2].mean, sweep.rows[3].mean) +
                    "; ratio-0 curve all zero: " + (curve_zero ? "yes" : "no")};
}

Outcome format_fidelity() {
  testing::TempDir dir("accept_fmt");
  std::mt19937_64 rng(8080);
  std::uniform_int_distribution<int> dim(1, 9), chans(1, 40);
  int failures = 0;
  for (int k = 0; k < 100; ++k) {
    std::vector<std::uint8_t> bytes;
    if (k % 3 == 2) {
      bytes = encode_npy(testing::random_mask(rng, dim(rng) + 1, dim(rng)));
    } else {
      bytes = encode_npy(testing::random_grid(rng, dim(rng), dim(rng), chans(rng)));
    }
    const auto path = dir.file("t" + std::to_string(k) + ".npy");
    write_file(path, bytes);
    const auto tensor = read_tensor(path);
    const auto again = std::visit([](const auto& t) { return encode_npy(t); }, tensor);
    failures += again != bytes || read_file(path) != bytes;
    if (const auto* g = std::get_if<FeatureGrid>(&tensor)) {
      const auto direct = std::get<FeatureGrid>(decode_npy(bytes));
      failures += direct.values() != g->values();
    }
  }

  // Reports recomputed from scratch serialize to the same bytes.
  auto reports = [] {
    SynthSpec spec;
    spec.noise_channel = 3;
    spec.noise_sigma = 0.02;
    const auto inst = synth_clusters(spec);
    std::vector<std::string> out;
    out.push_back(serialize({ReportKind::Mismatch, to_json(mismatch_report(inst.ref, inst.fg))}));
    out.push_back(serialize({ReportKind::Diagnostics, to_json(channel_diagnostics(inst.ref))}));
    out.push_back(serialize({ReportKind::Sweep, to_json(run_drop_sweep({inst}, {0.0, 0.2}, 4, 1))}));
    const auto map = foreground_similarity_map(inst.ref, inst.fg, inst.tgt);
    out.push_back(serialize({ReportKind::Prompts, {{"prompts", to_json(extract_prompts(map, 3, 1, 0.5))},
                                                   {"similarity_map", to_json(map)}}}));
    return out;
  };
  const auto first = reports(), second = reports();
  for (std::size_t i = 0; i < first.size(); ++i) {
    failures += first[i] != second[i];
    failures += serialize(parse_report(first[i])) != first[i];
  }
  return {failures == 0, fmt("100 NPY round trips and %.0f reports, %.0f byte differences", first.size(), failures)};
}

Outcome kernel_throughput() {
  std::mt19937_64 rng(1);
  const auto g = testing::random_grid(rng, 64, 64, 1024);
  const auto t0 = Clock::now();
  const auto m = cosine_matrix(g.values(), g.values(), {1});
  const double elapsed = seconds_since(t0);
  double max_err = 0.0;
  for (Index k = 0; k < 64; ++k) {
    const Index i = (k * 977) % 4096, j = (k * 1543 + 11) % 4096;
    max_err = std::max(max_err, std::abs(m(i, j) - testing::naive_cosine(g, i, g, j)));
    max_err = std::max(max_err, std::abs(m(i, i) - 1.0));
  }
  return {elapsed < 60.0 && max_err < 1e-12,
          fmt("4096 x 4096 x 1024 cosine matrix in %.2f s single-threaded (limit 60 s); spot error %.3g", elapsed, max_err)};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> criteria = {
      {"brute_force_equivalence", brute_force_equivalence},
      {"no_drop_identity", no_drop_identity},
      {"determinism", determinism},
      {"dominant_threshold", dominant_threshold},
      {"interaction_oracle", interaction_oracle},
      {"nubble_recovery", nubble_recovery},
      {"low_impact", low_impact},
      {"sweep_shape", sweep_shape},
      {"format_fidelity", format_fidelity},
      {"kernel_throughput", kernel_throughput},
  };

  std::string only;
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--list") {
      for (const auto& c : criteria) std::cout << c.id << "\n";
      return 0;
    }
    if (arg == "--only" && i + 1 < argc) {
      only = argv[++i];
    } else {
      std::cerr << "usage: nubble_acceptance [--only ID] [--list]\n";
      return 2;
    }
  }

  int selected = 0, failed = 0;
  for (const auto& c : criteria) {
    if (!only.empty() && c.id != only) continue;
    ++selected;
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::cout << (o.pass ? "PASS " : "FAIL ") << c.id << ": " << o.detail << std::endl;
  }
  if (selected == 0) {
    std::cerr << "unknown criterion '" << only << "'\n";
    return 2;
  }
  return failed == 0 ? 0 : 1;
}
