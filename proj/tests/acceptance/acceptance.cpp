// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <fmt/format.h>

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "grad_check.hpp"
#include "oracles.hpp"
#include "pstrp/cli.hpp"
#include "pstrp/config.hpp"
#include "pstrp/patching.hpp"
#include "pstrp/relations.hpp"
#include "pstrp/scoring.hpp"
#include "pstrp/training.hpp"
#include "test_support.hpp"

using namespace pstrp;
namespace fs = std::filesystem;

namespace {

// Pinned tolerances and thresholds.
constexpr double kRelationTol = 1e-12;
constexpr double kRelationSeconds = 30.0;
constexpr int kRelationCubes = 200;
constexpr int kPatchingCases = 1000;
constexpr double kOrderLossTol = 1e-9;
constexpr double kTotalLossTol = 1e-12;
constexpr int kGradParams = 50;
constexpr double kGradTol = 1e-4;
constexpr double kGradSeconds = 300.0;
constexpr int kAurocSets = 1000;
constexpr double kAurocTol = 1e-9;
constexpr int kRandomLabelSamples = 10000;
constexpr double kRandomLabelBand = 0.02;
constexpr std::int64_t kScoringUlps = 2;  // decimal inputs are not representable in binary64
constexpr double kEndToEndSeconds = 20.0 * 60.0;
constexpr double kMinTrainedAuroc = 0.75;
constexpr double kMinAurocGain = 0.15;

struct Outcome {
  bool pass = true;
  std::string detail;

  void fail(const std::string& why) {
    if (pass) detail = why;
    pass = false;
  }
};

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

std::int64_t ulp_distance(double a, double b) {
  if (a == b) return 0;
  std::int64_t ia;
  std::int64_t ib;
  std::memcpy(&ia, &a, sizeof a);
  std::memcpy(&ib, &b, sizeof b);
  if ((ia < 0) != (ib < 0)) return std::numeric_limits<std::int64_t>::max();
  return ia > ib ? ia - ib : ib - ia;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

// 1
Outcome relation_oracles() {
  Outcome o;
  Rng rng(101);
  const auto start = std::chrono::steady_clock::now();
  double worst = 0.0;
  for (int k = 0; k < kRelationCubes; ++k) {
    const int grid = 2 + k % 2;
    const int half_window = (k / 2) % 2 == 0 ? 2 : 3;
    const int channels = (k / 4) % 2 == 0 ? 1 : 3;
    const auto cube = testing::random_cube(rng, half_window, channels);
    const auto spatial = slice_spatial(cube, grid);
    const auto temporal = slice_temporal(cube);
    const std::pair<RelationMatrix, std::vector<double>> pairs[] = {
        {canberra_matrix(spatial), oracle::canberra(spatial)},
        {cosine_matrix(temporal), oracle::cosine(temporal)}};
    for (const auto& [m, ref] : pairs) {
      for (int i = 0; i < m.n; ++i) {
        if (m.at(i, i) != 0.0) o.fail(fmt::format("cube {}: nonzero diagonal", k));
        for (int j = 0; j < m.n; ++j) {
          const double v = m.at(i, j);
          worst = std::max(worst, std::abs(v - ref[static_cast<std::size_t>(i) * m.n + j]));
          if (v != m.at(j, i)) o.fail(fmt::format("cube {}: asymmetric at ({},{})", k, i, j));
          if (!(v >= 0.0 && v <= 1.0)) o.fail(fmt::format("cube {}: entry {} outside [0,1]", k, v));
        }
      }
    }
  }
  const double elapsed = seconds_since(start);
  if (worst > kRelationTol) o.fail(fmt::format("max oracle deviation {:.3g}", worst));
  if (elapsed > kRelationSeconds) o.fail(fmt::format("took {:.1f} s", elapsed));
  if (o.pass) o.detail = fmt::format("{} cubes, max deviation {:.2g}, {:.1f} s", kRelationCubes, worst, elapsed);
  return o;
}

// 2
Outcome patching_round_trips() {
  Outcome o;
  Rng rng(202);
  for (int k = 0; k < kPatchingCases; ++k) {
    const int grid = 2 + static_cast<int>(rng.below(3));
    const int half_window = 1 + static_cast<int>(rng.below(4));
    const int channels = rng.below(2) == 0 ? 1 : 3;
    const auto cube = testing::random_cube(rng, half_window, channels);
    const auto spatial = slice_spatial(cube, grid);
    const auto temporal = slice_temporal(cube);
    if (assemble_spatial(spatial) != cube.data) o.fail(fmt::format("case {}: spatial tiling", k));
    if (assemble_temporal(temporal) != cube.data) o.fail(fmt::format("case {}: temporal tiling", k));
    for (const PatchSet* ps : {&spatial, &temporal}) {
      const auto s = shuffle(*ps, rng);
      if (apply_permutation(s.shuffled, s.perm.inverse()).data != ps->data) {
        o.fail(fmt::format("case {}: inverse permutation", k));
      }
      const int n = ps->n;
      OrderPredictionMatrix m{n, testing::random_vector(rng, static_cast<std::size_t>(n) * n, 0, 1)};
      if (unalign_matrix(align_matrix(m, s.perm), s.perm).m != m.m) {
        o.fail(fmt::format("case {}: align_matrix round trip", k));
      }
    }
  }
  if (o.pass) o.detail = fmt::format("{} cases", kPatchingCases);
  return o;
}

// 3
Outcome loss_analytics() {
  Outcome o;
  Rng rng(303);
  for (const int n : {4, 7, 9, 16}) {
    const std::vector<double> logits(static_cast<std::size_t>(n) * n, 0.7);
    const double loss = order_loss(logits, Permutation{rng.permutation(n)});
    if (std::abs(loss - std::log(static_cast<double>(n))) > kOrderLossTol) {
      o.fail(fmt::format("uniform order loss {} for n={}", loss, n));
    }
  }
  for (const int n : {4, 7, 9, 16}) {
    std::vector<double> d(static_cast<std::size_t>(n) * n, 0.0);
    for (int i = 0; i < n; ++i) {
      for (int j = i + 1; j < n; ++j) d[static_cast<std::size_t>(i) * n + j] = d[static_cast<std::size_t>(j) * n + i] = rng.uniform();
    }
    const RelationMatrix m{RelationKind::kCanberraSpatial, n, d};
    if (distance_loss(m, m) != 0.0) o.fail(fmt::format("distance_loss(pred=target) nonzero for n={}", n));
  }
  const double total = total_loss({1, 1, 1, 1}, LossWeights{});
  if (std::abs(total - 2.2) > kTotalLossTol) o.fail(fmt::format("total loss {}", total));
  if (o.pass) o.detail = fmt::format("ln n for n in 4,7,9,16; total {:.15g}", total);
  return o;
}

// 4
Outcome gradient_check() {
  Outcome o;
  const auto start = std::chrono::steady_clock::now();
  Rng rng(404);
  const int grid = 2;
  const int half_window = 3;
  const int L = 2 * half_window + 1;
  const int side = spatial_patch_side(grid);
  const auto s_cfg = preset_stream_config(SizePreset::kTiny, grid * grid, L * side * side);
  const auto t_cfg = preset_stream_config(SizePreset::kTiny, L, kCubeSize * kCubeSize);
  if (s_cfg.embed_dim != 64 || s_cfg.depth != 2) o.fail("tiny preset is not embed 64 / depth 2");
  auto model = build_two_stream(s_cfg, t_cfg, 5);
  const auto sample = prepare_sample(testing::random_cube(rng, half_window, 1), grid);
  const Permutation ps{rng.permutation(grid * grid)};
  const Permutation pt{rng.permutation(L)};
  const LossWeights w;
  auto loss = [&] {
    Rng masks(17);
    return total_loss(sample_loss(model, sample, ps, pt, w, Mode::kTrain, &masks, 0.0), w);
  };
  model.zero_grad();
  {
    Rng masks(17);
    sample_loss(model, sample, ps, pt, w, Mode::kTrain, &masks, 1.0);
  }
  const auto r = testing::check_gradients(model.parameters(), loss, kGradParams, rng);
  const double elapsed = seconds_since(start);
  if (r.sampled != kGradParams) o.fail(fmt::format("sampled {} parameters", r.sampled));
  if (!(r.max_relative_error < kGradTol)) o.fail(fmt::format("max relative error {:.3g}", r.max_relative_error));
  if (elapsed > kGradSeconds) o.fail(fmt::format("took {:.1f} s", elapsed));
  if (o.pass) o.detail = fmt::format("{} parameters, max relative error {:.2g}, {:.1f} s", r.sampled, r.max_relative_error, elapsed);
  return o;
}

// 5
Outcome auroc_oracle() {
  Outcome o;
  Rng rng(505);
  double worst = 0.0;
  for (int k = 0; k < kAurocSets; ++k) {
    const std::size_t n = 2 + rng.below(200);
    std::vector<double> scores(n);
    std::vector<std::uint8_t> labels(n);
    const bool coarse = k % 2 == 0;
    for (std::size_t i = 0; i < n; ++i) {
      scores[i] = coarse ? static_cast<double>(rng.below(8)) : rng.uniform();
      labels[i] = static_cast<std::uint8_t>(rng.below(2));
    }
    labels[0] = 0;
    labels[1] = 1;
    worst = std::max(worst, std::abs(auroc(scores, labels) - oracle::auroc_pairs(scores, labels)));
  }
  if (worst > kAurocTol) o.fail(fmt::format("max deviation from pairwise oracle {:.3g}", worst));

  const std::vector<double> separated{0.1, 0.2, 0.3, 0.7, 0.8};
  const std::vector<std::uint8_t> sep_labels{0, 0, 0, 1, 1};
  if (auroc(separated, sep_labels) != 1.0) o.fail("separated case is not 1.0");

  std::vector<double> scores(kRandomLabelSamples);
  std::vector<std::uint8_t> labels(kRandomLabelSamples);
  for (int i = 0; i < kRandomLabelSamples; ++i) {
    scores[static_cast<std::size_t>(i)] = rng.uniform();
    labels[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(rng.below(2));
  }
  const double chance = auroc(scores, labels);
  if (std::abs(chance - 0.5) > kRandomLabelBand) o.fail(fmt::format("random labels give {:.4f}", chance));
  if (o.pass) o.detail = fmt::format("{} sets, max deviation {:.2g}; random labels {:.4f}", kAurocSets, worst, chance);
  return o;
}

// 6
Outcome scoring_chain() {
  Outcome o;
  const auto m = aligned_from_canonical(OrderPredictionMatrix{3, {0.7, 0.2, 0.1, 0.05, 0.9, 0.05, 0.3, 0.3, 0.4}});
  if (object_regularity(m) != 0.4) o.fail("min-diag");
  const std::vector<RegularityRecord> objects{{"v", 0, 0, 0.9, 0.35}, {"v", 0, 1, 0.45, 0.8}, {"v", 0, 2, 0.6, 0.5}};
  const auto [rs, rt] = frame_regularity(objects);
  if (rs != 0.45 || rt != 0.35) o.fail("min over objects");
  const std::vector<double> raw{0.3, 0.55, 0.8};
  const std::vector<double> expected{0.0, 0.5, 1.0};
  const auto norm = normalize_video(raw);
  for (std::size_t k = 0; k < 3; ++k) {
    if (ulp_distance(norm[k], expected[k]) > kScoringUlps) o.fail(fmt::format("normalization gives {:.17g}", norm[k]));
  }
  const std::vector<double> a{0.4};
  const std::vector<double> b{0.8};
  const auto c = combine(a, b, 0.5, 0.5);
  if (ulp_distance(c.R[0], 0.6) > kScoringUlps) o.fail(fmt::format("R = {:.17g}", c.R[0]));
  if (ulp_distance(c.S[0], 0.4) > kScoringUlps) o.fail(fmt::format("S = {:.17g}", c.S[0]));
  if (o.pass) o.detail = fmt::format("r=0.4, frame=(0.45,0.35), normalized [{},{},{}], S={}", norm[0], norm[1], norm[2], c.S[0]);
  return o;
}

// 7 and 8
struct PipelineRun {
  bool ok = false;
  std::string error;
  std::string loss_log;
  std::string scores;
  std::vector<EpochLog> log;
  double trained_auroc = 0.0;
  double null_auroc = 0.0;
  double seconds = 0.0;
};

PipelineRun run_pipeline(const fs::path& dir) {
  PipelineRun run;
  const auto start = std::chrono::steady_clock::now();
  const std::string config = std::string(PSTRP_CONFIG_DIR) + "/synthetic-tiny.ini";
  const std::string data = (dir / "data").string();
  auto cli = [&](std::vector<std::string> args) {
    args.insert(args.begin(), {"--config", config});
    std::ostringstream out;
    std::ostringstream err;
    if (run_cli(args, out, err) != 0) {
      run.error = err.str();
      return false;
    }
    return true;
  };
  const std::string stcs = (dir / "stcs").string();
  const fs::path trained = dir / "trained";
  const fs::path null = dir / "null";
  if (!cli({"synth", "--out", data}) || !cli({"extract", "--dataset", data, "--out", stcs}) ||
      !cli({"train", "--stcs", stcs, "--out", trained.string()}) ||
      !cli({"--override", "training.learning_rate=0", "--override", "training.epochs=1", "train",
            "--stcs", stcs, "--out", null.string()}) ||
      !cli({"score", "--ckpt", (trained / "model.ckpt").string(), "--dataset", data, "--out",
            (trained / "scores.csv").string()}) ||
      !cli({"score", "--ckpt", (null / "model.ckpt").string(), "--dataset", data, "--out",
            (null / "scores.csv").string()})) {
    return run;
  }
  run.loss_log = slurp(trained / "loss_log.csv");
  run.scores = slurp(trained / "scores.csv");
  run.trained_auroc = dataset_auroc(read_scores_csv(trained / "scores.csv"));
  run.null_auroc = dataset_auroc(read_scores_csv(null / "scores.csv"));
  std::istringstream lines(run.loss_log);
  std::string line;
  std::getline(lines, line);
  while (std::getline(lines, line)) {
    EpochLog e;
    char comma;
    std::istringstream f(line);
    f >> e.epoch >> comma >> e.parts.spatial_order >> comma >> e.parts.temporal_order >> comma >>
        e.parts.canberra >> comma >> e.parts.cosine >> comma >> e.total;
    run.log.push_back(e);
  }
  run.seconds = seconds_since(start);
  run.ok = true;
  return run;
}

Outcome end_to_end(const PipelineRun& run) {
  Outcome o;
  if (!run.ok) {
    o.fail("pipeline failed: " + run.error);
    return o;
  }
  const auto cfg = load_config(std::string(PSTRP_CONFIG_DIR) + "/synthetic-tiny.ini");
  if (cfg.training.epochs > 20) o.fail("more than 20 epochs");
  if (run.log.size() != static_cast<std::size_t>(cfg.training.epochs)) o.fail("loss log incomplete");
  const double first = run.log.empty() ? 0.0 : run.log.front().total;
  const double last = run.log.empty() ? 0.0 : run.log.back().total;
  if (!(last < first)) o.fail(fmt::format("loss {:.6f} -> {:.6f} did not decrease", first, last));
  if (!(run.trained_auroc > kMinTrainedAuroc)) o.fail(fmt::format("trained AUROC {:.4f}", run.trained_auroc));
  if (!(run.trained_auroc - run.null_auroc >= kMinAurocGain)) {
    o.fail(fmt::format("trained {:.4f} vs null {:.4f}", run.trained_auroc, run.null_auroc));
  }
  if (run.seconds > kEndToEndSeconds) o.fail(fmt::format("took {:.0f} s", run.seconds));
  o.detail = fmt::format("loss {:.4f} -> {:.4f}; AUROC trained {:.4f}, null {:.4f}; {:.0f} s", first, last,
                         run.trained_auroc, run.null_auroc, run.seconds) +
             (o.pass ? "" : "; " + o.detail);
  return o;
}

Outcome determinism(const PipelineRun& a, const PipelineRun& b) {
  Outcome o;
  if (!a.ok || !b.ok) {
    o.fail("pipeline failed: " + (a.ok ? b.error : a.error));
    return o;
  }
  if (a.loss_log != b.loss_log) o.fail("loss logs differ");
  if (a.scores != b.scores) o.fail("scores.csv differ");
  if (o.pass) o.detail = fmt::format("loss log {} bytes, scores {} bytes identical", a.loss_log.size(), a.scores.size());
  return o;
}

// 9
Outcome config_fidelity() {
  Outcome o;
  struct Expect {
    const char* file;
    int window_length;
    double lr;
    int epochs;
    double threshold;
  };
  const Expect expected[] = {{"ped2.ini", 7, 1e-4, 50, 0.5},
                             {"avenue.ini", 7, 1e-4, 100, 0.8},
                             {"shanghaitech.ini", 9, 2e-4, 100, 0.8}};
  for (const auto& e : expected) {
    const auto c = load_config(fs::path(PSTRP_CONFIG_DIR) / e.file);
    auto check = [&](bool ok, const char* what) {
      if (!ok) o.fail(fmt::format("{}: {}", e.file, what));
    };
    check(2 * c.extraction.half_window + 1 == e.window_length, "L");
    check(c.loss.lambda_s == 1.0 && c.loss.lambda_t == 1.0, "lambda_s/lambda_t");
    check(c.loss.lambda_can == 0.1 && c.loss.lambda_cos == 0.1, "lambda_can/lambda_cos");
    check(c.scoring.omega_s == 0.5 && c.scoring.omega_t == 0.5, "omega");
    check(c.training.learning_rate == e.lr, "learning rate");
    check(c.training.beta1 == 0.9 && c.training.beta2 == 0.99, "betas");
    check(c.training.batch_size == 96, "batch size");
    check(c.training.epochs == e.epochs, "epochs");
    check(c.extraction.confidence_threshold == e.threshold, "detector threshold");
    const auto back = parse_config(to_ini(c));
    check(to_ini(back) == to_ini(c), "round trip");
  }
  if (o.pass) o.detail = "ped2, avenue, shanghaitech";
  return o;
}

}  // namespace

int main() {
  int failures = 0;
  auto report = [&](int id, const char* name, const Outcome& o) {
    std::cout << fmt::format("criterion {} {}: {} ({})\n", id, name, o.pass ? "PASS" : "FAIL", o.detail);
    std::cout.flush();
    if (!o.pass) ++failures;
  };
  auto guarded = [](const std::function<Outcome()>& fn) {
    try {
      return fn();
    } catch (const std::exception& e) {
      Outcome o;
      o.fail(std::string("exception: ") + e.what());
      return o;
    }
  };
  report(1, "relation oracles", guarded(relation_oracles));
  report(2, "patching round trips", guarded(patching_round_trips));
  report(3, "loss analytics", guarded(loss_analytics));
  report(4, "gradient check", guarded(gradient_check));
  report(5, "AUROC oracle", guarded(auroc_oracle));
  report(6, "scoring chain", guarded(scoring_chain));
  PipelineRun first;
  PipelineRun second;
  report(7, "synthetic end to end", guarded([&] {
           first = run_pipeline(testing::scratch_dir("acceptance_run1"));
           return end_to_end(first);
         }));
  report(8, "determinism", guarded([&] {
           second = run_pipeline(testing::scratch_dir("acceptance_run2"));
           return determinism(first, second);
         }));
  report(9, "config fidelity", guarded(config_fidelity));
  std::cout << fmt::format("{} of 9 criteria passed\n", 9 - failures);
  return failures == 0 ? 0 : 1;
}
