#include <cstdlib>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "pstrp/cli.hpp"
#include "pstrp/scoring.hpp"
#include "test_support.hpp"

using namespace pstrp;
namespace fs = std::filesystem;

namespace {

struct Run {
  int status;
  std::string out;
  std::string err;
};

Run run(const std::vector<std::string>& args) {
  std::ostringstream out;
  std::ostringstream err;
  const int status = run_cli(args, out, err);
  return {status, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

const std::vector<std::string> kSmall = {
    "--config", std::string(PSTRP_CONFIG_DIR) + "/synthetic-tiny.ini",
    "--override", "synthetic.num_train_videos=1",
    "--override", "synthetic.num_test_videos=2",
    "--override", "synthetic.frames_per_video=20",
    "--override", "synthetic.anomaly_intervals=6-12|",
    "--override", "training.epochs=2",
    "--override", "training.batch_size=8"};

std::vector<std::string> with(std::vector<std::string> tail) {
  std::vector<std::string> args = kSmall;
  args.insert(args.end(), tail.begin(), tail.end());
  return args;
}

}  // namespace

TEST_CASE("eval prints the AUROC of a scores file") {
  const auto dir = testing::scratch_dir("cli_eval");
  AnomalyScoreSeries s{"v", {0, 0, 0, 0}, {0, 0, 0, 0}, {0, 0, 0, 0}, {0.1, 0.2, 0.8, 0.9}, {0, 0, 1, 1}};
  write_scores_csv(dir / "s.csv", {s});
  const auto r = run({"eval", "--scores", (dir / "s.csv").string()});
  CHECK(r.status == 0);
  CHECK(r.out == "AUROC=1.0000\n");

  AnomalyScoreSeries one{"v", {0, 0}, {0, 0}, {0, 0}, {0.1, 0.2}, {1, 1}};
  write_scores_csv(dir / "one.csv", {one});
  const auto bad = run({"eval", "--scores", (dir / "one.csv").string()});
  CHECK(bad.status == 1);
  CHECK(bad.err.find("error[undefined]") != std::string::npos);
}

TEST_CASE("usage errors and unknown keys exit with status 2") {
  const auto unknown = run({"--override", "training.nope=1", "eval", "--scores", "x.csv"});
  CHECK(unknown.status == 2);
  CHECK(unknown.err.find("error[unknown_key]") != std::string::npos);
  CHECK(run({"frobnicate"}).status == 2);
  CHECK(run({"eval"}).status == 2);
  const auto missing = run({"eval", "--scores", "/nonexistent/s.csv"});
  CHECK(missing.status == 1);
  CHECK(missing.err.rfind("pstrp: error[", 0) == 0);
}

TEST_CASE("synth, extract, train, score, eval and plot chain together") {
  const auto dir = testing::scratch_dir("cli_chain");
  const std::string data = (dir / "data").string();
  REQUIRE(run(with({"synth", "--out", data})).status == 0);
  CHECK(fs::exists(dir / "data" / "boxes.txt"));
  CHECK(fs::exists(dir / "data" / "config.ini"));

  const auto ex = run(with({"extract", "--dataset", data, "--out", (dir / "stcs").string()}));
  REQUIRE_MESSAGE(ex.status == 0, ex.err);
  CHECK(ex.out.find("extracted") != std::string::npos);

  const auto tr = run(with({"train", "--stcs", (dir / "stcs").string(), "--out", (dir / "ckpt").string()}));
  REQUIRE_MESSAGE(tr.status == 0, tr.err);
  CHECK(tr.out.find("epoch 2/2") != std::string::npos);
  CHECK(fs::exists(dir / "ckpt" / "model.ckpt"));
  CHECK(fs::exists(dir / "ckpt" / "loss_log.csv"));

  // Without --config the checkpoint's preprocessing is used.
  const auto sc = run({"score", "--ckpt", (dir / "ckpt" / "model.ckpt").string(), "--dataset", data,
                       "--out", (dir / "scores.csv").string()});
  REQUIRE_MESSAGE(sc.status == 0, sc.err);
  const auto series = read_scores_csv(dir / "scores.csv");
  REQUIRE(series.size() == 2);
  CHECK(series[0].S.size() == 20);

  const auto ev = run({"eval", "--scores", (dir / "scores.csv").string()});
  CHECK(ev.status == 0);
  CHECK(ev.out.rfind("AUROC=", 0) == 0);

  CHECK(run({"plot", "--scores", (dir / "scores.csv").string(), "--out", (dir / "plots").string()}).status == 0);
  CHECK(fs::exists(dir / "plots" / (series[0].video_id + ".png")));

  // Preprocessing that disagrees with the checkpoint is refused.
  const auto mismatch = run(with({"--override", "patching.spatial_grid=3", "score", "--ckpt",
                                  (dir / "ckpt" / "model.ckpt").string(), "--dataset", data, "--out",
                                  (dir / "other.csv").string()}));
  CHECK(mismatch.status == 1);
  CHECK(mismatch.err.find("error[config_error]") != std::string::npos);

  // A second run reproduces the loss log and scores byte for byte.
  REQUIRE(run(with({"train", "--stcs", (dir / "stcs").string(), "--out", (dir / "ckpt2").string()})).status == 0);
  CHECK(slurp(dir / "ckpt" / "loss_log.csv") == slurp(dir / "ckpt2" / "loss_log.csv"));
  REQUIRE(run({"score", "--ckpt", (dir / "ckpt2" / "model.ckpt").string(), "--dataset", data, "--out",
               (dir / "scores2.csv").string()})
              .status == 0);
  CHECK(slurp(dir / "scores.csv") == slurp(dir / "scores2.csv"));
}

TEST_CASE("the installed binary reports errors through its exit status") {
  const char* bin = std::getenv("PSTRP_BIN");
  if (bin == nullptr) return;
  const std::string cmd = std::string(bin) + " --override bogus.key=1 eval --scores x.csv >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  REQUIRE(WIFEXITED(status));
  CHECK(WEXITSTATUS(status) == 2);
}
