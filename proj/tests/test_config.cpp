#include <fstream>

#include "doctest.h"
#include "pstrp/config.hpp"
#include "pstrp/error.hpp"
#include "test_support.hpp"

using namespace pstrp;

namespace {

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("no error raised");
  return ErrorCode::kValidation;
}

}  // namespace

TEST_CASE("parsing sections, comments and presets") {
  const auto c = parse_config(
      "; comment\n[dataset]\nname = avenue\nlayout = avenue\n"
      "[patching]\nspatial_grid = 4\n# another\n"
      "[spatial_stream]\nembed_dim = 96\npreset = B\n"
      "[training]\nlearning_rate = 2e-4\nepochs = 7\n");
  CHECK(c.dataset.name == "avenue");
  CHECK(c.training.dataset_name == "avenue");
  CHECK(c.dataset.layout == Layout::kAvenue);
  CHECK(c.patching.spatial_grid == 4);
  CHECK(c.training.learning_rate == 2e-4);
  CHECK(c.training.epochs == 7);
  // A preset sets the size; explicit keys win regardless of their order.
  CHECK(c.spatial_stream.preset == SizePreset::kB);
  CHECK(c.spatial_stream.embed_dim == 96);
  CHECK(c.spatial_stream.depth == 12);
  CHECK(c.temporal_stream.embed_dim == 64);
}

TEST_CASE("unknown keys and bad values are reported") {
  CHECK(code_of([] { parse_config("[training]\nlearnig_rate = 1\n"); }) == ErrorCode::kUnknownKey);
  CHECK(code_of([] { parse_config("[nosuch]\nx = 1\n"); }) == ErrorCode::kUnknownKey);
  CHECK(code_of([] { parse_config("toplevel = 1\n"); }) == ErrorCode::kUnknownKey);
  CHECK(code_of([] { parse_config("[training]\nepochs = many\n"); }) == ErrorCode::kConfig);
  CHECK(code_of([] { parse_config("[scoring]\nsmoothing = maybe\n"); }) == ErrorCode::kConfig);
  try {
    parse_config("[training]\nlearnig_rate = 1\n");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("training.learnig_rate") != std::string::npos);
  }
}

TEST_CASE("overrides apply on top of the file") {
  PipelineConfig c;
  apply_override(c, "training.epochs=3");
  apply_override(c, "loss.lambda_can = 0.5");
  apply_override(c, "synthetic.anomaly_kinds=reversed");
  CHECK(c.training.epochs == 3);
  CHECK(c.loss.lambda_can == 0.5);
  REQUIRE(c.synthetic.anomaly_behaviors.size() == 1);
  CHECK(c.synthetic.anomaly_behaviors[0].kind == AnomalyKind::kReversed);
  CHECK(code_of([&] { apply_override(c, "training.epochs"); }) == ErrorCode::kConfig);
  CHECK(code_of([&] { apply_override(c, "training.nope=1"); }) == ErrorCode::kUnknownKey);
}

TEST_CASE("to_ini reproduces the configuration") {
  auto c = load_config(std::filesystem::path(PSTRP_CONFIG_DIR) / "synthetic-tiny.ini");
  c.training.learning_rate = 0.1 + 0.2;
  c.scoring.smoothing = true;
  const std::string text = to_ini(c);
  const auto back = parse_config(text);
  CHECK(to_ini(back) == text);
  CHECK(back.training.learning_rate == c.training.learning_rate);
  CHECK(back.scoring.smoothing);
  CHECK(format_intervals(back.synthetic.anomaly_intervals) ==
        format_intervals(c.synthetic.anomaly_intervals));
  for (const auto& key : all_config_keys()) {
    CHECK_MESSAGE(text.find(key.substr(key.find('.') + 1) + " = ") != std::string::npos, key);
  }
}

TEST_CASE("interval lists") {
  const auto iv = parse_intervals("20-40|12-30,40-50|");
  REQUIRE(iv.size() == 3);
  CHECK(iv[0].size() == 1);
  CHECK(iv[0][0].start == 20);
  CHECK(iv[0][0].end == 40);
  CHECK(iv[1].size() == 2);
  CHECK(iv[1][1].start == 40);
  CHECK(iv[2].empty());
  CHECK(format_intervals(iv) == "20-40|12-30,40-50|");
  CHECK_THROWS_AS(parse_intervals("20:40"), Error);
  CHECK_THROWS_AS(parse_intervals("a-b"), Error);
}

TEST_CASE("validation reaches every module") {
  PipelineConfig c;
  CHECK_NOTHROW(c.validate());
  c.training.batch_size = 0;
  CHECK_THROWS_AS(c.validate(), Error);
  c = PipelineConfig{};
  c.scoring.omega_s = -1;
  CHECK_THROWS_AS(c.validate(), Error);
  c = PipelineConfig{};
  c.extraction.half_window = 0;
  CHECK_THROWS_AS(c.validate(), Error);
}

TEST_CASE("benchmark presets") {
  struct Expect {
    const char* file;
    Layout layout;
    double lr;
    int epochs;
    int window_length;
    double threshold;
  };
  const Expect expected[] = {{"ped2.ini", Layout::kPed2, 1e-4, 50, 7, 0.5},
                             {"avenue.ini", Layout::kAvenue, 1e-4, 100, 7, 0.8},
                             {"shanghaitech.ini", Layout::kShanghaiTech, 2e-4, 100, 9, 0.8}};
  for (const auto& e : expected) {
    CAPTURE(e.file);
    const auto c = load_config(std::filesystem::path(PSTRP_CONFIG_DIR) / e.file);
    CHECK(c.dataset.layout == e.layout);
    CHECK(c.training.learning_rate == e.lr);
    CHECK(c.training.epochs == e.epochs);
    CHECK(2 * c.extraction.half_window + 1 == e.window_length);
    CHECK(c.extraction.confidence_threshold == e.threshold);
    CHECK(c.training.beta1 == 0.9);
    CHECK(c.training.beta2 == 0.99);
    CHECK(c.training.weight_decay == 1e-5);
    CHECK(c.training.batch_size == 96);
    CHECK(c.loss.lambda_s == 1.0);
    CHECK(c.loss.lambda_t == 1.0);
    CHECK(c.loss.lambda_can == 0.1);
    CHECK(c.loss.lambda_cos == 0.1);
    CHECK(c.scoring.omega_s == 0.5);
    CHECK(c.scoring.omega_t == 0.5);
    CHECK(c.spatial_stream.preset == SizePreset::kH);
    CHECK(c.temporal_stream.preset == SizePreset::kH);
  }
}

TEST_CASE("synthetic spec from a config file") {
  const auto spec = read_synthetic_spec(std::filesystem::path(PSTRP_CONFIG_DIR) / "synthetic-tiny.ini");
  CHECK(spec.num_train_videos == 6);
  CHECK(spec.num_test_videos == 4);
  CHECK(spec.frames_per_video == 64);
  CHECK(spec.anomaly_intervals.size() == 4);
  CHECK_NOTHROW(spec.validate());
}

TEST_CASE("missing config file") {
  CHECK_THROWS_AS(load_config(testing::scratch_dir("config_missing") / "absent.ini"), Error);
}
