#include <fmt/format.h>

#include <fstream>

#include "doctest.h"
#include "pstrp/error.hpp"
#include "pstrp/image.hpp"
#include "pstrp/ingestion.hpp"
#include "pstrp/synthetic.hpp"
#include "test_support.hpp"

using namespace pstrp;
namespace fs = std::filesystem;

namespace {

SyntheticSpec small_spec(int train, int test) {
  SyntheticSpec spec;
  spec.num_train_videos = train;
  spec.num_test_videos = test;
  spec.frames_per_video = 12;
  spec.height = 60;
  spec.width = 80;
  spec.anomaly_intervals = {{{3, 7}}};
  return spec;
}

void write_gray_frames(const fs::path& dir, int count, int value) {
  fs::create_directories(dir);
  for (int t = 0; t < count; ++t) {
    Image img{1, 6, 8, std::vector<float>(48, static_cast<float>((value + t) % 256) / 255.0f)};
    write_png(dir / fmt::format("{:03d}.png", t), img);
  }
}

void write_label_file(const fs::path& path, int count) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path);
  for (int t = 0; t < count; ++t) out << (t % 3 == 0 ? 1 : 0) << '\n';
}

}  // namespace

TEST_CASE("generic folders round-trip a synthetic dataset bit for bit") {
  const auto root = testing::scratch_dir("ingest_roundtrip");
  const auto generated = generate_synthetic(small_spec(4, 2));
  write_generic_folders(root, generated.dataset);
  const Dataset loaded = load_dataset(root, Layout::kGenericFolders, 2);
  REQUIRE(loaded.train.size() == 4);
  REQUIRE(loaded.test.size() == 2);
  for (std::size_t v = 0; v < 4; ++v) {
    CHECK(loaded.train[v].video_id == generated.dataset.train[v].video_id);
    CHECK(loaded.train[v].frames == generated.dataset.train[v].frames);
  }
  for (std::size_t v = 0; v < 2; ++v) {
    CHECK(loaded.test[v].sequence.frames == generated.dataset.test[v].sequence.frames);
    CHECK(loaded.test[v].labels.labels == generated.dataset.test[v].labels.labels);
    CHECK(loaded.test[v].labels.labels.size() ==
          static_cast<std::size_t>(loaded.test[v].sequence.frame_count()));
  }
}

TEST_CASE("a synthetic config path is generated in memory") {
  const auto dir = testing::scratch_dir("ingest_synth_cfg");
  const auto cfg = dir / "s.ini";
  std::ofstream(cfg) << "[synthetic]\nnum_train_videos = 4\nnum_test_videos = 2\n"
                        "frames_per_video = 12\nheight = 60\nwidth = 80\n";
  const Dataset d = load_dataset(cfg, Layout::kSynthetic);
  CHECK(d.train.size() == 4);
  CHECK(d.test.size() == 2);
}

TEST_CASE("benchmark layout: 16 training and 12 test videos, gray expanded to RGB") {
  const auto root = testing::scratch_dir("ingest_ped2");
  for (int v = 0; v < 16; ++v) write_gray_frames(root / "training/frames" / fmt::format("Train{:03d}", v + 1), 4, v);
  for (int v = 0; v < 12; ++v) {
    const auto id = fmt::format("Test{:03d}", v + 1);
    write_gray_frames(root / "testing/frames" / id, 5, v);
    write_label_file(root / "testing/labels" / (id + ".labels"), 5);
  }
  const Dataset d = load_dataset(root, Layout::kPed2);
  CHECK(d.train.size() == 16);
  CHECK(d.test.size() == 12);
  CHECK(d.train.front().channels == 3);
  CHECK(d.train.front().at(2, 2, 0, 0) == doctest::Approx(2.0 / 255.0));
  CHECK(d.test[0].labels.labels == std::vector<std::uint8_t>{1, 0, 0, 1, 0});
}

TEST_CASE("missing or empty roots raise a layout mismatch naming the path") {
  const auto root = testing::scratch_dir("ingest_empty");
  try {
    load_dataset(root, Layout::kGenericFolders);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kLayoutMismatch);
    CHECK(std::string(e.what()).find("layout mismatch") != std::string::npos);
    CHECK(std::string(e.what()).find((root / "train").string()) != std::string::npos);
  }
  CHECK_THROWS_AS(load_dataset(root / "nope", Layout::kAvenue), Error);
}

TEST_CASE("label count mismatch names the video") {
  const auto root = testing::scratch_dir("ingest_labels");
  write_gray_frames(root / "train/a", 3, 0);
  write_gray_frames(root / "test/b", 4, 0);
  write_label_file(root / "test/b.labels", 3);
  try {
    load_dataset(root, Layout::kGenericFolders);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kLabelMismatch);
    CHECK(std::string(e.what()).find("b") != std::string::npos);
  }
}

TEST_CASE("label files reject values other than 0 and 1") {
  const auto dir = testing::scratch_dir("ingest_badlabel");
  std::ofstream(dir / "x.labels") << "0\n2\n";
  CHECK_THROWS_AS(read_labels(dir / "x.labels", "x"), Error);
  FrameLabels labels{"y", {0, 1, 1}};
  write_labels(dir / "y.labels", labels);
  CHECK(read_labels(dir / "y.labels", "y").labels == labels.labels);
}

TEST_CASE("frame validation rejects out-of-range pixels and ragged frames") {
  FrameSequence seq;
  seq.video_id = "v";
  seq.channels = 1;
  seq.height = 2;
  seq.width = 2;
  seq.frames = {{0.0f, 0.5f, 1.0f, 0.25f}};
  CHECK_NOTHROW(seq.validate());
  seq.frames.push_back({0.0f, 1.5f, 0.0f, 0.0f});
  CHECK_THROWS_AS(seq.validate(), Error);
  seq.frames.back() = {0.0f, 0.0f};
  CHECK_THROWS_AS(seq.validate(), Error);
}

TEST_CASE("layout names round-trip") {
  for (auto l : {Layout::kPed2, Layout::kAvenue, Layout::kShanghaiTech, Layout::kSynthetic,
                 Layout::kGenericFolders}) {
    CHECK(parse_layout(layout_name(l)) == l);
  }
  CHECK_THROWS_AS(parse_layout("ucsd"), Error);
}
