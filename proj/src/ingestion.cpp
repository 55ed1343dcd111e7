#include "pstrp/ingestion.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <fstream>

#include "pstrp/error.hpp"
#include "pstrp/image.hpp"
#include "pstrp/parallel.hpp"
#include "pstrp/synthetic.hpp"
#include "pstrp/config.hpp"

namespace pstrp {

namespace fs = std::filesystem;

void FrameSequence::validate() const {
  if (channels <= 0 || height <= 0 || width <= 0) {
    throw Error(ErrorCode::kValidation, "video " + video_id + ": invalid frame shape");
  }
  for (int t = 0; t < frame_count(); ++t) {
    const auto& f = frames[static_cast<std::size_t>(t)];
    if (f.size() != frame_size()) {
      throw Error(ErrorCode::kValidation,
                  fmt::format("video {}: frame {} has {} values, expected {}", video_id, t,
                              f.size(), frame_size()));
    }
    for (float v : f) {
      if (!(v >= 0.0f && v <= 1.0f)) {
        throw Error(ErrorCode::kValidation,
                    fmt::format("video {}: frame {} has value {} outside [0,1]", video_id, t, v));
      }
    }
  }
}

Layout parse_layout(std::string_view name) {
  if (name == "ped2") return Layout::kPed2;
  if (name == "avenue") return Layout::kAvenue;
  if (name == "shanghaitech") return Layout::kShanghaiTech;
  if (name == "synthetic") return Layout::kSynthetic;
  if (name == "generic_folders") return Layout::kGenericFolders;
  throw Error(ErrorCode::kConfig, fmt::format("unknown dataset layout '{}'", name));
}

std::string_view layout_name(Layout layout) {
  switch (layout) {
    case Layout::kPed2:
      return "ped2";
    case Layout::kAvenue:
      return "avenue";
    case Layout::kShanghaiTech:
      return "shanghaitech";
    case Layout::kSynthetic:
      return "synthetic";
    case Layout::kGenericFolders:
      return "generic_folders";
  }
  return "unknown";
}

namespace {

void require_dir(const fs::path& path) {
  if (!fs::is_directory(path)) {
    throw Error(ErrorCode::kLayoutMismatch, "layout mismatch: missing " + path.string());
  }
}

std::vector<fs::path> sorted_subdirs(const fs::path& dir) {
  std::vector<fs::path> out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_directory()) out.push_back(entry.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

struct LayoutPaths {
  fs::path train;
  fs::path test;
  fs::path labels;
  bool expand_gray = false;
};

LayoutPaths paths_for(const fs::path& root, Layout layout) {
  switch (layout) {
    case Layout::kGenericFolders:
    case Layout::kSynthetic:
      return {root / "train", root / "test", root / "test", false};
    case Layout::kPed2:
    case Layout::kAvenue:
    case Layout::kShanghaiTech:
      return {root / "training" / "frames", root / "testing" / "frames",
              root / "testing" / "labels", true};
  }
  return {};
}

}  // namespace

FrameSequence load_frame_folder(const fs::path& dir, std::string video_id,
                                bool expand_gray_to_rgb) {
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && is_image_file(entry.path())) files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) {
    throw Error(ErrorCode::kLayoutMismatch, "layout mismatch: no frames in " + dir.string());
  }
  FrameSequence seq;
  seq.video_id = std::move(video_id);
  seq.frames.reserve(files.size());
  for (const auto& file : files) {
    Image img = read_image(file);
    if (expand_gray_to_rgb && img.channels == 1) {
      const std::size_t plane = static_cast<std::size_t>(img.height) * img.width;
      img.data.resize(3 * plane);
      std::copy_n(img.data.begin(), plane, img.data.begin() + static_cast<std::ptrdiff_t>(plane));
      std::copy_n(img.data.begin(), plane,
                  img.data.begin() + static_cast<std::ptrdiff_t>(2 * plane));
      img.channels = 3;
    }
    if (seq.frames.empty()) {
      seq.channels = img.channels;
      seq.height = img.height;
      seq.width = img.width;
    } else if (img.channels != seq.channels || img.height != seq.height ||
               img.width != seq.width) {
      throw Error(ErrorCode::kValidation,
                  "video " + seq.video_id + ": frame shape differs at " + file.string());
    }
    seq.frames.push_back(std::move(img.data));
  }
  return seq;
}

FrameLabels read_labels(const fs::path& path, std::string video_id) {
  std::ifstream in(path);
  if (!in) {
    throw Error(ErrorCode::kLayoutMismatch, "layout mismatch: missing " + path.string());
  }
  FrameLabels labels;
  labels.video_id = std::move(video_id);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line.erase(std::remove_if(line.begin(), line.end(),
                              [](unsigned char c) { return std::isspace(c); }),
               line.end());
    if (line.empty()) continue;
    if (line != "0" && line != "1") {
      throw Error(ErrorCode::kParse,
                  fmt::format("{}:{}: expected 0 or 1, got '{}'", path.string(), line_no, line));
    }
    labels.labels.push_back(line == "1" ? 1 : 0);
  }
  return labels;
}

void write_labels(const fs::path& path, const FrameLabels& labels) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  for (auto v : labels.labels) out << static_cast<int>(v) << '\n';
}

Dataset load_dataset(const fs::path& root, Layout layout, int workers) {
  if (layout == Layout::kSynthetic && fs::is_regular_file(root)) {
    return generate_synthetic(read_synthetic_spec(root)).dataset;
  }
  require_dir(root);
  const LayoutPaths paths = paths_for(root, layout);
  require_dir(paths.train);
  require_dir(paths.test);

  const auto train_dirs = sorted_subdirs(paths.train);
  const auto test_dirs = sorted_subdirs(paths.test);
  if (train_dirs.empty()) {
    throw Error(ErrorCode::kLayoutMismatch,
                "layout mismatch: no videos under " + paths.train.string());
  }
  for (const auto& dir : test_dirs) {
    const fs::path label_path = paths.labels / (dir.filename().string() + ".labels");
    if (!fs::is_regular_file(label_path)) {
      throw Error(ErrorCode::kLayoutMismatch,
                  "layout mismatch: missing " + label_path.string());
    }
  }

  Dataset dataset;
  dataset.train.resize(train_dirs.size());
  dataset.test.resize(test_dirs.size());
  parallel_for(train_dirs.size() + test_dirs.size(), workers, [&](std::size_t k) {
    if (k < train_dirs.size()) {
      const auto& dir = train_dirs[k];
      dataset.train[k] = load_frame_folder(dir, dir.filename().string(), paths.expand_gray);
      dataset.train[k].validate();
      return;
    }
    const auto& dir = test_dirs[k - train_dirs.size()];
    const std::string id = dir.filename().string();
    LabeledSequence& item = dataset.test[k - train_dirs.size()];
    item.sequence = load_frame_folder(dir, id, paths.expand_gray);
    item.sequence.validate();
    item.labels = read_labels(paths.labels / (id + ".labels"), id);
    if (static_cast<int>(item.labels.labels.size()) != item.sequence.frame_count()) {
      throw Error(ErrorCode::kLabelMismatch,
                  fmt::format("video {}: {} labels for {} frames", id,
                              item.labels.labels.size(), item.sequence.frame_count()));
    }
  });
  return dataset;
}

void write_generic_folders(const fs::path& root, const Dataset& dataset) {
  auto write_video = [](const fs::path& dir, const FrameSequence& seq) {
    fs::create_directories(dir);
    for (int t = 0; t < seq.frame_count(); ++t) {
      Image img{seq.channels, seq.height, seq.width,
                std::vector<float>(seq.frame(t).begin(), seq.frame(t).end())};
      write_png(dir / fmt::format("{:06d}.png", t), img);
    }
  };
  for (const auto& seq : dataset.train) write_video(root / "train" / seq.video_id, seq);
  fs::create_directories(root / "test");
  for (const auto& item : dataset.test) {
    write_video(root / "test" / item.sequence.video_id, item.sequence);
    write_labels(root / "test" / (item.sequence.video_id + ".labels"), item.labels);
  }
}

}  // namespace pstrp
