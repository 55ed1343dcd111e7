#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace pstrp {

/// A decoded video: every frame is C x H x W, planar, values in [0, 1].
struct FrameSequence {
  std::string video_id;
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<std::vector<float>> frames;

  int frame_count() const { return static_cast<int>(frames.size()); }
  std::size_t frame_size() const {
    return static_cast<std::size_t>(channels) * height * width;
  }
  std::span<const float> frame(int t) const { return frames[static_cast<std::size_t>(t)]; }
  float at(int t, int c, int y, int x) const {
    return frames[static_cast<std::size_t>(t)]
                 [(static_cast<std::size_t>(c) * height + y) * width + x];
  }

  /// Throws kValidation if frames disagree in shape or leave [0, 1].
  void validate() const;
};

struct FrameLabels {
  std::string video_id;
  std::vector<std::uint8_t> labels;  // 1 = anomalous frame
};

struct LabeledSequence {
  FrameSequence sequence;
  FrameLabels labels;
};

struct Dataset {
  std::vector<FrameSequence> train;
  std::vector<LabeledSequence> test;
};

enum class Layout { kPed2, kAvenue, kShanghaiTech, kSynthetic, kGenericFolders };

Layout parse_layout(std::string_view name);
std::string_view layout_name(Layout layout);

/// Reads a dataset tree.
///
/// generic_folders / synthetic: <root>/train/<vid>/NNNNNN.png,
///   <root>/test/<vid>/NNNNNN.png and <root>/test/<vid>.labels.
///   For `synthetic`, root may instead name a synthetic config file, in which
///   case the dataset is generated in memory.
/// ped2 / avenue / shanghaitech: <root>/training/frames/<vid>/*,
///   <root>/testing/frames/<vid>/* and <root>/testing/labels/<vid>.labels;
///   grayscale frames are expanded to three channels.
///
/// Videos are ordered by directory name, frames by file name.
Dataset load_dataset(const std::filesystem::path& root, Layout layout, int workers = 1);

/// Loads one folder of numbered frames.
FrameSequence load_frame_folder(const std::filesystem::path& dir, std::string video_id,
                                bool expand_gray_to_rgb = false);

FrameLabels read_labels(const std::filesystem::path& path, std::string video_id);
void write_labels(const std::filesystem::path& path, const FrameLabels& labels);

/// Materializes a dataset in generic_folders form under `root`.
void write_generic_folders(const std::filesystem::path& root, const Dataset& dataset);

}  // namespace pstrp
