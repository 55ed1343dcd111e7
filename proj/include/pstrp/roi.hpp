#pragma once

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "pstrp/ingestion.hpp"

namespace pstrp {

enum class BoxSource { kAppearance, kMotion, kMerged };

std::string_view box_source_name(BoxSource source);
BoxSource parse_box_source(std::string_view name);

/// Half-open pixel box [x1, x2) x [y1, y2).
struct BoundingBox {
  int x1 = 0;
  int y1 = 0;
  int x2 = 0;
  int y2 = 0;
  double confidence = 1.0;
  BoxSource source = BoxSource::kAppearance;

  int width() const { return x2 - x1; }
  int height() const { return y2 - y1; }
  long area() const { return static_cast<long>(width()) * height(); }
  bool valid_within(int frame_width, int frame_height) const {
    return 0 <= x1 && x1 < x2 && x2 <= frame_width && 0 <= y1 && y1 < y2 && y2 <= frame_height;
  }
  bool same_geometry(const BoundingBox& other) const {
    return x1 == other.x1 && y1 == other.y1 && x2 == other.x2 && y2 == other.y2;
  }
};

double iou(const BoundingBox& a, const BoundingBox& b);

using RoisPerFrame = std::map<int, std::vector<BoundingBox>>;

struct AppearanceRois {
  RoisPerFrame boxes;
  bool unknown_video = false;  // set when the file has no record for the video
};

/// Parses a boxes file (`<video_id> <frame> <x1> <y1> <x2> <y2> <confidence>`
/// per line) and keeps the records of `video_id` with confidence >= threshold.
AppearanceRois load_appearance_rois(const std::filesystem::path& boxes_path,
                                    const std::string& video_id, double confidence_threshold);

/// All videos of a boxes file at once (threshold applied), keyed by video id.
std::map<std::string, RoisPerFrame> load_all_appearance_rois(
    const std::filesystem::path& boxes_path, double confidence_threshold);

struct MotionParams {
  double diff_threshold = 0.05;
  int min_area = 25;
  int dilation = 3;
};

/// Boxes around connected regions of |frame_t - frame_{t-1}| (summed over
/// channels) that exceed the threshold, after a square dilation of radius
/// `dilation`. Components use 8-connectivity; area is the pixel count of the
/// dilated component.
std::vector<BoundingBox> motion_rois(const FrameSequence& seq, int t, const MotionParams& params);

/// Appearance boxes are always kept; a motion box is added when its IoU with
/// every box kept so far is below `iou_threshold`.
std::vector<BoundingBox> merge_rois(const std::vector<BoundingBox>& appearance,
                                    const std::vector<BoundingBox>& motion, double iou_threshold);

inline constexpr int kCubeSize = 64;

/// L x C x 64 x 64 stack of same-position crops centred on frame t.
struct SpatioTemporalCube {
  std::string video_id;
  int t = 0;
  BoundingBox box;
  int half_window = 0;
  int channels = 0;
  int size = kCubeSize;
  std::vector<float> data;

  int length() const { return 2 * half_window + 1; }
  std::size_t frame_stride() const { return static_cast<std::size_t>(channels) * size * size; }
  float at(int l, int c, int y, int x) const {
    return data[((static_cast<std::size_t>(l) * channels + c) * size + y) * size + x];
  }
};

struct StcBuildResult {
  std::vector<SpatioTemporalCube> cubes;
  int skipped = 0;  // boxes empty after clamping to the frame
};

/// Bilinear (half-pixel centres) resize of box region of one channel plane.
void crop_resize_bilinear(std::span<const float> plane, int plane_width, int plane_height,
                          const BoundingBox& box, int out_size, std::span<float> out);

StcBuildResult build_stcs(const FrameSequence& seq, const RoisPerFrame& rois, int half_window);

struct ExtractionParams {
  int half_window = 3;
  double confidence_threshold = 0.5;
  MotionParams motion;
  double merge_iou = 0.5;
  bool use_motion = true;
};

/// Full per-video pipeline: motion ROIs for every frame that can centre a cube,
/// merged with the given appearance ROIs, then cropped into cubes.
StcBuildResult extract_video(const FrameSequence& seq, const RoisPerFrame* appearance,
                             const ExtractionParams& params);

/// On-disk cube store: one float32 array file per video plus manifest.json
/// listing (video_id, frame t, box, byte offset) for every cube.
struct StcStoreMeta {
  int half_window = 0;
  int channels = 0;
  int size = kCubeSize;
  ExtractionParams extraction;
};

void write_stc_store(const std::filesystem::path& dir, const StcStoreMeta& meta,
                     const std::vector<SpatioTemporalCube>& cubes);

struct StcStore {
  StcStoreMeta meta;
  std::vector<SpatioTemporalCube> cubes;
};

StcStore read_stc_store(const std::filesystem::path& dir);

}  // namespace pstrp
