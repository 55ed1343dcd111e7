#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pstrp/ingestion.hpp"
#include "pstrp/roi.hpp"

namespace pstrp {

/// A class of normal objects: textured rectangles drifting rightwards at a
/// constant per-object speed.
struct ObjectBehavior {
  int size_min = 10;
  int size_max = 14;
  double speed_min = 1.0;  // pixels / frame
  double speed_max = 1.5;
  double intensity_min = 0.55;
  double intensity_max = 0.95;
};

/// Anomalies happen to an otherwise normal object during an interval.
/// fast: its speed is scaled up; reversed: it moves leftwards;
/// inverted_texture: its brightness ramp is rotated by 180 degrees.
enum class AnomalyKind { kFast, kReversed, kInvertedTexture };

struct AnomalyBehavior {
  AnomalyKind kind = AnomalyKind::kFast;
  double speed_factor_min = 3.0;
  double speed_factor_max = 5.0;
};

struct FrameInterval {
  int start = 0;  // inclusive
  int end = 0;    // exclusive
};

struct SyntheticSpec {
  std::uint64_t seed = 7;
  int num_train_videos = 6;
  int num_test_videos = 4;
  int frames_per_video = 64;
  int height = 120;
  int width = 160;
  int objects_per_video = 2;
  double background = 0.15;
  double noise_std = 0.004;
  std::vector<ObjectBehavior> normal_behaviors{ObjectBehavior{}};
  std::vector<AnomalyBehavior> anomaly_behaviors{
      AnomalyBehavior{AnomalyKind::kFast, 3.0, 5.0},
      AnomalyBehavior{AnomalyKind::kInvertedTexture, 1.0, 1.0}};
  /// One entry per test video (missing entries mean no anomalies).
  std::vector<std::vector<FrameInterval>> anomaly_intervals;

  /// Throws kValidation on out-of-range intervals or an infeasible canvas.
  void validate() const;
};

/// Ground-truth object box emitted by the generator, in boxes-file form.
struct BoxRecord {
  std::string video_id;
  int frame = 0;
  BoundingBox box;
};

struct SyntheticDataset {
  Dataset dataset;
  std::vector<BoxRecord> boxes;
};

/// Pure function of `spec`: identical specs give bit-identical frames. Pixel
/// values are quantized to multiples of 1/255 so an 8-bit PNG round trip is
/// lossless.
SyntheticDataset generate_synthetic(const SyntheticSpec& spec);

std::string_view anomaly_kind_name(AnomalyKind kind);
AnomalyKind parse_anomaly_kind(std::string_view name);

}  // namespace pstrp
