#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "pstrp/checkpoint.hpp"
#include "pstrp/ingestion.hpp"
#include "pstrp/model.hpp"
#include "pstrp/patching.hpp"
#include "pstrp/roi.hpp"

namespace pstrp {

struct RegularityRecord {
  std::string video_id;
  int frame = 0;
  int object = 0;
  double r_s = 1.0;
  double r_t = 1.0;
};

struct AnomalyScoreSeries {
  std::string video_id;
  std::vector<double> R_s;
  std::vector<double> R_t;
  std::vector<double> R;
  std::vector<double> S;
  std::vector<std::uint8_t> labels;  // empty when unknown
};

/// Smallest diagonal entry: the probability the model gives the least
/// recognizable patch to its true position.
double object_regularity(const AlignedOrderMatrix& m);

/// Componentwise minimum over the objects of one frame; (1, 1) when empty.
std::pair<double, double> frame_regularity(std::span<const RegularityRecord> records);

/// Min-max normalization over one video; a constant series maps to all ones.
std::vector<double> normalize_video(std::span<const double> values);

struct Combined {
  std::vector<double> R;
  std::vector<double> S;
};

/// R = w_s R_s + w_t R_t, S = 1 - R.
Combined combine(std::span<const double> r_s, std::span<const double> r_t, double w_s, double w_t);

/// Mann-Whitney AUROC with midranks for ties. Throws kUndefined when only one
/// class is present.
double auroc(std::span<const double> scores, std::span<const std::uint8_t> labels);

struct ScoringConfig {
  double omega_s = 0.5;
  double omega_t = 0.5;
  int k_perm = 1;
  std::uint64_t seed = 0;
  bool smoothing = false;
  double smoothing_sigma = 2.0;
  int workers = 1;

  void validate() const;
};

/// r_s / r_t for every cube, averaged over k_perm seeded permutations per cube.
/// The permutation seed depends only on (seed, video, frame, object, k), so the
/// result does not depend on `workers`.
std::vector<RegularityRecord> regularity_records(const TwoStreamModel& model,
                                                 const std::vector<SpatioTemporalCube>& cubes,
                                                 int spatial_grid, const ScoringConfig& config);

/// Frame series for one video from its object records. Frames that cannot
/// centre a cube (first/last half_window frames) copy the nearest scoreable
/// frame; scoreable frames without objects get regularity 1.
AnomalyScoreSeries assemble_series(const std::string& video_id, int frame_count, int half_window,
                                   std::span<const RegularityRecord> records,
                                   const ScoringConfig& config);

/// Extraction -> patching -> forward -> alignment -> frame scores, per video.
/// `requested`, when given, must match the checkpoint's preprocessing.
std::vector<AnomalyScoreSeries> score_dataset(
    const Checkpoint& checkpoint, const std::vector<LabeledSequence>& test,
    const std::map<std::string, RoisPerFrame>* appearance, const ScoringConfig& config,
    const PreprocessConfig* requested = nullptr);

/// AUROC over all frames of all videos, concatenated.
double dataset_auroc(const std::vector<AnomalyScoreSeries>& series);

/// CSV `video_id,frame,R_s,R_t,R,S,label`, values printed round-trip exact.
void write_scores_csv(const std::filesystem::path& path,
                      const std::vector<AnomalyScoreSeries>& series);
std::vector<AnomalyScoreSeries> read_scores_csv(const std::filesystem::path& path);

/// One PNG per video: anomaly score curve with labelled frames shaded.
void plot_scores(const std::filesystem::path& out_dir,
                 const std::vector<AnomalyScoreSeries>& series);

}  // namespace pstrp
