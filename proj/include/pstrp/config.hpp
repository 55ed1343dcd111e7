#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "pstrp/checkpoint.hpp"
#include "pstrp/ingestion.hpp"
#include "pstrp/model.hpp"
#include "pstrp/roi.hpp"
#include "pstrp/scoring.hpp"
#include "pstrp/synthetic.hpp"
#include "pstrp/training.hpp"

namespace pstrp {

struct DatasetConfig {
  std::string name = "synthetic";
  std::string root;
  Layout layout = Layout::kGenericFolders;
  std::string boxes = "none";  // appearance boxes file, or "none"
};

struct PatchingConfig {
  int spatial_grid = 2;
  int k_perm = 1;
  std::uint64_t seed = 0;
};

/// Stream shape before the token count and patch size are known. `preset`
/// fills embed_dim/depth/heads; explicit keys override it.
struct StreamSpec {
  SizePreset preset = SizePreset::kTiny;
  int embed_dim = 64;
  int depth = 2;
  int heads = 4;
  double mlp_ratio = 4.0;
  double dropout = 0.1;

  StreamConfig resolve(int n_tokens, int patch_input_dim) const;
};

struct ScoringSection {
  double omega_s = 0.5;
  double omega_t = 0.5;
  bool smoothing = false;
  double smoothing_sigma = 2.0;
};

struct PipelineConfig {
  DatasetConfig dataset;
  ExtractionParams extraction;
  PatchingConfig patching;
  StreamSpec spatial_stream;
  StreamSpec temporal_stream;
  TrainConfig training;
  LossWeights loss;
  ScoringSection scoring;
  SyntheticSpec synthetic;

  /// Runs every module's own validation on its slice.
  void validate() const;

  PreprocessConfig preprocessing(int channels) const;
  ScoringConfig scoring_config(int workers) const;
};

/// Applies one `section.key=value` assignment. Unknown keys raise kUnknownKey,
/// unparsable values kConfig.
void apply_setting(PipelineConfig& config, std::string_view key, std::string_view value);
void apply_override(PipelineConfig& config, std::string_view assignment);

/// INI text with [section] headers and `key = value` lines; ';' and '#' start
/// comments. Keys not listed in all_config_keys() raise kUnknownKey.
PipelineConfig parse_config(const std::string& text, const PipelineConfig& base = {});
PipelineConfig load_config(const std::filesystem::path& path);

/// Every key with its resolved value, in a stable order. parse_config of the
/// result reproduces `config`.
std::string to_ini(const PipelineConfig& config);

std::vector<std::string> all_config_keys();

/// Synthetic spec from a config file's [synthetic] section.
SyntheticSpec read_synthetic_spec(const std::filesystem::path& path);

/// "16-32|24-40,50-60|" : one group per test video, half-open intervals.
std::vector<std::vector<FrameInterval>> parse_intervals(std::string_view text);
std::string format_intervals(const std::vector<std::vector<FrameInterval>>& intervals);

}  // namespace pstrp
