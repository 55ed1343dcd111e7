#pragma once

#include <filesystem>

#include "pstrp/model.hpp"
#include "pstrp/roi.hpp"

namespace pstrp {

/// Everything needed to turn raw frames into model input the same way the
/// model was trained.
struct PreprocessConfig {
  ExtractionParams extraction;
  int spatial_grid = 2;
  int channels = 1;
  int cube_size = kCubeSize;
};

/// Field-by-field comparison; returns an empty string when equal, otherwise a
/// description of the first difference.
std::string describe_mismatch(const PreprocessConfig& expected, const PreprocessConfig& actual);

struct Checkpoint {
  TwoStreamModel model;
  PreprocessConfig preprocessing;
};

/// Single-file archive: magic "PSTRPCKP", u32 format version, u64 manifest
/// length, JSON manifest (stream configs, preprocessing, tensor table), then
/// raw little-endian float64 tensor data. Written to a temporary file and
/// renamed into place.
void save_checkpoint(const std::filesystem::path& path, const TwoStreamModel& model,
                     const PreprocessConfig& preprocessing);

Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace pstrp
