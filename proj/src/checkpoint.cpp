#include "pstrp/checkpoint.hpp"

#include <fmt/format.h>

#include <bit>
#include <cstring>
#include <fstream>

#include "json.hpp"
#include "pstrp/error.hpp"

namespace pstrp {

namespace fs = std::filesystem;
using nlohmann::json;

static_assert(std::endian::native == std::endian::little,
              "checkpoint tensor data is raw little-endian float64");

namespace {

constexpr char kMagic[8] = {'P', 'S', 'T', 'R', 'P', 'C', 'K', 'P'};
constexpr std::uint32_t kFormatVersion = 1;

json stream_to_json(const StreamConfig& c) {
  return json{{"n_tokens", c.n_tokens},   {"patch_input_dim", c.patch_input_dim},
              {"embed_dim", c.embed_dim}, {"depth", c.depth},
              {"heads", c.heads},         {"mlp_ratio", c.mlp_ratio},
              {"dropout", c.dropout},     {"preset", std::string(size_preset_name(c.preset))}};
}

StreamConfig stream_from_json(const json& j) {
  StreamConfig c;
  c.n_tokens = j.at("n_tokens").get<int>();
  c.patch_input_dim = j.at("patch_input_dim").get<int>();
  c.embed_dim = j.at("embed_dim").get<int>();
  c.depth = j.at("depth").get<int>();
  c.heads = j.at("heads").get<int>();
  c.mlp_ratio = j.at("mlp_ratio").get<double>();
  c.dropout = j.at("dropout").get<double>();
  c.preset = parse_size_preset(j.at("preset").get<std::string>());
  return c;
}

json preprocess_to_json(const PreprocessConfig& p) {
  return json{{"half_window", p.extraction.half_window},
              {"confidence_threshold", p.extraction.confidence_threshold},
              {"diff_threshold", p.extraction.motion.diff_threshold},
              {"min_area", p.extraction.motion.min_area},
              {"dilation", p.extraction.motion.dilation},
              {"merge_iou", p.extraction.merge_iou},
              {"use_motion", p.extraction.use_motion},
              {"spatial_grid", p.spatial_grid},
              {"channels", p.channels},
              {"cube_size", p.cube_size},
              {"pixel_range", "unit"}};
}

PreprocessConfig preprocess_from_json(const json& j) {
  PreprocessConfig p;
  p.extraction.half_window = j.at("half_window").get<int>();
  p.extraction.confidence_threshold = j.at("confidence_threshold").get<double>();
  p.extraction.motion.diff_threshold = j.at("diff_threshold").get<double>();
  p.extraction.motion.min_area = j.at("min_area").get<int>();
  p.extraction.motion.dilation = j.at("dilation").get<int>();
  p.extraction.merge_iou = j.at("merge_iou").get<double>();
  p.extraction.use_motion = j.at("use_motion").get<bool>();
  p.spatial_grid = j.at("spatial_grid").get<int>();
  p.channels = j.at("channels").get<int>();
  p.cube_size = j.at("cube_size").get<int>();
  return p;
}

}  // namespace

std::string describe_mismatch(const PreprocessConfig& expected, const PreprocessConfig& actual) {
  const json a = preprocess_to_json(expected);
  const json b = preprocess_to_json(actual);
  for (const auto& [key, value] : a.items()) {
    if (b.at(key) != value) {
      return fmt::format("{}: checkpoint has {}, requested {}", key, value.dump(),
                         b.at(key).dump());
    }
  }
  return {};
}

void save_checkpoint(const fs::path& path, const TwoStreamModel& model,
                     const PreprocessConfig& preprocessing) {
  json tensors = json::array();
  std::uint64_t offset = 0;
  auto add = [&](const char* stream, const TransformerStream& s) {
    for (const Tensor* t : s.parameters()) {
      tensors.push_back({{"stream", stream},
                         {"name", t->name},
                         {"rows", t->rows},
                         {"cols", t->cols},
                         {"offset", offset}});
      offset += t->size() * sizeof(double);
    }
  };
  add("spatial", model.spatial);
  add("temporal", model.temporal);
  const json manifest{{"format", "pstrp-checkpoint"},
                      {"version", kFormatVersion},
                      {"spatial", stream_to_json(model.spatial.cfg)},
                      {"temporal", stream_to_json(model.temporal.cfg)},
                      {"preprocessing", preprocess_to_json(preprocessing)},
                      {"tensors", std::move(tensors)},
                      {"data_bytes", offset}};
  const std::string text = manifest.dump();

  if (!path.parent_path().empty()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::kIo, "cannot write " + tmp.string());
    out.write(kMagic, sizeof(kMagic));
    const std::uint32_t version = kFormatVersion;
    out.write(reinterpret_cast<const char*>(&version), sizeof(version));
    const std::uint64_t length = text.size();
    out.write(reinterpret_cast<const char*>(&length), sizeof(length));
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const Tensor* t : model.parameters()) {
      out.write(reinterpret_cast<const char*>(t->value.data()),
                static_cast<std::streamsize>(t->size() * sizeof(double)));
    }
    if (!out) throw Error(ErrorCode::kIo, "short write to " + tmp.string());
  }
  fs::rename(tmp, path);
}

Checkpoint load_checkpoint(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open checkpoint " + path.string());
  char magic[8] = {};
  std::uint32_t version = 0;
  std::uint64_t length = 0;
  in.read(magic, sizeof(magic));
  in.read(reinterpret_cast<char*>(&version), sizeof(version));
  in.read(reinterpret_cast<char*>(&length), sizeof(length));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw Error(ErrorCode::kParse, path.string() + ": not a checkpoint file");
  }
  if (version != kFormatVersion) {
    throw Error(ErrorCode::kParse,
                fmt::format("{}: unsupported checkpoint version {}", path.string(), version));
  }
  std::string text(length, '\0');
  in.read(text.data(), static_cast<std::streamsize>(length));
  json manifest;
  try {
    manifest = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kParse, path.string() + ": " + e.what());
  }
  Checkpoint ckpt{TwoStreamModel{TransformerStream(stream_from_json(manifest.at("spatial")), nullptr),
                                 TransformerStream(stream_from_json(manifest.at("temporal")), nullptr)},
                  preprocess_from_json(manifest.at("preprocessing"))};
  const auto params = ckpt.model.parameters();
  const auto& table = manifest.at("tensors");
  if (table.size() != params.size()) {
    throw Error(ErrorCode::kParse, path.string() + ": tensor table does not match the configs");
  }
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor& t = *params[k];
    if (table[k].at("name").get<std::string>() != t.name || table[k].at("rows").get<int>() != t.rows ||
        table[k].at("cols").get<int>() != t.cols) {
      throw Error(ErrorCode::kParse,
                  fmt::format("{}: tensor {} does not match the configs", path.string(), t.name));
    }
    in.read(reinterpret_cast<char*>(t.value.data()),
            static_cast<std::streamsize>(t.size() * sizeof(double)));
  }
  if (!in) throw Error(ErrorCode::kParse, path.string() + ": truncated tensor data");
  return ckpt;
}

}  // namespace pstrp
