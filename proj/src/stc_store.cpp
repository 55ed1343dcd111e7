#include <fmt/format.h>

#include <bit>
#include <fstream>
#include <map>

#include "json.hpp"
#include "pstrp/error.hpp"
#include "pstrp/roi.hpp"

namespace pstrp {

namespace fs = std::filesystem;
using nlohmann::json;

static_assert(std::endian::native == std::endian::little,
              "cube store files are raw little-endian float32");

namespace {

constexpr int kStoreVersion = 1;

json extraction_to_json(const ExtractionParams& p) {
  return json{{"half_window", p.half_window},
              {"confidence_threshold", p.confidence_threshold},
              {"diff_threshold", p.motion.diff_threshold},
              {"min_area", p.motion.min_area},
              {"dilation", p.motion.dilation},
              {"merge_iou", p.merge_iou},
              {"use_motion", p.use_motion}};
}

ExtractionParams extraction_from_json(const json& j) {
  ExtractionParams p;
  p.half_window = j.at("half_window").get<int>();
  p.confidence_threshold = j.at("confidence_threshold").get<double>();
  p.motion.diff_threshold = j.at("diff_threshold").get<double>();
  p.motion.min_area = j.at("min_area").get<int>();
  p.motion.dilation = j.at("dilation").get<int>();
  p.merge_iou = j.at("merge_iou").get<double>();
  p.use_motion = j.at("use_motion").get<bool>();
  return p;
}

}  // namespace

void write_stc_store(const fs::path& dir, const StcStoreMeta& meta,
                     const std::vector<SpatioTemporalCube>& cubes) {
  fs::create_directories(dir);
  std::map<std::string, std::vector<const SpatioTemporalCube*>> by_video;
  for (const auto& cube : cubes) {
    if (cube.half_window != meta.half_window || cube.channels != meta.channels ||
        cube.size != meta.size) {
      throw Error(ErrorCode::kShape, "cube store: cube shape disagrees with store metadata");
    }
    by_video[cube.video_id].push_back(&cube);
  }
  json entries = json::array();
  for (const auto& [video, list] : by_video) {
    const std::string file = video + ".stc";
    std::ofstream out(dir / file, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::kIo, "cannot write " + (dir / file).string());
    std::uint64_t offset = 0;
    for (const auto* cube : list) {
      const auto bytes = cube->data.size() * sizeof(float);
      out.write(reinterpret_cast<const char*>(cube->data.data()),
                static_cast<std::streamsize>(bytes));
      entries.push_back({{"video_id", video},
                         {"frame", cube->t},
                         {"box",
                          {cube->box.x1, cube->box.y1, cube->box.x2, cube->box.y2}},
                         {"confidence", cube->box.confidence},
                         {"source", std::string(box_source_name(cube->box.source))},
                         {"file", file},
                         {"offset", offset}});
      offset += bytes;
    }
  }
  json manifest{{"version", kStoreVersion},
                {"half_window", meta.half_window},
                {"channels", meta.channels},
                {"size", meta.size},
                {"extraction", extraction_to_json(meta.extraction)},
                {"cubes", std::move(entries)}};
  std::ofstream out(dir / "manifest.json", std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + (dir / "manifest.json").string());
  out << manifest.dump(1) << '\n';
}

StcStore read_stc_store(const fs::path& dir) {
  const fs::path manifest_path = dir / "manifest.json";
  std::ifstream in(manifest_path);
  if (!in) throw Error(ErrorCode::kIo, "cube store: missing " + manifest_path.string());
  json manifest;
  try {
    manifest = json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kParse, manifest_path.string() + ": " + e.what());
  }
  if (manifest.value("version", 0) != kStoreVersion) {
    throw Error(ErrorCode::kParse, "cube store: unsupported manifest version");
  }
  StcStore store;
  store.meta.half_window = manifest.at("half_window").get<int>();
  store.meta.channels = manifest.at("channels").get<int>();
  store.meta.size = manifest.at("size").get<int>();
  store.meta.extraction = extraction_from_json(manifest.at("extraction"));
  const std::size_t count = static_cast<std::size_t>(2 * store.meta.half_window + 1) *
                            store.meta.channels * store.meta.size * store.meta.size;
  std::map<std::string, std::ifstream> files;
  for (const auto& entry : manifest.at("cubes")) {
    SpatioTemporalCube cube;
    cube.video_id = entry.at("video_id").get<std::string>();
    cube.t = entry.at("frame").get<int>();
    const auto& b = entry.at("box");
    cube.box = BoundingBox{b.at(0).get<int>(), b.at(1).get<int>(), b.at(2).get<int>(),
                           b.at(3).get<int>(), entry.at("confidence").get<double>(),
                           parse_box_source(entry.at("source").get<std::string>())};
    cube.half_window = store.meta.half_window;
    cube.channels = store.meta.channels;
    cube.size = store.meta.size;
    cube.data.resize(count);
    const std::string file = entry.at("file").get<std::string>();
    auto it = files.find(file);
    if (it == files.end()) {
      it = files.emplace(file, std::ifstream(dir / file, std::ios::binary)).first;
      if (!it->second) throw Error(ErrorCode::kIo, "cube store: missing " + (dir / file).string());
    }
    it->second.seekg(static_cast<std::streamoff>(entry.at("offset").get<std::uint64_t>()));
    it->second.read(reinterpret_cast<char*>(cube.data.data()),
                    static_cast<std::streamsize>(count * sizeof(float)));
    if (!it->second) {
      throw Error(ErrorCode::kIo, fmt::format("cube store: truncated {}", file));
    }
    store.cubes.push_back(std::move(cube));
  }
  return store;
}

}  // namespace pstrp
