#include "pstrp/roi.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "pstrp/error.hpp"

namespace pstrp {

std::string_view box_source_name(BoxSource source) {
  switch (source) {
    case BoxSource::kAppearance:
      return "appearance";
    case BoxSource::kMotion:
      return "motion";
    case BoxSource::kMerged:
      return "merged";
  }
  return "unknown";
}

BoxSource parse_box_source(std::string_view name) {
  if (name == "appearance") return BoxSource::kAppearance;
  if (name == "motion") return BoxSource::kMotion;
  if (name == "merged") return BoxSource::kMerged;
  throw Error(ErrorCode::kParse, fmt::format("unknown box source '{}'", name));
}

double iou(const BoundingBox& a, const BoundingBox& b) {
  const long ix = std::max(0, std::min(a.x2, b.x2) - std::max(a.x1, b.x1));
  const long iy = std::max(0, std::min(a.y2, b.y2) - std::max(a.y1, b.y1));
  const long inter = ix * iy;
  const long uni = a.area() + b.area() - inter;
  return uni > 0 ? static_cast<double>(inter) / static_cast<double>(uni) : 0.0;
}

namespace {

template <typename Sink>
void parse_boxes_file(const std::filesystem::path& path, Sink&& sink) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open boxes file " + path.string());
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream fields(line);
    std::string video;
    BoundingBox box;
    int frame = 0;
    std::string extra;
    if (!(fields >> video >> frame >> box.x1 >> box.y1 >> box.x2 >> box.y2 >> box.confidence) ||
        (fields >> extra)) {
      throw Error(ErrorCode::kParse,
                  fmt::format("{}:{}: malformed box record", path.string(), line_no));
    }
    if (box.x2 <= box.x1 || box.y2 <= box.y1 || frame < 0 ||
        !(box.confidence >= 0.0 && box.confidence <= 1.0)) {
      throw Error(ErrorCode::kParse,
                  fmt::format("{}:{}: invalid box geometry or confidence", path.string(), line_no));
    }
    box.source = BoxSource::kAppearance;
    sink(video, frame, box);
  }
}

}  // namespace

AppearanceRois load_appearance_rois(const std::filesystem::path& boxes_path,
                                    const std::string& video_id, double confidence_threshold) {
  if (!(confidence_threshold >= 0.0 && confidence_threshold <= 1.0)) {
    throw Error(ErrorCode::kConfig, "confidence threshold must lie in [0,1]");
  }
  AppearanceRois result;
  bool seen = false;
  parse_boxes_file(boxes_path, [&](const std::string& video, int frame, const BoundingBox& box) {
    if (video != video_id) return;
    seen = true;
    if (box.confidence >= confidence_threshold) result.boxes[frame].push_back(box);
  });
  result.unknown_video = !seen;
  return result;
}

std::map<std::string, RoisPerFrame> load_all_appearance_rois(
    const std::filesystem::path& boxes_path, double confidence_threshold) {
  std::map<std::string, RoisPerFrame> result;
  parse_boxes_file(boxes_path, [&](const std::string& video, int frame, const BoundingBox& box) {
    if (box.confidence >= confidence_threshold) result[video][frame].push_back(box);
  });
  return result;
}

std::vector<BoundingBox> motion_rois(const FrameSequence& seq, int t, const MotionParams& params) {
  if (t < 1 || t >= seq.frame_count()) {
    throw Error(ErrorCode::kIndex,
                fmt::format("motion_rois: frame {} outside [1, {})", t, seq.frame_count()));
  }
  const int h = seq.height;
  const int w = seq.width;
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  const auto cur = seq.frame(t);
  const auto prev = seq.frame(t - 1);

  std::vector<std::uint8_t> mask(plane, 0);
  for (std::size_t p = 0; p < plane; ++p) {
    double diff = 0.0;
    for (int c = 0; c < seq.channels; ++c) {
      const std::size_t k = static_cast<std::size_t>(c) * plane + p;
      diff += std::fabs(static_cast<double>(cur[k]) - static_cast<double>(prev[k]));
    }
    mask[p] = diff > params.diff_threshold ? 1 : 0;
  }

  // Square dilation, separable: rows then columns.
  if (params.dilation > 0) {
    const int r = params.dilation;
    std::vector<std::uint8_t> tmp(plane, 0);
    for (int y = 0; y < h; ++y) {
      int last = -1 - r;  // most recent set pixel at or left of x + r
      for (int x = 0; x < w + r; ++x) {
        if (x < w && mask[static_cast<std::size_t>(y) * w + x]) last = x;
        const int out = x - r;
        if (out >= 0 && out < w && last >= out - r) tmp[static_cast<std::size_t>(y) * w + out] = 1;
      }
    }
    std::fill(mask.begin(), mask.end(), 0);
    for (int x = 0; x < w; ++x) {
      int last = -1 - r;
      for (int y = 0; y < h + r; ++y) {
        if (y < h && tmp[static_cast<std::size_t>(y) * w + x]) last = y;
        const int out = y - r;
        if (out >= 0 && out < h && last >= out - r) mask[static_cast<std::size_t>(out) * w + x] = 1;
      }
    }
  }

  // 8-connected components via iterative flood fill, scanned in raster order.
  std::vector<BoundingBox> boxes;
  std::vector<int> stack;
  for (int y0 = 0; y0 < h; ++y0) {
    for (int x0 = 0; x0 < w; ++x0) {
      if (mask[static_cast<std::size_t>(y0) * w + x0] != 1) continue;
      BoundingBox box{x0, y0, x0 + 1, y0 + 1, 1.0, BoxSource::kMotion};
      long area = 0;
      mask[static_cast<std::size_t>(y0) * w + x0] = 2;
      stack.assign(1, y0 * w + x0);
      while (!stack.empty()) {
        const int p = stack.back();
        stack.pop_back();
        ++area;
        const int py = p / w;
        const int px = p % w;
        box.x1 = std::min(box.x1, px);
        box.y1 = std::min(box.y1, py);
        box.x2 = std::max(box.x2, px + 1);
        box.y2 = std::max(box.y2, py + 1);
        for (int dy = -1; dy <= 1; ++dy) {
          for (int dx = -1; dx <= 1; ++dx) {
            const int ny = py + dy;
            const int nx = px + dx;
            if (ny < 0 || ny >= h || nx < 0 || nx >= w) continue;
            auto& m = mask[static_cast<std::size_t>(ny) * w + nx];
            if (m == 1) {
              m = 2;
              stack.push_back(ny * w + nx);
            }
          }
        }
      }
      if (area >= params.min_area) boxes.push_back(box);
    }
  }
  return boxes;
}

std::vector<BoundingBox> merge_rois(const std::vector<BoundingBox>& appearance,
                                    const std::vector<BoundingBox>& motion, double iou_threshold) {
  std::vector<BoundingBox> out;
  out.reserve(appearance.size() + motion.size());
  for (BoundingBox box : appearance) {
    box.source = BoxSource::kMerged;
    out.push_back(box);
  }
  for (BoundingBox box : motion) {
    const bool duplicate = std::any_of(out.begin(), out.end(), [&](const BoundingBox& kept) {
      return iou(kept, box) >= iou_threshold;
    });
    if (duplicate) continue;
    box.source = BoxSource::kMerged;
    out.push_back(box);
  }
  return out;
}

void crop_resize_bilinear(std::span<const float> plane, int plane_width, int plane_height,
                          const BoundingBox& box, int out_size, std::span<float> out) {
  const double sx = static_cast<double>(box.width()) / out_size;
  const double sy = static_cast<double>(box.height()) / out_size;
  (void)plane_height;
  for (int oy = 0; oy < out_size; ++oy) {
    const double fy = std::clamp(box.y1 + (oy + 0.5) * sy - 0.5, static_cast<double>(box.y1),
                                 static_cast<double>(box.y2 - 1));
    const int y0 = static_cast<int>(std::floor(fy));
    const int y1 = std::min(y0 + 1, box.y2 - 1);
    const double wy = fy - y0;
    for (int ox = 0; ox < out_size; ++ox) {
      const double fx = std::clamp(box.x1 + (ox + 0.5) * sx - 0.5, static_cast<double>(box.x1),
                                   static_cast<double>(box.x2 - 1));
      const int x0 = static_cast<int>(std::floor(fx));
      const int x1 = std::min(x0 + 1, box.x2 - 1);
      const double wx = fx - x0;
      auto px = [&](int y, int x) {
        return static_cast<double>(plane[static_cast<std::size_t>(y) * plane_width + x]);
      };
      const double top = px(y0, x0) * (1.0 - wx) + px(y0, x1) * wx;
      const double bottom = px(y1, x0) * (1.0 - wx) + px(y1, x1) * wx;
      const double v = top * (1.0 - wy) + bottom * wy;
      out[static_cast<std::size_t>(oy) * out_size + ox] =
          std::clamp(static_cast<float>(v), 0.0f, 1.0f);
    }
  }
}

StcBuildResult build_stcs(const FrameSequence& seq, const RoisPerFrame& rois, int half_window) {
  if (half_window < 1) {
    throw Error(ErrorCode::kConfig, "build_stcs: half_window must be >= 1");
  }
  StcBuildResult result;
  const int length = 2 * half_window + 1;
  const std::size_t plane = static_cast<std::size_t>(seq.height) * seq.width;
  const std::size_t out_plane = static_cast<std::size_t>(kCubeSize) * kCubeSize;
  for (const auto& [t, boxes] : rois) {
    if (t < half_window || t >= seq.frame_count() - half_window) continue;
    for (const auto& original : boxes) {
      BoundingBox box = original;
      box.x1 = std::clamp(box.x1, 0, seq.width);
      box.x2 = std::clamp(box.x2, 0, seq.width);
      box.y1 = std::clamp(box.y1, 0, seq.height);
      box.y2 = std::clamp(box.y2, 0, seq.height);
      if (box.x2 <= box.x1 || box.y2 <= box.y1) {
        ++result.skipped;
        continue;
      }
      SpatioTemporalCube cube;
      cube.video_id = seq.video_id;
      cube.t = t;
      cube.box = box;
      cube.half_window = half_window;
      cube.channels = seq.channels;
      cube.size = kCubeSize;
      cube.data.resize(static_cast<std::size_t>(length) * seq.channels * out_plane);
      for (int l = 0; l < length; ++l) {
        const auto frame = seq.frame(t - half_window + l);
        for (int c = 0; c < seq.channels; ++c) {
          crop_resize_bilinear(
              frame.subspan(static_cast<std::size_t>(c) * plane, plane), seq.width, seq.height,
              box, kCubeSize,
              std::span<float>(cube.data).subspan(
                  (static_cast<std::size_t>(l) * seq.channels + c) * out_plane, out_plane));
        }
      }
      result.cubes.push_back(std::move(cube));
    }
  }
  return result;
}

StcBuildResult extract_video(const FrameSequence& seq, const RoisPerFrame* appearance,
                             const ExtractionParams& params) {
  RoisPerFrame rois;
  const int i = params.half_window;
  for (int t = std::max(1, i); t < seq.frame_count() - i; ++t) {
    std::vector<BoundingBox> motion;
    if (params.use_motion) motion = motion_rois(seq, t, params.motion);
    std::vector<BoundingBox> app;
    if (appearance != nullptr) {
      if (auto it = appearance->find(t); it != appearance->end()) {
        for (const auto& b : it->second) {
          if (b.confidence >= params.confidence_threshold) app.push_back(b);
        }
      }
    }
    auto merged = merge_rois(app, motion, params.merge_iou);
    if (!merged.empty()) rois[t] = std::move(merged);
  }
  return build_stcs(seq, rois, i);
}

}  // namespace pstrp
