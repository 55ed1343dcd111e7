#include <fmt/format.h>

#include <algorithm>
#include <cmath>

#include "pstrp/error.hpp"
#include "pstrp/image.hpp"
#include "pstrp/scoring.hpp"

namespace pstrp {

namespace {

constexpr int kWidth = 640;
constexpr int kHeight = 240;
constexpr int kMargin = 20;

void put(Image& img, int x, int y, float r, float g, float b) {
  if (x < 0 || y < 0 || x >= img.width || y >= img.height) return;
  img.at(0, y, x) = r;
  img.at(1, y, x) = g;
  img.at(2, y, x) = b;
}

void line(Image& img, int x0, int y0, int x1, int y1) {
  const int dx = std::abs(x1 - x0);
  const int dy = -std::abs(y1 - y0);
  const int sx = x0 < x1 ? 1 : -1;
  const int sy = y0 < y1 ? 1 : -1;
  int err = dx + dy;
  while (true) {
    put(img, x0, y0, 0.1f, 0.2f, 0.8f);
    if (x0 == x1 && y0 == y1) break;
    const int e2 = 2 * err;
    if (e2 >= dy) {
      err += dy;
      x0 += sx;
    }
    if (e2 <= dx) {
      err += dx;
      y0 += sy;
    }
  }
}

}  // namespace

void plot_scores(const std::filesystem::path& out_dir,
                 const std::vector<AnomalyScoreSeries>& series) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw Error(ErrorCode::kIo, "cannot create " + out_dir.string());
  for (const auto& s : series) {
    Image img{3, kHeight, kWidth,
              std::vector<float>(static_cast<std::size_t>(3) * kHeight * kWidth, 1.0f)};
    const int frames = static_cast<int>(s.S.size());
    const int plot_w = kWidth - 2 * kMargin;
    const int plot_h = kHeight - 2 * kMargin;
    auto x_of = [&](int t) {
      return kMargin + (frames > 1 ? t * (plot_w - 1) / (frames - 1) : plot_w / 2);
    };
    auto y_of = [&](double v) {
      const double c = std::clamp(v, 0.0, 1.0);
      return kMargin + static_cast<int>(std::lround((1.0 - c) * (plot_h - 1)));
    };
    // Labelled frames shaded, each spanning half a step on both sides.
    for (int t = 0; t < frames && t < static_cast<int>(s.labels.size()); ++t) {
      if (s.labels[static_cast<std::size_t>(t)] == 0) continue;
      const int lo = t == 0 ? x_of(0) : (x_of(t - 1) + x_of(t)) / 2;
      const int hi = t + 1 >= frames ? x_of(t) : (x_of(t) + x_of(t + 1)) / 2;
      for (int x = lo; x <= hi; ++x) {
        for (int y = kMargin; y < kMargin + plot_h; ++y) put(img, x, y, 1.0f, 0.8f, 0.8f);
      }
    }
    for (int x = kMargin; x < kMargin + plot_w; ++x) {
      put(img, x, kMargin + plot_h, 0.0f, 0.0f, 0.0f);
    }
    for (int y = kMargin; y <= kMargin + plot_h; ++y) put(img, kMargin - 1, y, 0.0f, 0.0f, 0.0f);
    for (int t = 1; t < frames; ++t) {
      line(img, x_of(t - 1), y_of(s.S[static_cast<std::size_t>(t - 1)]), x_of(t),
           y_of(s.S[static_cast<std::size_t>(t)]));
    }
    if (frames == 1) put(img, x_of(0), y_of(s.S[0]), 0.1f, 0.2f, 0.8f);
    write_png(out_dir / fmt::format("{}.png", s.video_id), img);
  }
}

}  // namespace pstrp
