#include "pstrp/synthetic.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>

#include "pstrp/error.hpp"
#include "pstrp/random.hpp"

namespace pstrp {

std::string_view anomaly_kind_name(AnomalyKind kind) {
  switch (kind) {
    case AnomalyKind::kFast:
      return "fast";
    case AnomalyKind::kReversed:
      return "reversed";
    case AnomalyKind::kInvertedTexture:
      return "inverted_texture";
  }
  return "unknown";
}

AnomalyKind parse_anomaly_kind(std::string_view name) {
  if (name == "fast") return AnomalyKind::kFast;
  if (name == "reversed") return AnomalyKind::kReversed;
  if (name == "inverted_texture") return AnomalyKind::kInvertedTexture;
  throw Error(ErrorCode::kConfig, fmt::format("unknown anomaly kind '{}'", name));
}

namespace {

int lane_count(const SyntheticSpec& spec) { return spec.objects_per_video + 1; }

}  // namespace

void SyntheticSpec::validate() const {
  auto fail = [](const std::string& msg) { throw Error(ErrorCode::kValidation, msg); };
  if (num_train_videos < 1 || num_test_videos < 1) fail("synthetic: video counts must be >= 1");
  if (frames_per_video < 1) fail("synthetic: frames_per_video must be >= 1");
  if (height < 8 || width < 8) fail("synthetic: canvas too small");
  if (objects_per_video < 1) fail("synthetic: objects_per_video must be >= 1");
  if (normal_behaviors.empty()) fail("synthetic: at least one normal behavior is required");
  if (!(background >= 0.0 && background <= 1.0)) fail("synthetic: background outside [0,1]");
  if (noise_std < 0.0) fail("synthetic: noise_std must be >= 0");
  const int lane_height = height / lane_count(*this);
  for (const auto& b : normal_behaviors) {
    if (b.size_min < 2 || b.size_max < b.size_min) fail("synthetic: invalid object size range");
    if (b.size_max > lane_height - 2) {
      fail(fmt::format("synthetic: objects of size {} do not fit lanes of height {}", b.size_max,
                       lane_height));
    }
    if (b.speed_min < 0.0 || b.speed_max < b.speed_min) fail("synthetic: invalid speed range");
    if (!(0.0 <= b.intensity_min && b.intensity_min <= b.intensity_max && b.intensity_max <= 1.0)) {
      fail("synthetic: invalid intensity range");
    }
    if (b.size_max + b.speed_max * (frames_per_video - 1) > width) {
      fail("synthetic: canvas too narrow for objects to stay in view for the whole video");
    }
  }
  for (const auto& a : anomaly_behaviors) {
    if (a.speed_factor_min <= 0.0 || a.speed_factor_max < a.speed_factor_min) {
      fail("synthetic: invalid anomaly speed factor range");
    }
  }
  if (static_cast<int>(anomaly_intervals.size()) > num_test_videos) {
    fail("synthetic: more anomaly interval lists than test videos");
  }
  for (std::size_t v = 0; v < anomaly_intervals.size(); ++v) {
    for (const auto& iv : anomaly_intervals[v]) {
      if (iv.start < 0 || iv.end > frames_per_video || iv.start >= iv.end) {
        fail(fmt::format("synthetic: anomaly interval [{},{}) of test video {} outside [0,{})",
                         iv.start, iv.end, v, frames_per_video));
      }
    }
    if (!anomaly_intervals[v].empty() && anomaly_behaviors.empty()) {
      fail("synthetic: anomaly intervals given without anomaly behaviors");
    }
  }
}

namespace {

struct Episode {
  FrameInterval interval;
  double rate = 1.0;  // horizontal progress per frame relative to the object's speed
  bool inverted = false;
};

struct Mover {
  double x0 = 0.0;
  double y0 = 0.0;
  double vx = 0.0;
  double vy = 0.0;
  int w = 0;
  int h = 0;
  double lo = 0.0;
  double hi = 0.0;
  std::vector<double> progress;  // tau(t): accumulated horizontal progress at frame t
  std::vector<Episode> episodes;

  bool inverted_at(int t) const {
    for (const auto& e : episodes) {
      if (e.inverted && e.interval.start <= t && t < e.interval.end) return true;
    }
    return false;
  }

  BoundingBox box_at(int t) const {
    const int x = static_cast<int>(std::lround(x0 + vx * progress[static_cast<std::size_t>(t)]));
    const int y = static_cast<int>(std::lround(y0 + vy * t));
    return BoundingBox{x, y, x + w, y + h, 1.0, BoxSource::kAppearance};
  }
};

std::vector<double> progress_curve(int frames, const std::vector<Episode>& episodes) {
  std::vector<double> tau(static_cast<std::size_t>(frames), 0.0);
  for (int t = 1; t < frames; ++t) {
    double rate = 1.0;
    for (const auto& e : episodes) {
      if (e.interval.start <= t - 1 && t - 1 < e.interval.end) rate = e.rate;
    }
    tau[static_cast<std::size_t>(t)] = tau[static_cast<std::size_t>(t) - 1] + rate;
  }
  return tau;
}

Mover spawn(Rng& rng, const ObjectBehavior& b, int lane, int lane_height, int canvas_width,
            int frames, std::vector<Episode> episodes) {
  Mover m;
  m.w = b.size_min + static_cast<int>(rng.below(static_cast<std::uint64_t>(b.size_max - b.size_min + 1)));
  m.h = b.size_min + static_cast<int>(rng.below(static_cast<std::uint64_t>(b.size_max - b.size_min + 1)));
  m.vx = rng.uniform(b.speed_min, b.speed_max);
  m.progress = progress_curve(frames, episodes);
  m.episodes = std::move(episodes);
  const auto [tau_lo, tau_hi] = std::minmax_element(m.progress.begin(), m.progress.end());
  const double travel = std::max(1.0, *tau_hi - *tau_lo);
  // Keep the whole trajectory inside the canvas; episodes that travel far slow
  // the object down overall.
  const double room = canvas_width - m.w;
  if (m.vx * travel > room) m.vx = room / travel;
  m.x0 = -m.vx * *tau_lo + rng.uniform(0.0, std::max(0.0, room - m.vx * travel));
  const int span = std::max(1, frames - 1);
  // Vertical drift stays inside the middle third of the lane's free rows, so
  // objects in neighbouring lanes stay well apart.
  const double margin = std::max(0, lane_height - b.size_max) / 3.0;
  const double slack = std::max(0.0, lane_height - m.h - 2.0 * margin);
  m.vy = 0.1 * rng.uniform(-1.0, 1.0);
  if (std::abs(m.vy) * span > slack / 2.0) m.vy = std::copysign(slack / 2.0 / span, m.vy);
  const double lane_top = static_cast<double>(lane) * lane_height + margin;
  const double y_lo = lane_top + std::max(0.0, -m.vy * span);
  const double y_hi = lane_top + slack - std::max(0.0, m.vy * span);
  m.y0 = rng.uniform(y_lo, std::max(y_lo, y_hi));
  m.lo = rng.uniform(b.intensity_min, b.intensity_max);
  m.hi = rng.uniform(b.intensity_min, b.intensity_max);
  if (m.hi < m.lo) std::swap(m.lo, m.hi);
  // Guarantee a visible gradient.
  if (m.hi - m.lo < 0.2) {
    m.lo = std::max(0.0, m.hi - 0.3);
  }
  return m;
}

void render(const Mover& m, int t, int height, int width, std::vector<double>& canvas) {
  const BoundingBox box = m.box_at(t);
  const bool inverted = m.inverted_at(t);
  for (int y = std::max(0, box.y1); y < std::min(height, box.y2); ++y) {
    for (int x = std::max(0, box.x1); x < std::min(width, box.x2); ++x) {
      const double u = m.w > 1 ? static_cast<double>(x - box.x1) / (m.w - 1) : 0.0;
      const double v = m.h > 1 ? static_cast<double>(y - box.y1) / (m.h - 1) : 0.0;
      const double ramp = inverted ? (2.0 - u - v) / 2.0 : (u + v) / 2.0;
      canvas[static_cast<std::size_t>(y) * width + x] = m.lo + (m.hi - m.lo) * ramp;
    }
  }
}

FrameSequence render_video(const SyntheticSpec& spec, const std::string& id,
                           const std::vector<Mover>& movers, Rng& noise_rng,
                           std::vector<BoxRecord>& boxes) {
  FrameSequence seq;
  seq.video_id = id;
  seq.channels = 1;
  seq.height = spec.height;
  seq.width = spec.width;
  std::vector<double> canvas(static_cast<std::size_t>(spec.height) * spec.width);
  for (int t = 0; t < spec.frames_per_video; ++t) {
    std::fill(canvas.begin(), canvas.end(), spec.background);
    for (const auto& m : movers) {
      render(m, t, spec.height, spec.width, canvas);
      BoundingBox box = m.box_at(t);
      box.x1 = std::max(0, box.x1);
      box.y1 = std::max(0, box.y1);
      box.x2 = std::min(spec.width, box.x2);
      box.y2 = std::min(spec.height, box.y2);
      if (box.x1 < box.x2 && box.y1 < box.y2) boxes.push_back({id, t, box});
    }
    std::vector<float> frame(canvas.size());
    for (std::size_t k = 0; k < canvas.size(); ++k) {
      double v = canvas[k];
      if (spec.noise_std > 0.0) v += spec.noise_std * noise_rng.normal();
      v = std::clamp(v, 0.0, 1.0);
      frame[k] = static_cast<float>(std::lround(v * 255.0)) / 255.0f;
    }
    seq.frames.push_back(std::move(frame));
  }
  return seq;
}

}  // namespace

SyntheticDataset generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  SyntheticDataset out;
  const int lanes = lane_count(spec);
  const int lane_height = spec.height / lanes;
  const int frames = spec.frames_per_video;

  // The last object of a video is the host: anomaly episodes change how it
  // moves or looks, so anomalous frames hold the same objects as normal ones.
  auto movers_for = [&](Rng& rng, const std::vector<Episode>& host_episodes) {
    std::vector<Mover> movers;
    const auto lane_order = rng.permutation(lanes);
    for (int k = 0; k < spec.objects_per_video; ++k) {
      const auto& behavior =
          spec.normal_behaviors[rng.below(spec.normal_behaviors.size())];
      const bool host = k == spec.objects_per_video - 1;
      movers.push_back(spawn(rng, behavior, lane_order[static_cast<std::size_t>(k)], lane_height,
                             spec.width, frames, host ? host_episodes : std::vector<Episode>{}));
    }
    return movers;
  };

  for (int v = 0; v < spec.num_train_videos; ++v) {
    Rng rng(mix_seed(spec.seed, 1, static_cast<std::uint64_t>(v)));
    Rng noise(mix_seed(spec.seed, 2, static_cast<std::uint64_t>(v)));
    const auto movers = movers_for(rng, {});
    out.dataset.train.push_back(
        render_video(spec, fmt::format("train_{:03d}", v), movers, noise, out.boxes));
  }

  for (int v = 0; v < spec.num_test_videos; ++v) {
    Rng rng(mix_seed(spec.seed, 3, static_cast<std::uint64_t>(v)));
    Rng noise(mix_seed(spec.seed, 4, static_cast<std::uint64_t>(v)));
    FrameLabels labels;
    labels.video_id = fmt::format("test_{:03d}", v);
    labels.labels.assign(static_cast<std::size_t>(frames), 0);
    std::vector<Episode> episodes;
    if (static_cast<std::size_t>(v) < spec.anomaly_intervals.size()) {
      const auto& intervals = spec.anomaly_intervals[static_cast<std::size_t>(v)];
      for (std::size_t k = 0; k < intervals.size(); ++k) {
        const auto& iv = intervals[k];
        const auto& anomaly =
            spec.anomaly_behaviors[(static_cast<std::size_t>(v) + k) % spec.anomaly_behaviors.size()];
        Episode e{iv, 1.0, false};
        switch (anomaly.kind) {
          case AnomalyKind::kFast:
            e.rate = rng.uniform(anomaly.speed_factor_min, anomaly.speed_factor_max);
            break;
          case AnomalyKind::kReversed:
            e.rate = -1.0;
            break;
          case AnomalyKind::kInvertedTexture:
            e.inverted = true;
            break;
        }
        episodes.push_back(e);
        for (int t = iv.start; t < iv.end; ++t) labels.labels[static_cast<std::size_t>(t)] = 1;
      }
    }
    const auto movers = movers_for(rng, episodes);
    LabeledSequence item;
    item.sequence = render_video(spec, labels.video_id, movers, noise, out.boxes);
    item.labels = std::move(labels);
    out.dataset.test.push_back(std::move(item));
  }
  return out;
}

}  // namespace pstrp
