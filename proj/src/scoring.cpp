#include "pstrp/scoring.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <tuple>

#include "pstrp/error.hpp"
#include "pstrp/parallel.hpp"
#include "pstrp/random.hpp"

namespace pstrp {

namespace fs = std::filesystem;

double object_regularity(const AlignedOrderMatrix& m) {
  if (m.n() < 1) throw Error(ErrorCode::kShape, "object_regularity: empty matrix");
  double r = m.diag(0);
  for (int k = 1; k < m.n(); ++k) r = std::min(r, m.diag(k));
  return r;
}

std::pair<double, double> frame_regularity(std::span<const RegularityRecord> records) {
  double rs = 1.0;
  double rt = 1.0;
  for (const auto& r : records) {
    rs = std::min(rs, r.r_s);
    rt = std::min(rt, r.r_t);
  }
  return {rs, rt};
}

std::vector<double> normalize_video(std::span<const double> values) {
  if (values.empty()) throw Error(ErrorCode::kValidation, "normalize_video: empty series");
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  const double min = *lo;
  const double range = *hi - min;
  std::vector<double> out(values.size(), 1.0);
  if (range > 0.0) {
    for (std::size_t k = 0; k < values.size(); ++k) out[k] = (values[k] - min) / range;
  }
  return out;
}

Combined combine(std::span<const double> r_s, std::span<const double> r_t, double w_s, double w_t) {
  if (r_s.size() != r_t.size()) {
    throw Error(ErrorCode::kShape,
                fmt::format("combine: {} spatial vs {} temporal scores", r_s.size(), r_t.size()));
  }
  Combined out;
  out.R.resize(r_s.size());
  out.S.resize(r_s.size());
  for (std::size_t k = 0; k < r_s.size(); ++k) {
    out.R[k] = w_s * r_s[k] + w_t * r_t[k];
    out.S[k] = 1.0 - out.R[k];
  }
  return out;
}

double auroc(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  if (scores.size() != labels.size()) {
    throw Error(ErrorCode::kShape, "auroc: scores and labels differ in length");
  }
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Midranks (1-based) over tied runs.
  double positive_rank_sum = 0.0;
  std::size_t positives = 0;
  for (std::size_t start = 0; start < n;) {
    std::size_t stop = start + 1;
    while (stop < n && scores[order[stop]] == scores[order[start]]) ++stop;
    const double midrank = 0.5 * static_cast<double>(start + 1 + stop);
    for (std::size_t k = start; k < stop; ++k) {
      if (labels[order[k]] != 0) {
        positive_rank_sum += midrank;
        ++positives;
      }
    }
    start = stop;
  }
  const std::size_t negatives = n - positives;
  if (positives == 0 || negatives == 0) {
    throw Error(ErrorCode::kUndefined, "AUROC undefined: labels contain a single class");
  }
  const double p = static_cast<double>(positives);
  const double u = positive_rank_sum - p * (p + 1.0) / 2.0;
  return u / (p * static_cast<double>(negatives));
}

void ScoringConfig::validate() const {
  if (k_perm < 1) throw Error(ErrorCode::kConfig, "scoring: k_perm must be >= 1");
  if (!(omega_s >= 0.0) || !(omega_t >= 0.0)) {
    throw Error(ErrorCode::kConfig, "scoring: omega weights must be >= 0");
  }
  if (smoothing && !(smoothing_sigma > 0.0)) {
    throw Error(ErrorCode::kConfig, "scoring: smoothing_sigma must be > 0");
  }
}

std::vector<RegularityRecord> regularity_records(const TwoStreamModel& model,
                                                 const std::vector<SpatioTemporalCube>& cubes,
                                                 int spatial_grid, const ScoringConfig& config) {
  config.validate();
  // Object index = position among the cubes of the same (video, frame).
  std::vector<int> object_index(cubes.size(), 0);
  std::map<std::pair<std::string, int>, int> counters;
  for (std::size_t k = 0; k < cubes.size(); ++k) {
    object_index[k] = counters[{cubes[k].video_id, cubes[k].t}]++;
  }
  std::vector<RegularityRecord> records(cubes.size());
  parallel_for(cubes.size(), config.workers, [&](std::size_t k) {
    const auto& cube = cubes[k];
    const PatchSet spatial = slice_spatial(cube, spatial_grid);
    const PatchSet temporal = slice_temporal(cube);
    double rs = 0.0;
    double rt = 0.0;
    for (int p = 0; p < config.k_perm; ++p) {
      Rng rng(mix_seed(config.seed, hash_string(cube.video_id),
                       static_cast<std::uint64_t>(cube.t),
                       static_cast<std::uint64_t>(object_index[k]), static_cast<std::uint64_t>(p)));
      const auto s = shuffle(spatial, rng);
      const auto t = shuffle(temporal, rng);
      const auto out = forward(model, s.shuffled, t.shuffled, Mode::kEval);
      rs += object_regularity(align_matrix(softmax_rows(out.spatial.order_logits, spatial.n), s.perm));
      rt += object_regularity(
          align_matrix(softmax_rows(out.temporal.order_logits, temporal.n), t.perm));
    }
    records[k] = RegularityRecord{cube.video_id, cube.t, object_index[k], rs / config.k_perm,
                                  rt / config.k_perm};
  });
  return records;
}

namespace {

std::vector<double> gaussian_smooth(const std::vector<double>& x, double sigma) {
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> out(x.size());
  const int n = static_cast<int>(x.size());
  for (int i = 0; i < n; ++i) {
    double acc = 0.0;
    double weight = 0.0;
    for (int o = -radius; o <= radius; ++o) {
      const int j = std::clamp(i + o, 0, n - 1);
      const double w = std::exp(-0.5 * o * o / (sigma * sigma));
      acc += w * x[static_cast<std::size_t>(j)];
      weight += w;
    }
    out[static_cast<std::size_t>(i)] = acc / weight;
  }
  return out;
}

}  // namespace

AnomalyScoreSeries assemble_series(const std::string& video_id, int frame_count, int half_window,
                                   std::span<const RegularityRecord> records,
                                   const ScoringConfig& config) {
  if (frame_count < 1) throw Error(ErrorCode::kValidation, "assemble_series: empty video");
  std::map<int, std::vector<RegularityRecord>> by_frame;
  for (const auto& r : records) by_frame[r.frame].push_back(r);

  std::vector<double> rs(static_cast<std::size_t>(frame_count), 1.0);
  std::vector<double> rt(static_cast<std::size_t>(frame_count), 1.0);
  const int first = half_window;
  const int last = frame_count - half_window - 1;
  if (first <= last) {
    for (int t = first; t <= last; ++t) {
      auto it = by_frame.find(t);
      if (it == by_frame.end()) continue;
      std::tie(rs[static_cast<std::size_t>(t)], rt[static_cast<std::size_t>(t)]) =
          frame_regularity(it->second);
    }
    for (int t = 0; t < frame_count; ++t) {
      const int src = std::clamp(t, first, last);
      rs[static_cast<std::size_t>(t)] = rs[static_cast<std::size_t>(src)];
      rt[static_cast<std::size_t>(t)] = rt[static_cast<std::size_t>(src)];
    }
  }
  AnomalyScoreSeries series;
  series.video_id = video_id;
  series.R_s = normalize_video(rs);
  series.R_t = normalize_video(rt);
  auto combined = combine(series.R_s, series.R_t, config.omega_s, config.omega_t);
  if (config.smoothing) {
    combined.R = gaussian_smooth(combined.R, config.smoothing_sigma);
    for (std::size_t k = 0; k < combined.R.size(); ++k) combined.S[k] = 1.0 - combined.R[k];
  }
  series.R = std::move(combined.R);
  series.S = std::move(combined.S);
  return series;
}

std::vector<AnomalyScoreSeries> score_dataset(
    const Checkpoint& checkpoint, const std::vector<LabeledSequence>& test,
    const std::map<std::string, RoisPerFrame>* appearance, const ScoringConfig& config,
    const PreprocessConfig* requested) {
  config.validate();
  const PreprocessConfig& pre = checkpoint.preprocessing;
  if (requested != nullptr) {
    const std::string diff = describe_mismatch(pre, *requested);
    if (!diff.empty()) {
      throw Error(ErrorCode::kConfig, "preprocessing differs from the checkpoint: " + diff);
    }
  }
  std::vector<AnomalyScoreSeries> out;
  out.reserve(test.size());
  for (const auto& item : test) {
    const auto& seq = item.sequence;
    if (seq.channels != pre.channels) {
      throw Error(ErrorCode::kConfig,
                  fmt::format("video {} has {} channels, the checkpoint expects {}", seq.video_id,
                              seq.channels, pre.channels));
    }
    const RoisPerFrame* rois = nullptr;
    if (appearance != nullptr) {
      if (auto it = appearance->find(seq.video_id); it != appearance->end()) rois = &it->second;
    }
    const auto cubes = extract_video(seq, rois, pre.extraction).cubes;
    const auto records = regularity_records(checkpoint.model, cubes, pre.spatial_grid, config);
    auto series = assemble_series(seq.video_id, seq.frame_count(), pre.extraction.half_window,
                                  records, config);
    series.labels = item.labels.labels;
    out.push_back(std::move(series));
  }
  return out;
}

double dataset_auroc(const std::vector<AnomalyScoreSeries>& series) {
  std::vector<double> scores;
  std::vector<std::uint8_t> labels;
  for (const auto& s : series) {
    if (s.labels.size() != s.S.size()) {
      throw Error(ErrorCode::kLabelMismatch, "video " + s.video_id + " lacks frame labels");
    }
    scores.insert(scores.end(), s.S.begin(), s.S.end());
    labels.insert(labels.end(), s.labels.begin(), s.labels.end());
  }
  return auroc(scores, labels);
}

void write_scores_csv(const fs::path& path, const std::vector<AnomalyScoreSeries>& series) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  out << "video_id,frame,R_s,R_t,R,S,label\n";
  for (const auto& s : series) {
    for (std::size_t t = 0; t < s.S.size(); ++t) {
      out << fmt::format("{},{},{:.17g},{:.17g},{:.17g},{:.17g},{}\n", s.video_id, t, s.R_s[t],
                         s.R_t[t], s.R[t], s.S[t],
                         t < s.labels.size() ? std::to_string(s.labels[t]) : std::string());
    }
  }
}

std::vector<AnomalyScoreSeries> read_scores_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open scores file " + path.string());
  std::string line;
  if (!std::getline(in, line) || line.rfind("video_id,frame,R_s,R_t,R,S,label", 0) != 0) {
    throw Error(ErrorCode::kParse, path.string() + ": missing scores header");
  }
  std::vector<AnomalyScoreSeries> out;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (line.back() == ',') fields.emplace_back();
    if (fields.size() != 7) {
      throw Error(ErrorCode::kParse, fmt::format("{}:{}: expected 7 fields", path.string(), line_no));
    }
    if (out.empty() || out.back().video_id != fields[0]) {
      out.push_back(AnomalyScoreSeries{});
      out.back().video_id = fields[0];
    }
    auto& s = out.back();
    try {
      if (std::stoul(fields[1]) != s.S.size()) {
        throw Error(ErrorCode::kParse,
                    fmt::format("{}:{}: frames out of order", path.string(), line_no));
      }
      s.R_s.push_back(std::stod(fields[2]));
      s.R_t.push_back(std::stod(fields[3]));
      s.R.push_back(std::stod(fields[4]));
      s.S.push_back(std::stod(fields[5]));
    } catch (const std::logic_error&) {
      throw Error(ErrorCode::kParse, fmt::format("{}:{}: malformed number", path.string(), line_no));
    }
    if (!fields[6].empty()) {
      if (fields[6] != "0" && fields[6] != "1") {
        throw Error(ErrorCode::kParse, fmt::format("{}:{}: label must be 0 or 1", path.string(), line_no));
      }
      s.labels.push_back(fields[6] == "1" ? 1 : 0);
    }
  }
  return out;
}

}  // namespace pstrp
