#include "pstrp/config.hpp"

#include <fmt/format.h>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include "pstrp/error.hpp"

namespace pstrp {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

[[noreturn]] void bad_value(std::string_view key, std::string_view value, std::string_view what) {
  throw Error(ErrorCode::kConfig, fmt::format("{}: '{}' is not {}", key, value, what));
}

template <typename T>
T parse_number(std::string_view key, std::string_view value, std::string_view what) {
  value = trim(value);
  T out{};
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || ptr != value.data() + value.size() || value.empty()) {
    bad_value(key, value, what);
  }
  return out;
}

void parse_value(std::string_view key, std::string_view v, int& out) {
  out = parse_number<int>(key, v, "an integer");
}
void parse_value(std::string_view key, std::string_view v, std::uint64_t& out) {
  out = parse_number<std::uint64_t>(key, v, "an unsigned integer");
}
void parse_value(std::string_view key, std::string_view v, double& out) {
  out = parse_number<double>(key, v, "a number");
  if (!std::isfinite(out)) bad_value(key, v, "a finite number");
}
void parse_value(std::string_view key, std::string_view v, bool& out) {
  v = trim(v);
  if (v == "true" || v == "1" || v == "yes" || v == "on") {
    out = true;
  } else if (v == "false" || v == "0" || v == "no" || v == "off") {
    out = false;
  } else {
    bad_value(key, v, "a boolean");
  }
}
void parse_value(std::string_view, std::string_view v, std::string& out) { out = std::string(trim(v)); }
void parse_value(std::string_view key, std::string_view v, Layout& out) {
  try {
    out = parse_layout(trim(v));
  } catch (const Error&) {
    bad_value(key, v, "a dataset layout");
  }
}
void parse_value(std::string_view key, std::string_view v, std::vector<std::vector<FrameInterval>>& out) {
  try {
    out = parse_intervals(v);
  } catch (const Error& e) {
    throw Error(ErrorCode::kConfig, fmt::format("{}: {}", key, e.what()));
  }
}

std::string format_value(int v) { return std::to_string(v); }
std::string format_value(std::uint64_t v) { return std::to_string(v); }
std::string format_value(double v) { return fmt::format("{}", v); }
std::string format_value(bool v) { return v ? "true" : "false"; }
std::string format_value(const std::string& v) { return v; }
std::string format_value(Layout v) { return std::string(layout_name(v)); }
std::string format_value(const std::vector<std::vector<FrameInterval>>& v) {
  return format_intervals(v);
}

struct Entry {
  std::string key;
  bool early = false;  // applied before the other keys of a file
  std::function<void(PipelineConfig&, std::string_view)> set;
  std::function<std::string(const PipelineConfig&)> get;
};

template <typename Access>
Entry field(std::string key, Access access) {
  Entry e;
  e.key = key;
  e.set = [access, key](PipelineConfig& c, std::string_view v) { parse_value(key, v, access(c)); };
  e.get = [access](const PipelineConfig& c) {
    return format_value(access(const_cast<PipelineConfig&>(c)));
  };
  return e;
}

Entry stream_preset(std::string key, StreamSpec PipelineConfig::*member) {
  Entry e;
  e.key = key;
  e.early = true;
  e.set = [member, key](PipelineConfig& c, std::string_view v) {
    StreamSpec& spec = c.*member;
    try {
      spec.preset = parse_size_preset(trim(v));
    } catch (const Error&) {
      bad_value(key, v, "a model preset (tiny, B, L, H)");
    }
    const StreamConfig p = preset_stream_config(spec.preset, 1, 1);
    spec.embed_dim = p.embed_dim;
    spec.depth = p.depth;
    spec.heads = p.heads;
  };
  e.get = [member](const PipelineConfig& c) {
    return std::string(size_preset_name((c.*member).preset));
  };
  return e;
}

void add_stream(std::vector<Entry>& out, const std::string& section,
                StreamSpec PipelineConfig::*member) {
  out.push_back(stream_preset(section + ".preset", member));
  out.push_back(field(section + ".embed_dim", [member](PipelineConfig& c) -> int& { return (c.*member).embed_dim; }));
  out.push_back(field(section + ".depth", [member](PipelineConfig& c) -> int& { return (c.*member).depth; }));
  out.push_back(field(section + ".heads", [member](PipelineConfig& c) -> int& { return (c.*member).heads; }));
  out.push_back(field(section + ".mlp_ratio", [member](PipelineConfig& c) -> double& { return (c.*member).mlp_ratio; }));
  out.push_back(field(section + ".dropout", [member](PipelineConfig& c) -> double& { return (c.*member).dropout; }));
}

constexpr double kDefaultFastMin = 3.0;
constexpr double kDefaultFastMax = 5.0;

AnomalyBehavior* find_fast(SyntheticSpec& s) {
  for (auto& b : s.anomaly_behaviors) {
    if (b.kind == AnomalyKind::kFast) return &b;
  }
  return nullptr;
}

Entry anomaly_kinds() {
  Entry e;
  e.key = "synthetic.anomaly_kinds";
  e.early = true;
  e.set = [](PipelineConfig& c, std::string_view v) {
    const AnomalyBehavior* fast = find_fast(c.synthetic);
    const double lo = fast != nullptr ? fast->speed_factor_min : kDefaultFastMin;
    const double hi = fast != nullptr ? fast->speed_factor_max : kDefaultFastMax;
    std::vector<AnomalyBehavior> behaviors;
    std::stringstream ss{std::string(v)};
    std::string item;
    while (std::getline(ss, item, ',')) {
      const auto name = trim(item);
      if (name.empty()) continue;
      AnomalyKind kind{};
      try {
        kind = parse_anomaly_kind(name);
      } catch (const Error&) {
        bad_value("synthetic.anomaly_kinds", name, "an anomaly kind (fast, reversed, inverted_texture)");
      }
      behaviors.push_back(kind == AnomalyKind::kFast ? AnomalyBehavior{kind, lo, hi}
                                                     : AnomalyBehavior{kind, 1.0, 1.0});
    }
    c.synthetic.anomaly_behaviors = std::move(behaviors);
  };
  e.get = [](const PipelineConfig& c) {
    std::string out;
    for (const auto& b : c.synthetic.anomaly_behaviors) {
      if (!out.empty()) out += ',';
      out += anomaly_kind_name(b.kind);
    }
    return out;
  };
  return e;
}

Entry fast_factor(bool upper) {
  Entry e;
  e.key = upper ? "synthetic.fast_speed_factor_max" : "synthetic.fast_speed_factor_min";
  e.set = [upper, key = e.key](PipelineConfig& c, std::string_view v) {
    double value = 0.0;
    parse_value(key, v, value);
    for (auto& b : c.synthetic.anomaly_behaviors) {
      if (b.kind == AnomalyKind::kFast) (upper ? b.speed_factor_max : b.speed_factor_min) = value;
    }
  };
  e.get = [upper](const PipelineConfig& c) {
    const AnomalyBehavior* fast = find_fast(const_cast<SyntheticSpec&>(c.synthetic));
    if (fast == nullptr) return format_value(upper ? kDefaultFastMax : kDefaultFastMin);
    return format_value(upper ? fast->speed_factor_max : fast->speed_factor_min);
  };
  return e;
}

Entry dataset_name() {
  Entry e;
  e.key = "dataset.name";
  e.set = [](PipelineConfig& c, std::string_view v) {
    c.dataset.name = std::string(trim(v));
    c.training.dataset_name = c.dataset.name;
  };
  e.get = [](const PipelineConfig& c) { return c.dataset.name; };
  return e;
}

ObjectBehavior& normal(PipelineConfig& c) {
  if (c.synthetic.normal_behaviors.empty()) c.synthetic.normal_behaviors.emplace_back();
  return c.synthetic.normal_behaviors.front();
}

#define PSTRP_FIELD(key, type, expr) \
  field(key, [](PipelineConfig& c) -> type& { return expr; })

const std::vector<Entry>& entries() {
  static const std::vector<Entry> table = [] {
    std::vector<Entry> t;
    t.push_back(dataset_name());
    t.push_back(PSTRP_FIELD("dataset.root", std::string, c.dataset.root));
    t.push_back(PSTRP_FIELD("dataset.layout", Layout, c.dataset.layout));
    t.push_back(PSTRP_FIELD("dataset.boxes", std::string, c.dataset.boxes));

    t.push_back(PSTRP_FIELD("extraction.half_window", int, c.extraction.half_window));
    t.push_back(PSTRP_FIELD("extraction.confidence_threshold", double, c.extraction.confidence_threshold));
    t.push_back(PSTRP_FIELD("extraction.diff_threshold", double, c.extraction.motion.diff_threshold));
    t.push_back(PSTRP_FIELD("extraction.min_area", int, c.extraction.motion.min_area));
    t.push_back(PSTRP_FIELD("extraction.dilation", int, c.extraction.motion.dilation));
    t.push_back(PSTRP_FIELD("extraction.merge_iou", double, c.extraction.merge_iou));
    t.push_back(PSTRP_FIELD("extraction.use_motion", bool, c.extraction.use_motion));

    t.push_back(PSTRP_FIELD("patching.spatial_grid", int, c.patching.spatial_grid));
    t.push_back(PSTRP_FIELD("patching.k_perm", int, c.patching.k_perm));
    t.push_back(PSTRP_FIELD("patching.seed", std::uint64_t, c.patching.seed));

    add_stream(t, "spatial_stream", &PipelineConfig::spatial_stream);
    add_stream(t, "temporal_stream", &PipelineConfig::temporal_stream);

    t.push_back(PSTRP_FIELD("training.learning_rate", double, c.training.learning_rate));
    t.push_back(PSTRP_FIELD("training.beta1", double, c.training.beta1));
    t.push_back(PSTRP_FIELD("training.beta2", double, c.training.beta2));
    t.push_back(PSTRP_FIELD("training.epsilon", double, c.training.epsilon));
    t.push_back(PSTRP_FIELD("training.weight_decay", double, c.training.weight_decay));
    t.push_back(PSTRP_FIELD("training.epochs", int, c.training.epochs));
    t.push_back(PSTRP_FIELD("training.batch_size", int, c.training.batch_size));
    t.push_back(PSTRP_FIELD("training.seed", std::uint64_t, c.training.seed));
    t.push_back(PSTRP_FIELD("training.checkpoint_every", int, c.training.checkpoint_every));

    t.push_back(PSTRP_FIELD("loss.lambda_s", double, c.loss.lambda_s));
    t.push_back(PSTRP_FIELD("loss.lambda_t", double, c.loss.lambda_t));
    t.push_back(PSTRP_FIELD("loss.lambda_can", double, c.loss.lambda_can));
    t.push_back(PSTRP_FIELD("loss.lambda_cos", double, c.loss.lambda_cos));

    t.push_back(PSTRP_FIELD("scoring.omega_s", double, c.scoring.omega_s));
    t.push_back(PSTRP_FIELD("scoring.omega_t", double, c.scoring.omega_t));
    t.push_back(PSTRP_FIELD("scoring.smoothing", bool, c.scoring.smoothing));
    t.push_back(PSTRP_FIELD("scoring.smoothing_sigma", double, c.scoring.smoothing_sigma));

    t.push_back(PSTRP_FIELD("synthetic.seed", std::uint64_t, c.synthetic.seed));
    t.push_back(PSTRP_FIELD("synthetic.num_train_videos", int, c.synthetic.num_train_videos));
    t.push_back(PSTRP_FIELD("synthetic.num_test_videos", int, c.synthetic.num_test_videos));
    t.push_back(PSTRP_FIELD("synthetic.frames_per_video", int, c.synthetic.frames_per_video));
    t.push_back(PSTRP_FIELD("synthetic.height", int, c.synthetic.height));
    t.push_back(PSTRP_FIELD("synthetic.width", int, c.synthetic.width));
    t.push_back(PSTRP_FIELD("synthetic.objects_per_video", int, c.synthetic.objects_per_video));
    t.push_back(PSTRP_FIELD("synthetic.background", double, c.synthetic.background));
    t.push_back(PSTRP_FIELD("synthetic.noise_std", double, c.synthetic.noise_std));
    t.push_back(PSTRP_FIELD("synthetic.object_size_min", int, normal(c).size_min));
    t.push_back(PSTRP_FIELD("synthetic.object_size_max", int, normal(c).size_max));
    t.push_back(PSTRP_FIELD("synthetic.speed_min", double, normal(c).speed_min));
    t.push_back(PSTRP_FIELD("synthetic.speed_max", double, normal(c).speed_max));
    t.push_back(PSTRP_FIELD("synthetic.intensity_min", double, normal(c).intensity_min));
    t.push_back(PSTRP_FIELD("synthetic.intensity_max", double, normal(c).intensity_max));
    t.push_back(anomaly_kinds());
    t.push_back(fast_factor(false));
    t.push_back(fast_factor(true));
    t.push_back(PSTRP_FIELD("synthetic.anomaly_intervals", std::vector<std::vector<FrameInterval>>,
                            c.synthetic.anomaly_intervals));
    return t;
  }();
  return table;
}

#undef PSTRP_FIELD

const Entry& lookup(std::string_view key) {
  for (const auto& e : entries()) {
    if (e.key == key) return e;
  }
  throw Error(ErrorCode::kUnknownKey, fmt::format("unknown key '{}'", key));
}

}  // namespace

StreamConfig StreamSpec::resolve(int n_tokens, int patch_input_dim) const {
  StreamConfig cfg;
  cfg.n_tokens = n_tokens;
  cfg.patch_input_dim = patch_input_dim;
  cfg.embed_dim = embed_dim;
  cfg.depth = depth;
  cfg.heads = heads;
  cfg.mlp_ratio = mlp_ratio;
  cfg.dropout = dropout;
  cfg.preset = preset;
  return cfg;
}

void PipelineConfig::validate() const {
  const auto& e = extraction;
  if (e.half_window < 1) throw Error(ErrorCode::kConfig, "extraction.half_window must be >= 1");
  if (!(e.confidence_threshold >= 0.0 && e.confidence_threshold <= 1.0)) {
    throw Error(ErrorCode::kConfig, "extraction.confidence_threshold must be in [0, 1]");
  }
  if (!(e.motion.diff_threshold >= 0.0) || e.motion.min_area < 0 || e.motion.dilation < 0) {
    throw Error(ErrorCode::kConfig, "extraction motion parameters must be non-negative");
  }
  if (!(e.merge_iou >= 0.0 && e.merge_iou <= 1.0)) {
    throw Error(ErrorCode::kConfig, "extraction.merge_iou must be in [0, 1]");
  }
  spatial_patch_side(patching.spatial_grid);
  const int n_s = patching.spatial_grid * patching.spatial_grid;
  spatial_stream.resolve(n_s, 1).validate();
  temporal_stream.resolve(2 * e.half_window + 1, 1).validate();
  training.validate();
  for (double w : {loss.lambda_s, loss.lambda_t, loss.lambda_can, loss.lambda_cos}) {
    if (!(w >= 0.0)) throw Error(ErrorCode::kConfig, "loss weights must be >= 0");
  }
  scoring_config(1).validate();
  synthetic.validate();
}

PreprocessConfig PipelineConfig::preprocessing(int channels) const {
  PreprocessConfig p;
  p.extraction = extraction;
  p.spatial_grid = patching.spatial_grid;
  p.channels = channels;
  p.cube_size = kCubeSize;
  return p;
}

ScoringConfig PipelineConfig::scoring_config(int workers) const {
  ScoringConfig s;
  s.omega_s = scoring.omega_s;
  s.omega_t = scoring.omega_t;
  s.k_perm = patching.k_perm;
  s.seed = patching.seed;
  s.smoothing = scoring.smoothing;
  s.smoothing_sigma = scoring.smoothing_sigma;
  s.workers = workers;
  return s;
}

void apply_setting(PipelineConfig& config, std::string_view key, std::string_view value) {
  lookup(trim(key)).set(config, value);
}

void apply_override(PipelineConfig& config, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos) {
    throw Error(ErrorCode::kConfig,
                fmt::format("override '{}' is not of the form section.key=value", assignment));
  }
  apply_setting(config, assignment.substr(0, eq), assignment.substr(eq + 1));
}

PipelineConfig parse_config(const std::string& text, const PipelineConfig& base) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  std::istringstream in(text);
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw Error(ErrorCode::kParse, fmt::format("config line {}: {}", e.line(), e.message()));
  }
  std::vector<std::pair<std::string, std::string>> settings;
  for (const auto& [section, body] : tree) {
    if (body.empty()) throw Error(ErrorCode::kUnknownKey, fmt::format("unknown key '{}'", section));
    for (const auto& [key, value] : body) {
      settings.emplace_back(section + "." + key, value.data());
    }
  }
  PipelineConfig config = base;
  for (const bool early : {true, false}) {
    for (const auto& [key, value] : settings) {
      const Entry& e = lookup(key);
      if (e.early == early) e.set(config, value);
    }
  }
  return config;
}

PipelineConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return parse_config(ss.str());
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " + e.what());
  }
}

std::string to_ini(const PipelineConfig& config) {
  std::string out;
  std::string section;
  for (const auto& e : entries()) {
    const auto dot = e.key.find('.');
    const std::string s = e.key.substr(0, dot);
    if (s != section) {
      if (!section.empty()) out += '\n';
      out += fmt::format("[{}]\n", s);
      section = s;
    }
    out += fmt::format("{} = {}\n", e.key.substr(dot + 1), e.get(config));
  }
  return out;
}

std::vector<std::string> all_config_keys() {
  std::vector<std::string> keys;
  for (const auto& e : entries()) keys.push_back(e.key);
  return keys;
}

SyntheticSpec read_synthetic_spec(const std::filesystem::path& path) {
  return load_config(path).synthetic;
}

std::vector<std::vector<FrameInterval>> parse_intervals(std::string_view text) {
  std::vector<std::vector<FrameInterval>> out;
  text = trim(text);
  if (text.empty()) return out;
  std::size_t start = 0;
  while (true) {
    const auto bar = text.find('|', start);
    const auto group = text.substr(start, bar == std::string_view::npos ? bar : bar - start);
    std::vector<FrameInterval> video;
    std::size_t pos = 0;
    while (pos <= group.size()) {
      const auto comma = group.find(',', pos);
      const auto item = trim(group.substr(pos, comma == std::string_view::npos ? comma : comma - pos));
      if (!item.empty()) {
        const auto dash = item.find('-');
        if (dash == std::string_view::npos) {
          throw Error(ErrorCode::kConfig, fmt::format("interval '{}' is not start-end", item));
        }
        FrameInterval iv;
        iv.start = parse_number<int>("interval", item.substr(0, dash), "an integer");
        iv.end = parse_number<int>("interval", item.substr(dash + 1), "an integer");
        video.push_back(iv);
      }
      if (comma == std::string_view::npos) break;
      pos = comma + 1;
    }
    out.push_back(std::move(video));
    if (bar == std::string_view::npos) break;
    start = bar + 1;
  }
  return out;
}

std::string format_intervals(const std::vector<std::vector<FrameInterval>>& intervals) {
  std::string out;
  for (std::size_t v = 0; v < intervals.size(); ++v) {
    if (v > 0) out += '|';
    for (std::size_t k = 0; k < intervals[v].size(); ++k) {
      if (k > 0) out += ',';
      out += fmt::format("{}-{}", intervals[v][k].start, intervals[v][k].end);
    }
  }
  return out;
}

}  // namespace pstrp
