#include "pstrp/cli.hpp"

#include <fmt/format.h>

#include <CLI11.hpp>
#include <fstream>
#include <optional>

#include "pstrp/config.hpp"
#include "pstrp/error.hpp"
#include "pstrp/parallel.hpp"

namespace pstrp {

namespace fs = std::filesystem;

namespace {

struct Globals {
  std::string config_path;
  std::vector<std::string> overrides;
  int workers = 1;
};

PipelineConfig resolve_config(const Globals& g) {
  PipelineConfig config = g.config_path.empty() ? PipelineConfig{} : load_config(g.config_path);
  for (const auto& o : g.overrides) apply_override(config, o);
  config.validate();
  return config;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out || !(out << text)) throw Error(ErrorCode::kIo, "cannot write " + path.string());
}

void echo_config(const fs::path& path, const PipelineConfig& config) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  write_text(path, to_ini(config));
}

void write_boxes_file(const fs::path& path, const std::vector<BoxRecord>& boxes) {
  std::string text;
  for (const auto& r : boxes) {
    text += fmt::format("{} {} {} {} {} {} {}\n", r.video_id, r.frame, r.box.x1, r.box.y1,
                        r.box.x2, r.box.y2, r.box.confidence);
  }
  write_text(path, text);
}

std::string dataset_root(const PipelineConfig& config, const std::string& root_flag) {
  const std::string root = root_flag.empty() ? config.dataset.root : root_flag;
  if (root.empty()) throw Error(ErrorCode::kConfig, "no dataset root (use --dataset or dataset.root)");
  return root;
}

/// The --boxes flag is used as given; a relative dataset.boxes path is taken
/// relative to the dataset root.
std::optional<std::map<std::string, RoisPerFrame>> load_boxes(const PipelineConfig& config,
                                                              const std::string& root,
                                                              const std::string& boxes_flag) {
  fs::path boxes = boxes_flag;
  if (boxes_flag.empty()) {
    if (config.dataset.boxes.empty() || config.dataset.boxes == "none") return std::nullopt;
    boxes = config.dataset.boxes;
    if (boxes.is_relative()) boxes = fs::path(root) / boxes;
  } else if (boxes_flag == "none") {
    return std::nullopt;
  }
  return load_all_appearance_rois(boxes, config.extraction.confidence_threshold);
}

int cmd_synth(const Globals& g, const std::string& out_root, std::ostream& out) {
  const PipelineConfig config = resolve_config(g);
  const auto synthetic = generate_synthetic(config.synthetic);
  write_generic_folders(out_root, synthetic.dataset);
  write_boxes_file(fs::path(out_root) / "boxes.txt", synthetic.boxes);
  echo_config(fs::path(out_root) / "config.ini", config);
  out << fmt::format("wrote {} train / {} test videos to {}\n", synthetic.dataset.train.size(),
                     synthetic.dataset.test.size(), out_root);
  return 0;
}

int cmd_extract(const Globals& g, const std::string& root_flag, const std::string& boxes,
                std::optional<int> half_window, const std::string& out_dir, std::ostream& out) {
  PipelineConfig config = resolve_config(g);
  if (half_window) {
    config.extraction.half_window = *half_window;
    config.validate();
  }
  const std::string root = dataset_root(config, root_flag);
  const Dataset dataset = load_dataset(root, config.dataset.layout, g.workers);
  const auto appearance = load_boxes(config, root, boxes);

  std::vector<StcBuildResult> per_video(dataset.train.size());
  parallel_for(dataset.train.size(), g.workers, [&](std::size_t k) {
    const auto& seq = dataset.train[k];
    const RoisPerFrame* rois = nullptr;
    if (appearance) {
      if (auto it = appearance->find(seq.video_id); it != appearance->end()) rois = &it->second;
    }
    per_video[k] = extract_video(seq, rois, config.extraction);
  });
  std::vector<SpatioTemporalCube> cubes;
  int skipped = 0;
  for (auto& r : per_video) {
    skipped += r.skipped;
    for (auto& c : r.cubes) cubes.push_back(std::move(c));
  }
  StcStoreMeta meta;
  meta.half_window = config.extraction.half_window;
  meta.channels = dataset.train.empty() ? 0 : dataset.train.front().channels;
  meta.extraction = config.extraction;
  write_stc_store(out_dir, meta, cubes);
  echo_config(fs::path(out_dir) / "config.ini", config);
  out << fmt::format("extracted {} cubes from {} videos ({} boxes skipped) into {}\n",
                     cubes.size(), dataset.train.size(), skipped, out_dir);
  return 0;
}

int cmd_train(const Globals& g, const std::string& stcs, const std::string& out_dir,
              std::ostream& out) {
  const PipelineConfig config = resolve_config(g);
  const StcStore store = read_stc_store(stcs);
  if (store.cubes.empty()) throw Error(ErrorCode::kValidation, "cube store " + stcs + " is empty");
  PreprocessConfig pre = config.preprocessing(store.meta.channels);
  PreprocessConfig from_store = pre;
  from_store.extraction = store.meta.extraction;
  if (const auto diff = describe_mismatch(from_store, pre); !diff.empty()) {
    throw Error(ErrorCode::kConfig, "config extraction differs from the cube store: " + diff);
  }
  const auto& cube = store.cubes.front();
  const int n_s = config.patching.spatial_grid * config.patching.spatial_grid;
  const int side = spatial_patch_side(config.patching.spatial_grid);
  const int L = 2 * cube.half_window + 1;
  const StreamConfig s_cfg = config.spatial_stream.resolve(n_s, L * cube.channels * side * side);
  const StreamConfig t_cfg =
      config.temporal_stream.resolve(L, cube.channels * kCubeSize * kCubeSize);
  TwoStreamModel model = build_two_stream(s_cfg, t_cfg, config.training.seed);

  fs::create_directories(out_dir);
  echo_config(fs::path(out_dir) / "config.ini", config);
  TrainOptions options;
  options.preprocessing = pre;
  options.out_dir = out_dir;
  options.on_epoch = [&out, &config](const EpochLog& e) {
    out << fmt::format("epoch {}/{} L_S={:.6f} L_T={:.6f} L_Can={:.6f} L_Cos={:.6f} total={:.6f}\n",
                       e.epoch, config.training.epochs, e.parts.spatial_order,
                       e.parts.temporal_order, e.parts.canberra, e.parts.cosine, e.total);
    out.flush();
  };
  train(store.cubes, model, config.training, config.loss, options);
  out << fmt::format("checkpoint: {}\n", (fs::path(out_dir) / "model.ckpt").string());
  return 0;
}

int cmd_score(const Globals& g, const std::string& ckpt, const std::string& root_flag,
              const std::string& boxes, const std::string& out_path, std::ostream& out) {
  PipelineConfig config = resolve_config(g);
  const Checkpoint checkpoint = load_checkpoint(ckpt);
  if (g.config_path.empty()) {
    // Without a config file the checkpoint decides preprocessing.
    config.extraction = checkpoint.preprocessing.extraction;
    config.patching.spatial_grid = checkpoint.preprocessing.spatial_grid;
  }
  const std::string root = dataset_root(config, root_flag);
  const Dataset dataset = load_dataset(root, config.dataset.layout, g.workers);
  if (dataset.test.empty()) throw Error(ErrorCode::kValidation, "dataset has no test videos");
  const auto appearance = load_boxes(config, root, boxes);
  const PreprocessConfig requested =
      config.preprocessing(dataset.test.front().sequence.channels);
  const auto series = score_dataset(checkpoint, dataset.test, appearance ? &*appearance : nullptr,
                                    config.scoring_config(g.workers), &requested);
  const fs::path path(out_path);
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  write_scores_csv(path, series);
  fs::path echo = path;
  echo.replace_extension(".config.ini");
  echo_config(echo, config);
  out << fmt::format("scored {} videos into {}\n", series.size(), out_path);
  return 0;
}

int cmd_eval(const std::string& scores, std::ostream& out) {
  const auto series = read_scores_csv(scores);
  out << fmt::format("AUROC={:.4f}\n", dataset_auroc(series));
  return 0;
}

int cmd_plot(const std::string& scores, const std::string& out_dir, std::ostream& out) {
  const auto series = read_scores_csv(scores);
  plot_scores(out_dir, series);
  out << fmt::format("wrote {} plots to {}\n", series.size(), out_dir);
  return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Object-centric video anomaly detection by spatio-temporal patch relations",
               "pstrp"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config_path, "INI config file")->check(CLI::ExistingFile);
  app.add_option("--override", g.overrides, "section.key=value, repeatable");
  app.add_option("--workers", g.workers, "worker threads")->check(CLI::PositiveNumber);

  std::string out_path;
  std::string dataset_flag;
  std::string boxes;
  std::string stcs;
  std::string ckpt;
  std::string scores;
  std::optional<int> half_window;

  auto* synth = app.add_subcommand("synth", "generate the synthetic dataset");
  synth->add_option("--out", out_path, "dataset root")->required();

  auto* extract = app.add_subcommand("extract", "extract training cubes");
  extract->add_option("--dataset", dataset_flag, "dataset root");
  extract->add_option("--boxes", boxes, "appearance boxes file or 'none'");
  extract->add_option("--half-window", half_window, "temporal half window");
  extract->add_option("--out", out_path, "cube store directory")->required();

  auto* train_cmd = app.add_subcommand("train", "train the two-stream model");
  train_cmd->add_option("--stcs", stcs, "cube store directory")->required();
  train_cmd->add_option("--out", out_path, "checkpoint directory")->required();

  auto* score = app.add_subcommand("score", "score test videos");
  score->add_option("--ckpt", ckpt, "checkpoint file")->required();
  score->add_option("--dataset", dataset_flag, "dataset root");
  score->add_option("--boxes", boxes, "appearance boxes file or 'none'");
  score->add_option("--out", out_path, "scores CSV")->required();

  auto* eval = app.add_subcommand("eval", "frame-level AUROC of a scores file");
  eval->add_option("--scores", scores, "scores CSV")->required();

  auto* plot = app.add_subcommand("plot", "anomaly score curves");
  plot->add_option("--scores", scores, "scores CSV")->required();
  plot->add_option("--out", out_path, "output directory")->required();

  for (auto* sub : {synth, extract, train_cmd, score, eval, plot}) sub->fallthrough();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << fmt::format("pstrp: error[usage]: {}\n", e.what());
    return 2;
  }

  try {
    if (synth->parsed()) return cmd_synth(g, out_path, out);
    if (extract->parsed()) return cmd_extract(g, dataset_flag, boxes, half_window, out_path, out);
    if (train_cmd->parsed()) return cmd_train(g, stcs, out_path, out);
    if (score->parsed()) return cmd_score(g, ckpt, dataset_flag, boxes, out_path, out);
    if (!g.overrides.empty() || !g.config_path.empty()) resolve_config(g);
    if (eval->parsed()) return cmd_eval(scores, out);
    if (plot->parsed()) return cmd_plot(scores, out_path, out);
  } catch (const Error& e) {
    err << fmt::format("pstrp: error[{}]: {}\n", error_code_name(e.code()), e.what());
    return e.code() == ErrorCode::kUnknownKey ? 2 : 1;
  } catch (const std::exception& e) {
    err << fmt::format("pstrp: error[io]: {}\n", e.what());
    return 1;
  }
  return 2;
}

}  // namespace pstrp
