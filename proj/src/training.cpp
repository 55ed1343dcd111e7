#include "pstrp/training.hpp"

#include <fmt/format.h>

#include <cmath>
#include <fstream>

#include "pstrp/error.hpp"

namespace pstrp {

namespace fs = std::filesystem;

void TrainConfig::validate() const {
  auto fail = [](const std::string& msg) { throw Error(ErrorCode::kConfig, msg); };
  if (!(learning_rate >= 0.0)) fail("training: learning_rate must be >= 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    fail("training: betas must lie in [0,1)");
  }
  if (!(epsilon > 0.0)) fail("training: epsilon must be > 0");
  if (!(weight_decay >= 0.0)) fail("training: weight_decay must be >= 0");
  if (epochs < 1) fail("training: epochs must be >= 1");
  if (batch_size < 1) fail("training: batch_size must be >= 1");
  if (checkpoint_every < 0) fail("training: checkpoint_every must be >= 0");
}

double order_loss(std::span<const double> logits, const Permutation& labels,
                  std::vector<double>* d_logits) {
  const int n = labels.size();
  if (logits.size() != static_cast<std::size_t>(n) * n) {
    throw Error(ErrorCode::kShape, "order_loss: logits are not n x n");
  }
  for (int label : labels.pi) {
    if (label < 0 || label >= n) {
      throw Error(ErrorCode::kIndex, fmt::format("order_loss: label {} outside [0,{})", label, n));
    }
  }
  const auto probs = softmax_rows(logits, n);
  if (d_logits != nullptr) d_logits->assign(logits.size(), 0.0);
  double loss = 0.0;
  for (int slot = 0; slot < n; ++slot) {
    const auto row = logits.subspan(static_cast<std::size_t>(slot) * n, static_cast<std::size_t>(n));
    double mx = row[0];
    for (double v : row) mx = std::max(mx, v);
    double sum = 0.0;
    for (double v : row) sum += std::exp(v - mx);
    const int label = labels.pi[static_cast<std::size_t>(slot)];
    loss += std::log(sum) + mx - row[static_cast<std::size_t>(label)];
    if (d_logits != nullptr) {
      for (int c = 0; c < n; ++c) {
        const std::size_t k = static_cast<std::size_t>(slot) * n + c;
        (*d_logits)[k] = (probs.m[k] - (c == label ? 1.0 : 0.0)) / n;
      }
    }
  }
  return loss / n;
}

double distance_loss(const RelationMatrix& pred, const RelationMatrix& target,
                     std::vector<double>* d_pred) {
  if (pred.kind != target.kind) {
    throw Error(ErrorCode::kShape, "distance_loss: relation kinds differ");
  }
  if (pred.n != target.n || pred.d.size() != target.d.size()) {
    throw Error(ErrorCode::kShape, "distance_loss: matrix sizes differ");
  }
  const int n = pred.n;
  if (d_pred != nullptr) d_pred->assign(pred.d.size(), 0.0);
  if (n < 2) return 0.0;
  const double count = static_cast<double>(n) * (n - 1);
  double sum = 0.0;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (i == j) continue;
      const std::size_t k = static_cast<std::size_t>(i) * n + j;
      const double diff = pred.d[k] - target.d[k];
      sum += diff * diff;
      if (d_pred != nullptr) (*d_pred)[k] = 2.0 * diff / count;
    }
  }
  return sum / count;
}

double total_loss(const LossParts& parts, const LossWeights& w) {
  const std::pair<const char*, double> terms[] = {{"L_S", parts.spatial_order},
                                                  {"L_T", parts.temporal_order},
                                                  {"L_Can", parts.canberra},
                                                  {"L_Cos", parts.cosine}};
  for (const auto& [name, value] : terms) {
    if (!std::isfinite(value)) {
      throw Error(ErrorCode::kDivergence, fmt::format("loss term {} is not finite ({})", name, value));
    }
  }
  return w.lambda_s * parts.spatial_order + w.lambda_t * parts.temporal_order +
         w.lambda_can * parts.canberra + w.lambda_cos * parts.cosine;
}

TrainingSample prepare_sample(const SpatioTemporalCube& cube, int spatial_grid) {
  TrainingSample s;
  s.spatial = slice_spatial(cube, spatial_grid);
  s.temporal = slice_temporal(cube);
  s.canberra = canberra_matrix(s.spatial);
  s.cosine = cosine_matrix(s.temporal);
  return s;
}

namespace {

struct StreamLoss {
  double order = 0.0;
  double distance = 0.0;
};

StreamLoss stream_loss(TransformerStream& stream, const PatchSet& canonical,
                       const RelationMatrix& target, const Permutation& perm, double lambda_order,
                       double lambda_distance, Mode mode, Rng* dropout_rng, double grad_scale) {
  const PatchSet shuffled = apply_permutation(canonical, perm);
  StreamTrace trace;
  const bool want_grad = grad_scale > 0.0;
  const StreamOutput out = forward(stream, shuffled, mode, dropout_rng, want_grad ? &trace : nullptr);

  StreamLoss loss;
  std::vector<double> d_logits;
  loss.order = order_loss(out.order_logits, perm, want_grad ? &d_logits : nullptr);

  const RelationMatrix pred{target.kind, target.n, align_pairwise(out.distance_pred, perm)};
  std::vector<double> d_aligned;
  loss.distance = distance_loss(pred, target, want_grad ? &d_aligned : nullptr);

  if (want_grad) {
    const int n = perm.size();
    for (double& g : d_logits) g *= lambda_order * grad_scale;
    // Chain through the alignment: pred_aligned[pi[a]][pi[b]] = pred_slot[a][b].
    std::vector<double> d_slot(d_aligned.size());
    for (int a = 0; a < n; ++a) {
      for (int b = 0; b < n; ++b) {
        d_slot[static_cast<std::size_t>(a) * n + b] =
            lambda_distance * grad_scale *
            d_aligned[static_cast<std::size_t>(perm.pi[static_cast<std::size_t>(a)]) * n +
                      perm.pi[static_cast<std::size_t>(b)]];
      }
    }
    backward(stream, trace, d_logits, d_slot);
  }
  return loss;
}

}  // namespace

LossParts sample_loss(TwoStreamModel& model, const TrainingSample& sample,
                      const Permutation& spatial_perm, const Permutation& temporal_perm,
                      const LossWeights& weights, Mode mode, Rng* dropout_rng,
                      double grad_scale) {
  const StreamLoss s = stream_loss(model.spatial, sample.spatial, sample.canberra, spatial_perm,
                                   weights.lambda_s, weights.lambda_can, mode, dropout_rng,
                                   grad_scale);
  const StreamLoss t = stream_loss(model.temporal, sample.temporal, sample.cosine, temporal_perm,
                                   weights.lambda_t, weights.lambda_cos, mode, dropout_rng,
                                   grad_scale);
  return LossParts{s.order, t.order, s.distance, t.distance};
}

Adam::Adam(std::vector<Tensor*> params, const TrainConfig& config)
    : params_(std::move(params)), config_(config) {
  for (const Tensor* t : params_) {
    m_.emplace_back(t->size(), 0.0);
    v_.emplace_back(t->size(), 0.0);
  }
}

void Adam::step() {
  ++steps_;
  const double b1 = config_.beta1;
  const double b2 = config_.beta2;
  const double correction1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
  const double correction2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
  const double lr = config_.learning_rate;
  for (std::size_t p = 0; p < params_.size(); ++p) {
    Tensor& t = *params_[p];
    auto& m = m_[p];
    auto& v = v_[p];
    for (std::size_t k = 0; k < t.size(); ++k) {
      const double g = t.grad[k] + config_.weight_decay * t.value[k];
      m[k] = b1 * m[k] + (1.0 - b1) * g;
      v[k] = b2 * v[k] + (1.0 - b2) * g * g;
      const double m_hat = m[k] / correction1;
      const double v_hat = v[k] / correction2;
      t.value[k] -= lr * m_hat / (std::sqrt(v_hat) + config_.epsilon);
    }
  }
}

std::string format_loss_log(const std::vector<EpochLog>& log) {
  std::string out = "epoch,L_S,L_T,L_Can,L_Cos,total\n";
  for (const auto& e : log) {
    out += fmt::format("{},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g}\n", e.epoch,
                       e.parts.spatial_order, e.parts.temporal_order, e.parts.canberra,
                       e.parts.cosine, e.total);
  }
  return out;
}

namespace {

void write_text_atomic(const fs::path& path, const std::string& text) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw Error(ErrorCode::kIo, "cannot write " + tmp.string());
    out << text;
  }
  fs::rename(tmp, path);
}

}  // namespace

TrainResult train(const std::vector<SpatioTemporalCube>& cubes, TwoStreamModel& model,
                  const TrainConfig& config, const LossWeights& weights,
                  const TrainOptions& options) {
  config.validate();
  if (cubes.empty()) throw Error(ErrorCode::kValidation, "train: the cube store is empty");
  const int grid = options.preprocessing.spatial_grid;

  // Relation targets depend only on canonical patch geometry; compute once.
  std::vector<RelationMatrix> canberra_targets;
  std::vector<RelationMatrix> cosine_targets;
  canberra_targets.reserve(cubes.size());
  cosine_targets.reserve(cubes.size());
  for (const auto& cube : cubes) {
    canberra_targets.push_back(canberra_matrix(slice_spatial(cube, grid)));
    cosine_targets.push_back(cosine_matrix(slice_temporal(cube)));
  }

  Rng order_rng(mix_seed(config.seed, 11));
  Rng perm_rng(mix_seed(config.seed, 12));
  Rng dropout_rng(mix_seed(config.seed, 13));
  Adam adam(model.parameters(), config);

  if (!options.out_dir.empty()) fs::create_directories(options.out_dir);
  const fs::path ckpt_path = options.out_dir / "model.ckpt";

  TrainResult result;
  const auto count = cubes.size();
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto order = order_rng.permutation(static_cast<int>(count));
    LossParts sum;
    for (std::size_t start = 0; start < count; start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t stop = std::min(count, start + static_cast<std::size_t>(config.batch_size));
      const double scale = 1.0 / static_cast<double>(stop - start);
      model.zero_grad();
      for (std::size_t b = start; b < stop; ++b) {
        const auto idx = static_cast<std::size_t>(order[b]);
        TrainingSample sample;
        sample.spatial = slice_spatial(cubes[idx], grid);
        sample.temporal = slice_temporal(cubes[idx]);
        sample.canberra = canberra_targets[idx];
        sample.cosine = cosine_targets[idx];
        const Permutation ps{perm_rng.permutation(sample.spatial.n)};
        const Permutation pt{perm_rng.permutation(sample.temporal.n)};
        const LossParts parts =
            sample_loss(model, sample, ps, pt, weights, Mode::kTrain, &dropout_rng, scale);
        total_loss(parts, weights);  // throws on divergence
        sum.spatial_order += parts.spatial_order;
        sum.temporal_order += parts.temporal_order;
        sum.canberra += parts.canberra;
        sum.cosine += parts.cosine;
      }
      adam.step();
    }
    const double inv = 1.0 / static_cast<double>(count);
    EpochLog entry{epoch,
                   LossParts{sum.spatial_order * inv, sum.temporal_order * inv, sum.canberra * inv,
                             sum.cosine * inv},
                   0.0};
    entry.total = total_loss(entry.parts, weights);
    result.log.push_back(entry);
    if (options.on_epoch) options.on_epoch(entry);
    if (!options.out_dir.empty()) {
      write_text_atomic(options.out_dir / "loss_log.csv", format_loss_log(result.log));
      const bool periodic = config.checkpoint_every > 0 && epoch % config.checkpoint_every == 0;
      if (periodic || epoch == config.epochs) {
        save_checkpoint(ckpt_path, model, options.preprocessing);
      }
    }
  }
  return result;
}

}  // namespace pstrp
