#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "pstrp/checkpoint.hpp"
#include "pstrp/model.hpp"
#include "pstrp/patching.hpp"
#include "pstrp/relations.hpp"

namespace pstrp {

struct LossWeights {
  double lambda_s = 1.0;
  double lambda_t = 1.0;
  double lambda_can = 0.1;
  double lambda_cos = 0.1;
};

struct TrainConfig {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.99;
  double epsilon = 1e-8;
  double weight_decay = 1e-5;
  int epochs = 50;
  int batch_size = 96;
  std::uint64_t seed = 0;
  std::string dataset_name = "ped2";
  int checkpoint_every = 0;  // epochs; 0 = only at the end

  void validate() const;
};

/// Mean over slots of the cross-entropy between softmax(logits[slot]) and the
/// true position labels.pi[slot]. If `d_logits` is given it receives
/// d(loss)/d(logits).
double order_loss(std::span<const double> logits, const Permutation& labels,
                  std::vector<double>* d_logits = nullptr);

/// Mean squared difference over the n(n-1) off-diagonal entries.
double distance_loss(const RelationMatrix& pred, const RelationMatrix& target,
                     std::vector<double>* d_pred = nullptr);

struct LossParts {
  double spatial_order = 0.0;
  double temporal_order = 0.0;
  double canberra = 0.0;
  double cosine = 0.0;
};

/// lambda_s L_S + lambda_t L_T + lambda_can L_Can + lambda_cos L_Cos. A
/// non-finite part raises kDivergence naming the term.
double total_loss(const LossParts& parts, const LossWeights& weights);

/// Canonical-order patches of one cube plus their relation targets.
struct TrainingSample {
  PatchSet spatial;
  PatchSet temporal;
  RelationMatrix canberra;
  RelationMatrix cosine;
};

TrainingSample prepare_sample(const SpatioTemporalCube& cube, int spatial_grid);

/// Shuffles each stream by its permutation, runs both streams, aligns the
/// distance predictions back to canonical order and evaluates the four losses
/// against the unshuffled targets. With grad_scale > 0 the gradient of
/// grad_scale * total_loss is accumulated into the model.
LossParts sample_loss(TwoStreamModel& model, const TrainingSample& sample,
                      const Permutation& spatial_perm, const Permutation& temporal_perm,
                      const LossWeights& weights, Mode mode, Rng* dropout_rng,
                      double grad_scale);

/// Adam with coupled L2 weight decay (grad += weight_decay * param).
class Adam {
 public:
  Adam(std::vector<Tensor*> params, const TrainConfig& config);
  void step();
  long steps() const { return steps_; }

 private:
  std::vector<Tensor*> params_;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
  TrainConfig config_;
  long steps_ = 0;
};

struct EpochLog {
  int epoch = 0;  // 1-based
  LossParts parts;
  double total = 0.0;
};

std::string format_loss_log(const std::vector<EpochLog>& log);

struct TrainOptions {
  PreprocessConfig preprocessing;
  /// When set: model.ckpt and loss_log.csv are written here.
  std::filesystem::path out_dir;
  std::function<void(const EpochLog&)> on_epoch;
};

struct TrainResult {
  std::vector<EpochLog> log;
};

/// Mini-batch training. Per epoch the cubes are visited in a seeded random
/// order; each sample gets fresh seeded permutations for both streams.
TrainResult train(const std::vector<SpatioTemporalCube>& cubes, TwoStreamModel& model,
                  const TrainConfig& config, const LossWeights& weights,
                  const TrainOptions& options);

}  // namespace pstrp
