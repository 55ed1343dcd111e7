#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "doctest.h"
#include "grad_check.hpp"
#include "pstrp/error.hpp"
#include "pstrp/training.hpp"
#include "test_support.hpp"

using namespace pstrp;

namespace {

RelationMatrix rel(int n, std::vector<double> d, RelationKind kind = RelationKind::kCosineTemporal) {
  return RelationMatrix{kind, n, std::move(d)};
}

TwoStreamModel tiny_model(int grid, int half_window, int channels, std::uint64_t seed,
                          double dropout = 0.1) {
  const int side = spatial_patch_side(grid);
  const int L = 2 * half_window + 1;
  auto s = preset_stream_config(SizePreset::kTiny, grid * grid, L * channels * side * side);
  auto t = preset_stream_config(SizePreset::kTiny, L, channels * kCubeSize * kCubeSize);
  s.dropout = dropout;
  t.dropout = dropout;
  return build_two_stream(s, t, seed);
}

// Cubes with a bright square drifting right: enough structure to learn from.
std::vector<SpatioTemporalCube> drifting_cubes(int count, int half_window, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<SpatioTemporalCube> cubes;
  for (int k = 0; k < count; ++k) {
    auto c = testing::random_cube(rng, half_window, 1);
    for (auto& v : c.data) v *= 0.1f;
    const int y0 = 10 + static_cast<int>(rng.below(20));
    for (int l = 0; l < c.length(); ++l) {
      for (int y = y0; y < y0 + 20; ++y) {
        for (int x = 4 + 6 * l; x < 24 + 6 * l && x < 64; ++x) {
          c.data[(static_cast<std::size_t>(l) * 64 + y) * 64 + x] = 0.5f + 0.02f * static_cast<float>(x - 6 * l);
        }
      }
    }
    cubes.push_back(std::move(c));
  }
  return cubes;
}

}  // namespace

TEST_CASE("order loss analytic values") {
  const std::vector<double> uniform(16, 0.3);
  CHECK(order_loss(uniform, Permutation{{2, 0, 3, 1}}) == doctest::Approx(std::log(4.0)).epsilon(1e-12));
  const std::vector<double> two{2.0, 0.0, 0.0, 2.0};
  CHECK(order_loss(two, Permutation::identity(2)) ==
        doctest::Approx(-std::log(std::exp(2.0) / (std::exp(2.0) + 1.0))).epsilon(1e-12));
  CHECK(order_loss(two, Permutation::identity(2)) == doctest::Approx(0.1269).epsilon(1e-3));
  const std::vector<double> confident{60.0, 0.0, 0.0, 60.0};
  CHECK(order_loss(confident, Permutation::identity(2)) < 1e-20);
  CHECK_THROWS_AS(order_loss(two, Permutation{{0, 2}}), Error);
  try {
    order_loss(two, Permutation{{0, -1}});
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kIndex);
  }
}

TEST_CASE("order loss gradient matches finite differences") {
  Rng rng(1);
  const int n = 5;
  auto logits = testing::random_vector(rng, n * n, -2, 2);
  const Permutation labels{rng.permutation(n)};
  std::vector<double> grad;
  order_loss(logits, labels, &grad);
  for (std::size_t k = 0; k < logits.size(); ++k) {
    auto up = logits;
    auto down = logits;
    up[k] += 1e-6;
    down[k] -= 1e-6;
    const double numeric = (order_loss(up, labels) - order_loss(down, labels)) / 2e-6;
    CHECK(grad[k] == doctest::Approx(numeric).epsilon(1e-6));
  }
}

TEST_CASE("distance loss analytic values and loop oracle") {
  CHECK(distance_loss(rel(3, {0, .2, .3, .2, 0, .4, .3, .4, 0}), rel(3, {0, .2, .3, .2, 0, .4, .3, .4, 0})) == 0.0);
  CHECK(distance_loss(rel(2, {0, .5, .5, 0}), rel(2, {0, 0, 0, 0})) == 0.25);
  Rng rng(2);
  const int n = 6;
  const auto a = testing::random_vector(rng, n * n, 0, 1);
  const auto b = testing::random_vector(rng, n * n, 0, 1);
  double sum = 0.0;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (i != j) sum += (a[i * n + j] - b[i * n + j]) * (a[i * n + j] - b[i * n + j]);
    }
  }
  CHECK(std::abs(distance_loss(rel(n, a), rel(n, b)) - sum / (n * (n - 1))) <= 1e-12);
  CHECK_THROWS_AS(distance_loss(rel(2, {0, 1, 1, 0}, RelationKind::kCanberraSpatial), rel(2, {0, 1, 1, 0})), Error);
}

TEST_CASE("total loss combination") {
  const LossWeights w;
  CHECK(total_loss({1, 1, 1, 1}, w) == doctest::Approx(2.2).epsilon(1e-15));
  CHECK(total_loss({0, 0, 0, 0}, w) == 0.0);
  CHECK(total_loss({3, 4, 5, 6}, LossWeights{0, 0, 0, 0}) == 0.0);
  const LossParts p{0.3, 0.7, 0.11, 0.05};
  CHECK(total_loss(p, LossWeights{2, 2, 0.2, 0.2}) == doctest::Approx(2.0 * total_loss(p, w)).epsilon(1e-15));
  try {
    total_loss({1, 1, std::numeric_limits<double>::quiet_NaN(), 1}, w);
    FAIL("expected divergence");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kDivergence);
    CHECK(std::string(e.what()).find("L_Can") != std::string::npos);
  }
}

TEST_CASE("relation targets are a property of canonical geometry") {
  Rng rng(3);
  const auto cube = testing::random_cube(rng, 2, 1);
  const auto sample = prepare_sample(cube, 3);
  const Permutation p{rng.permutation(9)};
  // A distance computed on shuffled patches, aligned back, equals the target.
  const auto shuffled = canberra_matrix(apply_permutation(sample.spatial, p));
  const auto aligned = align_pairwise(shuffled.d, p);
  for (std::size_t k = 0; k < aligned.size(); ++k) {
    CHECK(aligned[k] == doctest::Approx(sample.canberra.d[k]).epsilon(1e-14));
  }
  // sample_loss compares against the canonical target whatever the permutation.
  auto model = tiny_model(3, 2, 1, 5, 0.0);
  const auto a = sample_loss(model, sample, p, Permutation::identity(5), LossWeights{}, Mode::kEval, nullptr, 0.0);
  const auto out = forward(model.spatial, apply_permutation(sample.spatial, p), Mode::kEval);
  const RelationMatrix pred{RelationKind::kCanberraSpatial, 9, align_pairwise(out.distance_pred, p)};
  CHECK(a.canberra == doctest::Approx(distance_loss(pred, sample.canberra)).epsilon(1e-14));
  CHECK(a.spatial_order == doctest::Approx(order_loss(out.order_logits, p)).epsilon(1e-14));
}

TEST_CASE("total-loss gradients through both streams match central differences") {
  Rng rng(4);
  for (const double dropout : {0.0, 0.1}) {
    CAPTURE(dropout);
    auto model = tiny_model(2, 1, 1, 6, dropout);
    for (auto* t : model.parameters()) {
      for (auto& v : t->value) v += 0.05 * rng.normal();
    }
    const auto sample = prepare_sample(testing::random_cube(rng, 1, 1), 2);
    const Permutation ps{rng.permutation(4)};
    const Permutation pt{rng.permutation(3)};
    const LossWeights w;
    const Mode mode = dropout > 0.0 ? Mode::kTrain : Mode::kEval;
    auto loss = [&] {
      Rng masks(7);
      return total_loss(sample_loss(model, sample, ps, pt, w, mode, &masks, 0.0), w);
    };
    model.zero_grad();
    Rng masks(7);
    sample_loss(model, sample, ps, pt, w, mode, &masks, 1.0);
    const auto r = testing::check_gradients(model.parameters(), loss, 60, rng);
    CHECK(r.max_relative_error < 1e-4);
  }
}

TEST_CASE("Adam first step and coupled weight decay") {
  Tensor t{"w", 1, 2, {1.0, -2.0}, {0.5, 0.0}};
  TrainConfig cfg;
  cfg.learning_rate = 0.1;
  cfg.weight_decay = 0.01;
  Adam adam({&t}, cfg);
  adam.step();
  // Bias-corrected first step: update = lr * g / (|g| + eps), g = grad + wd * w.
  const double g0 = 0.5 + 0.01 * 1.0;
  const double g1 = 0.0 + 0.01 * -2.0;
  CHECK(t.value[0] == doctest::Approx(1.0 - 0.1 * g0 / (std::abs(g0) + 1e-8)).epsilon(1e-14));
  CHECK(t.value[1] == doctest::Approx(-2.0 - 0.1 * g1 / (std::abs(g1) + 1e-8)).epsilon(1e-14));
  CHECK(adam.steps() == 1);
}

TEST_CASE("learning rate zero leaves weights bit-identical") {
  auto cubes = drifting_cubes(6, 1, 8);
  auto model = tiny_model(2, 1, 1, 9);
  std::vector<std::vector<double>> before;
  for (const auto* t : model.parameters()) before.push_back(t->value);
  TrainConfig cfg;
  cfg.learning_rate = 0.0;
  cfg.epochs = 2;
  cfg.batch_size = 4;
  TrainOptions opt;
  opt.preprocessing.spatial_grid = 2;
  train(cubes, model, cfg, LossWeights{}, opt);
  const auto after = model.parameters();
  for (std::size_t k = 0; k < after.size(); ++k) CHECK(after[k]->value == before[k]);
}

TEST_CASE("same seed, same loss log; training lowers the loss; artifacts written") {
  const auto dir = testing::scratch_dir("training_run");
  const auto cubes = drifting_cubes(24, 1, 10);
  TrainConfig cfg;
  cfg.learning_rate = 1e-3;
  cfg.epochs = 4;
  cfg.batch_size = 8;
  cfg.seed = 3;
  cfg.checkpoint_every = 2;
  TrainOptions opt;
  opt.preprocessing.spatial_grid = 2;
  opt.preprocessing.extraction.half_window = 1;
  auto m1 = tiny_model(2, 1, 1, 11);
  auto m2 = tiny_model(2, 1, 1, 11);
  int callbacks = 0;
  opt.on_epoch = [&](const EpochLog&) { ++callbacks; };
  opt.out_dir = dir;
  const auto r1 = train(cubes, m1, cfg, LossWeights{}, opt);
  opt.out_dir.clear();
  const auto r2 = train(cubes, m2, cfg, LossWeights{}, opt);
  CHECK(callbacks == 8);
  CHECK(format_loss_log(r1.log) == format_loss_log(r2.log));
  CHECK(r1.log.back().total < r1.log.front().total);

  std::ifstream log(dir / "loss_log.csv");
  std::stringstream text;
  text << log.rdbuf();
  CHECK(text.str() == format_loss_log(r1.log));
  CHECK(text.str().rfind("epoch,L_S,L_T,L_Can,L_Cos,total\n", 0) == 0);
  const auto ckpt = load_checkpoint(dir / "model.ckpt");
  CHECK(ckpt.model.spatial.embed.weight.value == m1.spatial.embed.weight.value);
  CHECK(ckpt.preprocessing.extraction.half_window == 1);
}

TEST_CASE("training rejects an empty store and invalid configs") {
  auto model = tiny_model(2, 1, 1, 12);
  CHECK_THROWS_AS(train({}, model, TrainConfig{}, LossWeights{}, TrainOptions{}), Error);
  TrainConfig bad;
  bad.batch_size = 0;
  CHECK_THROWS_AS(bad.validate(), Error);
  bad = TrainConfig{};
  bad.beta2 = 1.0;
  CHECK_THROWS_AS(bad.validate(), Error);
}
