#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "irx/geodata.hpp"
#include "irx/training.hpp"
#include "irx/zoo.hpp"

using namespace irx;

namespace {

std::vector<double> snapshot(const Model<double>& m) {
  std::vector<double> out;
  for (const auto* p : m.parameters()) out.insert(out.end(), p->value.data().begin(), p->value.data().end());
  return out;
}

struct SceneData {
  Tensor<float> x;
  std::vector<int> y;
};

SceneData scene_samples(double difficulty, std::size_t patch, double fraction, std::uint64_t seed) {
  const auto s = synth_scene(4, 8, 32, 32, seed, difficulty);
  const auto split = stratified_split(s.labels, fraction, seed);
  const auto cube = normalize_apply(s.cube, normalize_fit(s.cube, split.train));
  return {extract_patches<float>(cube, split.train, patch), class_indices(s.labels, split.train)};
}

}  // namespace

TEST(Adagrad, ZeroGradientChangesNothing) {
  Parameter<double> p("w", {3}, true, 0.5);
  adagrad_step(p, 0.01);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(p.value[i], 0.5);
    EXPECT_EQ(p.accumulator[i], 0.0);
  }
}

TEST(Adagrad, FirstAndSecondStepHandArithmetic) {
  Parameter<double> p("w", {1}, true, 1.0);
  p.grad[0] = 3.0;
  adagrad_step(p, 0.01);
  const double first = p.value[0] - 1.0;
  EXPECT_NEAR(first, -0.01 * 3.0 / (3.0 + 1e-7), 1e-15);
  EXPECT_NEAR(first, -0.01, 1e-9);
  EXPECT_EQ(p.accumulator[0], 9.0);

  const double before = p.value[0];
  adagrad_step(p, 0.01);
  const double second = p.value[0] - before;
  EXPECT_NEAR(second, -0.01 * 3.0 / (std::sqrt(18.0) + 1e-7), 1e-15);
  EXPECT_NEAR(second, -0.01 / std::sqrt(2.0), 1e-9);
  EXPECT_LT(std::abs(second), std::abs(first));
}

TEST(Adagrad, AccumulatorNeverDecreases) {
  Parameter<double> p("w", {16});
  std::mt19937_64 rng(1);
  std::normal_distribution<double> g(0.0, 2.0);
  std::vector<double> last(16, 0.0);
  for (int step = 0; step < 50; ++step) {
    for (std::size_t i = 0; i < 16; ++i) p.grad[i] = step % 7 == 0 ? 0.0 : g(rng);
    adagrad_step(p, 0.01);
    for (std::size_t i = 0; i < 16; ++i) {
      ASSERT_GE(p.accumulator[i], last[i]);
      last[i] = p.accumulator[i];
    }
  }
}

TEST(Adagrad, NonFiniteGradientNamesParameter) {
  Parameter<double> p("dense_1.kernel", {2}, true, 1.0);
  p.grad[1] = std::nan("");
  try {
    adagrad_step(p, 0.01);
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("dense_1.kernel"), std::string::npos);
  }
  EXPECT_EQ(p.value[0], 1.0);  // checked before any update
}

TEST(Init, GlorotBoundsAndConstants) {
  auto m = build_irx1d<double>(6, 3, 3);
  initialize(m, 5);
  for (const auto* p : m.parameters()) {
    const auto& n = p->name;
    if (n.ends_with(".bias") || n.ends_with(".beta") || n.ends_with(".moving_mean")) {
      for (double v : p->value.data()) ASSERT_EQ(v, 0.0) << n;
    } else if (n.ends_with(".gamma") || n.ends_with(".moving_variance")) {
      for (double v : p->value.data()) ASSERT_EQ(v, 1.0) << n;
    } else {
      const auto [fi, fo] = glorot_fans(p->value.shape());
      const double limit = std::sqrt(6.0 / static_cast<double>(fi + fo));
      double maxabs = 0;
      for (double v : p->value.data()) {
        ASSERT_LE(std::abs(v), limit) << n;
        maxabs = std::max(maxabs, std::abs(v));
      }
      if (p->size() >= 64) EXPECT_GT(maxabs, 0.8 * limit) << n;
    }
  }
  auto again = build_irx1d<double>(6, 3, 3);
  initialize(again, 5);
  EXPECT_EQ(snapshot(m), snapshot(again));
  EXPECT_EQ(glorot_fans({3, 3, 4, 8}), (std::pair<std::size_t, std::size_t>{36, 72}));
  EXPECT_EQ(glorot_fans({10, 5}), (std::pair<std::size_t, std::size_t>{10, 5}));
}

TEST(EpochOrder, PureFunctionOfSeedAndEpoch) {
  const auto a = epoch_order(3, 1, 100);
  EXPECT_EQ(a, epoch_order(3, 1, 100));
  EXPECT_NE(a, epoch_order(3, 2, 100));
  EXPECT_NE(a, epoch_order(4, 1, 100));
  auto sorted = a;
  std::sort(sorted.begin(), sorted.end());
  std::vector<std::size_t> iota(100);
  std::iota(iota.begin(), iota.end(), 0);
  EXPECT_EQ(sorted, iota);
}

TEST(Train, ZeroEpochsLeavesModelUnchanged) {
  auto d = scene_samples(0.5, 3, 0.1, 1);
  auto m = build_irx1d<double>(8, 4, 3);
  initialize(m, 1);
  const auto before = snapshot(m);
  TrainConfig cfg;
  cfg.epochs = 0;
  const auto h = train(m, d.x.cast<double>(), d.y, cfg);
  EXPECT_TRUE(h.epochs.empty());
  EXPECT_EQ(snapshot(m), before);
}

TEST(Train, SeparableSceneFitsWithinTwentyEpochs) {
  auto d = scene_samples(0.0, 3, 0.1, 2);
  auto m = build_irx1d<float>(8, 4, 3);
  initialize(m, 2);
  TrainConfig cfg;
  cfg.epochs = 20;
  cfg.seed = 2;
  double best = 0.0;
  const auto h = train(m, d.x, d.y, cfg, [&](const EpochStats& e) { best = std::max(best, e.accuracy); });
  EXPECT_EQ(h.epochs.size(), 20u);
  EXPECT_EQ(best, 1.0);
  for (const auto& e : h.epochs) EXPECT_TRUE(std::isfinite(e.loss));
}

TEST(Train, InitialLossNearLogK) {
  const std::size_t k = 6;
  std::mt19937_64 rng(9);
  std::normal_distribution<float> g(0.0f, 1.0f);
  Tensor<float> x({256, 9, 10});
  for (auto& v : x.data()) v = g(rng);
  std::vector<int> y(256);
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = static_cast<int>(i % k);
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    auto m = build_irx1d<float>(10, k, 3);
    initialize(m, seed);
    TrainConfig cfg;
    cfg.epochs = 1;
    cfg.seed = seed;
    const auto h = train(m, x, y, cfg);
    EXPECT_NEAR(h.epochs[0].loss, std::log(double(k)), 0.15 * std::log(double(k))) << seed;
  }
}

TEST(Train, BitIdenticalReruns) {
  auto d = scene_samples(0.5, 3, 0.1, 3);
  std::vector<float> finals[2];
  for (auto& f : finals) {
    auto m = build_irx1d<float>(8, 4, 3);
    initialize(m, 3);
    TrainConfig cfg;
    cfg.epochs = 3;
    cfg.seed = 3;
    train(m, d.x, d.y, cfg);
    for (const auto* p : m.parameters()) f.insert(f.end(), p->value.data().begin(), p->value.data().end());
  }
  ASSERT_EQ(finals[0].size(), finals[1].size());
  EXPECT_EQ(std::memcmp(finals[0].data(), finals[1].data(), finals[0].size() * sizeof(float)), 0);
}

TEST(Train, ArgumentAndNumericErrors) {
  auto m = build_irx1d<float>(4, 3, 3);
  initialize(m, 0);
  Tensor<float> x({2, 9, 4}, 0.5f);
  TrainConfig cfg;
  cfg.epochs = 1;
  EXPECT_THROW(train(m, x, std::vector<int>{0, 3}, cfg), IndexError);
  EXPECT_THROW(train(m, x, std::vector<int>{0}, cfg), DimensionError);
  cfg.learning_rate = 0;
  EXPECT_THROW(train(m, x, std::vector<int>{0, 1}, cfg), ArgumentError);
  cfg.learning_rate = 0.01;
  x[5] = std::numeric_limits<float>::infinity();
  try {
    train(m, x, std::vector<int>{0, 1}, cfg);
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    const std::string what = e.what();
    EXPECT_NE(what.find("epoch 1"), std::string::npos) << what;
    EXPECT_NE(what.find("batch 0"), std::string::npos) << what;
  }
}

TEST(Train, HistoryCsvAndExperimentLog) {
  TrainHistory h;
  h.epochs.push_back({1, 0.5, 0.75, 0.1});
  EXPECT_EQ(h.csv().substr(0, 27), "epoch,loss,accuracy,seconds");
  ExperimentLog log;
  log.set("seed", 7).set("lr", 0.01).set("seed", 8);
  EXPECT_EQ(log.str(), "seed=8\nlr=0.01\n");
}
