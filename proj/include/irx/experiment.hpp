#pragma once

// End-to-end runs shared by the command-line tool and the acceptance suite:
// normalise -> split -> train -> score, plus the fraction / patch sweeps and
// the 2-D CNN objective for hyperparameter studies.

#include <chrono>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "irx/checkpoint.hpp"
#include "irx/evaluation.hpp"
#include "irx/geodata.hpp"
#include "irx/hpo.hpp"
#include "irx/training.hpp"
#include "irx/zoo.hpp"

namespace irx {

inline constexpr const char* kPaddingMode = "mirror (reflect-101)";
inline constexpr const char* kNormalization = "per-band standardisation on training pixels, std floor 1e-8";

/// "irx1d" or "cnn2d:<preset>" (aviris-ng, dais, etm+, sentinel-2). A preset
/// keeps its layer stack and padding convention but takes the data's band
/// and class counts and the requested patch size.
template <typename T>
Model<T> build_model(const std::string& spec, std::size_t bands, std::size_t classes, std::size_t patch) {
  if (spec == "irx1d") return build_irx1d<T>(bands, classes, patch);
  if (spec.rfind("cnn2d:", 0) == 0) {
    auto cfg = cnn2d_preset(spec.substr(6)).config;
    cfg.bands = bands;
    cfg.classes = classes;
    cfg.patch = patch;
    return build_cnn2d<T>(cfg);
  }
  throw ArgumentError("unknown model '" + spec + "' (irx1d or cnn2d:<aviris-ng|dais|etm+|sentinel-2>)");
}

struct RunConfig {
  std::string model = "irx1d";
  std::size_t patch = 7;
  TrainConfig train;
  std::size_t eval_batch = 256;
  std::size_t threads = 1;
};

struct RunOutput {
  Model<float> model;
  NormStats norm;
  TrainHistory history;
  Evaluation test;
  ExperimentLog log;
};

inline void check_pair(const RasterCube& cube, const LabelRaster& labels) {
  if (cube.rows != labels.rows || cube.cols != labels.cols) {
    throw DimensionError("cube is " + std::to_string(cube.rows) + "x" + std::to_string(cube.cols) +
                         " but labels are " + std::to_string(labels.rows) + "x" + std::to_string(labels.cols));
  }
}

/// Fits normalisation on the training pixels, trains a fresh model seeded
/// with cfg.train.seed, and scores the test pixels.
inline RunOutput run_experiment(const RasterCube& cube, const LabelRaster& labels, const Split& split,
                                const RunConfig& cfg, const EpochCallback& on_epoch = {}) {
  check_pair(cube, labels);
  const std::size_t classes = labels.classes();
  if (classes < 2) throw DataError("label raster needs at least 2 classes");
  const auto norm = normalize_fit(cube, split.train);
  const auto normed = normalize_apply(cube, norm);
  auto model = build_model<float>(cfg.model, cube.bands, classes, cfg.patch);
  initialize(model, cfg.train.seed);
  const auto x = extract_patches<float>(normed, split.train, cfg.patch);
  const auto y = class_indices(labels, split.train);
  auto history = train(model, x, y, cfg.train, on_epoch);
  auto test = evaluate_pixels(model, normed, labels, split.test, cfg.eval_batch, cfg.threads);

  ExperimentLog log;
  log.set("model", cfg.model)
      .set("arch", model.info().arch.empty() ? "irx1d" : model.info().arch)
      .set("bands", cube.bands)
      .set("classes", classes)
      .set("rows", cube.rows)
      .set("cols", cube.cols)
      .set("patch", cfg.patch)
      .set("params", model.parameter_count())
      .set("epochs", cfg.train.epochs)
      .set("learning_rate", cfg.train.learning_rate)
      .set("batch_size", cfg.train.batch_size)
      .set("optimizer", "adagrad")
      .set("adagrad_eps", cfg.train.adagrad_eps)
      .set("init", kInitScheme)
      .set("init_seed", cfg.train.seed)
      .set("shuffle_seed", cfg.train.seed)
      .set("bn_eps", kBatchNormEpsilon)
      .set("bn_momentum", kBatchNormMomentum)
      .set("loss", "softmax cross-entropy")
      .set("normalization", kNormalization)
      .set("padding", kPaddingMode)
      .set("precision", "float32")
      .set("split_fraction", split.fraction)
      .set("split_seed", split.seed)
      .set("train_pixels", split.train.size())
      .set("test_pixels", split.test.size())
      .set("eval_batch", cfg.eval_batch)
      .set("threads", cfg.threads);
  if (!history.epochs.empty()) log.set("final_loss", history.epochs.back().loss);
  log.set("test_oa", test.oa).set("test_kappa", test.kappa);
  return {std::move(model), norm, std::move(history), std::move(test), std::move(log)};
}

// ---------------------------------------------------------------------------
// sweeps

inline const std::vector<double>& default_fractions() {
  static const std::vector<double> f{0.05, 0.10, 0.15, 0.25, 0.50, 0.75};
  return f;
}

inline const std::vector<std::size_t>& default_patches() {
  static const std::vector<std::size_t> p{3, 5, 7, 9, 11, 13, 15};
  return p;
}

struct SweepRow {
  double fraction = 0;
  std::size_t patch = 0;
  Evaluation test;
  double seconds = 0;
};

using SweepCallback = std::function<void(const SweepRow&)>;

/// One run per fraction; splits use `split_seed`, training cfg.train.seed.
inline std::vector<SweepRow> sweep_fraction(const RasterCube& cube, const LabelRaster& labels,
                                            const std::vector<double>& fractions, std::uint64_t split_seed,
                                            const RunConfig& cfg, const SweepCallback& on_row = {}) {
  std::vector<SweepRow> rows;
  for (double f : fractions) {
    const auto start = std::chrono::steady_clock::now();
    const auto split = stratified_split(labels, f, split_seed);
    auto out = run_experiment(cube, labels, split, cfg);
    SweepRow r{f, cfg.patch, std::move(out.test),
               std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count()};
    if (on_row) on_row(r);
    rows.push_back(std::move(r));
  }
  return rows;
}

inline std::vector<SweepRow> sweep_patch(const RasterCube& cube, const LabelRaster& labels,
                                         const std::vector<std::size_t>& patches, double fraction,
                                         std::uint64_t split_seed, RunConfig cfg,
                                         const SweepCallback& on_row = {}) {
  std::vector<SweepRow> rows;
  const auto split = stratified_split(labels, fraction, split_seed);
  for (auto p : patches) {
    const auto start = std::chrono::steady_clock::now();
    cfg.patch = p;
    auto out = run_experiment(cube, labels, split, cfg);
    SweepRow r{fraction, p, std::move(out.test),
               std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count()};
    if (on_row) on_row(r);
    rows.push_back(std::move(r));
  }
  return rows;
}

/// Long-form CSV: the metrics columns plus model and wall time.
inline std::string sweep_csv_header(std::size_t classes) {
  auto h = metrics_csv_header(classes);
  h.pop_back();
  return h + ",model,seconds\n";
}

inline std::string sweep_csv_row(const std::string& dataset, const std::string& model, std::uint64_t seed,
                                 const SweepRow& r) {
  auto row = metrics_csv_row(dataset, r.patch, r.fraction, seed, r.test);
  row.pop_back();
  std::ostringstream os;
  os.precision(3);
  os << std::fixed << r.seconds;
  return row + "," + model + "," + os.str() + "\n";
}

// ---------------------------------------------------------------------------
// hyperparameter-study objective on real (or synthetic) imagery

/// Test OA of a 2-D CNN built from the configuration, trained on the split
/// with the configuration's learning rate.
inline TrialFn cnn2d_objective(const RasterCube& cube, const LabelRaster& labels, const Split& split,
                               std::size_t patch = 7, std::size_t batch = 64, std::size_t threads = 1) {
  check_pair(cube, labels);
  const auto norm = normalize_fit(cube, split.train);
  auto normed = std::make_shared<RasterCube>(normalize_apply(cube, norm));
  auto x = std::make_shared<Tensor<float>>(extract_patches<float>(*normed, split.train, patch));
  auto y = std::make_shared<std::vector<int>>(class_indices(labels, split.train));
  auto lab = std::make_shared<LabelRaster>(labels);
  const std::size_t classes = labels.classes();
  return [=](const HpoConfig& c, std::uint64_t seed, std::size_t epochs) {
    auto model = build_cnn2d<float>(to_cnn2d(c, normed->bands, classes, patch));
    initialize(model, seed);
    TrainConfig tc;
    tc.learning_rate = c.learning_rate;
    tc.epochs = epochs;
    tc.batch_size = batch;
    tc.seed = seed;
    train(model, *x, *y, tc);
    return evaluate_pixels(model, *normed, *lab, split.test, 256, threads).oa;
  };
}

}  // namespace irx
