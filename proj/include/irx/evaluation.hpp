#pragma once

// Accuracy metrics, whole-image classification, map rendering and
// map-to-map disagreement.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <span>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "irx/geodata.hpp"
#include "irx/io.hpp"
#include "irx/model.hpp"

namespace irx {

/// K x K counts; rows = reference class, columns = predicted class.
struct ConfusionMatrix {
  std::size_t classes = 0;
  std::vector<std::size_t> counts;

  explicit ConfusionMatrix(std::size_t k = 0) : classes(k), counts(k * k, 0) {}
  ConfusionMatrix(std::size_t k, std::vector<std::size_t> c) : classes(k), counts(std::move(c)) {
    if (counts.size() != k * k) throw DimensionError("confusion matrix needs K*K counts");
  }

  std::size_t& at(std::size_t ref, std::size_t pred) { return counts[ref * classes + pred]; }
  std::size_t at(std::size_t ref, std::size_t pred) const { return counts[ref * classes + pred]; }
  std::size_t total() const {
    std::size_t t = 0;
    for (auto c : counts) t += c;
    return t;
  }
  std::size_t row_sum(std::size_t r) const {
    std::size_t s = 0;
    for (std::size_t c = 0; c < classes; ++c) s += at(r, c);
    return s;
  }
  std::size_t col_sum(std::size_t c) const {
    std::size_t s = 0;
    for (std::size_t r = 0; r < classes; ++r) s += at(r, c);
    return s;
  }
};

/// Labels are 1..K with 0 = unlabelled; pixels whose reference is 0 are skipped.
inline ConfusionMatrix confusion(std::span<const int> reference, std::span<const int> predicted,
                                 std::size_t classes) {
  if (reference.size() != predicted.size()) {
    throw DimensionError("confusion: " + std::to_string(reference.size()) + " reference vs " +
                         std::to_string(predicted.size()) + " predicted labels");
  }
  ConfusionMatrix cm(classes);
  for (std::size_t i = 0; i < reference.size(); ++i) {
    if (reference[i] == 0) continue;
    const auto r = reference[i], p = predicted[i];
    if (r < 0 || static_cast<std::size_t>(r) > classes || p < 1 || static_cast<std::size_t>(p) > classes) {
      throw IndexError("confusion: label pair (" + std::to_string(r) + "," + std::to_string(p) +
                       ") outside 1.." + std::to_string(classes));
    }
    ++cm.at(static_cast<std::size_t>(r - 1), static_cast<std::size_t>(p - 1));
  }
  if (cm.total() == 0) throw ArgumentError("confusion: nothing to compare");
  return cm;
}

inline double overall_accuracy(const ConfusionMatrix& cm) {
  const auto total = cm.total();
  if (total == 0) throw ArgumentError("overall_accuracy: empty confusion matrix");
  std::size_t diag = 0;
  for (std::size_t k = 0; k < cm.classes; ++k) diag += cm.at(k, k);
  return static_cast<double>(diag) / static_cast<double>(total);
}

/// kappa = (p_o - p_e) / (1 - p_e). When p_e == 1 the statistic is
/// undefined; 0 is returned and `degenerate` is set.
inline double cohen_kappa(const ConfusionMatrix& cm, bool* degenerate = nullptr) {
  const double total = static_cast<double>(cm.total());
  if (total == 0) throw ArgumentError("cohen_kappa: empty confusion matrix");
  const double po = overall_accuracy(cm);
  double pe = 0.0;
  for (std::size_t k = 0; k < cm.classes; ++k) {
    pe += static_cast<double>(cm.row_sum(k)) * static_cast<double>(cm.col_sum(k));
  }
  pe /= total * total;
  if (degenerate) *degenerate = pe >= 1.0;
  if (pe >= 1.0) return 0.0;
  return (po - pe) / (1.0 - pe);
}

// Per-class recall (diagonal / row sum); NaN-free: empty rows give 0.
inline std::vector<double> class_accuracy(const ConfusionMatrix& cm) {
  std::vector<double> out(cm.classes, 0.0);
  for (std::size_t k = 0; k < cm.classes; ++k) {
    const auto n = cm.row_sum(k);
    if (n) out[k] = static_cast<double>(cm.at(k, k)) / static_cast<double>(n);
  }
  return out;
}

// ---------------------------------------------------------------------------
// inference over pixels

/// Predicted labels (1..K) for `pixels`, extracting patches batch by batch.
/// Batches are spread over `threads` workers; each writes only its own
/// slots, so the result does not depend on the worker count.
template <typename T>
std::vector<int> predict_pixels(const Model<T>& model, const RasterCube& cube,
                                std::span<const std::size_t> pixels, std::size_t batch = 256,
                                std::size_t threads = 1) {
  const auto& info = model.info();
  if (cube.bands != info.bands) {
    throw DimensionError("model expects " + std::to_string(info.bands) + " bands, cube has " +
                         std::to_string(cube.bands));
  }
  check_patch(cube, info.patch);
  if (batch == 0) throw ArgumentError("batch size must be >= 1");
  std::vector<int> out(pixels.size());
  const std::size_t batches = (pixels.size() + batch - 1) / batch;
  const Shape& in = model.input_shape();
  auto work = [&](std::size_t worker, std::size_t stride) {
    for (std::size_t b = worker; b < batches; b += stride) {
      const std::size_t start = b * batch;
      const std::size_t n = std::min(batch, pixels.size() - start);
      Shape s{n};
      s.insert(s.end(), in.begin(), in.end());
      auto x = extract_patches<T>(cube, pixels.subspan(start, n), info.patch).reshaped(s);
      const auto pred = argmax_rows(model.infer(x));
      for (std::size_t i = 0; i < n; ++i) out[start + i] = pred[i] + 1;
    }
  };
  threads = std::max<std::size_t>(1, std::min(threads, batches));
  if (threads == 1) {
    work(0, 1);
  } else {
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(threads);
    for (std::size_t t = 0; t < threads; ++t) {
      pool.emplace_back([&, t] {
        try {
          work(t, threads);
        } catch (...) {
          errors[t] = std::current_exception();
        }
      });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }
  return out;
}

/// Classifies every pixel of the (already normalised) cube.
template <typename T>
LabelRaster classify_image(const Model<T>& model, const RasterCube& cube, std::size_t batch = 256,
                           std::size_t threads = 1) {
  std::vector<std::size_t> all(cube.pixels());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  const auto pred = predict_pixels(model, cube, all, batch, threads);
  LabelRaster map(cube.rows, cube.cols);
  for (std::size_t i = 0; i < pred.size(); ++i) map.values[i] = static_cast<std::uint8_t>(pred[i]);
  return map;
}

struct Evaluation {
  ConfusionMatrix cm;
  double oa = 0.0;
  double kappa = 0.0;
  std::vector<double> per_class;
};

inline Evaluation evaluate_labels(std::span<const int> reference, std::span<const int> predicted,
                                  std::size_t classes) {
  Evaluation e;
  e.cm = confusion(reference, predicted, classes);
  e.oa = overall_accuracy(e.cm);
  e.kappa = cohen_kappa(e.cm);
  e.per_class = class_accuracy(e.cm);
  return e;
}

template <typename T>
Evaluation evaluate_pixels(const Model<T>& model, const RasterCube& cube, const LabelRaster& labels,
                           std::span<const std::size_t> pixels, std::size_t batch = 256,
                           std::size_t threads = 1) {
  const auto pred = predict_pixels(model, cube, pixels, batch, threads);
  std::vector<int> ref;
  ref.reserve(pixels.size());
  for (auto p : pixels) ref.push_back(labels.values.at(p));
  return evaluate_labels(ref, pred, model.classes());
}

// One CSV row per run.
inline std::string metrics_csv_header(std::size_t classes) {
  std::string h = "dataset,patch,fraction,seed,oa,kappa";
  for (std::size_t k = 1; k <= classes; ++k) h += ",acc_" + std::to_string(k);
  return h + "\n";
}

inline std::string metrics_csv_row(const std::string& dataset, std::size_t patch, double fraction,
                                   std::uint64_t seed, const Evaluation& e) {
  std::ostringstream os;
  os.precision(6);
  os << std::fixed << dataset << ',' << patch << ',' << fraction << ',' << seed << ',' << e.oa << ','
     << e.kappa;
  for (double a : e.per_class) os << ',' << a;
  os << "\n";
  return os.str();
}

// ---------------------------------------------------------------------------
// rendering and map comparison

inline std::string encode_ppm(std::size_t rows, std::size_t cols, const std::vector<std::uint8_t>& rgb) {
  std::ostringstream os;
  os << "P6\n" << cols << " " << rows << "\n255\n";
  os.write(reinterpret_cast<const char*>(rgb.data()), static_cast<std::streamsize>(rgb.size()));
  return os.str();
}

/// Colours a label map through `palette`; throws if a label has no entry.
inline std::vector<std::uint8_t> colorize(const LabelRaster& labels, const Palette& palette) {
  std::vector<const PaletteEntry*> lut(256, nullptr);
  for (const auto& e : palette) {
    if (e.index >= 0 && e.index < 256) lut[static_cast<std::size_t>(e.index)] = &e;
  }
  std::vector<std::uint8_t> rgb(labels.pixels() * 3);
  for (std::size_t i = 0; i < labels.pixels(); ++i) {
    const auto* e = lut[labels.values[i]];
    if (!e) {
      if (labels.values[i] == 0) {
        continue;  // unlabelled renders black
      }
      throw ArgumentError("palette has no entry for class " + std::to_string(labels.values[i]));
    }
    rgb[3 * i] = e->r;
    rgb[3 * i + 1] = e->g;
    rgb[3 * i + 2] = e->b;
  }
  return rgb;
}

/// Writes `path` (binary PPM) and `path` + ".legend.txt" (palette lines).
inline void render_map(const LabelRaster& labels, const Palette& palette,
                       const std::filesystem::path& path) {
  const auto rgb = colorize(labels, palette);
  write_text_atomic(path, encode_ppm(labels.rows, labels.cols, rgb));
  auto legend = path;
  legend += ".legend.txt";
  write_text_atomic(legend, format_palette(palette));
}

struct MapDiff {
  std::size_t rows = 0, cols = 0;
  std::vector<std::uint8_t> mask;  // 1 disagree, 0 agree, 2 outside compared extent
  std::vector<std::size_t> area_a;  // index = class label (0 unused unless full extent)
  std::vector<std::size_t> area_b;
  std::size_t compared = 0;
  std::size_t disagreeing = 0;

  double fraction() const {
    return compared ? static_cast<double>(disagreeing) / static_cast<double>(compared) : 0.0;
  }
  double percent() const { return 100.0 * fraction(); }
};

/// Compares two classified maps over the labelled extent of `reference`
/// (every pixel when `labeled_only` is false).
inline MapDiff diff_maps(const LabelRaster& a, const LabelRaster& b, const LabelRaster& reference,
                         bool labeled_only = true) {
  if (a.rows != b.rows || a.cols != b.cols || a.rows != reference.rows || a.cols != reference.cols) {
    throw DimensionError("diff_maps: maps are " + std::to_string(a.rows) + "x" + std::to_string(a.cols) +
                         ", " + std::to_string(b.rows) + "x" + std::to_string(b.cols) + " and " +
                         std::to_string(reference.rows) + "x" + std::to_string(reference.cols));
  }
  MapDiff d;
  d.rows = a.rows;
  d.cols = a.cols;
  d.mask.assign(a.pixels(), 2);
  d.area_a.assign(256, 0);
  d.area_b.assign(256, 0);
  std::size_t top = 0;
  for (std::size_t i = 0; i < a.pixels(); ++i) {
    if (labeled_only && reference.values[i] == 0) continue;
    ++d.compared;
    ++d.area_a[a.values[i]];
    ++d.area_b[b.values[i]];
    top = std::max<std::size_t>(top, std::max(a.values[i], b.values[i]));
    const bool differ = a.values[i] != b.values[i];
    d.mask[i] = differ ? 1 : 0;
    d.disagreeing += differ;
  }
  if (d.compared == 0) throw ArgumentError("diff_maps: reference has no labelled pixels");
  d.area_a.resize(top + 1);
  d.area_b.resize(top + 1);
  return d;
}

inline std::string diff_area_csv(const MapDiff& d) {
  std::ostringstream os;
  os << "class,area_a,area_b,delta\n";
  for (std::size_t k = 0; k < d.area_a.size(); ++k) {
    os << k << ',' << d.area_a[k] << ',' << d.area_b[k] << ','
       << static_cast<long long>(d.area_b[k]) - static_cast<long long>(d.area_a[k]) << "\n";
  }
  os.precision(6);
  os << std::fixed << "# compared=" << d.compared << " disagreeing=" << d.disagreeing
     << " percent=" << d.percent() << "\n";
  return os.str();
}

// Disagreement red, agreement dark grey, outside the compared extent black.
inline std::string diff_mask_ppm(const MapDiff& d) {
  std::vector<std::uint8_t> rgb(d.mask.size() * 3, 0);
  for (std::size_t i = 0; i < d.mask.size(); ++i) {
    if (d.mask[i] == 1) {
      rgb[3 * i] = 255;
    } else if (d.mask[i] == 0) {
      rgb[3 * i] = rgb[3 * i + 1] = rgb[3 * i + 2] = 64;
    }
  }
  return encode_ppm(d.rows, d.cols, rgb);
}

}  // namespace irx
