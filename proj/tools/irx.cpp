// irx: batch front end for the hyperspectral classification pipeline.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <locale>
#include <sstream>
#include <string>
#include <vector>

#include "irx/experiment.hpp"

namespace fs = std::filesystem;
using namespace irx;

namespace {

enum Exit : int { kOk = 0, kError = 1, kUsage = 2, kAnomaly = 3 };

std::string grouped(std::size_t n) {
  std::string s = std::to_string(n);
  for (int i = static_cast<int>(s.size()) - 3; i > 0; i -= 3) s.insert(static_cast<std::size_t>(i), ",");
  return s;
}

fs::path raw_beside(const fs::path& header, const std::string& raw) {
  if (!raw.empty()) return raw;
  auto p = header;
  return p.replace_extension(".raw");
}

LabelRaster read_labels(const std::string& path, const std::string& raw) {
  if (fs::path(path).extension() == ".pgm") return load_labels(path);
  return load_labels(path, raw_beside(path, raw));
}

template <typename V>
std::vector<V> parse_list(const std::string& text) {
  std::vector<V> out;
  std::istringstream is(text);
  std::string item;
  while (std::getline(is, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    std::istringstream cell(item);
    V v;
    if (!(cell >> v) || !cell.eof()) throw ArgumentError("bad list item '" + item + "'");
    out.push_back(v);
  }
  if (out.empty()) throw ArgumentError("empty list");
  return out;
}

// -- shared option groups -----------------------------------------------------

struct DataOptions {
  std::string cube, raw, labels, labels_raw, dataset;
  std::size_t classes = 8, bands = 32, rows = 128, cols = 128;
  std::uint64_t scene_seed = 1;
  double difficulty = 0.5;

  void add(CLI::App* app, bool synthetic_fallback) {
    app->add_option("--cube", cube, "Cube header (.hdr)");
    app->add_option("--raw", raw, "Cube raw file (default: header with .raw)");
    app->add_option("--labels", labels, "Ground truth (.pgm, or 8-bit header+raw)");
    app->add_option("--labels-raw", labels_raw, "Raw file for a header label raster");
    app->add_option("--dataset", dataset, "Dataset name written to CSV output");
    if (synthetic_fallback) {
      auto* g = app->add_option_group("synthetic", "Synthetic scene used when --cube is absent");
      g->add_option("--synth-classes", classes, "Classes")->capture_default_str();
      g->add_option("--synth-bands", bands, "Bands")->capture_default_str();
      g->add_option("--rows", rows, "Rows")->capture_default_str();
      g->add_option("--cols", cols, "Columns")->capture_default_str();
      g->add_option("--scene-seed", scene_seed, "Scene seed")->capture_default_str();
      g->add_option("--difficulty", difficulty, "Noise level (margin/sigma = 1/difficulty)")->capture_default_str();
    }
  }

  std::pair<RasterCube, LabelRaster> load() const {
    if (cube.empty()) {
      auto s = synth_scene(classes, bands, rows, cols, scene_seed, difficulty);
      return {std::move(s.cube), std::move(s.labels)};
    }
    if (labels.empty()) throw ArgumentError("--labels is required with --cube");
    auto c = load_cube(cube, raw_beside(cube, raw));
    auto l = read_labels(labels, labels_raw);
    check_pair(c, l);
    return {std::move(c), std::move(l)};
  }

  std::string name() const {
    if (!dataset.empty()) return dataset;
    return cube.empty() ? "synthetic" : fs::path(cube).stem().string();
  }
};

struct TrainOptions {
  RunConfig run;

  void add(CLI::App* app) {
    app->add_option("--model", run.model, "irx1d or cnn2d:<aviris-ng|dais|etm+|sentinel-2>")->capture_default_str();
    app->add_option("--patch", run.patch, "Odd patch size")->capture_default_str();
    app->add_option("--epochs", run.train.epochs, "Training epochs")->capture_default_str()->check(CLI::PositiveNumber);
    app->add_option("--lr", run.train.learning_rate, "Adagrad learning rate")->capture_default_str()->check(CLI::PositiveNumber);
    app->add_option("--batch", run.train.batch_size, "Mini-batch size")->capture_default_str()->check(CLI::PositiveNumber);
    app->add_option("--seed", run.train.seed, "Initialisation and shuffle seed")->capture_default_str();
  }
};

struct Globals {
  std::size_t threads = 1;
  bool quiet = false;
};

void progress(const Globals& g, const std::string& line) {
  if (!g.quiet) std::cerr << line << std::endl;
}

EpochCallback epoch_printer(const Globals& g, std::size_t total) {
  return [&g, total](const EpochStats& e) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(4) << "epoch " << e.epoch << "/" << total << " loss " << e.loss
       << " acc " << e.accuracy << " (" << std::setprecision(1) << e.seconds << " s)";
    progress(g, os.str());
  };
}

Split obtain_split(const LabelRaster& labels, const std::string& path, double fraction, std::uint64_t seed) {
  if (!path.empty()) return parse_split(read_text(path));
  return stratified_split(labels, fraction, seed);
}

Palette obtain_palette(const std::string& path, std::size_t classes) {
  return path.empty() ? default_palette(classes) : parse_palette(read_text(path));
}

// -- commands ------------------------------------------------------------------

int cmd_convert(const std::string& header, const std::string& raw, const std::string& drop,
                const std::string& out, const std::string& layout) {
  const auto h = parse_header(read_text(header));
  const auto cube = decode_cube(h, read_file(raw_beside(header, raw)), parse_band_list(drop, h.bands));
  save_cube(cube, out, raw_beside(out, ""), parse_interleave(layout));
  std::cout << "bands " << h.bands << " -> " << cube.bands << ", " << cube.rows << "x" << cube.cols << "\n";
  return kOk;
}

int cmd_split(const std::string& labels, const std::string& labels_raw, double fraction, std::uint64_t seed,
              const std::string& out) {
  const auto l = read_labels(labels, labels_raw);
  const auto s = stratified_split(l, fraction, seed);
  write_text_atomic(out, format_split(s));
  std::map<int, std::pair<std::size_t, std::size_t>> per;
  for (auto i : s.train) ++per[l.values[i]].first;
  for (auto i : s.test) ++per[l.values[i]].second;
  std::cout << "class,train,test\n";
  for (const auto& [k, v] : per) std::cout << k << ',' << v.first << ',' << v.second << "\n";
  return kOk;
}

struct TrainCmd {
  DataOptions data;
  TrainOptions opts;
  std::string split_file, out, history, log, map, render, palette;
  double fraction = 0.10;
  std::uint64_t split_seed = 0;
};

int cmd_train(const TrainCmd& c, const Globals& g) {
  if (c.data.cube.empty()) throw ArgumentError("--cube is required");
  const auto [cube, labels] = c.data.load();
  const auto split = obtain_split(labels, c.split_file, c.fraction, c.split_seed);
  RunConfig run = c.opts.run;
  run.threads = g.threads;
  auto r = run_experiment(cube, labels, split, run, epoch_printer(g, run.train.epochs));
  r.log.set("command", "train").set("cube", c.data.cube).set("labels", c.data.labels);
  if (!c.split_file.empty()) r.log.set("split_file", c.split_file);

  std::vector<std::pair<std::string, std::string>> extra;
  for (const auto& [k, v] : r.log.entries()) {
    if (k != "arch" && k != "adagrad_eps" && k != "init" && k != "bn_eps" && k != "bn_momentum") extra.emplace_back(k, v);
  }
  save_checkpoint(r.model, c.out, &r.norm, extra);
  write_text_atomic(c.history.empty() ? c.out + ".history.csv" : c.history, r.history.csv());
  write_text_atomic(c.log.empty() ? c.out + ".log" : c.log, r.log.str());
  if (!c.map.empty() || !c.render.empty()) {
    const auto map = classify_image(r.model, normalize_apply(cube, r.norm), run.eval_batch, g.threads);
    if (!c.map.empty()) save_labels_pgm(map, c.map);
    if (!c.render.empty()) render_map(map, obtain_palette(c.palette, labels.classes()), c.render);
  }
  std::cout << std::fixed << std::setprecision(4) << "test OA " << r.test.oa << " kappa " << r.test.kappa
            << " (" << split.test.size() << " test pixels)\n";
  return kOk;
}

LoadedModel<float> load_model_for(const std::string& path, const RasterCube& cube) {
  auto m = load_checkpoint<float>(path);
  if (m.model.info().bands != cube.bands) {
    throw DimensionError("model expects " + std::to_string(m.model.info().bands) + " bands, cube has " +
                         std::to_string(cube.bands));
  }
  return m;
}

RasterCube prepared(const LoadedModel<float>& m, const RasterCube& cube) {
  if (!m.norm) {
    std::cerr << "warning: checkpoint has no normalisation statistics; using raw values\n";
    return cube;
  }
  return normalize_apply(cube, *m.norm);
}

int cmd_classify(const std::string& model, const DataOptions& data, const std::string& out,
                 const std::string& render, const std::string& palette, std::size_t batch, const Globals& g) {
  const auto cube = load_cube(data.cube, raw_beside(data.cube, data.raw));
  const auto m = load_model_for(model, cube);
  const auto map = classify_image(m.model, prepared(m, cube), batch, g.threads);
  if (!out.empty()) save_labels_pgm(map, out);
  if (!render.empty()) render_map(map, obtain_palette(palette, m.model.classes()), render);
  std::cout << "classified " << map.rows << "x" << map.cols << " pixels\n";
  return kOk;
}

int cmd_evaluate(const std::string& model, const DataOptions& data, const std::string& split_file,
                 const std::string& out, std::size_t batch, const Globals& g) {
  const auto [cube, labels] = data.load();
  const auto m = load_model_for(model, cube);
  std::vector<std::size_t> pixels;
  if (!split_file.empty()) {
    pixels = parse_split(read_text(split_file)).test;
  } else {
    for (std::size_t i = 0; i < labels.pixels(); ++i) {
      if (labels.values[i]) pixels.push_back(i);
    }
  }
  const auto e = evaluate_pixels(m.model, prepared(m, cube), labels, pixels, batch, g.threads);
  bool degenerate = false;
  cohen_kappa(e.cm, &degenerate);
  if (degenerate) std::cerr << "warning: chance agreement is 1; kappa reported as 0\n";
  const auto seed = m.meta.count("init_seed") ? std::stoull(m.meta.at("init_seed")) : 0;
  const auto fraction = m.meta.count("split_fraction") ? std::stod(m.meta.at("split_fraction")) : 0.0;
  const auto csv = metrics_csv_header(m.model.classes()) +
                   metrics_csv_row(data.name(), m.model.info().patch, fraction, seed, e);
  if (!out.empty()) write_text_atomic(out, csv);
  std::cout << csv;
  return kOk;
}

int cmd_diff(const std::string& a, const std::string& b, const std::string& ref, bool full,
             const std::string& prefix) {
  const auto d = diff_maps(load_labels(a), load_labels(b), read_labels(ref, ""), !full);
  if (!prefix.empty()) {
    write_text_atomic(prefix + ".csv", diff_area_csv(d));
    write_text_atomic(prefix + ".ppm", diff_mask_ppm(d));
  }
  std::cout << std::fixed << std::setprecision(3) << "disagreement " << d.percent() << "% (" << d.disagreeing
            << " of " << d.compared << " pixels)\n";
  return kOk;
}

int cmd_params(std::string model, const std::string& dataset, std::size_t bands, std::size_t classes,
               std::size_t patch, std::optional<std::size_t> expected, bool table) {
  if (!dataset.empty()) {
    const auto& d = published_dataset(dataset);
    if (!bands) bands = d.bands;
    if (!classes) classes = d.classes;
    if (!expected) expected = model == "irx1d" ? d.irx1d_total : published_cnn2d_total(dataset);
  }
  if (model.rfind("cnn2d:", 0) == 0) {
    const auto preset = cnn2d_preset(model.substr(6));
    if (!bands) bands = preset.config.bands;
    if (!classes) classes = preset.config.classes;
  }
  if (!bands || !classes) throw ArgumentError("--bands and --classes (or --dataset) are required");
  const auto m = build_model<float>(model, bands, classes, patch);
  const auto a = audit(m, expected.value_or(m.parameter_count()));
  if (table) std::cout << m.summary();
  std::cout << "Total params: " << grouped(a.total) << "\n";
  if (!expected) return kOk;
  std::cout << "Expected: " << grouped(a.expected) << " (delta " << a.delta << ", " << to_string(a.status) << ")\n";
  if (!a.note.empty()) std::cout << "note: " << a.note << "\n";
  switch (a.status) {
    case AuditStatus::exact: return kOk;
    case AuditStatus::documented_anomaly: return kAnomaly;
    case AuditStatus::mismatch: return kError;
  }
  return kError;
}

struct SweepCmd {
  DataOptions data;
  TrainOptions opts;
  std::string list, out;
  double fraction = 0.10;
  std::uint64_t split_seed = 0;
};

int cmd_sweep(const SweepCmd& c, bool by_fraction, const Globals& g) {
  const auto [cube, labels] = c.data.load();
  RunConfig run = c.opts.run;
  run.threads = g.threads;
  std::string csv = sweep_csv_header(labels.classes());
  auto on_row = [&](const SweepRow& r) {
    const auto row = sweep_csv_row(c.data.name(), run.model, run.train.seed, r);
    csv += row;
    progress(g, row.substr(0, row.size() - 1));
  };
  if (by_fraction) {
    const auto fractions = c.list.empty() ? default_fractions() : parse_list<double>(c.list);
    sweep_fraction(cube, labels, fractions, c.split_seed, run, on_row);
  } else {
    const auto patches = c.list.empty() ? default_patches() : parse_list<std::size_t>(c.list);
    sweep_patch(cube, labels, patches, c.fraction, c.split_seed, run, on_row);
  }
  if (!c.out.empty()) write_text_atomic(c.out, csv);
  std::cout << csv;
  return kOk;
}

struct HpoCmd {
  DataOptions data;
  std::string record, objective = "cnn2d";
  std::size_t trials = 50, epochs = 100, patch = 7, batch = 64;
  std::uint64_t seed = 0, split_seed = 0;
  double fraction = 0.10;
};

int cmd_hpo(const HpoCmd& c, const Globals& g) {
  auto space = SearchSpace::standard();
  space.patch = c.patch;
  TrialFn fn;
  if (c.objective == "synthetic") {
    const auto obj = SyntheticObjective::standard();
    fn = [obj](const HpoConfig& cfg, std::uint64_t, std::size_t) { return obj(cfg); };
  } else if (c.objective == "cnn2d") {
    const auto [cube, labels] = c.data.load();
    fn = cnn2d_objective(cube, labels, stratified_split(labels, c.fraction, c.split_seed), c.patch, c.batch,
                         g.threads);
  } else {
    throw ArgumentError("--objective must be cnn2d or synthetic");
  }
  StudyOptions o;
  o.trials = c.trials;
  o.epochs = c.epochs;
  o.seed = c.seed;
  o.record = c.record;
  std::ostringstream sink;
  o.log = g.quiet ? &sink : &std::cerr;
  const auto rec = run_study(space, fn, o);
  const auto best = rec.best();
  if (!best) {
    std::cout << "no trial completed\n";
    return kError;
  }
  std::cout << std::setprecision(6) << "best trial " << best->id << " objective " << best->objective << "\n"
            << format_config(best->config) << "\n";
  return kOk;
}

int cmd_synth(std::size_t classes, std::size_t bands, std::size_t rows, std::size_t cols, std::uint64_t seed,
              double difficulty, const std::string& prefix) {
  const auto s = synth_scene(classes, bands, rows, cols, seed, difficulty);
  save_cube(s.cube, prefix + ".hdr", prefix + ".raw");
  save_labels_pgm(s.labels, prefix + "_gt.pgm");
  write_text_atomic(prefix + "_palette.txt", format_palette(default_palette(classes)));
  std::vector<std::size_t> all(s.cube.pixels());
  std::iota(all.begin(), all.end(), 0);
  const auto pred = nearest_mean_labels(s.cube, s.class_means, all);
  std::size_t ok = 0;
  for (std::size_t i = 0; i < all.size(); ++i) ok += pred[i] == s.labels.values[i];
  std::cout << std::fixed << std::setprecision(4) << "wrote " << prefix << ".hdr/.raw, " << prefix
            << "_gt.pgm, " << prefix << "_palette.txt; nearest-mean OA "
            << static_cast<double>(ok) / static_cast<double>(all.size()) << "\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"irx: hyperspectral patch classification (IRX-1D and 2-D CNN baselines)"};
  app.set_config("--config", "", "INI file, subcommand options under [train], [hpo], ...; the command line wins");
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--threads", g.threads, "Inference worker threads (1 = fully deterministic)")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  app.add_flag("--quiet", g.quiet, "No progress output on stderr");

  std::function<int()> run;

  // convert
  std::string conv_header, conv_raw, conv_drop, conv_out, conv_layout = "bsq";
  auto* convert = app.add_subcommand("convert", "Header+raw cube -> float32 cube with bands dropped");
  convert->add_option("--header", conv_header, "Input header")->required();
  convert->add_option("--raw", conv_raw, "Input raw file (default: header with .raw)");
  convert->add_option("--drop-bands", conv_drop, "1-based band ranges to drop, e.g. 1-5,196-207,285-320");
  convert->add_option("--out", conv_out, "Output header (raw written beside it)")->required();
  convert->add_option("--interleave", conv_layout, "bsq, bil or bip")->capture_default_str();
  convert->callback([&] { run = [&] { return cmd_convert(conv_header, conv_raw, conv_drop, conv_out, conv_layout); }; });

  // split
  std::string split_labels, split_labels_raw, split_out;
  double split_fraction = 0.10;
  std::uint64_t split_seed = 0;
  auto* split = app.add_subcommand("split", "Seeded stratified train/test split");
  split->add_option("--labels", split_labels, "Ground truth")->required();
  split->add_option("--labels-raw", split_labels_raw, "Raw file for a header label raster");
  split->add_option("--fraction", split_fraction, "Training fraction per class")->capture_default_str();
  split->add_option("--seed", split_seed, "Split seed")->capture_default_str();
  split->add_option("--out", split_out, "Split file")->required();
  split->callback([&] { run = [&] { return cmd_split(split_labels, split_labels_raw, split_fraction, split_seed, split_out); }; });

  // train
  TrainCmd tc;
  auto* train_cmd = app.add_subcommand("train", "Train a model; writes checkpoint, history CSV and experiment log");
  tc.data.add(train_cmd, false);
  tc.opts.add(train_cmd);
  train_cmd->add_option("--split", tc.split_file, "Split file (else --fraction/--split-seed)");
  train_cmd->add_option("--fraction", tc.fraction, "Training fraction")->capture_default_str();
  train_cmd->add_option("--split-seed", tc.split_seed, "Split seed")->capture_default_str();
  train_cmd->add_option("--out", tc.out, "Checkpoint path")->required();
  train_cmd->add_option("--history", tc.history, "History CSV (default: <out>.history.csv)");
  train_cmd->add_option("--log", tc.log, "Experiment log (default: <out>.log)");
  train_cmd->add_option("--map", tc.map, "Also classify the whole image into this PGM");
  train_cmd->add_option("--render", tc.render, "Also render the classified image as PPM");
  train_cmd->add_option("--palette", tc.palette, "Palette file (index,name,R,G,B)");
  train_cmd->callback([&] { run = [&] { return cmd_train(tc, g); }; });

  // params
  std::string pm_model = "irx1d", pm_dataset;
  std::size_t pm_bands = 0, pm_classes = 0, pm_patch = 7;
  std::optional<std::size_t> pm_expected;
  bool pm_table = false;
  auto* params = app.add_subcommand("params", "Parameter count audit; exit 0 exact, 3 documented anomaly, 1 mismatch");
  params->add_option("--model", pm_model, "irx1d or cnn2d:<preset>")->capture_default_str();
  params->add_option("--dataset", pm_dataset, "aviris-ng, dais, etm+, sentinel-2 or indian-pines");
  params->add_option("--bands", pm_bands, "Band count");
  params->add_option("--classes", pm_classes, "Class count");
  params->add_option("--patch", pm_patch, "Patch size")->capture_default_str();
  params->add_option("--expected", pm_expected, "Expected total");
  params->add_flag("--summary", pm_table, "Print the layer table");
  params->callback([&] { run = [&] { return cmd_params(pm_model, pm_dataset, pm_bands, pm_classes, pm_patch, pm_expected, pm_table); }; });

  // evaluate / classify
  std::string ev_model, ev_split, ev_out;
  std::size_t ev_batch = 256;
  DataOptions ev_data;
  auto* evaluate = app.add_subcommand("evaluate", "Score a checkpoint; writes a metrics CSV row");
  evaluate->add_option("--model", ev_model, "Checkpoint")->required();
  ev_data.add(evaluate, false);
  evaluate->add_option("--split", ev_split, "Score the split's test pixels (default: all labelled)");
  evaluate->add_option("--out", ev_out, "Metrics CSV");
  evaluate->add_option("--batch", ev_batch, "Inference batch")->capture_default_str()->check(CLI::PositiveNumber);
  evaluate->callback([&] {
    run = [&] {
      if (ev_data.cube.empty() || ev_data.labels.empty()) throw ArgumentError("--cube and --labels are required");
      return cmd_evaluate(ev_model, ev_data, ev_split, ev_out, ev_batch, g);
    };
  });

  std::string cl_model, cl_out, cl_render, cl_palette;
  std::size_t cl_batch = 256;
  DataOptions cl_data;
  auto* classify = app.add_subcommand("classify", "Classify every pixel; writes a PGM label map and/or a PPM");
  classify->add_option("--model", cl_model, "Checkpoint")->required();
  classify->add_option("--cube", cl_data.cube, "Cube header")->required();
  classify->add_option("--raw", cl_data.raw, "Cube raw file");
  classify->add_option("--out", cl_out, "Label map (PGM)");
  classify->add_option("--render", cl_render, "Colour map (PPM) plus <render>.legend.txt");
  classify->add_option("--palette", cl_palette, "Palette file");
  classify->add_option("--batch", cl_batch, "Inference batch")->capture_default_str()->check(CLI::PositiveNumber);
  classify->callback([&] {
    run = [&] {
      if (cl_out.empty() && cl_render.empty()) throw ArgumentError("give --out and/or --render");
      return cmd_classify(cl_model, cl_data, cl_out, cl_render, cl_palette, cl_batch, g);
    };
  });

  // diff-maps
  std::string df_a, df_b, df_ref, df_out;
  bool df_full = false;
  auto* diff = app.add_subcommand("diff-maps", "Disagreement between two classified maps");
  diff->add_option("a", df_a, "First map (PGM)")->required();
  diff->add_option("b", df_b, "Second map (PGM)")->required();
  diff->add_option("reference", df_ref, "Reference labels; its labelled pixels are compared")->required();
  diff->add_flag("--full-extent", df_full, "Compare every pixel");
  diff->add_option("--out", df_out, "Prefix for <out>.csv (areas) and <out>.ppm (mask)");
  diff->callback([&] { run = [&] { return cmd_diff(df_a, df_b, df_ref, df_full, df_out); }; });

  // sweeps
  SweepCmd sf;
  auto* sweep_f = app.add_subcommand("sweep-fraction", "OA versus training fraction (long-form CSV)");
  sf.data.add(sweep_f, true);
  sf.opts.add(sweep_f);
  sweep_f->add_option("--fractions", sf.list, "Comma list (default 0.05,0.10,0.15,0.25,0.50,0.75)");
  sweep_f->add_option("--split-seed", sf.split_seed, "Split seed")->capture_default_str();
  sweep_f->add_option("--out", sf.out, "CSV path");
  sweep_f->callback([&] { run = [&] { return cmd_sweep(sf, true, g); }; });

  SweepCmd sp;
  auto* sweep_p = app.add_subcommand("sweep-patch", "OA versus patch size (long-form CSV)");
  sp.data.add(sweep_p, true);
  sp.opts.add(sweep_p);
  sweep_p->add_option("--patches", sp.list, "Comma list (default 3,5,7,9,11,13,15)");
  sweep_p->add_option("--fraction", sp.fraction, "Training fraction")->capture_default_str();
  sweep_p->add_option("--split-seed", sp.split_seed, "Split seed")->capture_default_str();
  sweep_p->add_option("--out", sp.out, "CSV path");
  sweep_p->callback([&] { run = [&] { return cmd_sweep(sp, false, g); }; });

  // hpo
  HpoCmd hc;
  auto* hpo = app.add_subcommand("hpo", "Gaussian-process hyperparameter study for the 2-D CNN");
  hc.data.add(hpo, true);
  hpo->add_option("--trials", hc.trials, "Trials")->capture_default_str();
  hpo->add_option("--epochs", hc.epochs, "Epochs per trial")->capture_default_str()->check(CLI::PositiveNumber);
  hpo->add_option("--seed", hc.seed, "Study seed")->capture_default_str();
  hpo->add_option("--patch", hc.patch, "Patch size")->capture_default_str();
  hpo->add_option("--batch", hc.batch, "Mini-batch size")->capture_default_str()->check(CLI::PositiveNumber);
  hpo->add_option("--fraction", hc.fraction, "Training fraction")->capture_default_str();
  hpo->add_option("--split-seed", hc.split_seed, "Split seed")->capture_default_str();
  hpo->add_option("--record", hc.record, "Study record (resumed when it exists)");
  hpo->add_option("--objective", hc.objective, "cnn2d (train on the data) or synthetic")->capture_default_str();
  hpo->callback([&] { run = [&] { return cmd_hpo(hc, g); }; });

  // synth
  std::size_t sy_classes = 8, sy_bands = 32, sy_rows = 128, sy_cols = 128;
  std::uint64_t sy_seed = 1;
  double sy_difficulty = 0.5;
  std::string sy_out;
  auto* synth = app.add_subcommand("synth", "Write a synthetic cube, ground truth and palette");
  synth->add_option("--classes", sy_classes, "Classes")->capture_default_str();
  synth->add_option("--bands", sy_bands, "Bands")->capture_default_str();
  synth->add_option("--rows", sy_rows, "Rows")->capture_default_str();
  synth->add_option("--cols", sy_cols, "Columns")->capture_default_str();
  synth->add_option("--seed", sy_seed, "Seed")->capture_default_str();
  synth->add_option("--difficulty", sy_difficulty, "Noise level (margin/sigma = 1/difficulty)")->capture_default_str();
  synth->add_option("--out", sy_out, "Output prefix")->required();
  synth->callback([&] { run = [&] { return cmd_synth(sy_classes, sy_bands, sy_rows, sy_cols, sy_seed, sy_difficulty, sy_out); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << " (try --help)\n";
    return kUsage;
  }
  try {
    return run();
  } catch (const ArgumentError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kError;
  }
}
