#include <gtest/gtest.h>

#include <filesystem>
#include <cstring>
#include <map>
#include <numeric>
#include <random>
#include <set>

#include "irx/geodata.hpp"

using namespace irx;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    std::random_device rd;
    path = fs::temp_directory_path() / ("irx_geo_" + std::to_string(rd()));
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
};

RasterCube random_cube(std::size_t r, std::size_t c, std::size_t b, std::uint64_t seed) {
  RasterCube cube(r, c, b);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(-5.0f, 5.0f);
  for (auto& v : cube.values) v = u(rng);
  return cube;
}

std::vector<char> raw_bytes(const std::vector<float>& values) {
  std::vector<char> raw(values.size() * 4);
  std::memcpy(raw.data(), values.data(), raw.size());
  return raw;
}

}  // namespace

TEST(LoadCube, TwoByTwoByThreeRoundTrip) {
  TempDir dir;
  const auto cube = random_cube(2, 2, 3, 1);
  save_cube(cube, dir.path / "c.hdr", dir.path / "c.raw");
  const auto back = load_cube(dir.path / "c.hdr", dir.path / "c.raw");
  EXPECT_EQ(back.rows, 2u);
  EXPECT_EQ(back.cols, 2u);
  EXPECT_EQ(back.bands, 3u);
  EXPECT_EQ(back.values, cube.values);
  EXPECT_EQ(back.source, Interleave::bsq);
}

TEST(LoadCube, LayoutsDecodeToSameCanonicalCube) {
  TempDir dir;
  const auto cube = random_cube(3, 4, 5, 2);
  for (auto layout : {Interleave::bsq, Interleave::bil, Interleave::bip}) {
    const auto hdr = dir.path / (std::string(to_string(layout)) + ".hdr");
    const auto raw = dir.path / (std::string(to_string(layout)) + ".raw");
    save_cube(cube, hdr, raw, layout);
    const auto back = load_cube(hdr, raw);
    EXPECT_EQ(back.values, cube.values) << to_string(layout);
    EXPECT_EQ(back.source, layout);
  }
  // and the raw files differ, so the comparison means something
  EXPECT_NE(read_file(dir.path / "bsq.raw"), read_file(dir.path / "bip.raw"));
}

TEST(LoadCube, BandSequentialHandDecoded) {
  // 1 row x 2 cols x 2 bands, band-sequential: band0 = {1,2}, band1 = {3,4}
  RasterHeader h;
  h.samples = 2;
  h.lines = 1;
  h.bands = 2;
  h.interleave = Interleave::bsq;
  const auto cube = decode_cube(h, raw_bytes({1, 2, 3, 4}));
  EXPECT_EQ(cube.values, (std::vector<float>{1, 3, 2, 4}));
}

TEST(LoadCube, BigEndianAndIntegerTypes) {
  RasterHeader h;
  h.samples = 2;
  h.lines = 1;
  h.bands = 1;
  h.data_type = 2;  // int16
  h.byte_order = 1;
  const std::vector<char> raw = {0x01, 0x02, char(0xff), char(0xfe)};
  const auto cube = decode_cube(h, raw);
  EXPECT_EQ(cube.values[0], 258.0f);
  EXPECT_EQ(cube.values[1], -2.0f);
}

TEST(LoadCube, DropListLeaves372Of425Bands) {
  const auto drop = parse_band_list("1-5,196-207,285-320", 425);
  EXPECT_EQ(drop.size(), 53u);
  RasterHeader h;
  h.samples = 2;
  h.lines = 1;
  h.bands = 425;
  h.interleave = Interleave::bip;
  std::vector<float> v(2 * 425);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<float>(i % 425);
  const auto cube = decode_cube(h, raw_bytes(v), drop);
  EXPECT_EQ(cube.bands, 372u);
  // retained bands keep their order: first kept is band 6 (index 5)
  EXPECT_EQ(cube.at(0, 0, 0), 5.0f);
  EXPECT_EQ(cube.at(0, 1, 371), 424.0f);
}

TEST(LoadCube, Errors) {
  RasterHeader h;
  h.samples = 2;
  h.lines = 2;
  h.bands = 3;
  EXPECT_THROW(decode_cube(h, raw_bytes(std::vector<float>(11))), FormatError);
  EXPECT_THROW(decode_cube(h, raw_bytes(std::vector<float>(12)), {3}), ArgumentError);
  EXPECT_THROW(parse_band_list("1-4", 3), ArgumentError);
  EXPECT_THROW(parse_band_list("0", 3), ArgumentError);
  EXPECT_THROW(parse_band_list("a-b", 3), ArgumentError);
  EXPECT_THROW(parse_header("samples = 2\nlines = 2\n"), FormatError);
  EXPECT_THROW(parse_header("samples = 2\nlines = 2\nbands = 1\ninterleave = xyz\n"), FormatError);
  EXPECT_THROW(parse_header("samples = 2\nlines = 2\nbands = 1\ndata type = 9\n"), FormatError);
}

TEST(LoadCube, HeaderParsesBracedFieldsAndCase) {
  const auto h = parse_header(
      "ENVI\ndescription = {multi\n line}\nSamples = 7\nLINES = 3\nbands = 2\ndata type = 12\n"
      "interleave = BIL\nbyte order = 1\nwavelength = {1,\n2}\n");
  EXPECT_EQ(h.samples, 7u);
  EXPECT_EQ(h.lines, 3u);
  EXPECT_EQ(h.bands, 2u);
  EXPECT_EQ(h.data_type, 12);
  EXPECT_EQ(h.interleave, Interleave::bil);
  EXPECT_EQ(h.byte_order, 1);
  EXPECT_EQ(parse_header(format_header(h)).samples, 7u);
}

TEST(Labels, PgmRoundTripAndErrors) {
  TempDir dir;
  LabelRaster l(3, 2);
  for (std::size_t i = 0; i < l.pixels(); ++i) l.values[i] = static_cast<std::uint8_t>(i);
  save_labels_pgm(l, dir.path / "gt.pgm");
  const auto back = load_labels(dir.path / "gt.pgm");
  EXPECT_EQ(back.rows, 3u);
  EXPECT_EQ(back.cols, 2u);
  EXPECT_EQ(back.values, l.values);

  const std::string bad = "P2\n2 2\n255\n";
  EXPECT_THROW(parse_pgm({bad.begin(), bad.end()}), BadMagicError);
  const std::string short_payload = "P5\n2 2\n255\n\x01\x02";
  EXPECT_THROW(parse_pgm({short_payload.begin(), short_payload.end()}), TruncatedError);
}

TEST(Labels, RasterPair) {
  TempDir dir;
  RasterCube c(2, 2, 1);
  c.values = {0, 1, 2, 3};
  save_cube(c, dir.path / "gt.hdr", dir.path / "gt.raw");
  const auto l = load_labels(dir.path / "gt.hdr", dir.path / "gt.raw");
  EXPECT_EQ(l.values, (std::vector<std::uint8_t>{0, 1, 2, 3}));
  c.values[0] = 1.5f;
  save_cube(c, dir.path / "gt.hdr", dir.path / "gt.raw");
  EXPECT_THROW(load_labels(dir.path / "gt.hdr", dir.path / "gt.raw"), DataError);
}

TEST(Palette, ParseFormatRoundTrip) {
  const auto p = parse_palette("# comment\n0,unlabeled,0,0,0\n1, corn , 255,128,0\n");
  ASSERT_EQ(p.size(), 2u);
  EXPECT_EQ(p[1].name, "corn");
  EXPECT_EQ(p[1].g, 128);
  EXPECT_EQ(parse_palette(format_palette(p)).size(), 2u);
  EXPECT_THROW(parse_palette("1,corn,300,0,0\n"), FormatError);
  EXPECT_THROW(parse_palette("1,corn,3\n"), FormatError);
  EXPECT_EQ(default_palette(16).size(), 17u);
}

TEST(Normalize, HandExamples) {
  RasterCube c(1, 4, 3);
  // band 0 constant, band 1 {1,3,...}, band 2 zero-mean unit-std over train
  const float v[4][3] = {{7, 1, -1}, {7, 3, 1}, {7, 100, 5}, {7, -50, 9}};
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t b = 0; b < 3; ++b) c.at(0, i, b) = v[i][b];
  }
  const std::vector<std::size_t> train{0, 1};
  const auto s = normalize_fit(c, train);
  EXPECT_DOUBLE_EQ(s.mean[1], 2.0);
  EXPECT_DOUBLE_EQ(s.stddev[1], 1.0);
  EXPECT_DOUBLE_EQ(s.stddev[0], 0.0);
  const auto n = normalize_apply(c, s);
  EXPECT_FLOAT_EQ(n.at(0, 0, 1), -1.0f);
  EXPECT_FLOAT_EQ(n.at(0, 1, 1), 1.0f);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(n.at(0, i, 0), 0.0f);
  EXPECT_NEAR(n.at(0, 0, 2), -1.0f, 1e-6);
  EXPECT_NEAR(n.at(0, 1, 2), 1.0f, 1e-6);

  EXPECT_THROW(normalize_fit(c, std::vector<std::size_t>{}), ArgumentError);
  EXPECT_THROW(normalize_apply(RasterCube(1, 1, 2), s), DimensionError);
}

TEST(Normalize, StatisticsUseTrainingPixelsOnly) {
  const auto c = random_cube(8, 8, 4, 3);
  std::vector<std::size_t> train, all;
  for (std::size_t i = 0; i < c.pixels(); ++i) {
    all.push_back(i);
    if (i % 3 == 0) train.push_back(i);
  }
  const auto st = normalize_fit(c, train);
  const auto sa = normalize_fit(c, all);
  for (std::size_t b = 0; b < 4; ++b) {
    EXPECT_NE(st.mean[b], sa.mean[b]);
    EXPECT_NE(st.stddev[b], sa.stddev[b]);
  }
  // perturbing a test pixel leaves the fit untouched
  auto c2 = c;
  c2.values[1 * c.bands] += 1000.0f;
  const auto st2 = normalize_fit(c2, train);
  EXPECT_EQ(st.mean, st2.mean);
  EXPECT_EQ(st.stddev, st2.stddev);
}

TEST(Split, ClassOfHundredAtTenPercent) {
  LabelRaster l(10, 10);
  std::fill(l.values.begin(), l.values.end(), 1);
  const auto s = stratified_split(l, 0.10, 42);
  EXPECT_EQ(s.train.size(), 10u);
  EXPECT_EQ(s.test.size(), 90u);
}

TEST(Split, PartitionOnToyMapForEveryFraction) {
  // 20 pixels: 2 unlabelled, classes of 2, 5, 11 pixels
  LabelRaster l(4, 5);
  const std::uint8_t v[20] = {0, 1, 1, 2, 2, 2, 2, 2, 3, 3, 3, 3, 3, 3, 3, 3, 3, 3, 3, 0};
  std::copy(v, v + 20, l.values.begin());
  for (double f : {0.05, 0.10, 0.15, 0.25, 0.50, 0.75}) {
    const auto s = stratified_split(l, f, 7);
    std::set<std::size_t> tr(s.train.begin(), s.train.end()), te(s.test.begin(), s.test.end());
    EXPECT_EQ(tr.size(), s.train.size());
    EXPECT_EQ(te.size(), s.test.size());
    std::set<std::size_t> labelled, both;
    for (std::size_t i = 0; i < 20; ++i) {
      if (v[i]) labelled.insert(i);
      if (tr.count(i) && te.count(i)) both.insert(i);
    }
    EXPECT_TRUE(both.empty()) << f;
    std::set<std::size_t> uni = tr;
    uni.insert(te.begin(), te.end());
    EXPECT_EQ(uni, labelled) << f;
    std::map<int, std::size_t> per_class;
    for (auto i : s.train) ++per_class[v[i]];
    EXPECT_EQ(per_class[1], class_train_count(2, f));
    EXPECT_EQ(per_class[2], class_train_count(5, f));
    EXPECT_EQ(per_class[3], class_train_count(11, f));
    EXPECT_GE(per_class[1], 1u);
  }
  EXPECT_EQ(class_train_count(11, 0.25), 3u);
  EXPECT_EQ(class_train_count(11, 0.05), 1u);
  EXPECT_EQ(class_train_count(2, 0.75), 1u);  // keeps one test pixel
}

TEST(Split, DeterministicPerSeed) {
  const auto scene = synth_scene(4, 3, 20, 20, 5, 0.5);
  const auto a = stratified_split(scene.labels, 0.25, 11);
  const auto b = stratified_split(scene.labels, 0.25, 11);
  const auto c = stratified_split(scene.labels, 0.25, 12);
  EXPECT_EQ(a.train, b.train);
  EXPECT_EQ(a.test, b.test);
  EXPECT_NE(a.train, c.train);
}

TEST(Split, TextRoundTripAndErrors) {
  const auto scene = synth_scene(3, 2, 6, 6, 1, 0.0);
  const auto s = stratified_split(scene.labels, 0.5, 3);
  const auto back = parse_split(format_split(s));
  EXPECT_EQ(back.train, s.train);
  EXPECT_EQ(back.test, s.test);
  EXPECT_EQ(back.seed, 3u);
  EXPECT_DOUBLE_EQ(back.fraction, 0.5);
  EXPECT_THROW(parse_split("fraction=0.1\n"), FormatError);

  LabelRaster lonely(1, 3);
  lonely.values = {1, 1, 2};
  try {
    stratified_split(lonely, 0.5, 0);
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("class 2"), std::string::npos);
  }
  EXPECT_THROW(stratified_split(lonely, 1.0, 0), ArgumentError);
  EXPECT_THROW(stratified_split(LabelRaster(2, 2), 0.5, 0), DataError);
}

TEST(Patches, SizeOneIsTheSpectrum) {
  const auto c = random_cube(4, 5, 6, 4);
  const std::vector<std::size_t> px{0, 7, 19};
  const auto p = extract_patches(c, px, 1);
  ASSERT_EQ(p.shape(), (Shape{3, 1, 6}));
  for (std::size_t i = 0; i < px.size(); ++i) {
    for (std::size_t b = 0; b < 6; ++b) EXPECT_EQ(p.at(i, 0, b), c.spectrum(px[i])[b]);
  }
}

TEST(Patches, InteriorMatchesDirectIndexing) {
  const auto c = random_cube(7, 9, 3, 5);
  for (std::size_t p : {3u, 5u}) {
    const long h = static_cast<long>(p / 2);
    std::vector<std::size_t> px;
    for (std::size_t r = p / 2; r + p / 2 < c.rows; ++r) {
      for (std::size_t col = p / 2; col + p / 2 < c.cols; ++col) px.push_back(r * c.cols + col);
    }
    const auto t = extract_patches<double>(c, px, p);
    for (std::size_t i = 0; i < px.size(); ++i) {
      const long r0 = static_cast<long>(px[i] / c.cols), c0 = static_cast<long>(px[i] % c.cols);
      for (long dr = -h; dr <= h; ++dr) {
        for (long dc = -h; dc <= h; ++dc) {
          const std::size_t cell = static_cast<std::size_t>((dr + h) * static_cast<long>(p) + dc + h);
          for (std::size_t b = 0; b < 3; ++b) {
            ASSERT_EQ(t.at(i, cell, b), c.at(static_cast<std::size_t>(r0 + dr), static_cast<std::size_t>(c0 + dc), b));
          }
        }
      }
    }
  }
}

TEST(Patches, CornerIsMirrorPadded) {
  const auto c = random_cube(4, 4, 2, 6);
  const std::vector<std::size_t> px{0};
  const auto t = extract_patches(c, px, 3);
  // row-major window: (-1,-1) -> (1,1); (-1,0) -> (1,0); (0,-1) -> (0,1)
  for (std::size_t b = 0; b < 2; ++b) {
    EXPECT_EQ(t.at(0, 0, b), c.at(1, 1, b));
    EXPECT_EQ(t.at(0, 1, b), c.at(1, 0, b));
    EXPECT_EQ(t.at(0, 3, b), c.at(0, 1, b));
    EXPECT_EQ(t.at(0, 4, b), c.at(0, 0, b));
  }
  EXPECT_EQ(mirror_index(-1, 5), 1u);
  EXPECT_EQ(mirror_index(5, 5), 3u);
  EXPECT_EQ(mirror_index(-4, 5), 4u);
}

TEST(Patches, Errors) {
  const auto c = random_cube(3, 3, 1, 7);
  const std::vector<std::size_t> px{4};
  EXPECT_THROW(extract_patches(c, px, 4), ArgumentError);
  EXPECT_THROW(extract_patches(c, px, 7), ArgumentError);
  EXPECT_NO_THROW(extract_patches(c, px, 5));
  const std::vector<std::size_t> outside{9};
  EXPECT_THROW(extract_patches(c, outside, 3), IndexError);
  LabelRaster l(1, 2);
  l.values = {0, 1};
  EXPECT_THROW(class_indices(l, std::vector<std::size_t>{0}), DataError);
  EXPECT_EQ(class_indices(l, std::vector<std::size_t>{1}), (std::vector<int>{0}));
}

TEST(Synth, DifficultyZeroIsExactClassMeans) {
  const auto s = synth_scene(5, 6, 24, 24, 9, 0.0);
  std::vector<std::size_t> all(s.cube.pixels());
  std::iota(all.begin(), all.end(), 0);
  const auto pred = nearest_mean_labels(s.cube, s.class_means, all);
  std::set<int> seen;
  for (std::size_t i = 0; i < all.size(); ++i) {
    const int cls = s.labels.values[i];
    seen.insert(cls);
    ASSERT_EQ(pred[i], cls);
    for (std::size_t b = 0; b < 6; ++b) {
      ASSERT_EQ(s.cube.at(i / 24, i % 24, b), static_cast<float>(s.class_means[cls - 1][b]));
    }
  }
  EXPECT_EQ(seen.size(), 5u);
}

TEST(Synth, WellSeparatedNoiseOracleAbove99Percent) {
  // margin (half the closest mean distance) over sigma = 1 / difficulty
  const auto s = synth_scene(8, 32, 64, 64, 3, 0.25);
  EXPECT_NEAR(s.min_separation / 2 / s.noise_sigma, 4.0, 1e-12);
  std::vector<std::size_t> all(s.cube.pixels());
  std::iota(all.begin(), all.end(), 0);
  const auto pred = nearest_mean_labels(s.cube, s.class_means, all);
  std::size_t ok = 0;
  for (std::size_t i = 0; i < all.size(); ++i) ok += pred[i] == s.labels.values[i];
  EXPECT_GT(static_cast<double>(ok) / static_cast<double>(all.size()), 0.99);
}

TEST(Synth, SameSeedBitIdentical) {
  const auto a = synth_scene(4, 8, 16, 16, 77, 0.7);
  const auto b = synth_scene(4, 8, 16, 16, 77, 0.7);
  const auto c = synth_scene(4, 8, 16, 16, 78, 0.7);
  EXPECT_EQ(std::memcmp(a.cube.values.data(), b.cube.values.data(), a.cube.values.size() * 4), 0);
  EXPECT_EQ(a.labels.values, b.labels.values);
  EXPECT_NE(a.cube.values, c.cube.values);
  EXPECT_THROW(synth_scene(1, 8, 16, 16, 0, 0.5), ArgumentError);
}
