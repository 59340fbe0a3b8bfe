#pragma once

// Rasters: header+raw cube I/O, band dropping, normalisation, stratified
// splits, patch extraction and a synthetic scene generator.

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstring>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "irx/errors.hpp"
#include "irx/io.hpp"
#include "irx/tensor.hpp"

namespace irx {

enum class Interleave { bsq, bil, bip };

inline const char* to_string(Interleave i) {
  switch (i) {
    case Interleave::bsq: return "bsq";
    case Interleave::bil: return "bil";
    case Interleave::bip: return "bip";
  }
  return "?";
}

inline Interleave parse_interleave(const std::string& s) {
  std::string l = s;
  std::transform(l.begin(), l.end(), l.begin(), [](unsigned char c) { return std::tolower(c); });
  if (l == "bsq") return Interleave::bsq;
  if (l == "bil") return Interleave::bil;
  if (l == "bip") return Interleave::bip;
  throw FormatError("unknown interleave '" + s + "'");
}

/// rows x cols x bands, stored band-last (pixel-major).
struct RasterCube {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t bands = 0;
  std::vector<float> values;
  Interleave source = Interleave::bip;

  RasterCube() = default;
  RasterCube(std::size_t r, std::size_t c, std::size_t b)
      : rows(r), cols(c), bands(b), values(r * c * b, 0.0f) {
    if (r == 0 || c == 0 || b == 0) throw ArgumentError("raster cube needs positive dimensions");
  }

  std::size_t pixels() const { return rows * cols; }
  float& at(std::size_t r, std::size_t c, std::size_t b) { return values[(r * cols + c) * bands + b]; }
  float at(std::size_t r, std::size_t c, std::size_t b) const {
    return values[(r * cols + c) * bands + b];
  }
  std::span<const float> spectrum(std::size_t pixel) const {
    return {values.data() + pixel * bands, bands};
  }
};

/// 0 = unlabelled, 1..K = classes.
struct LabelRaster {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::uint8_t> values;

  LabelRaster() = default;
  LabelRaster(std::size_t r, std::size_t c) : rows(r), cols(c), values(r * c, 0) {}

  std::size_t pixels() const { return rows * cols; }
  std::uint8_t& at(std::size_t r, std::size_t c) { return values[r * cols + c]; }
  std::uint8_t at(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
  std::size_t classes() const {
    return values.empty() ? 0 : *std::max_element(values.begin(), values.end());
  }
};

// ---------------------------------------------------------------------------
// header + raw

struct RasterHeader {
  std::size_t samples = 0;  // columns
  std::size_t lines = 0;    // rows
  std::size_t bands = 0;
  int data_type = 4;  // 1 u8, 2 i16, 3 i32, 4 f32, 5 f64, 12 u16, 13 u32
  Interleave interleave = Interleave::bsq;
  int byte_order = 0;  // 0 little-endian, 1 big-endian
  std::size_t header_offset = 0;
};

inline std::size_t data_type_size(int t) {
  switch (t) {
    case 1: return 1;
    case 2: case 12: return 2;
    case 3: case 4: case 13: return 4;
    case 5: return 8;
    default: throw FormatError("unsupported data type " + std::to_string(t));
  }
}

inline RasterHeader parse_header(const std::string& text) {
  RasterHeader h;
  std::istringstream is(text);
  std::string line;
  bool has_samples = false, has_lines = false, has_bands = false;
  while (std::getline(is, line)) {
    line = trim(line);
    if (line.empty() || line == "ENVI" || line[0] == ';') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    std::transform(key.begin(), key.end(), key.begin(), [](unsigned char c) { return std::tolower(c); });
    if (!value.empty() && value[0] == '{') {
      // braced values may span lines; none of the keys we need use them
      while (value.find('}') == std::string::npos && std::getline(is, line)) value += line;
      continue;
    }
    auto number = [&](const char* what) -> std::size_t {
      try {
        std::size_t used = 0;
        const long long v = std::stoll(value, &used);
        if (v < 0 || used != value.size()) throw FormatError("");
        return static_cast<std::size_t>(v);
      } catch (const std::exception&) {
        throw FormatError(std::string("header field '") + what + "' is not a count: '" + value + "'");
      }
    };
    if (key == "samples") h.samples = number("samples"), has_samples = true;
    else if (key == "lines") h.lines = number("lines"), has_lines = true;
    else if (key == "bands") h.bands = number("bands"), has_bands = true;
    else if (key == "data type") h.data_type = static_cast<int>(number("data type"));
    else if (key == "interleave") h.interleave = parse_interleave(value);
    else if (key == "byte order") h.byte_order = static_cast<int>(number("byte order"));
    else if (key == "header offset") h.header_offset = number("header offset");
  }
  if (!has_samples || !has_lines || !has_bands) {
    throw FormatError("header must declare samples, lines and bands");
  }
  if (h.samples == 0 || h.lines == 0 || h.bands == 0) throw FormatError("header dimensions must be positive");
  if (h.byte_order != 0 && h.byte_order != 1) throw FormatError("byte order must be 0 or 1");
  (void)data_type_size(h.data_type);
  return h;
}

inline std::string format_header(const RasterHeader& h) {
  std::ostringstream os;
  os << "ENVI\n"
     << "samples = " << h.samples << "\n"
     << "lines = " << h.lines << "\n"
     << "bands = " << h.bands << "\n"
     << "header offset = " << h.header_offset << "\n"
     << "data type = " << h.data_type << "\n"
     << "interleave = " << to_string(h.interleave) << "\n"
     << "byte order = " << h.byte_order << "\n";
  return os.str();
}

/// "1-5,196-207,285-320" -> sorted unique 0-based indices. Numbers are 1-based.
inline std::vector<std::size_t> parse_band_list(const std::string& spec, std::size_t bands) {
  std::vector<std::size_t> out;
  std::istringstream is(spec);
  std::string item;
  while (std::getline(is, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    std::size_t lo = 0, hi = 0;
    try {
      const auto dash = item.find('-');
      if (dash == std::string::npos) {
        lo = hi = std::stoul(item);
      } else {
        lo = std::stoul(item.substr(0, dash));
        hi = std::stoul(item.substr(dash + 1));
      }
    } catch (const std::exception&) {
      throw ArgumentError("malformed band range '" + item + "'");
    }
    if (lo < 1 || hi < lo || hi > bands) {
      throw ArgumentError("band range '" + item + "' outside 1.." + std::to_string(bands));
    }
    for (std::size_t b = lo; b <= hi; ++b) out.push_back(b - 1);
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

namespace detail {

template <typename U>
double decode_sample(const char* p, bool swap) {
  U v;
  std::memcpy(&v, p, sizeof(U));
  if (swap) v = byteswap_value(v);
  return static_cast<double>(v);
}

inline double decode(const char* p, int type, bool swap) {
  switch (type) {
    case 1: return static_cast<double>(static_cast<std::uint8_t>(*p));
    case 2: return decode_sample<std::int16_t>(p, swap);
    case 3: return decode_sample<std::int32_t>(p, swap);
    case 4: return decode_sample<float>(p, swap);
    case 5: return decode_sample<double>(p, swap);
    case 12: return decode_sample<std::uint16_t>(p, swap);
    case 13: return decode_sample<std::uint32_t>(p, swap);
  }
  throw FormatError("unsupported data type " + std::to_string(type));
}

// Offset (in samples) of (row, col, band) in a raw file of the given layout.
inline std::size_t raw_index(const RasterHeader& h, std::size_t r, std::size_t c, std::size_t b) {
  switch (h.interleave) {
    case Interleave::bsq: return (b * h.lines + r) * h.samples + c;
    case Interleave::bil: return (r * h.bands + b) * h.samples + c;
    case Interleave::bip: return (r * h.samples + c) * h.bands + b;
  }
  return 0;
}

}  // namespace detail

/// Decodes a raw buffer per `h`, keeping all bands except `drop` (0-based).
inline RasterCube decode_cube(const RasterHeader& h, const std::vector<char>& raw,
                              const std::vector<std::size_t>& drop = {}) {
  const std::size_t width = data_type_size(h.data_type);
  const std::size_t expected = h.header_offset + h.samples * h.lines * h.bands * width;
  if (raw.size() != expected) {
    throw FormatError("raw size " + std::to_string(raw.size()) + " bytes, header implies " +
                      std::to_string(expected));
  }
  for (auto b : drop) {
    if (b >= h.bands) throw ArgumentError("drop band " + std::to_string(b + 1) + " outside 1.." + std::to_string(h.bands));
  }
  std::vector<std::size_t> keep;
  for (std::size_t b = 0; b < h.bands; ++b) {
    if (!std::binary_search(drop.begin(), drop.end(), b)) keep.push_back(b);
  }
  if (keep.empty()) throw ArgumentError("every band was dropped");
  const bool swap = (h.byte_order == 1) != (std::endian::native == std::endian::big);
  RasterCube cube(h.lines, h.samples, keep.size());
  cube.source = h.interleave;
  const char* base = raw.data() + h.header_offset;
  for (std::size_t r = 0; r < h.lines; ++r) {
    for (std::size_t c = 0; c < h.samples; ++c) {
      for (std::size_t k = 0; k < keep.size(); ++k) {
        const auto off = detail::raw_index(h, r, c, keep[k]) * width;
        cube.at(r, c, k) = static_cast<float>(detail::decode(base + off, h.data_type, swap));
      }
    }
  }
  return cube;
}

inline RasterCube load_cube(const std::filesystem::path& header_path,
                            const std::filesystem::path& raw_path,
                            const std::vector<std::size_t>& drop = {}) {
  const auto h = parse_header(read_text(header_path));
  return decode_cube(h, read_file(raw_path), drop);
}

inline RasterCube load_cube(const std::filesystem::path& header_path,
                            const std::filesystem::path& raw_path, const std::string& drop_spec) {
  const auto h = parse_header(read_text(header_path));
  return decode_cube(h, read_file(raw_path), parse_band_list(drop_spec, h.bands));
}

/// Writes a float32 little-endian cube in the requested layout.
inline void save_cube(const RasterCube& cube, const std::filesystem::path& header_path,
                      const std::filesystem::path& raw_path, Interleave layout = Interleave::bsq) {
  RasterHeader h;
  h.samples = cube.cols;
  h.lines = cube.rows;
  h.bands = cube.bands;
  h.data_type = 4;
  h.interleave = layout;
  write_atomic(raw_path, [&](std::ostream& os) {
    std::vector<float> buf(cube.values.size());
    for (std::size_t r = 0; r < cube.rows; ++r) {
      for (std::size_t c = 0; c < cube.cols; ++c) {
        for (std::size_t b = 0; b < cube.bands; ++b) buf[detail::raw_index(h, r, c, b)] = cube.at(r, c, b);
      }
    }
    for (float v : buf) put_le(os, v);
  });
  write_text_atomic(header_path, format_header(h));
}

// ---------------------------------------------------------------------------
// label rasters (binary PGM, or 8-bit header+raw) and palettes

inline void save_labels_pgm(const LabelRaster& labels, const std::filesystem::path& path) {
  write_atomic(path, [&](std::ostream& os) {
    os << "P5\n" << labels.cols << " " << labels.rows << "\n255\n";
    os.write(reinterpret_cast<const char*>(labels.values.data()),
             static_cast<std::streamsize>(labels.values.size()));
  });
}

inline LabelRaster parse_pgm(const std::vector<char>& buf) {
  std::size_t pos = 0;
  auto token = [&]() {
    std::string t;
    while (pos < buf.size()) {
      const char ch = buf[pos];
      if (ch == '#') {
        while (pos < buf.size() && buf[pos] != '\n') ++pos;
      } else if (std::isspace(static_cast<unsigned char>(ch))) {
        if (!t.empty()) break;
        ++pos;
      } else {
        t += ch;
        ++pos;
      }
    }
    return t;
  };
  if (token() != "P5") throw BadMagicError("label map is not a binary PGM (P5)");
  std::size_t w = 0, h = 0, maxval = 0;
  try {
    w = std::stoul(token());
    h = std::stoul(token());
    maxval = std::stoul(token());
  } catch (const std::exception&) {
    throw FormatError("malformed PGM header");
  }
  ++pos;  // single whitespace after maxval
  if (maxval == 0 || maxval > 255) throw FormatError("PGM maxval must be 1..255");
  if (w == 0 || h == 0) throw FormatError("PGM dimensions must be positive");
  if (buf.size() < pos || buf.size() - pos != w * h) {
    throw TruncatedError("PGM payload has " + std::to_string(buf.size() - std::min(pos, buf.size())) +
                         " bytes, expected " + std::to_string(w * h));
  }
  LabelRaster l(h, w);
  std::memcpy(l.values.data(), buf.data() + pos, w * h);
  return l;
}

/// Ground truth as binary PGM, or as an 8-bit single-band header+raw pair
/// when `raw_path` is given.
inline LabelRaster load_labels(const std::filesystem::path& path,
                               const std::filesystem::path& raw_path = {}) {
  if (raw_path.empty()) return parse_pgm(read_file(path));
  const auto h = parse_header(read_text(path));
  if (h.bands != 1) throw FormatError("label raster must have one band, header says " + std::to_string(h.bands));
  const auto cube = decode_cube(h, read_file(raw_path));
  LabelRaster l(cube.rows, cube.cols);
  for (std::size_t i = 0; i < l.values.size(); ++i) {
    const float v = cube.values[i];
    if (v < 0 || v > 255 || v != std::floor(v)) throw DataError("label value " + std::to_string(v) + " is not a class index");
    l.values[i] = static_cast<std::uint8_t>(v);
  }
  return l;
}

struct PaletteEntry {
  int index = 0;
  std::string name;
  std::uint8_t r = 0, g = 0, b = 0;
};

using Palette = std::vector<PaletteEntry>;

// One "index,name,R,G,B" line per class.
inline Palette parse_palette(const std::string& text) {
  Palette p;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> f;
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) f.push_back(trim(cell));
    if (f.size() != 5) throw FormatError("palette line needs index,name,R,G,B: '" + line + "'");
    PaletteEntry e;
    try {
      e.index = std::stoi(f[0]);
      e.name = f[1];
      const int rgb[3] = {std::stoi(f[2]), std::stoi(f[3]), std::stoi(f[4])};
      for (int v : rgb) {
        if (v < 0 || v > 255) throw FormatError("");
      }
      e.r = static_cast<std::uint8_t>(rgb[0]);
      e.g = static_cast<std::uint8_t>(rgb[1]);
      e.b = static_cast<std::uint8_t>(rgb[2]);
    } catch (const std::exception&) {
      throw FormatError("bad palette line '" + line + "'");
    }
    p.push_back(e);
  }
  return p;
}

inline std::string format_palette(const Palette& p) {
  std::ostringstream os;
  for (const auto& e : p) {
    os << e.index << ',' << e.name << ',' << int(e.r) << ',' << int(e.g) << ',' << int(e.b) << "\n";
  }
  return os.str();
}

// Evenly spread hues for K classes, index 0 black.
inline Palette default_palette(std::size_t classes) {
  Palette p;
  p.push_back({0, "unlabeled", 0, 0, 0});
  for (std::size_t k = 1; k <= classes; ++k) {
    const double hue = 6.0 * static_cast<double>(k - 1) / static_cast<double>(classes);
    const double x = 1.0 - std::abs(std::fmod(hue, 2.0) - 1.0);
    double rgb[3] = {0, 0, 0};
    switch (static_cast<int>(hue)) {
      case 0: rgb[0] = 1, rgb[1] = x; break;
      case 1: rgb[0] = x, rgb[1] = 1; break;
      case 2: rgb[1] = 1, rgb[2] = x; break;
      case 3: rgb[1] = x, rgb[2] = 1; break;
      case 4: rgb[0] = x, rgb[2] = 1; break;
      default: rgb[0] = 1, rgb[2] = x; break;
    }
    auto byte = [](double v) { return static_cast<std::uint8_t>(std::lround(40 + 215 * v)); };
    p.push_back({static_cast<int>(k), "class " + std::to_string(k), byte(rgb[0]), byte(rgb[1]), byte(rgb[2])});
  }
  return p;
}

// ---------------------------------------------------------------------------
// normalisation

inline constexpr double kStdFloor = 1e-8;

struct NormStats {
  std::vector<double> mean;
  std::vector<double> stddev;
};

/// Per-band mean and population std over the listed pixels only.
inline NormStats normalize_fit(const RasterCube& cube, std::span<const std::size_t> pixels) {
  if (pixels.empty()) throw ArgumentError("normalize_fit: empty training set");
  NormStats s{std::vector<double>(cube.bands, 0.0), std::vector<double>(cube.bands, 0.0)};
  for (auto p : pixels) {
    if (p >= cube.pixels()) throw IndexError("normalize_fit: pixel " + std::to_string(p) + " outside cube");
    const auto x = cube.spectrum(p);
    for (std::size_t b = 0; b < cube.bands; ++b) s.mean[b] += x[b];
  }
  const double n = static_cast<double>(pixels.size());
  for (auto& m : s.mean) m /= n;
  for (auto p : pixels) {
    const auto x = cube.spectrum(p);
    for (std::size_t b = 0; b < cube.bands; ++b) {
      const double d = x[b] - s.mean[b];
      s.stddev[b] += d * d;
    }
  }
  for (auto& v : s.stddev) v = std::sqrt(v / n);
  return s;
}

inline RasterCube normalize_apply(const RasterCube& cube, const NormStats& s) {
  if (s.mean.size() != cube.bands || s.stddev.size() != cube.bands) {
    throw DimensionError("normalisation stats for " + std::to_string(s.mean.size()) +
                         " bands applied to a " + std::to_string(cube.bands) + "-band cube");
  }
  RasterCube out = cube;
  for (std::size_t p = 0; p < cube.pixels(); ++p) {
    for (std::size_t b = 0; b < cube.bands; ++b) {
      const double v = (cube.values[p * cube.bands + b] - s.mean[b]) / std::max(s.stddev[b], kStdFloor);
      out.values[p * cube.bands + b] = static_cast<float>(v);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// stratified split

struct Split {
  double fraction = 0.1;
  std::uint64_t seed = 0;
  std::vector<std::size_t> train;  // flat pixel indices r*cols+c, ascending
  std::vector<std::size_t> test;
};

/// Per-class train count: round(fraction * n), at least 1 and at most n - 1
/// so every class keeps a test pixel.
inline std::size_t class_train_count(std::size_t n, double fraction) {
  auto k = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
  return std::clamp<std::size_t>(k, 1, n - 1);
}

inline Split stratified_split(const LabelRaster& labels, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0)) {
    throw ArgumentError("split fraction must lie in (0,1), got " + std::to_string(fraction));
  }
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < labels.values.size(); ++i) {
    if (labels.values[i] != 0) by_class[labels.values[i]].push_back(i);
  }
  if (by_class.empty()) throw DataError("label raster has no labelled pixels");
  Split s;
  s.fraction = fraction;
  s.seed = seed;
  for (auto& [cls, idx] : by_class) {
    if (idx.size() < 2) {
      throw DataError("class " + std::to_string(cls) + " has " + std::to_string(idx.size()) +
                      " labelled pixel(s); at least 2 are needed to split");
    }
    // one stream per class so adding a class does not reshuffle the others
    std::mt19937_64 rng(seed ^ (0x9E3779B97F4A7C15ULL * static_cast<std::uint64_t>(cls)));
    auto shuffled = idx;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    const auto k = class_train_count(idx.size(), fraction);
    s.train.insert(s.train.end(), shuffled.begin(), shuffled.begin() + static_cast<std::ptrdiff_t>(k));
    s.test.insert(s.test.end(), shuffled.begin() + static_cast<std::ptrdiff_t>(k), shuffled.end());
  }
  std::sort(s.train.begin(), s.train.end());
  std::sort(s.test.begin(), s.test.end());
  return s;
}

// Text form: "fraction=", "seed=", then "train" / "test" lines of indices.
inline std::string format_split(const Split& s) {
  std::ostringstream os;
  os.precision(17);
  os << "fraction=" << s.fraction << "\nseed=" << s.seed << "\ntrain=";
  for (std::size_t i = 0; i < s.train.size(); ++i) os << (i ? " " : "") << s.train[i];
  os << "\ntest=";
  for (std::size_t i = 0; i < s.test.size(); ++i) os << (i ? " " : "") << s.test[i];
  os << "\n";
  return os.str();
}

inline Split parse_split(const std::string& text) {
  Split s;
  bool has_train = false, has_test = false;
  for (const auto& [k, v] : parse_key_values(text)) {
    std::istringstream is(v);
    if (k == "fraction") {
      is >> s.fraction;
    } else if (k == "seed") {
      is >> s.seed;
    } else if (k == "train" || k == "test") {
      auto& dst = k == "train" ? s.train : s.test;
      std::size_t i;
      while (is >> i) dst.push_back(i);
      if (!is.eof()) throw FormatError("non-numeric pixel index in split '" + k + "' list");
      (k == "train" ? has_train : has_test) = true;
    }
  }
  if (!has_train || !has_test) throw FormatError("split file needs train= and test= lines");
  return s;
}

// ---------------------------------------------------------------------------
// patches

// Reflect-101 mirror index: -1 -> 1, n -> n-2.
inline std::size_t mirror_index(long i, std::size_t n) {
  const long m = static_cast<long>(n);
  if (m == 1) return 0;
  while (i < 0 || i >= m) {
    if (i < 0) i = -i;
    if (i >= m) i = 2 * m - 2 - i;
  }
  return static_cast<std::size_t>(i);
}

inline void check_patch(const RasterCube& cube, std::size_t p) {
  if (p == 0 || p % 2 == 0) throw ArgumentError("patch size must be odd, got " + std::to_string(p));
  if (p > 2 * std::min(cube.rows, cube.cols) - 1) {
    throw ArgumentError("patch size " + std::to_string(p) + " too large for a " +
                        std::to_string(cube.rows) + "x" + std::to_string(cube.cols) + " image");
  }
}

/// Copies the p x p x C window centred on `pixel` (mirror-padded) into `out`.
template <typename T>
void copy_patch(const RasterCube& cube, std::size_t pixel, std::size_t p, T* out) {
  const long half = static_cast<long>(p / 2);
  const long r0 = static_cast<long>(pixel / cube.cols);
  const long c0 = static_cast<long>(pixel % cube.cols);
  for (long dr = -half; dr <= half; ++dr) {
    const std::size_t r = mirror_index(r0 + dr, cube.rows);
    for (long dc = -half; dc <= half; ++dc) {
      const std::size_t c = mirror_index(c0 + dc, cube.cols);
      const float* src = &cube.values[(r * cube.cols + c) * cube.bands];
      for (std::size_t b = 0; b < cube.bands; ++b) *out++ = static_cast<T>(src[b]);
    }
  }
}

/// Patches for `pixels` as [N, p*p, C] (row-major within the window).
template <typename T = float>
Tensor<T> extract_patches(const RasterCube& cube, std::span<const std::size_t> pixels, std::size_t p) {
  check_patch(cube, p);
  if (pixels.empty()) throw ArgumentError("extract_patches: no pixels");
  Tensor<T> out({pixels.size(), p * p, cube.bands});
  const std::size_t stride = p * p * cube.bands;
  for (std::size_t i = 0; i < pixels.size(); ++i) {
    if (pixels[i] >= cube.pixels()) throw IndexError("pixel " + std::to_string(pixels[i]) + " outside cube");
    copy_patch(cube, pixels[i], p, out.raw() + i * stride);
  }
  return out;
}

/// Class indices (label - 1) for the listed pixels.
inline std::vector<int> class_indices(const LabelRaster& labels, std::span<const std::size_t> pixels) {
  std::vector<int> out;
  out.reserve(pixels.size());
  for (auto p : pixels) {
    const int l = labels.values.at(p);
    if (l == 0) throw DataError("pixel " + std::to_string(p) + " is unlabelled");
    out.push_back(l - 1);
  }
  return out;
}

// ---------------------------------------------------------------------------
// synthetic scenes

struct SyntheticScene {
  RasterCube cube;
  LabelRaster labels;
  std::vector<std::vector<double>> class_means;
  double min_separation = 0.0;  // smallest distance between class means
  double noise_sigma = 0.0;     // per-band Gaussian std
};

/// Voronoi partition with 2K sites (site i belongs to class i mod K); class
/// means drawn from U(0,1)^C; per-band Gaussian noise with
/// sigma = difficulty * d_min / 2, so d_min / (2 sigma) = 1 / difficulty.
inline SyntheticScene synth_scene(std::size_t classes, std::size_t bands, std::size_t rows,
                                  std::size_t cols, std::uint64_t seed, double difficulty) {
  if (classes < 2) throw ArgumentError("synth_scene: need at least 2 classes");
  if (classes > 255) throw ArgumentError("synth_scene: at most 255 classes");
  if (difficulty < 0) throw ArgumentError("synth_scene: difficulty must be >= 0");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  SyntheticScene s{RasterCube(rows, cols, bands), LabelRaster(rows, cols), {}, 0.0, 0.0};

  s.class_means.assign(classes, std::vector<double>(bands));
  for (auto& m : s.class_means) {
    for (auto& v : m) v = unit(rng);
  }
  s.min_separation = std::numeric_limits<double>::infinity();
  for (std::size_t a = 0; a < classes; ++a) {
    for (std::size_t b = a + 1; b < classes; ++b) {
      double d2 = 0;
      for (std::size_t k = 0; k < bands; ++k) {
        const double d = s.class_means[a][k] - s.class_means[b][k];
        d2 += d * d;
      }
      s.min_separation = std::min(s.min_separation, std::sqrt(d2));
    }
  }
  s.noise_sigma = difficulty * s.min_separation / 2.0;

  const std::size_t sites = 2 * classes;
  std::vector<double> sr(sites), sc(sites);
  for (std::size_t i = 0; i < sites; ++i) {
    sr[i] = unit(rng) * static_cast<double>(rows);
    sc[i] = unit(rng) * static_cast<double>(cols);
  }
  std::normal_distribution<double> noise(0.0, 1.0);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      std::size_t best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < sites; ++i) {
        const double dr = static_cast<double>(r) + 0.5 - sr[i];
        const double dc = static_cast<double>(c) + 0.5 - sc[i];
        const double d = dr * dr + dc * dc;
        if (d < best_d) best_d = d, best = i;
      }
      const std::size_t cls = best % classes;
      s.labels.at(r, c) = static_cast<std::uint8_t>(cls + 1);
      for (std::size_t b = 0; b < bands; ++b) {
        double v = s.class_means[cls][b];
        if (s.noise_sigma > 0) v += s.noise_sigma * noise(rng);
        s.cube.at(r, c, b) = static_cast<float>(v);
      }
    }
  }
  return s;
}

/// Nearest class mean (Euclidean) for every listed pixel; returns labels 1..K.
inline std::vector<int> nearest_mean_labels(const RasterCube& cube,
                                            const std::vector<std::vector<double>>& means,
                                            std::span<const std::size_t> pixels) {
  std::vector<int> out;
  out.reserve(pixels.size());
  for (auto p : pixels) {
    const auto x = cube.spectrum(p);
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < means.size(); ++k) {
      double d = 0;
      for (std::size_t b = 0; b < cube.bands; ++b) {
        const double e = x[b] - means[k][b];
        d += e * e;
      }
      if (d < best_d) best_d = d, best = k;
    }
    out.push_back(static_cast<int>(best + 1));
  }
  return out;
}

}  // namespace irx
