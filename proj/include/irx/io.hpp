#pragma once

// Small file helpers: whole-file reads, atomic writes, little-endian codecs.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "irx/errors.hpp"

namespace irx {

inline std::vector<char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  in.seekg(0, std::ios::end);
  const auto size = in.tellg();
  in.seekg(0);
  std::vector<char> buf(static_cast<std::size_t>(size));
  if (size > 0 && !in.read(buf.data(), size)) throw IoError("short read from '" + path.string() + "'");
  return buf;
}

inline std::string read_text(const std::filesystem::path& path) {
  auto buf = read_file(path);
  return {buf.begin(), buf.end()};
}

/// Writes through `fill` into a sibling temporary file, then renames it over
/// `path`. A failure anywhere leaves `path` untouched and no temp behind.
inline void write_atomic(const std::filesystem::path& path,
                         const std::function<void(std::ostream&)>& fill) {
  namespace fs = std::filesystem;
  const auto dir = path.has_parent_path() ? path.parent_path() : fs::path(".");
  std::random_device rd;
  const auto tmp = dir / ("." + path.filename().string() + ".tmp" + std::to_string(rd() % 1000000));
  try {
    {
      std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
      if (!out) throw IoError("cannot open '" + tmp.string() + "' for writing");
      fill(out);
      out.flush();
      if (!out) throw IoError("write to '" + tmp.string() + "' failed");
    }
    fs::rename(tmp, path);
  } catch (...) {
    std::error_code ec;
    fs::remove(tmp, ec);
    throw;
  }
}

inline void write_text_atomic(const std::filesystem::path& path, const std::string& text) {
  write_atomic(path, [&](std::ostream& os) { os << text; });
}

// -- little-endian encoding ---------------------------------------------------

template <typename U>
U byteswap_value(U v) {
  static_assert(std::is_trivially_copyable_v<U>);
  unsigned char b[sizeof(U)];
  std::memcpy(b, &v, sizeof(U));
  for (std::size_t i = 0; i < sizeof(U) / 2; ++i) std::swap(b[i], b[sizeof(U) - 1 - i]);
  std::memcpy(&v, b, sizeof(U));
  return v;
}

template <typename U>
U to_little(U v) {
  if constexpr (std::endian::native == std::endian::big) return byteswap_value(v);
  return v;
}

template <typename U>
void put_le(std::ostream& os, U v) {
  v = to_little(v);
  os.write(reinterpret_cast<const char*>(&v), sizeof(U));
}

/// Bounds-checked cursor over an in-memory byte buffer.
class ByteReader {
 public:
  ByteReader(const char* data, std::size_t size) : data_(data), size_(size) {}

  std::size_t remaining() const { return size_ - pos_; }
  std::size_t position() const { return pos_; }

  void need(std::size_t n, const char* what) const {
    if (n > remaining()) {
      throw TruncatedError(std::string("truncated while reading ") + what + " at byte " +
                           std::to_string(pos_));
    }
  }

  template <typename U>
  U get(const char* what) {
    need(sizeof(U), what);
    U v;
    std::memcpy(&v, data_ + pos_, sizeof(U));
    pos_ += sizeof(U);
    return to_little(v);
  }

  std::string bytes(std::size_t n, const char* what) {
    need(n, what);
    std::string s(data_ + pos_, n);
    pos_ += n;
    return s;
  }

  const char* take(std::size_t n, const char* what) {
    need(n, what);
    const char* p = data_ + pos_;
    pos_ += n;
    return p;
  }

 private:
  const char* data_;
  std::size_t size_;
  std::size_t pos_ = 0;
};

// -- key=value text -------------------------------------------------------------

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::pair<std::string, std::string>> parse_key_values(const std::string& text) {
  std::vector<std::pair<std::string, std::string>> out;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw FormatError("expected key=value, got '" + line + "'");
    out.emplace_back(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return out;
}

}  // namespace irx
