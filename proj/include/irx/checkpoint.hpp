#pragma once

// Binary checkpoint:
//
//   "IRX1"  u32 version
//   u64 bands, u64 classes, u64 patch, u64 precision bits (32 or 64)
//   u64 meta length, meta text (key=value lines)
//   u64 tensor count, then per tensor:
//     u64 name length, name, u64 rank, rank x u64 extents, raw values
//
// All integers and values little-endian. Values are stored in the model's
// precision; loading into the other precision converts.

#include <cstdint>
#include <filesystem>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "irx/geodata.hpp"
#include "irx/io.hpp"
#include "irx/training.hpp"
#include "irx/zoo.hpp"

namespace irx {

inline constexpr char kCheckpointMagic[4] = {'I', 'R', 'X', '1'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

template <typename T>
struct LoadedModel {
  Model<T> model;
  std::optional<NormStats> norm;
  std::map<std::string, std::string> meta;
};

namespace detail {

inline std::string join_doubles(const std::vector<double>& v) {
  std::ostringstream os;
  os.precision(17);
  for (std::size_t i = 0; i < v.size(); ++i) os << (i ? " " : "") << v[i];
  return os.str();
}

inline std::vector<double> split_doubles(const std::string& s) {
  std::vector<double> out;
  std::istringstream is(s);
  double d;
  while (is >> d) out.push_back(d);
  if (!is.eof()) throw FormatError("non-numeric value in checkpoint metadata");
  return out;
}

template <typename T>
Model<T> rebuild(const ModelInfo& info) {
  if (info.kind == ModelKind::irx1d) return build_irx1d<T>(info.bands, info.classes, info.patch);
  return build_cnn2d<T>(decode_architecture(info.arch, info.bands, info.classes, info.patch));
}

}  // namespace detail

template <typename T>
std::string encode_checkpoint(const Model<T>& model, const NormStats* norm = nullptr,
                              const std::vector<std::pair<std::string, std::string>>& extra = {}) {
  const auto& info = model.info();
  ExperimentLog meta;
  meta.set("kind", to_string(info.kind));
  meta.set("arch", info.arch);
  meta.set("bn_eps", kBatchNormEpsilon);
  meta.set("bn_momentum", kBatchNormMomentum);
  meta.set("adagrad_eps", kAdagradEpsilon);
  meta.set("init", kInitScheme);
  if (norm) {
    meta.set("norm_mean", detail::join_doubles(norm->mean));
    meta.set("norm_std", detail::join_doubles(norm->stddev));
  }
  for (const auto& [k, v] : extra) meta.set(k, v);
  const std::string text = meta.str();

  std::ostringstream os;
  os.write(kCheckpointMagic, 4);
  put_le<std::uint32_t>(os, kCheckpointVersion);
  put_le<std::uint64_t>(os, info.bands);
  put_le<std::uint64_t>(os, info.classes);
  put_le<std::uint64_t>(os, info.patch);
  put_le<std::uint64_t>(os, sizeof(T) * 8);
  put_le<std::uint64_t>(os, text.size());
  os << text;
  const auto params = model.parameters();
  put_le<std::uint64_t>(os, params.size());
  for (const auto* p : params) {
    put_le<std::uint64_t>(os, p->name.size());
    os << p->name;
    put_le<std::uint64_t>(os, p->value.rank());
    for (auto e : p->value.shape()) put_le<std::uint64_t>(os, e);
    for (T v : p->value.data()) put_le(os, v);
  }
  return os.str();
}

template <typename T>
void save_checkpoint(const Model<T>& model, const std::filesystem::path& path,
                     const NormStats* norm = nullptr,
                     const std::vector<std::pair<std::string, std::string>>& extra = {}) {
  const auto bytes = encode_checkpoint(model, norm, extra);
  write_atomic(path, [&](std::ostream& os) { os.write(bytes.data(), static_cast<std::streamsize>(bytes.size())); });
}

namespace detail {

template <typename T, typename Stored>
void read_values(ByteReader& in, Tensor<T>& dst) {
  const char* p = in.take(dst.size() * sizeof(Stored), "tensor values");
  for (std::size_t i = 0; i < dst.size(); ++i) {
    Stored v;
    std::memcpy(&v, p + i * sizeof(Stored), sizeof(Stored));
    dst[i] = static_cast<T>(to_little(v));
  }
}

}  // namespace detail

/// Parses a checkpoint. Every length is checked against the bytes that
/// remain before anything is allocated; nothing is returned on error.
template <typename T>
LoadedModel<T> decode_checkpoint(const char* data, std::size_t size) {
  ByteReader in(data, size);
  if (in.remaining() < 4 || std::memcmp(in.take(4, "magic"), kCheckpointMagic, 4) != 0) {
    throw BadMagicError("not a checkpoint (bad magic)");
  }
  const auto version = in.get<std::uint32_t>("version");
  if (version != kCheckpointVersion) {
    throw VersionError("checkpoint version " + std::to_string(version) + " not supported (expected " +
                       std::to_string(kCheckpointVersion) + ")");
  }
  ModelInfo info;
  info.bands = in.get<std::uint64_t>("bands");
  info.classes = in.get<std::uint64_t>("classes");
  info.patch = in.get<std::uint64_t>("patch");
  const auto bits = in.get<std::uint64_t>("precision");
  if (bits != 32 && bits != 64) throw FormatError("precision must be 32 or 64 bits, got " + std::to_string(bits));
  const auto meta_len = in.get<std::uint64_t>("metadata length");
  in.need(meta_len, "metadata");
  std::map<std::string, std::string> meta;
  for (auto& [k, v] : parse_key_values(in.bytes(meta_len, "metadata"))) meta[k] = v;

  const auto kind = meta.count("kind") ? meta["kind"] : "";
  if (kind == "irx1d") {
    info.kind = ModelKind::irx1d;
  } else if (kind == "cnn2d") {
    info.kind = ModelKind::cnn2d;
    info.arch = meta["arch"];
  } else {
    throw FormatError("checkpoint metadata names unknown model kind '" + kind + "'");
  }
  if (info.bands == 0 || info.classes == 0 || info.patch == 0 || info.bands > (1u << 20) ||
      info.classes > (1u << 16) || info.patch > 1001) {
    throw FormatError("implausible checkpoint dimensions");
  }
  Model<T> model = detail::rebuild<T>(info);

  const auto params = model.parameters();
  const auto count = in.get<std::uint64_t>("tensor count");
  if (count != params.size()) {
    throw FormatError("checkpoint holds " + std::to_string(count) + " tensors, model has " +
                      std::to_string(params.size()));
  }
  const std::size_t width = bits / 8;
  for (auto* p : params) {
    const auto name_len = in.get<std::uint64_t>("tensor name length");
    in.need(name_len, "tensor name");
    const auto name = in.bytes(name_len, "tensor name");
    if (name != p->name) throw FormatError("expected tensor '" + p->name + "', found '" + name + "'");
    const auto rank = in.get<std::uint64_t>("tensor rank");
    if (rank != p->value.rank()) throw FormatError("tensor '" + name + "' has rank " + std::to_string(rank));
    std::uint64_t elements = 1;
    for (std::uint64_t d = 0; d < rank; ++d) {
      const auto e = in.get<std::uint64_t>("tensor extent");
      if (e != p->value.dim(d)) throw FormatError("tensor '" + name + "' extent mismatch");
      elements *= e;
    }
    if (elements > in.remaining() / width) throw TruncatedError("tensor '" + name + "' values truncated");
    if (bits == 32) {
      detail::read_values<T, float>(in, p->value);
    } else {
      detail::read_values<T, double>(in, p->value);
    }
  }
  if (in.remaining() != 0) throw FormatError(std::to_string(in.remaining()) + " trailing bytes after tensor table");

  std::optional<NormStats> norm;
  if (meta.count("norm_mean") && meta.count("norm_std")) {
    norm = NormStats{detail::split_doubles(meta["norm_mean"]), detail::split_doubles(meta["norm_std"])};
    if (norm->mean.size() != info.bands || norm->stddev.size() != info.bands) {
      throw FormatError("normalisation statistics do not match the band count");
    }
  }
  return LoadedModel<T>{std::move(model), std::move(norm), std::move(meta)};
}

template <typename T>
LoadedModel<T> load_checkpoint(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  return decode_checkpoint<T>(bytes.data(), bytes.size());
}

}  // namespace irx
