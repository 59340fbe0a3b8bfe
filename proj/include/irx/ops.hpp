#pragma once

// Forward operators and their reverse-mode counterparts.
//
// Channel-mixing operators treat every axis but the last as "rows", so the
// same code path serves a single sequence [L,C], a batch [N,L,C] and a dense
// vector batch [N,C]. Spatial operators (conv2d, pool2d) take [H,W,C] or
// [N,H,W,C].

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "irx/errors.hpp"
#include "irx/tensor.hpp"

namespace irx {

namespace detail {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;
template <typename T>
using VecMap = Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>>;
template <typename T>
using ConstVecMap = Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>>;

template <typename T>
MatMap<T> as_matrix(Tensor<T>& t) {
  return MatMap<T>(t.raw(), static_cast<Eigen::Index>(t.rows()),
                   static_cast<Eigen::Index>(t.channels()));
}

template <typename T>
ConstMatMap<T> as_matrix(const Tensor<T>& t) {
  return ConstMatMap<T>(t.raw(), static_cast<Eigen::Index>(t.rows()),
                        static_cast<Eigen::Index>(t.channels()));
}

inline Shape with_channels(Shape s, std::size_t c) {
  s.back() = c;
  return s;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// pointwise (kernel size 1) convolution; also the dense layer

template <typename T>
struct AffineGrads {
  Tensor<T> dx;
  Tensor<T> dw;
  Tensor<T> db;  // empty when the layer has no bias
};

template <typename T>
Tensor<T> pointwise_conv(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>* bias) {
  if (w.rank() != 2 || w.dim(0) != x.channels()) {
    throw DimensionError("pointwise_conv: weights " + shape_str(w.shape()) +
                         " do not match input " + shape_str(x.shape()));
  }
  const std::size_t cout = w.dim(1);
  if (bias && (bias->rank() != 1 || bias->dim(0) != cout)) {
    throw DimensionError("pointwise_conv: bias " + shape_str(bias->shape()) +
                         " does not match weights " + shape_str(w.shape()));
  }
  Tensor<T> y(detail::with_channels(x.shape(), cout));
  auto ym = detail::as_matrix(y);
  ym.noalias() = detail::as_matrix(x) * detail::as_matrix(w);
  if (bias) ym.rowwise() += detail::ConstVecMap<T>(bias->raw(), static_cast<Eigen::Index>(cout));
  return y;
}

template <typename T>
Tensor<T> pointwise_conv(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias) {
  return pointwise_conv(x, w, &bias);
}

template <typename T>
AffineGrads<T> pointwise_conv_backward(const Tensor<T>& x, const Tensor<T>& w,
                                       const Tensor<T>& dy, bool has_bias, bool need_dx = true) {
  if (dy.rows() != x.rows() || dy.channels() != w.dim(1)) {
    throw DimensionError("pointwise_conv_backward: upstream gradient " + shape_str(dy.shape()) +
                         " does not match output of " + shape_str(x.shape()) + " x " +
                         shape_str(w.shape()));
  }
  AffineGrads<T> g;
  const auto dym = detail::as_matrix(dy);
  if (need_dx) {
    g.dx = Tensor<T>(x.shape());
    detail::as_matrix(g.dx).noalias() = dym * detail::as_matrix(w).transpose();
  }
  g.dw = Tensor<T>(w.shape());
  detail::as_matrix(g.dw).noalias() = detail::as_matrix(x).transpose() * dym;
  if (has_bias) {
    g.db = Tensor<T>({w.dim(1)});
    detail::VecMap<T>(g.db.raw(), static_cast<Eigen::Index>(w.dim(1))) = dym.colwise().sum();
  }
  return g;
}

// Fully connected layer; identical algebra to the pointwise convolution.
template <typename T>
Tensor<T> dense(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
  return pointwise_conv(x, w, &b);
}

// ---------------------------------------------------------------------------
// depthwise convolution with kernel size 1: a per-channel scale, no bias

template <typename T>
Tensor<T> depthwise_scale(const Tensor<T>& x, const Tensor<T>& d) {
  if (d.rank() != 1 || d.dim(0) != x.channels()) {
    throw DimensionError("depthwise_scale: kernel " + shape_str(d.shape()) +
                         " does not match input " + shape_str(x.shape()));
  }
  Tensor<T> y(x.shape());
  detail::as_matrix(y) =
      detail::as_matrix(x).array().rowwise() *
      detail::ConstVecMap<T>(d.raw(), static_cast<Eigen::Index>(d.size())).array();
  return y;
}

template <typename T>
std::pair<Tensor<T>, Tensor<T>> depthwise_scale_backward(const Tensor<T>& x, const Tensor<T>& d,
                                                         const Tensor<T>& dy) {
  if (dy.shape() != x.shape()) {
    throw DimensionError("depthwise_scale_backward: gradient " + shape_str(dy.shape()) +
                         " vs input " + shape_str(x.shape()));
  }
  Tensor<T> dx(x.shape());
  Tensor<T> dd(d.shape());
  const auto dym = detail::as_matrix(dy);
  detail::as_matrix(dx) =
      dym.array().rowwise() *
      detail::ConstVecMap<T>(d.raw(), static_cast<Eigen::Index>(d.size())).array();
  detail::VecMap<T>(dd.raw(), static_cast<Eigen::Index>(dd.size())) =
      (dym.array() * detail::as_matrix(x).array()).colwise().sum();
  return {std::move(dx), std::move(dd)};
}

// ---------------------------------------------------------------------------
// sequence max pooling: stride 1, same padding, window truncated at the ends

namespace detail {

struct SeqGeometry {
  std::size_t batch;
  std::size_t length;
  std::size_t channels;
};

template <typename T>
SeqGeometry seq_geometry(const Tensor<T>& x, const char* op) {
  if (x.rank() == 2) return {1, x.dim(0), x.dim(1)};
  if (x.rank() == 3) return {x.dim(0), x.dim(1), x.dim(2)};
  throw DimensionError(std::string(op) + ": expected [L,C] or [N,L,C], got " +
                       shape_str(x.shape()));
}

// Window [l - (k-1)/2, l + k/2] clipped to [0, L).
inline std::pair<std::size_t, std::size_t> seq_window(std::size_t l, std::size_t k,
                                                      std::size_t length) {
  const std::size_t before = (k - 1) / 2;
  const std::size_t after = k / 2;
  const std::size_t lo = l >= before ? l - before : 0;
  const std::size_t hi = std::min(length - 1, l + after);
  return {lo, hi};
}

}  // namespace detail

template <typename T>
Tensor<T> maxpool_seq(const Tensor<T>& x, std::size_t k = 3) {
  if (k < 1) throw ArgumentError("maxpool_seq: window must be >= 1");
  const auto g = detail::seq_geometry(x, "maxpool_seq");
  Tensor<T> y(x.shape());
  const T* in = x.raw();
  T* out = y.raw();
  for (std::size_t n = 0; n < g.batch; ++n) {
    const std::size_t base = n * g.length * g.channels;
    for (std::size_t l = 0; l < g.length; ++l) {
      const auto [lo, hi] = detail::seq_window(l, k, g.length);
      T* dst = out + base + l * g.channels;
      std::copy_n(in + base + lo * g.channels, g.channels, dst);
      for (std::size_t j = lo + 1; j <= hi; ++j) {
        const T* src = in + base + j * g.channels;
        for (std::size_t c = 0; c < g.channels; ++c) dst[c] = std::max(dst[c], src[c]);
      }
    }
  }
  return y;
}

// Gradient flows to the first maximal element of each window.
template <typename T>
Tensor<T> maxpool_seq_backward(const Tensor<T>& x, const Tensor<T>& dy, std::size_t k = 3) {
  if (dy.shape() != x.shape()) {
    throw DimensionError("maxpool_seq_backward: gradient " + shape_str(dy.shape()) +
                         " vs input " + shape_str(x.shape()));
  }
  const auto g = detail::seq_geometry(x, "maxpool_seq");
  Tensor<T> dx(x.shape());
  const T* in = x.raw();
  for (std::size_t n = 0; n < g.batch; ++n) {
    const std::size_t base = n * g.length * g.channels;
    for (std::size_t l = 0; l < g.length; ++l) {
      const auto [lo, hi] = detail::seq_window(l, k, g.length);
      for (std::size_t c = 0; c < g.channels; ++c) {
        std::size_t best = lo;
        T best_v = in[base + lo * g.channels + c];
        for (std::size_t j = lo + 1; j <= hi; ++j) {
          const T v = in[base + j * g.channels + c];
          if (v > best_v) {
            best_v = v;
            best = j;
          }
        }
        dx[base + best * g.channels + c] += dy[base + l * g.channels + c];
      }
    }
  }
  return dx;
}

// ---------------------------------------------------------------------------
// global average pooling over the sequence axis

template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& x) {
  const auto g = detail::seq_geometry(x, "global_avg_pool");
  Tensor<T> y(x.rank() == 2 ? Shape{g.channels} : Shape{g.batch, g.channels});
  const T inv = T(1) / static_cast<T>(g.length);
  for (std::size_t n = 0; n < g.batch; ++n) {
    detail::ConstMatMap<T> xs(x.raw() + n * g.length * g.channels,
                              static_cast<Eigen::Index>(g.length),
                              static_cast<Eigen::Index>(g.channels));
    detail::VecMap<T>(y.raw() + n * g.channels, static_cast<Eigen::Index>(g.channels)) =
        xs.colwise().sum() * inv;
  }
  return y;
}

template <typename T>
Tensor<T> global_avg_pool_backward(const Shape& input_shape, const Tensor<T>& dy) {
  Tensor<T> probe(input_shape);
  const auto g = detail::seq_geometry(probe, "global_avg_pool");
  if (dy.size() != g.batch * g.channels) {
    throw DimensionError("global_avg_pool_backward: gradient " + shape_str(dy.shape()) +
                         " vs input " + shape_str(input_shape));
  }
  const T inv = T(1) / static_cast<T>(g.length);
  T* out = probe.raw();
  for (std::size_t n = 0; n < g.batch; ++n) {
    for (std::size_t l = 0; l < g.length; ++l) {
      for (std::size_t c = 0; c < g.channels; ++c) {
        out[(n * g.length + l) * g.channels + c] = dy[n * g.channels + c] * inv;
      }
    }
  }
  return probe;
}

// ---------------------------------------------------------------------------
// batch normalisation over every axis but the last

inline constexpr double kBatchNormEpsilon = 1e-3;
inline constexpr double kBatchNormMomentum = 0.99;

enum class BnMode { train, infer };

template <typename T>
struct BatchNormForward {
  Tensor<T> y;
  std::vector<T> mean;
  std::vector<T> var;  // biased (population) variance
};

template <typename T>
struct BatchNormGrads {
  Tensor<T> dx;
  Tensor<T> dscale;
  Tensor<T> dshift;
};

namespace detail {

template <typename T>
void check_bn_args(const Tensor<T>& x, const Tensor<T>& scale, const Tensor<T>& shift) {
  if (x.empty()) throw ArgumentError("batch_norm: empty batch");
  if (scale.size() != x.channels() || shift.size() != x.channels()) {
    throw DimensionError("batch_norm: scale/shift " + shape_str(scale.shape()) + "/" +
                         shape_str(shift.shape()) + " do not match input " +
                         shape_str(x.shape()));
  }
}

}  // namespace detail

template <typename T>
BatchNormForward<T> batch_norm_train(const Tensor<T>& x, const Tensor<T>& scale,
                                     const Tensor<T>& shift, double eps = kBatchNormEpsilon) {
  detail::check_bn_args(x, scale, shift);
  const std::size_t rows = x.rows();
  const std::size_t ch = x.channels();
  std::vector<double> sum(ch, 0.0);
  std::vector<double> sq(ch, 0.0);
  const T* in = x.raw();
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < ch; ++c) sum[c] += in[r * ch + c];
  }
  BatchNormForward<T> out;
  out.mean.resize(ch);
  out.var.resize(ch);
  for (std::size_t c = 0; c < ch; ++c) sum[c] /= static_cast<double>(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < ch; ++c) {
      const double d = in[r * ch + c] - sum[c];
      sq[c] += d * d;
    }
  }
  std::vector<T> mul(ch);
  std::vector<T> add(ch);
  for (std::size_t c = 0; c < ch; ++c) {
    const double var = sq[c] / static_cast<double>(rows);
    out.mean[c] = static_cast<T>(sum[c]);
    out.var[c] = static_cast<T>(var);
    const double inv = 1.0 / std::sqrt(var + eps);
    mul[c] = static_cast<T>(scale[c] * inv);
    add[c] = static_cast<T>(shift[c] - scale[c] * sum[c] * inv);
  }
  out.y = Tensor<T>(x.shape());
  T* o = out.y.raw();
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < ch; ++c) o[r * ch + c] = in[r * ch + c] * mul[c] + add[c];
  }
  return out;
}

template <typename T>
Tensor<T> batch_norm_infer(const Tensor<T>& x, const Tensor<T>& scale, const Tensor<T>& shift,
                           const Tensor<T>& mean, const Tensor<T>& var,
                           double eps = kBatchNormEpsilon) {
  detail::check_bn_args(x, scale, shift);
  const std::size_t ch = x.channels();
  if (mean.size() != ch || var.size() != ch) {
    throw DimensionError("batch_norm: running statistics do not match input " +
                         shape_str(x.shape()));
  }
  std::vector<T> mul(ch);
  std::vector<T> add(ch);
  for (std::size_t c = 0; c < ch; ++c) {
    const double inv = 1.0 / std::sqrt(static_cast<double>(var[c]) + eps);
    mul[c] = static_cast<T>(scale[c] * inv);
    add[c] = static_cast<T>(shift[c] - scale[c] * mean[c] * inv);
  }
  Tensor<T> y(x.shape());
  const T* in = x.raw();
  T* o = y.raw();
  const std::size_t rows = x.rows();
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < ch; ++c) o[r * ch + c] = in[r * ch + c] * mul[c] + add[c];
  }
  return y;
}

template <typename T>
struct RunningStats {
  Tensor<T> mean;
  Tensor<T> var;
};

// Convenience form: train mode normalises with batch statistics and folds
// them into `stats`; infer mode uses `stats` as-is.
template <typename T>
Tensor<T> batch_norm(const Tensor<T>& x, const Tensor<T>& scale, const Tensor<T>& shift,
                     RunningStats<T>& stats, BnMode mode, double eps = kBatchNormEpsilon,
                     double momentum = kBatchNormMomentum) {
  if (mode == BnMode::infer) return batch_norm_infer(x, scale, shift, stats.mean, stats.var, eps);
  auto f = batch_norm_train(x, scale, shift, eps);
  for (std::size_t c = 0; c < x.channels(); ++c) {
    stats.mean[c] = static_cast<T>(momentum * stats.mean[c] + (1.0 - momentum) * f.mean[c]);
    stats.var[c] = static_cast<T>(momentum * stats.var[c] + (1.0 - momentum) * f.var[c]);
  }
  return std::move(f.y);
}

template <typename T>
BatchNormGrads<T> batch_norm_backward(const Tensor<T>& x, const Tensor<T>& scale,
                                      std::span<const T> mean, std::span<const T> var,
                                      const Tensor<T>& dy, double eps = kBatchNormEpsilon) {
  if (dy.shape() != x.shape()) {
    throw DimensionError("batch_norm_backward: gradient " + shape_str(dy.shape()) +
                         " vs input " + shape_str(x.shape()));
  }
  const std::size_t rows = x.rows();
  const std::size_t ch = x.channels();
  std::vector<double> inv(ch);
  for (std::size_t c = 0; c < ch; ++c) inv[c] = 1.0 / std::sqrt(static_cast<double>(var[c]) + eps);
  std::vector<double> sum_dy(ch, 0.0);
  std::vector<double> sum_dy_xhat(ch, 0.0);
  const T* in = x.raw();
  const T* g = dy.raw();
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < ch; ++c) {
      const double xhat = (in[r * ch + c] - static_cast<double>(mean[c])) * inv[c];
      sum_dy[c] += g[r * ch + c];
      sum_dy_xhat[c] += g[r * ch + c] * xhat;
    }
  }
  BatchNormGrads<T> out;
  out.dscale = Tensor<T>({ch});
  out.dshift = Tensor<T>({ch});
  std::vector<double> k1(ch);
  std::vector<double> k2(ch);
  const double n = static_cast<double>(rows);
  for (std::size_t c = 0; c < ch; ++c) {
    out.dscale[c] = static_cast<T>(sum_dy_xhat[c]);
    out.dshift[c] = static_cast<T>(sum_dy[c]);
    k1[c] = sum_dy[c] / n;
    k2[c] = sum_dy_xhat[c] / n;
  }
  out.dx = Tensor<T>(x.shape());
  T* dx = out.dx.raw();
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < ch; ++c) {
      const double xhat = (in[r * ch + c] - static_cast<double>(mean[c])) * inv[c];
      dx[r * ch + c] =
          static_cast<T>(scale[c] * inv[c] * (g[r * ch + c] - k1[c] - xhat * k2[c]));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// elementwise

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  Tensor<T> y(x.shape());
  std::transform(x.data().begin(), x.data().end(), y.data().begin(),
                 [](T v) { return v > T(0) ? v : T(0); });
  return y;
}

template <typename T>
T relu(T v) {
  return v > T(0) ? v : T(0);
}

// Uses the forward output (relu(x) > 0 iff x > 0), so callers may keep
// either tensor.
template <typename T>
Tensor<T> relu_backward(const Tensor<T>& y, const Tensor<T>& dy) {
  if (dy.shape() != y.shape()) {
    throw DimensionError("relu_backward: gradient " + shape_str(dy.shape()) + " vs " +
                         shape_str(y.shape()));
  }
  Tensor<T> dx(y.shape());
  const T* a = y.raw();
  const T* g = dy.raw();
  T* o = dx.raw();
  for (std::size_t i = 0; i < y.size(); ++i) o[i] = a[i] > T(0) ? g[i] : T(0);
  return dx;
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError("add: shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
  }
  Tensor<T> y(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) y[i] = a[i] + b[i];
  return y;
}

// Concatenate along the last axis.
template <typename T>
Tensor<T> concat_channels(std::span<const Tensor<T>> parts) {
  if (parts.empty()) throw ArgumentError("concat_channels: nothing to concatenate");
  const std::size_t rows = parts[0].rows();
  std::size_t total = 0;
  for (const auto& p : parts) {
    if (p.rows() != rows) {
      throw DimensionError("concat_channels: row mismatch " + shape_str(parts[0].shape()) +
                           " vs " + shape_str(p.shape()));
    }
    total += p.channels();
  }
  Tensor<T> y(detail::with_channels(parts[0].shape(), total));
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const std::size_t c = p.channels();
    for (std::size_t r = 0; r < rows; ++r) {
      std::copy_n(p.raw() + r * c, c, y.raw() + r * total + offset);
    }
    offset += c;
  }
  return y;
}

template <typename T>
Tensor<T> slice_channels(const Tensor<T>& x, std::size_t offset, std::size_t count) {
  if (offset + count > x.channels()) {
    throw DimensionError("slice_channels: range exceeds " + shape_str(x.shape()));
  }
  Tensor<T> y(detail::with_channels(x.shape(), count));
  const std::size_t rows = x.rows();
  const std::size_t total = x.channels();
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(x.raw() + r * total + offset, count, y.raw() + r * count);
  }
  return y;
}

// ---------------------------------------------------------------------------
// softmax cross-entropy (mean over the batch)

template <typename T>
Tensor<T> softmax(const Tensor<T>& logits) {
  Tensor<T> p(logits.shape());
  const std::size_t k = logits.channels();
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    const T* z = logits.raw() + r * k;
    T* o = p.raw() + r * k;
    const T m = *std::max_element(z, z + k);
    T s = 0;
    for (std::size_t j = 0; j < k; ++j) {
      o[j] = std::exp(z[j] - m);
      s += o[j];
    }
    for (std::size_t j = 0; j < k; ++j) o[j] /= s;
  }
  return p;
}

namespace detail {

template <typename T>
void check_labels(const Tensor<T>& logits, std::span<const int> labels) {
  if (labels.size() != logits.rows()) {
    throw DimensionError("softmax_xent: " + std::to_string(labels.size()) + " labels for logits " +
                         shape_str(logits.shape()));
  }
  for (int l : labels) {
    if (l < 0 || static_cast<std::size_t>(l) >= logits.channels()) {
      throw IndexError("softmax_xent: label " + std::to_string(l) + " outside [0," +
                       std::to_string(logits.channels()) + ")");
    }
  }
}

}  // namespace detail

template <typename T>
T softmax_xent(const Tensor<T>& logits, std::span<const int> labels) {
  detail::check_labels(logits, labels);
  const std::size_t k = logits.channels();
  double total = 0.0;
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    const T* z = logits.raw() + r * k;
    const T m = *std::max_element(z, z + k);
    double s = 0.0;
    for (std::size_t j = 0; j < k; ++j) s += std::exp(static_cast<double>(z[j] - m));
    total += std::log(s) + static_cast<double>(m) - static_cast<double>(z[labels[r]]);
  }
  return static_cast<T>(total / static_cast<double>(logits.rows()));
}

template <typename T>
T softmax_xent(const Tensor<T>& logits, int label) {
  const int labels[1] = {label};
  return softmax_xent(logits, std::span<const int>(labels));
}

template <typename T>
Tensor<T> softmax_xent_backward(const Tensor<T>& logits, std::span<const int> labels) {
  detail::check_labels(logits, labels);
  Tensor<T> g = softmax(logits);
  const std::size_t k = logits.channels();
  const T inv = T(1) / static_cast<T>(logits.rows());
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    g[r * k + static_cast<std::size_t>(labels[r])] -= T(1);
    for (std::size_t j = 0; j < k; ++j) g[r * k + j] *= inv;
  }
  return g;
}

// Row-wise argmax; ties resolve to the lowest index.
template <typename T>
std::vector<int> argmax_rows(const Tensor<T>& scores) {
  const std::size_t k = scores.channels();
  std::vector<int> out(scores.rows());
  for (std::size_t r = 0; r < scores.rows(); ++r) {
    const T* z = scores.raw() + r * k;
    out[r] = static_cast<int>(std::max_element(z, z + k) - z);
  }
  return out;
}

// ---------------------------------------------------------------------------
// 2-D convolution and pooling (cross-correlation, TF-style "same" padding)

enum class Padding { same, valid };

inline const char* to_string(Padding p) { return p == Padding::same ? "same" : "valid"; }

inline std::size_t out_extent(std::size_t in, std::size_t k, std::size_t stride, Padding p) {
  if (k == 0 || stride == 0) throw ArgumentError("kernel and stride must be >= 1");
  if (p == Padding::same) return (in + stride - 1) / stride;
  if (k > in) {
    throw DimensionError("valid window " + std::to_string(k) + " exceeds extent " +
                         std::to_string(in));
  }
  return (in - k) / stride + 1;
}

inline std::size_t pad_before(std::size_t in, std::size_t k, std::size_t stride, Padding p) {
  if (p == Padding::valid) return 0;
  const std::size_t out = out_extent(in, k, stride, p);
  const std::size_t needed = (out - 1) * stride + k;
  return needed > in ? (needed - in) / 2 : 0;
}

struct Conv2dGeometry {
  std::size_t batch, height, width, in_channels;
  std::size_t kernel, stride;
  Padding padding;
  std::size_t out_h, out_w, pad_top, pad_left;
};

namespace detail {

template <typename T>
Conv2dGeometry image_geometry(const Tensor<T>& x, std::size_t k, std::size_t stride, Padding p,
                              const char* op) {
  Conv2dGeometry g{};
  if (x.rank() == 3) {
    g.batch = 1;
    g.height = x.dim(0);
    g.width = x.dim(1);
    g.in_channels = x.dim(2);
  } else if (x.rank() == 4) {
    g.batch = x.dim(0);
    g.height = x.dim(1);
    g.width = x.dim(2);
    g.in_channels = x.dim(3);
  } else {
    throw DimensionError(std::string(op) + ": expected [H,W,C] or [N,H,W,C], got " +
                         shape_str(x.shape()));
  }
  g.kernel = k;
  g.stride = stride;
  g.padding = p;
  try {
    g.out_h = out_extent(g.height, k, stride, p);
    g.out_w = out_extent(g.width, k, stride, p);
  } catch (const DimensionError& e) {
    throw DimensionError(std::string(op) + ": " + e.what() + " for input " +
                         shape_str(x.shape()));
  }
  g.pad_top = pad_before(g.height, k, stride, p);
  g.pad_left = pad_before(g.width, k, stride, p);
  return g;
}

inline Shape image_shape(const Conv2dGeometry& g, std::size_t channels, bool batched) {
  if (batched) return {g.batch, g.out_h, g.out_w, channels};
  return {g.out_h, g.out_w, channels};
}

// One sample: cols[(oy*ow+ox), (ky*k+kx)*C + c].
template <typename T>
void im2col(const T* img, const Conv2dGeometry& g, T* cols) {
  const std::size_t k = g.kernel;
  const std::size_t c = g.in_channels;
  const std::size_t row_len = k * k * c;
  for (std::size_t oy = 0; oy < g.out_h; ++oy) {
    for (std::size_t ox = 0; ox < g.out_w; ++ox) {
      T* row = cols + (oy * g.out_w + ox) * row_len;
      for (std::size_t ky = 0; ky < k; ++ky) {
        const long iy = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.pad_top);
        for (std::size_t kx = 0; kx < k; ++kx) {
          const long ix = static_cast<long>(ox * g.stride + kx) - static_cast<long>(g.pad_left);
          T* dst = row + (ky * k + kx) * c;
          if (iy < 0 || ix < 0 || iy >= static_cast<long>(g.height) ||
              ix >= static_cast<long>(g.width)) {
            std::fill_n(dst, c, T(0));
          } else {
            std::copy_n(img + (static_cast<std::size_t>(iy) * g.width + static_cast<std::size_t>(ix)) * c,
                        c, dst);
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* cols, const Conv2dGeometry& g, T* img) {
  const std::size_t k = g.kernel;
  const std::size_t c = g.in_channels;
  const std::size_t row_len = k * k * c;
  for (std::size_t oy = 0; oy < g.out_h; ++oy) {
    for (std::size_t ox = 0; ox < g.out_w; ++ox) {
      const T* row = cols + (oy * g.out_w + ox) * row_len;
      for (std::size_t ky = 0; ky < k; ++ky) {
        const long iy = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.pad_top);
        if (iy < 0 || iy >= static_cast<long>(g.height)) continue;
        for (std::size_t kx = 0; kx < k; ++kx) {
          const long ix = static_cast<long>(ox * g.stride + kx) - static_cast<long>(g.pad_left);
          if (ix < 0 || ix >= static_cast<long>(g.width)) continue;
          const T* src = row + (ky * k + kx) * c;
          T* dst = img + (static_cast<std::size_t>(iy) * g.width + static_cast<std::size_t>(ix)) * c;
          for (std::size_t ch = 0; ch < c; ++ch) dst[ch] += src[ch];
        }
      }
    }
  }
}

}  // namespace detail

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias,
                 std::size_t stride = 1, Padding padding = Padding::same) {
  if (w.rank() != 4 || w.dim(0) != w.dim(1)) {
    throw DimensionError("conv2d: weights must be [k,k,Cin,Cout], got " + shape_str(w.shape()));
  }
  const auto g = detail::image_geometry(x, w.dim(0), stride, padding, "conv2d");
  if (w.dim(2) != g.in_channels) {
    throw DimensionError("conv2d: weights " + shape_str(w.shape()) + " do not match input " +
                         shape_str(x.shape()));
  }
  const std::size_t cout = w.dim(3);
  if (bias.size() != cout) {
    throw DimensionError("conv2d: bias " + shape_str(bias.shape()) + " vs weights " +
                         shape_str(w.shape()));
  }
  const std::size_t row_len = g.kernel * g.kernel * g.in_channels;
  const std::size_t positions = g.out_h * g.out_w;
  Tensor<T> y(detail::image_shape(g, cout, x.rank() == 4));
  Buffer<T> cols(positions * row_len);
  detail::ConstMatMap<T> wm(w.raw(), static_cast<Eigen::Index>(row_len),
                            static_cast<Eigen::Index>(cout));
  detail::ConstVecMap<T> bv(bias.raw(), static_cast<Eigen::Index>(cout));
  const std::size_t in_stride = g.height * g.width * g.in_channels;
  for (std::size_t n = 0; n < g.batch; ++n) {
    detail::im2col(x.raw() + n * in_stride, g, cols.data());
    detail::MatMap<T> ym(y.raw() + n * positions * cout, static_cast<Eigen::Index>(positions),
                         static_cast<Eigen::Index>(cout));
    ym.noalias() = detail::ConstMatMap<T>(cols.data(), static_cast<Eigen::Index>(positions),
                                          static_cast<Eigen::Index>(row_len)) *
                   wm;
    ym.rowwise() += bv;
  }
  return y;
}

template <typename T>
AffineGrads<T> conv2d_backward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& dy,
                               std::size_t stride = 1, Padding padding = Padding::same,
                               bool need_dx = true) {
  const auto g = detail::image_geometry(x, w.dim(0), stride, padding, "conv2d");
  const std::size_t cout = w.dim(3);
  const std::size_t row_len = g.kernel * g.kernel * g.in_channels;
  const std::size_t positions = g.out_h * g.out_w;
  if (dy.size() != g.batch * positions * cout) {
    throw DimensionError("conv2d_backward: gradient " + shape_str(dy.shape()) +
                         " does not match output geometry");
  }
  AffineGrads<T> out;
  out.dw = Tensor<T>(w.shape());
  out.db = Tensor<T>({cout});
  if (need_dx) out.dx = Tensor<T>(x.shape());
  Buffer<T> cols(positions * row_len);
  Buffer<T> dcols(positions * row_len);
  detail::MatMap<T> dwm(out.dw.raw(), static_cast<Eigen::Index>(row_len),
                        static_cast<Eigen::Index>(cout));
  detail::ConstMatMap<T> wm(w.raw(), static_cast<Eigen::Index>(row_len),
                            static_cast<Eigen::Index>(cout));
  detail::VecMap<T> dbv(out.db.raw(), static_cast<Eigen::Index>(cout));
  const std::size_t in_stride = g.height * g.width * g.in_channels;
  for (std::size_t n = 0; n < g.batch; ++n) {
    detail::im2col(x.raw() + n * in_stride, g, cols.data());
    detail::ConstMatMap<T> dym(dy.raw() + n * positions * cout,
                               static_cast<Eigen::Index>(positions),
                               static_cast<Eigen::Index>(cout));
    detail::ConstMatMap<T> cm(cols.data(), static_cast<Eigen::Index>(positions),
                              static_cast<Eigen::Index>(row_len));
    dwm.noalias() += cm.transpose() * dym;
    dbv += dym.colwise().sum();
    if (need_dx) {
      detail::MatMap<T>(dcols.data(), static_cast<Eigen::Index>(positions),
                        static_cast<Eigen::Index>(row_len))
          .noalias() = dym * wm.transpose();
      detail::col2im_add(dcols.data(), g, out.dx.raw() + n * in_stride);
    }
  }
  return out;
}

enum class PoolMode { max, avg };

inline const char* to_string(PoolMode m) { return m == PoolMode::max ? "max" : "avg"; }

// Windows only cover in-image cells: max ignores padding, avg divides by
// the number of in-image cells.
template <typename T>
Tensor<T> pool2d(const Tensor<T>& x, std::size_t k, std::size_t stride, Padding padding,
                 PoolMode mode) {
  const auto g = detail::image_geometry(x, k, stride, padding, "pool2d");
  const std::size_t c = g.in_channels;
  Tensor<T> y(detail::image_shape(g, c, x.rank() == 4));
  for (std::size_t n = 0; n < g.batch; ++n) {
    const T* img = x.raw() + n * g.height * g.width * c;
    T* out = y.raw() + n * g.out_h * g.out_w * c;
    for (std::size_t oy = 0; oy < g.out_h; ++oy) {
      const long y0 = static_cast<long>(oy * stride) - static_cast<long>(g.pad_top);
      const std::size_t ylo = static_cast<std::size_t>(std::max(0L, y0));
      const std::size_t yhi = static_cast<std::size_t>(std::min<long>(y0 + static_cast<long>(k), static_cast<long>(g.height)));
      for (std::size_t ox = 0; ox < g.out_w; ++ox) {
        const long x0 = static_cast<long>(ox * stride) - static_cast<long>(g.pad_left);
        const std::size_t xlo = static_cast<std::size_t>(std::max(0L, x0));
        const std::size_t xhi = static_cast<std::size_t>(std::min<long>(x0 + static_cast<long>(k), static_cast<long>(g.width)));
        T* dst = out + (oy * g.out_w + ox) * c;
        if (mode == PoolMode::max) {
          std::fill_n(dst, c, -std::numeric_limits<T>::infinity());
          for (std::size_t iy = ylo; iy < yhi; ++iy) {
            for (std::size_t ix = xlo; ix < xhi; ++ix) {
              const T* src = img + (iy * g.width + ix) * c;
              for (std::size_t ch = 0; ch < c; ++ch) dst[ch] = std::max(dst[ch], src[ch]);
            }
          }
        } else {
          std::fill_n(dst, c, T(0));
          for (std::size_t iy = ylo; iy < yhi; ++iy) {
            for (std::size_t ix = xlo; ix < xhi; ++ix) {
              const T* src = img + (iy * g.width + ix) * c;
              for (std::size_t ch = 0; ch < c; ++ch) dst[ch] += src[ch];
            }
          }
          const T inv = T(1) / static_cast<T>((yhi - ylo) * (xhi - xlo));
          for (std::size_t ch = 0; ch < c; ++ch) dst[ch] *= inv;
        }
      }
    }
  }
  return y;
}

template <typename T>
Tensor<T> pool2d_backward(const Tensor<T>& x, const Tensor<T>& dy, std::size_t k,
                          std::size_t stride, Padding padding, PoolMode mode) {
  const auto g = detail::image_geometry(x, k, stride, padding, "pool2d");
  const std::size_t c = g.in_channels;
  if (dy.size() != g.batch * g.out_h * g.out_w * c) {
    throw DimensionError("pool2d_backward: gradient " + shape_str(dy.shape()) +
                         " does not match output geometry");
  }
  Tensor<T> dx(x.shape());
  for (std::size_t n = 0; n < g.batch; ++n) {
    const T* img = x.raw() + n * g.height * g.width * c;
    T* dimg = dx.raw() + n * g.height * g.width * c;
    const T* gout = dy.raw() + n * g.out_h * g.out_w * c;
    for (std::size_t oy = 0; oy < g.out_h; ++oy) {
      const long y0 = static_cast<long>(oy * stride) - static_cast<long>(g.pad_top);
      const std::size_t ylo = static_cast<std::size_t>(std::max(0L, y0));
      const std::size_t yhi = static_cast<std::size_t>(std::min<long>(y0 + static_cast<long>(k), static_cast<long>(g.height)));
      for (std::size_t ox = 0; ox < g.out_w; ++ox) {
        const long x0 = static_cast<long>(ox * stride) - static_cast<long>(g.pad_left);
        const std::size_t xlo = static_cast<std::size_t>(std::max(0L, x0));
        const std::size_t xhi = static_cast<std::size_t>(std::min<long>(x0 + static_cast<long>(k), static_cast<long>(g.width)));
        const T* gsrc = gout + (oy * g.out_w + ox) * c;
        if (mode == PoolMode::max) {
          for (std::size_t ch = 0; ch < c; ++ch) {
            std::size_t best = ylo * g.width + xlo;
            T best_v = img[best * c + ch];
            for (std::size_t iy = ylo; iy < yhi; ++iy) {
              for (std::size_t ix = xlo; ix < xhi; ++ix) {
                const std::size_t p = iy * g.width + ix;
                if (img[p * c + ch] > best_v) {
                  best_v = img[p * c + ch];
                  best = p;
                }
              }
            }
            dimg[best * c + ch] += gsrc[ch];
          }
        } else {
          const T inv = T(1) / static_cast<T>((yhi - ylo) * (xhi - xlo));
          for (std::size_t iy = ylo; iy < yhi; ++iy) {
            for (std::size_t ix = xlo; ix < xhi; ++ix) {
              T* dst = dimg + (iy * g.width + ix) * c;
              for (std::size_t ch = 0; ch < c; ++ch) dst[ch] += gsrc[ch] * inv;
            }
          }
        }
      }
    }
  }
  return dx;
}

}  // namespace irx
