#pragma once

// Weight initialisation, Adagrad, and the mini-batch training loop.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "irx/model.hpp"

namespace irx {

inline constexpr double kAdagradEpsilon = 1e-7;
inline constexpr const char* kInitScheme = "glorot_uniform(bias=0,bn=1/0,depthwise fan=1/1)";

struct TrainConfig {
  double learning_rate = 0.01;
  std::size_t epochs = 100;
  std::size_t batch_size = 64;
  std::uint64_t seed = 0;
  double adagrad_eps = kAdagradEpsilon;

  void validate() const {
    if (!(learning_rate > 0)) throw ArgumentError("learning rate must be > 0");
    if (batch_size < 1) throw ArgumentError("batch size must be >= 1");
  }
};

struct EpochStats {
  std::size_t epoch = 0;  // 1-based
  double loss = 0.0;      // mean over samples
  double accuracy = 0.0;  // training accuracy of the forward passes
  double seconds = 0.0;
};

struct TrainHistory {
  std::vector<EpochStats> epochs;

  std::string csv() const {
    std::ostringstream os;
    os.precision(9);
    os << "epoch,loss,accuracy,seconds\n";
    for (const auto& e : epochs) os << e.epoch << ',' << e.loss << ',' << e.accuracy << ',' << e.seconds << "\n";
    return os.str();
  }
};

// Glorot fans of a weight tensor: dense/pointwise [in,out], conv [k,k,in,out].
inline std::pair<std::size_t, std::size_t> glorot_fans(const Shape& s) {
  if (s.size() == 2) return {s[0], s[1]};
  if (s.size() == 4) return {s[0] * s[1] * s[2], s[0] * s[1] * s[3]};
  return {1, 1};  // per-channel depthwise scales
}

/// Weights U(+-sqrt(6/(fan_in+fan_out))), biases 0, batch-norm gamma 1 /
/// beta 0 / moving mean 0 / moving variance 1. Draws follow parameter order
/// from one mt19937_64 stream seeded with `seed`.
template <typename T>
void initialize(Model<T>& model, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (auto* p : model.parameters()) {
    const auto& n = p->name;
    auto ends = [&](const char* suffix) { return n.ends_with(suffix); };
    p->grad.fill(T(0));
    p->accumulator.fill(T(0));
    if (ends(".bias") || ends(".beta") || ends(".moving_mean")) {
      p->value.fill(T(0));
    } else if (ends(".gamma") || ends(".moving_variance")) {
      p->value.fill(T(1));
    } else {
      const auto [fan_in, fan_out] = glorot_fans(p->value.shape());
      const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
      std::uniform_real_distribution<double> u(-limit, limit);
      for (auto& v : p->value.data()) v = static_cast<T>(u(rng));
    }
  }
}

/// accumulator += g^2; value -= lr * g / (sqrt(accumulator) + eps).
template <typename T>
void adagrad_step(Parameter<T>& p, double lr, double eps = kAdagradEpsilon) {
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (!std::isfinite(static_cast<double>(p.grad[i]))) {
      throw NumericError("non-finite gradient in '" + p.name + "' at element " + std::to_string(i));
    }
  }
  for (std::size_t i = 0; i < p.size(); ++i) {
    const T g = p.grad[i];
    p.accumulator[i] += g * g;
    p.value[i] -= static_cast<T>(lr) * g / (std::sqrt(p.accumulator[i]) + static_cast<T>(eps));
  }
}

/// Shuffled order for one epoch; a pure function of (seed, epoch, n).
inline std::vector<std::size_t> epoch_order(std::uint64_t seed, std::size_t epoch, std::size_t n) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(epoch), 0x1d2a3b4cu};
  std::mt19937_64 rng(seq);
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

/// Gathers rows `idx` of `samples` (any rank, first axis = sample) into a
/// batch shaped [idx.size(), ...sample_shape].
template <typename T>
Tensor<T> gather(const Tensor<T>& samples, std::span<const std::size_t> idx, const Shape& sample_shape) {
  const std::size_t stride = shape_size(sample_shape);
  Shape s{idx.size()};
  s.insert(s.end(), sample_shape.begin(), sample_shape.end());
  Tensor<T> out(s);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    std::copy_n(samples.raw() + idx[i] * stride, stride, out.raw() + i * stride);
  }
  return out;
}

using EpochCallback = std::function<void(const EpochStats&)>;

/// Mini-batch softmax cross-entropy descent with Adagrad. `samples` holds one
/// patch per label with the model's per-sample size (layout is reshaped to
/// the model's input shape). Returns per-epoch history.
template <typename T>
TrainHistory train(Model<T>& model, const Tensor<T>& samples, std::span<const int> labels,
                   const TrainConfig& cfg, const EpochCallback& on_epoch = {}) {
  cfg.validate();
  const Shape& in = model.input_shape();
  const std::size_t n = labels.size();
  if (n == 0) throw ArgumentError("train: no samples");
  if (samples.size() != n * shape_size(in)) {
    throw DimensionError("train: " + shape_str(samples.shape()) + " does not hold " +
                         std::to_string(n) + " samples of " + shape_str(in));
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= model.classes()) {
      throw IndexError("train: label " + std::to_string(labels[i]) + " of sample " + std::to_string(i) +
                       " outside [0," + std::to_string(model.classes()) + ")");
    }
  }
  auto params = model.parameters();
  TrainHistory history;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    const auto order = epoch_order(cfg.seed, epoch, n);
    double loss_sum = 0.0;
    std::size_t correct = 0;
    std::size_t batch_no = 0;
    for (std::size_t b = 0; b < n; b += cfg.batch_size, ++batch_no) {
      const std::size_t m = std::min(cfg.batch_size, n - b);
      const std::span<const std::size_t> idx(order.data() + b, m);
      const auto batch = gather(samples, idx, in);
      std::vector<int> y(m);
      for (std::size_t i = 0; i < m; ++i) y[i] = labels[idx[i]];
      Tensor<T> logits;
      const double loss = static_cast<double>(model.loss_and_gradients(batch, y, &logits));
      if (!std::isfinite(loss)) {
        throw NumericError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                           std::to_string(batch_no));
      }
      loss_sum += loss * static_cast<double>(m);
      const auto pred = argmax_rows(logits);
      for (std::size_t i = 0; i < m; ++i) correct += pred[i] == y[i];
      try {
        for (auto* p : params) {
          if (p->trainable) adagrad_step(*p, cfg.learning_rate, cfg.adagrad_eps);
        }
      } catch (const NumericError& e) {
        throw NumericError(std::string(e.what()) + " (epoch " + std::to_string(epoch) + ", batch " +
                           std::to_string(batch_no) + ")");
      }
    }
    EpochStats st;
    st.epoch = epoch;
    st.loss = loss_sum / static_cast<double>(n);
    st.accuracy = static_cast<double>(correct) / static_cast<double>(n);
    st.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    history.epochs.push_back(st);
    if (on_epoch) on_epoch(st);
  }
  return history;
}

/// Ordered key=value record of a run.
class ExperimentLog {
 public:
  template <typename V>
  ExperimentLog& set(const std::string& key, const V& value) {
    std::ostringstream os;
    os.precision(17);
    os << value;
    for (auto& [k, v] : entries_) {
      if (k == key) {
        v = os.str();
        return *this;
      }
    }
    entries_.emplace_back(key, os.str());
    return *this;
  }

  const std::vector<std::pair<std::string, std::string>>& entries() const { return entries_; }

  std::string str() const {
    std::string s;
    for (const auto& [k, v] : entries_) s += k + "=" + v + "\n";
    return s;
  }

 private:
  std::vector<std::pair<std::string, std::string>> entries_;
};

}  // namespace irx
