#pragma once

#include <cstddef>
#include <iomanip>
#include <memory>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "irx/module.hpp"

namespace irx {

enum class ModelKind { irx1d, cnn2d };

inline const char* to_string(ModelKind k) { return k == ModelKind::irx1d ? "irx1d" : "cnn2d"; }

// Everything needed to rebuild a model's architecture.
struct ModelInfo {
  ModelKind kind = ModelKind::irx1d;
  std::size_t bands = 0;
  std::size_t classes = 0;
  std::size_t patch = 0;
  std::string arch;  // encoded 2-D CNN configuration; empty for IRX-1D
};

/// A classifier: an owned layer graph plus the per-sample input shape it
/// expects. Output of forward/infer is logits [N, classes].
template <typename T>
class Model {
 public:
  Model(ModelInfo info, Shape input_shape, std::unique_ptr<Sequential<T>> net)
      : info_(std::move(info)), input_shape_(std::move(input_shape)), net_(std::move(net)) {
    (void)net_->output_shape(input_shape_);  // validates the whole chain
  }

  Model(Model&&) noexcept = default;
  Model& operator=(Model&&) noexcept = default;

  const ModelInfo& info() const { return info_; }
  const Shape& input_shape() const { return input_shape_; }
  std::size_t classes() const { return info_.classes; }

  Tensor<T> forward(const Tensor<T>& batch) {
    check_batch(batch);
    auto out = net_->forward(batch);
    recorded_ = true;
    return out;
  }

  Tensor<T> infer(const Tensor<T>& batch) const {
    check_batch(batch);
    return net_->infer(batch);
  }

  void backward(const Tensor<T>& dlogits) {
    if (!recorded_) throw StateError("model backward called before forward");
    recorded_ = false;
    (void)net_->backward(dlogits);
  }

  /// One training evaluation: zero gradients, forward, softmax
  /// cross-entropy, backward. Returns the mean loss and leaves gradients in
  /// every parameter.
  T loss_and_gradients(const Tensor<T>& batch, std::span<const int> labels,
                       Tensor<T>* logits_out = nullptr) {
    zero_grad();
    auto logits = forward(batch);
    const T loss = softmax_xent(logits, labels);
    backward(softmax_xent_backward(logits, labels));
    if (logits_out) *logits_out = std::move(logits);
    return loss;
  }

  void zero_grad() {
    for (auto* p : parameters()) p->zero_grad();
  }

  std::vector<Parameter<T>*> parameters() {
    std::vector<Parameter<T>*> out;
    net_->collect(out);
    return out;
  }
  std::vector<const Parameter<T>*> parameters() const {
    std::vector<const Parameter<T>*> out;
    static_cast<const Module<T>&>(*net_).collect(out);
    return out;
  }

  Parameter<T>* find(const std::string& name) {
    for (auto* p : parameters()) {
      if (p->name == name) return p;
    }
    return nullptr;
  }

  std::size_t parameter_count() const { return net_->parameter_count(); }

  std::size_t trainable_count() const {
    std::size_t n = 0;
    for (auto* p : parameters()) {
      if (p->trainable) n += p->size();
    }
    return n;
  }

  std::vector<LayerRow> layers() const {
    std::vector<LayerRow> rows;
    net_->describe(input_shape_, rows);
    return rows;
  }

  // Human-readable per-layer report in the style of a Keras summary.
  std::string summary() const {
    std::ostringstream os;
    os << "Model: " << to_string(info_.kind) << " (bands=" << info_.bands
       << ", classes=" << info_.classes << ", patch=" << info_.patch << ")\n";
    if (!info_.arch.empty()) os << "Architecture: " << info_.arch << "\n";
    os << "Input: " << shape_str(input_shape_) << "\n";
    os << std::left << std::setw(36) << "Layer" << std::setw(26) << "Type" << std::setw(16)
       << "Output" << std::right << std::setw(10) << "Params" << "\n";
    os << std::string(88, '-') << "\n";
    for (const auto& r : layers()) {
      os << std::left << std::setw(36) << r.name << std::setw(26) << r.type << std::setw(16)
         << shape_str(r.output) << std::right << std::setw(10) << r.params << "\n";
    }
    os << std::string(88, '-') << "\n";
    os << "Total params: " << parameter_count() << "\n";
    os << "Trainable params: " << trainable_count() << "\n";
    os << "Non-trainable params: " << parameter_count() - trainable_count() << "\n";
    return os.str();
  }

 private:
  void check_batch(const Tensor<T>& batch) const {
    if (batch.rank() != input_shape_.size() + 1 ||
        !std::equal(input_shape_.begin(), input_shape_.end(), batch.shape().begin() + 1)) {
      throw DimensionError("model expects batches of " + shape_str(input_shape_) + ", got " +
                           shape_str(batch.shape()));
    }
  }

  ModelInfo info_;
  Shape input_shape_;
  std::unique_ptr<Sequential<T>> net_;
  bool recorded_ = false;
};

}  // namespace irx
