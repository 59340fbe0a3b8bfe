#pragma once

#include <cstddef>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "irx/errors.hpp"
#include "irx/ops.hpp"
#include "irx/tensor.hpp"

namespace irx {

/// Trainable (or tracked) tensor together with its gradient and Adagrad
/// accumulator. Batch-norm running statistics are Parameters with
/// `trainable == false`: they are counted and checkpointed but never stepped.
template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;
  Tensor<T> accumulator;
  bool trainable = true;

  Parameter(std::string n, Shape shape, bool is_trainable = true, T fill = T(0))
      : name(std::move(n)),
        value(shape, fill),
        grad(shape),
        accumulator(shape),
        trainable(is_trainable) {}

  std::size_t size() const { return value.size(); }
  void zero_grad() { grad.fill(T(0)); }
};

// One row of a model description: a leaf layer and its output shape.
struct LayerRow {
  std::string name;
  std::string type;
  Shape output;  // per sample
  std::size_t params = 0;
};

/// Base class of every layer and block.
///
/// `forward` is the training pass: it records what `backward` needs and
/// uses batch statistics in batch norm. `infer` is a pure function of the
/// input and the current parameter values.
template <typename T>
class Module {
 public:
  explicit Module(std::string name) : name_(std::move(name)) {}
  virtual ~Module() = default;
  Module(const Module&) = delete;
  Module& operator=(const Module&) = delete;

  const std::string& name() const { return name_; }
  virtual std::string type() const = 0;

  virtual Tensor<T> forward(const Tensor<T>& x) = 0;
  virtual Tensor<T> infer(const Tensor<T>& x) const = 0;
  virtual Tensor<T> backward(const Tensor<T>& dy) = 0;

  // Shape inference on a single sample (no batch axis).
  virtual Shape output_shape(const Shape& in) const = 0;

  virtual void collect(std::vector<Parameter<T>*>& out) { (void)out; }
  virtual void collect(std::vector<const Parameter<T>*>& out) const { (void)out; }

  virtual void describe(const Shape& in, std::vector<LayerRow>& rows) const {
    std::vector<const Parameter<T>*> ps;
    collect(ps);
    std::size_t n = 0;
    for (auto* p : ps) n += p->size();
    rows.push_back({name_, type(), output_shape(in), n});
  }

  std::size_t parameter_count() const {
    std::vector<const Parameter<T>*> ps;
    collect(ps);
    std::size_t n = 0;
    for (auto* p : ps) n += p->size();
    return n;
  }

 protected:
  void require_cache(bool present) const {
    if (!present) throw StateError(name_ + ": backward called without a recorded forward pass");
  }

 private:
  std::string name_;
};

template <typename T>
using ModulePtr = std::unique_ptr<Module<T>>;

// ---------------------------------------------------------------------------

template <typename T>
class Sequential : public Module<T> {
 public:
  explicit Sequential(std::string name) : Module<T>(std::move(name)) {}

  std::string type() const override { return "Sequential"; }

  template <typename M, typename... Args>
  M& add(Args&&... args) {
    auto m = std::make_unique<M>(std::forward<Args>(args)...);
    M& ref = *m;
    children_.push_back(std::move(m));
    return ref;
  }

  void append(ModulePtr<T> m) { children_.push_back(std::move(m)); }

  Tensor<T> forward(const Tensor<T>& x) override {
    Tensor<T> h = x;
    for (auto& c : children_) h = c->forward(h);
    return h;
  }

  Tensor<T> infer(const Tensor<T>& x) const override {
    Tensor<T> h = x;
    for (const auto& c : children_) h = c->infer(h);
    return h;
  }

  Tensor<T> backward(const Tensor<T>& dy) override {
    Tensor<T> g = dy;
    for (auto it = children_.rbegin(); it != children_.rend(); ++it) g = (*it)->backward(g);
    return g;
  }

  Shape output_shape(const Shape& in) const override {
    Shape s = in;
    for (const auto& c : children_) s = c->output_shape(s);
    return s;
  }

  void collect(std::vector<Parameter<T>*>& out) override {
    for (auto& c : children_) c->collect(out);
  }
  void collect(std::vector<const Parameter<T>*>& out) const override {
    for (const auto& c : children_) static_cast<const Module<T>&>(*c).collect(out);
  }

  void describe(const Shape& in, std::vector<LayerRow>& rows) const override {
    Shape s = in;
    for (const auto& c : children_) {
      c->describe(s, rows);
      s = c->output_shape(s);
    }
  }

  std::size_t size() const { return children_.size(); }
  Module<T>& child(std::size_t i) { return *children_.at(i); }
  const Module<T>& child(std::size_t i) const { return *children_.at(i); }

 private:
  std::vector<ModulePtr<T>> children_;
};

// ---------------------------------------------------------------------------
// leaf layers

/// Kernel-size-1 convolution over sequence features; also used as the
/// dense layer (rank-2 input).
template <typename T>
class Pointwise : public Module<T> {
 public:
  Pointwise(std::string name, std::size_t in, std::size_t out, bool bias = true,
            std::string kind = "Pointwise")
      : Module<T>(name),
        kind_(std::move(kind)),
        weight_(name + ".weight", {in, out}) {
    if (bias) bias_.emplace(name + ".bias", Shape{out});
  }

  std::string type() const override { return kind_; }

  Tensor<T> forward(const Tensor<T>& x) override {
    input_ = x;
    return infer(x);
  }

  Tensor<T> infer(const Tensor<T>& x) const override {
    return pointwise_conv(x, weight_.value, bias_ ? &bias_->value : nullptr);
  }

  Tensor<T> backward(const Tensor<T>& dy) override {
    this->require_cache(input_.has_value());
    auto g = pointwise_conv_backward(*input_, weight_.value, dy, bias_.has_value());
    accumulate(weight_.grad, g.dw);
    if (bias_) accumulate(bias_->grad, g.db);
    input_.reset();
    return std::move(g.dx);
  }

  Shape output_shape(const Shape& in) const override {
    if (in.empty() || in.back() != weight_.value.dim(0)) {
      throw DimensionError(this->name() + ": input " + shape_str(in) + " vs weights " +
                           shape_str(weight_.value.shape()));
    }
    Shape s = in;
    s.back() = weight_.value.dim(1);
    return s;
  }

  void collect(std::vector<Parameter<T>*>& out) override {
    out.push_back(&weight_);
    if (bias_) out.push_back(&*bias_);
  }
  void collect(std::vector<const Parameter<T>*>& out) const override {
    out.push_back(&weight_);
    if (bias_) out.push_back(&*bias_);
  }

  Parameter<T>& weight() { return weight_; }
  Parameter<T>* bias() { return bias_ ? &*bias_ : nullptr; }

 private:
  static void accumulate(Tensor<T>& into, const Tensor<T>& g) {
    for (std::size_t i = 0; i < into.size(); ++i) into[i] += g[i];
  }

  std::string kind_;
  Parameter<T> weight_;
  std::optional<Parameter<T>> bias_;
  std::optional<Tensor<T>> input_;
};

template <typename T>
class Depthwise : public Module<T> {
 public:
  Depthwise(std::string name, std::size_t channels)
      : Module<T>(name), kernel_(name + ".kernel", {channels}, true, T(1)) {}

  std::string type() const override { return "Depthwise"; }

  Tensor<T> forward(const Tensor<T>& x) override {
    input_ = x;
    return infer(x);
  }
  Tensor<T> infer(const Tensor<T>& x) const override { return depthwise_scale(x, kernel_.value); }

  Tensor<T> backward(const Tensor<T>& dy) override {
    this->require_cache(input_.has_value());
    auto [dx, dd] = depthwise_scale_backward(*input_, kernel_.value, dy);
    for (std::size_t i = 0; i < dd.size(); ++i) kernel_.grad[i] += dd[i];
    input_.reset();
    return std::move(dx);
  }

  Shape output_shape(const Shape& in) const override {
    if (in.empty() || in.back() != kernel_.value.size()) {
      throw DimensionError(this->name() + ": input " + shape_str(in) + " vs kernel " +
                           shape_str(kernel_.value.shape()));
    }
    return in;
  }

  void collect(std::vector<Parameter<T>*>& out) override { out.push_back(&kernel_); }
  void collect(std::vector<const Parameter<T>*>& out) const override { out.push_back(&kernel_); }

  Parameter<T>& kernel() { return kernel_; }

 private:
  Parameter<T> kernel_;
  std::optional<Tensor<T>> input_;
};

template <typename T>
class BatchNorm : public Module<T> {
 public:
  BatchNorm(std::string name, std::size_t channels, double eps = kBatchNormEpsilon,
            double momentum = kBatchNormMomentum)
      : Module<T>(name),
        scale_(name + ".gamma", {channels}, true, T(1)),
        shift_(name + ".beta", {channels}, true, T(0)),
        mean_(name + ".moving_mean", {channels}, false, T(0)),
        var_(name + ".moving_variance", {channels}, false, T(1)),
        eps_(eps),
        momentum_(momentum) {}

  std::string type() const override { return "BatchNorm"; }

  Tensor<T> forward(const Tensor<T>& x) override {
    auto f = batch_norm_train(x, scale_.value, shift_.value, eps_);
    for (std::size_t c = 0; c < f.mean.size(); ++c) {
      mean_.value[c] = static_cast<T>(momentum_ * mean_.value[c] + (1.0 - momentum_) * f.mean[c]);
      var_.value[c] = static_cast<T>(momentum_ * var_.value[c] + (1.0 - momentum_) * f.var[c]);
    }
    cache_ = Cache{x, std::move(f.mean), std::move(f.var)};
    return std::move(f.y);
  }

  Tensor<T> infer(const Tensor<T>& x) const override {
    return batch_norm_infer(x, scale_.value, shift_.value, mean_.value, var_.value, eps_);
  }

  Tensor<T> backward(const Tensor<T>& dy) override {
    this->require_cache(cache_.has_value());
    auto g = batch_norm_backward<T>(cache_->input, scale_.value, cache_->mean, cache_->var, dy,
                                    eps_);
    for (std::size_t c = 0; c < g.dscale.size(); ++c) {
      scale_.grad[c] += g.dscale[c];
      shift_.grad[c] += g.dshift[c];
    }
    cache_.reset();
    return std::move(g.dx);
  }

  Shape output_shape(const Shape& in) const override {
    if (in.empty() || in.back() != scale_.value.size()) {
      throw DimensionError(this->name() + ": input " + shape_str(in) + " vs " +
                           std::to_string(scale_.value.size()) + " channels");
    }
    return in;
  }

  void collect(std::vector<Parameter<T>*>& out) override {
    out.insert(out.end(), {&scale_, &shift_, &mean_, &var_});
  }
  void collect(std::vector<const Parameter<T>*>& out) const override {
    out.insert(out.end(), {&scale_, &shift_, &mean_, &var_});
  }

  Parameter<T>& scale() { return scale_; }
  Parameter<T>& shift() { return shift_; }
  Parameter<T>& moving_mean() { return mean_; }
  Parameter<T>& moving_variance() { return var_; }

 private:
  struct Cache {
    Tensor<T> input;
    std::vector<T> mean;
    std::vector<T> var;
  };

  Parameter<T> scale_;
  Parameter<T> shift_;
  Parameter<T> mean_;
  Parameter<T> var_;
  double eps_;
  double momentum_;
  std::optional<Cache> cache_;
};

template <typename T>
class ReLU : public Module<T> {
 public:
  explicit ReLU(std::string name) : Module<T>(std::move(name)) {}

  std::string type() const override { return "ReLU"; }

  Tensor<T> forward(const Tensor<T>& x) override {
    output_ = relu(x);
    return *output_;
  }
  Tensor<T> infer(const Tensor<T>& x) const override { return relu(x); }

  Tensor<T> backward(const Tensor<T>& dy) override {
    this->require_cache(output_.has_value());
    auto dx = relu_backward(*output_, dy);
    output_.reset();
    return dx;
  }

  Shape output_shape(const Shape& in) const override { return in; }

  void describe(const Shape&, std::vector<LayerRow>&) const override {}

 private:
  std::optional<Tensor<T>> output_;
};

template <typename T>
class MaxPoolSeq : public Module<T> {
 public:
  MaxPoolSeq(std::string name, std::size_t window = 3)
      : Module<T>(std::move(name)), window_(window) {}

  std::string type() const override { return "MaxPoolSeq(" + std::to_string(window_) + ")"; }

  Tensor<T> forward(const Tensor<T>& x) override {
    input_ = x;
    return maxpool_seq(x, window_);
  }
  Tensor<T> infer(const Tensor<T>& x) const override { return maxpool_seq(x, window_); }

  Tensor<T> backward(const Tensor<T>& dy) override {
    this->require_cache(input_.has_value());
    auto dx = maxpool_seq_backward(*input_, dy, window_);
    input_.reset();
    return dx;
  }

  Shape output_shape(const Shape& in) const override { return in; }

 private:
  std::size_t window_;
  std::optional<Tensor<T>> input_;
};

template <typename T>
class GlobalAvgPool : public Module<T> {
 public:
  explicit GlobalAvgPool(std::string name) : Module<T>(std::move(name)) {}

  std::string type() const override { return "GlobalAvgPool"; }

  Tensor<T> forward(const Tensor<T>& x) override {
    input_shape_ = x.shape();
    return global_avg_pool(x);
  }
  Tensor<T> infer(const Tensor<T>& x) const override { return global_avg_pool(x); }

  Tensor<T> backward(const Tensor<T>& dy) override {
    this->require_cache(input_shape_.has_value());
    auto dx = global_avg_pool_backward(*input_shape_, dy);
    input_shape_.reset();
    return dx;
  }

  Shape output_shape(const Shape& in) const override {
    if (in.size() != 2) throw DimensionError(this->name() + ": expected [L,C], got " + shape_str(in));
    return {in[1]};
  }

 private:
  std::optional<Shape> input_shape_;
};

template <typename T>
class Conv2d : public Module<T> {
 public:
  Conv2d(std::string name, std::size_t in, std::size_t out, std::size_t kernel,
         std::size_t stride = 1, Padding padding = Padding::same)
      : Module<T>(name),
        weight_(name + ".weight", {kernel, kernel, in, out}),
        bias_(name + ".bias", {out}),
        stride_(stride),
        padding_(padding) {}

  std::string type() const override {
    return "Conv2d(" + std::to_string(weight_.value.dim(0)) + "x" +
           std::to_string(weight_.value.dim(0)) + ",s" + std::to_string(stride_) + "," +
           to_string(padding_) + ")";
  }

  Tensor<T> forward(const Tensor<T>& x) override {
    input_ = x;
    return infer(x);
  }
  Tensor<T> infer(const Tensor<T>& x) const override {
    return conv2d(x, weight_.value, bias_.value, stride_, padding_);
  }

  Tensor<T> backward(const Tensor<T>& dy) override {
    this->require_cache(input_.has_value());
    auto g = conv2d_backward(*input_, weight_.value, dy, stride_, padding_);
    for (std::size_t i = 0; i < g.dw.size(); ++i) weight_.grad[i] += g.dw[i];
    for (std::size_t i = 0; i < g.db.size(); ++i) bias_.grad[i] += g.db[i];
    input_.reset();
    return std::move(g.dx);
  }

  Shape output_shape(const Shape& in) const override {
    if (in.size() != 3 || in[2] != weight_.value.dim(2)) {
      throw DimensionError(this->name() + ": input " + shape_str(in) + " vs weights " +
                           shape_str(weight_.value.shape()));
    }
    const std::size_t k = weight_.value.dim(0);
    try {
      return {out_extent(in[0], k, stride_, padding_), out_extent(in[1], k, stride_, padding_),
              weight_.value.dim(3)};
    } catch (const DimensionError& e) {
      throw DimensionError(this->name() + ": " + e.what());
    }
  }

  void collect(std::vector<Parameter<T>*>& out) override {
    out.push_back(&weight_);
    out.push_back(&bias_);
  }
  void collect(std::vector<const Parameter<T>*>& out) const override {
    out.push_back(&weight_);
    out.push_back(&bias_);
  }

 private:
  Parameter<T> weight_;
  Parameter<T> bias_;
  std::size_t stride_;
  Padding padding_;
  std::optional<Tensor<T>> input_;
};

template <typename T>
class Pool2d : public Module<T> {
 public:
  Pool2d(std::string name, std::size_t kernel, std::size_t stride, Padding padding, PoolMode mode)
      : Module<T>(std::move(name)), kernel_(kernel), stride_(stride), padding_(padding), mode_(mode) {}

  std::string type() const override {
    return std::string(mode_ == PoolMode::max ? "MaxPool2d(" : "AvgPool2d(") +
           std::to_string(kernel_) + "x" + std::to_string(kernel_) + ",s" +
           std::to_string(stride_) + "," + to_string(padding_) + ")";
  }

  Tensor<T> forward(const Tensor<T>& x) override {
    input_ = x;
    return infer(x);
  }
  Tensor<T> infer(const Tensor<T>& x) const override {
    return pool2d(x, kernel_, stride_, padding_, mode_);
  }

  Tensor<T> backward(const Tensor<T>& dy) override {
    this->require_cache(input_.has_value());
    auto dx = pool2d_backward(*input_, dy, kernel_, stride_, padding_, mode_);
    input_.reset();
    return dx;
  }

  Shape output_shape(const Shape& in) const override {
    if (in.size() != 3) throw DimensionError(this->name() + ": expected [H,W,C], got " + shape_str(in));
    try {
      return {out_extent(in[0], kernel_, stride_, padding_),
              out_extent(in[1], kernel_, stride_, padding_), in[2]};
    } catch (const DimensionError& e) {
      throw DimensionError(this->name() + ": " + e.what());
    }
  }

 private:
  std::size_t kernel_;
  std::size_t stride_;
  Padding padding_;
  PoolMode mode_;
  std::optional<Tensor<T>> input_;
};

// Collapses every per-sample axis into one; the batch axis is kept.
template <typename T>
class Flatten : public Module<T> {
 public:
  explicit Flatten(std::string name) : Module<T>(std::move(name)) {}

  std::string type() const override { return "Flatten"; }

  Tensor<T> forward(const Tensor<T>& x) override {
    input_shape_ = x.shape();
    return infer(x);
  }
  Tensor<T> infer(const Tensor<T>& x) const override {
    return x.reshaped({x.dim(0), x.size() / x.dim(0)});
  }
  Tensor<T> backward(const Tensor<T>& dy) override {
    this->require_cache(input_shape_.has_value());
    auto dx = dy.reshaped(*input_shape_);
    input_shape_.reset();
    return dx;
  }
  Shape output_shape(const Shape& in) const override { return {shape_size(in)}; }

 private:
  std::optional<Shape> input_shape_;
};

}  // namespace irx
