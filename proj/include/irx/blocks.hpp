#pragma once

// Inception, ResNet and Xception building blocks with kernel size 1,
// operating on sequence features [N, L, C].

#include <array>
#include <cstddef>
#include <memory>
#include <string>
#include <vector>

#include "irx/module.hpp"

namespace irx {

struct InceptionSpec {
  // {(f1), (f2, f3), (f4, f5), (f6)}
  std::size_t f1 = 64, f2 = 64, f3 = 64, f4 = 64, f5 = 64, f6 = 64;
  std::size_t pool_window = 3;

  std::size_t out_channels() const { return f1 + f3 + f5 + f6; }
};

struct ResidualSpec {
  std::size_t n1 = 64, n2 = 64, n3 = 256;
};

struct XceptionSpec {
  std::size_t s1 = 64, s2 = 64, s3 = 64;  // separable stages of the main path
  std::size_t shortcut = 64;
};

// Pointwise conv with bias followed by ReLU.
template <typename T>
ModulePtr<T> conv_relu(const std::string& name, std::size_t in, std::size_t out) {
  auto s = std::make_unique<Sequential<T>>(name);
  s->template add<Pointwise<T>>(name + ".conv", in, out);
  s->template add<ReLU<T>>(name + ".relu");
  return s;
}

/// Four parallel paths concatenated along channels:
/// conv(f1); conv(f2)->conv(f3); conv(f4)->conv(f5); maxpool->conv(f6).
template <typename T>
class InceptionBlock : public Module<T> {
 public:
  InceptionBlock(const std::string& name, std::size_t in, const InceptionSpec& spec = {})
      : Module<T>(name), in_(in), spec_(spec) {
    auto p1 = std::make_unique<Sequential<T>>(name + ".path1");
    p1->append(conv_relu<T>(name + ".path1.a", in, spec.f1));
    auto p2 = std::make_unique<Sequential<T>>(name + ".path2");
    p2->append(conv_relu<T>(name + ".path2.a", in, spec.f2));
    p2->append(conv_relu<T>(name + ".path2.b", spec.f2, spec.f3));
    auto p3 = std::make_unique<Sequential<T>>(name + ".path3");
    p3->append(conv_relu<T>(name + ".path3.a", in, spec.f4));
    p3->append(conv_relu<T>(name + ".path3.b", spec.f4, spec.f5));
    auto p4 = std::make_unique<Sequential<T>>(name + ".path4");
    p4->template add<MaxPoolSeq<T>>(name + ".path4.pool", spec.pool_window);
    p4->append(conv_relu<T>(name + ".path4.a", in, spec.f6));
    paths_[0] = std::move(p1);
    paths_[1] = std::move(p2);
    paths_[2] = std::move(p3);
    paths_[3] = std::move(p4);
  }

  std::string type() const override { return "Inception"; }

  Tensor<T> forward(const Tensor<T>& x) override {
    check_input(x.shape());
    std::array<Tensor<T>, 4> outs;
    for (std::size_t i = 0; i < 4; ++i) outs[i] = paths_[i]->forward(x);
    widths_ = {outs[0].channels(), outs[1].channels(), outs[2].channels(), outs[3].channels()};
    recorded_ = true;
    return concat_channels<T>(outs);
  }

  Tensor<T> infer(const Tensor<T>& x) const override {
    check_input(x.shape());
    std::array<Tensor<T>, 4> outs;
    for (std::size_t i = 0; i < 4; ++i) outs[i] = paths_[i]->infer(x);
    return concat_channels<T>(outs);
  }

  Tensor<T> backward(const Tensor<T>& dy) override {
    this->require_cache(recorded_);
    recorded_ = false;
    Tensor<T> dx;
    std::size_t offset = 0;
    for (std::size_t i = 0; i < 4; ++i) {
      auto g = paths_[i]->backward(slice_channels(dy, offset, widths_[i]));
      offset += widths_[i];
      if (i == 0) {
        dx = std::move(g);
      } else {
        for (std::size_t j = 0; j < dx.size(); ++j) dx[j] += g[j];
      }
    }
    return dx;
  }

  Shape output_shape(const Shape& in) const override {
    check_input(in);
    Shape s = in;
    s.back() = 0;
    for (const auto& p : paths_) s.back() += p->output_shape(in).back();
    return s;
  }

  void collect(std::vector<Parameter<T>*>& out) override {
    for (auto& p : paths_) p->collect(out);
  }
  void collect(std::vector<const Parameter<T>*>& out) const override {
    for (const auto& p : paths_) static_cast<const Module<T>&>(*p).collect(out);
  }
  void describe(const Shape& in, std::vector<LayerRow>& rows) const override {
    for (const auto& p : paths_) p->describe(in, rows);
    rows.push_back({this->name() + ".concat", "Concat", output_shape(in), 0});
  }

  const InceptionSpec& spec() const { return spec_; }

 private:
  void check_input(const Shape& in) const {
    if (in.empty() || in.back() != in_) {
      throw DimensionError(this->name() + ": expected " + std::to_string(in_) +
                           " input channels, got " + shape_str(in));
    }
  }

  std::size_t in_;
  InceptionSpec spec_;
  std::array<ModulePtr<T>, 4> paths_;
  std::array<std::size_t, 4> widths_{};
  bool recorded_ = false;
};

/// Residual unit: conv/BN/ReLU (n1), conv/BN/ReLU (n2), conv/BN (n3), then
/// addition with the shortcut and a final ReLU. With `project == false`
/// the shortcut is the identity (identity block) and n3 must equal the input
/// width; otherwise the shortcut is a pointwise conv + BN (convolution block).
template <typename T>
class ResidualBlock : public Module<T> {
 public:
  ResidualBlock(const std::string& name, std::size_t in, const ResidualSpec& spec, bool project)
      : Module<T>(name), in_(in), spec_(spec), project_(project) {
    if (!project && spec.n3 != in) {
      throw DimensionError(name + ": identity block needs n3 (" + std::to_string(spec.n3) +
                           ") equal to input channels (" + std::to_string(in) + ")");
    }
    main_ = std::make_unique<Sequential<T>>(name + ".main");
    main_->template add<Pointwise<T>>(name + ".conv1", in, spec.n1);
    main_->template add<BatchNorm<T>>(name + ".bn1", spec.n1);
    main_->template add<ReLU<T>>(name + ".relu1");
    main_->template add<Pointwise<T>>(name + ".conv2", spec.n1, spec.n2);
    main_->template add<BatchNorm<T>>(name + ".bn2", spec.n2);
    main_->template add<ReLU<T>>(name + ".relu2");
    main_->template add<Pointwise<T>>(name + ".conv3", spec.n2, spec.n3);
    main_->template add<BatchNorm<T>>(name + ".bn3", spec.n3);
    if (project) {
      shortcut_ = std::make_unique<Sequential<T>>(name + ".shortcut");
      shortcut_->template add<Pointwise<T>>(name + ".shortcut.conv", in, spec.n3);
      shortcut_->template add<BatchNorm<T>>(name + ".shortcut.bn", spec.n3);
    }
    out_relu_ = std::make_unique<ReLU<T>>(name + ".relu_out");
  }

  std::string type() const override { return project_ ? "ConvBlock" : "IdentityBlock"; }

  Tensor<T> forward(const Tensor<T>& x) override {
    check_input(x.shape());
    auto a = main_->forward(x);
    auto b = shortcut_ ? shortcut_->forward(x) : x;
    return out_relu_->forward(add(a, b));
  }

  Tensor<T> infer(const Tensor<T>& x) const override {
    check_input(x.shape());
    auto a = main_->infer(x);
    auto b = shortcut_ ? shortcut_->infer(x) : x;
    return relu(add(a, b));
  }

  Tensor<T> backward(const Tensor<T>& dy) override {
    auto g = out_relu_->backward(dy);
    auto dx = main_->backward(g);
    if (shortcut_) g = shortcut_->backward(g);
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += g[i];
    return dx;
  }

  Shape output_shape(const Shape& in) const override {
    check_input(in);
    return main_->output_shape(in);
  }

  void collect(std::vector<Parameter<T>*>& out) override {
    main_->collect(out);
    if (shortcut_) shortcut_->collect(out);
  }
  void collect(std::vector<const Parameter<T>*>& out) const override {
    static_cast<const Module<T>&>(*main_).collect(out);
    if (shortcut_) static_cast<const Module<T>&>(*shortcut_).collect(out);
  }
  void describe(const Shape& in, std::vector<LayerRow>& rows) const override {
    main_->describe(in, rows);
    if (shortcut_) shortcut_->describe(in, rows);
    rows.push_back({this->name() + ".add", "Add", output_shape(in), 0});
  }

  Sequential<T>& main_path() { return *main_; }
  Sequential<T>* shortcut_path() { return shortcut_.get(); }

 private:
  void check_input(const Shape& in) const {
    if (in.empty() || in.back() != in_) {
      throw DimensionError(this->name() + ": expected " + std::to_string(in_) +
                           " input channels, got " + shape_str(in));
    }
  }

  std::size_t in_;
  ResidualSpec spec_;
  bool project_;
  std::unique_ptr<Sequential<T>> main_;
  std::unique_ptr<Sequential<T>> shortcut_;
  std::unique_ptr<ReLU<T>> out_relu_;
};

template <typename T>
std::unique_ptr<ResidualBlock<T>> make_identity_block(const std::string& name, std::size_t in,
                                                      const ResidualSpec& spec = {}) {
  return std::make_unique<ResidualBlock<T>>(name, in, spec, false);
}

template <typename T>
std::unique_ptr<ResidualBlock<T>> make_conv_block(const std::string& name, std::size_t in,
                                                  const ResidualSpec& spec = {}) {
  return std::make_unique<ResidualBlock<T>>(name, in, spec, true);
}

// Depthwise (no bias) then pointwise (with bias), optionally batch norm.
// Parameter count: in + in*out + out (+ 4*out with batch norm).
template <typename T>
std::unique_ptr<Sequential<T>> make_separable(const std::string& name, std::size_t in,
                                              std::size_t out, bool batch_norm) {
  auto s = std::make_unique<Sequential<T>>(name);
  s->template add<Depthwise<T>>(name + ".depthwise", in);
  s->template add<Pointwise<T>>(name + ".pointwise", in, out);
  if (batch_norm) s->template add<BatchNorm<T>>(name + ".bn", out);
  return s;
}

/// Two parallel paths merged by addition, then ReLU.
///   main:     sep(in->s1)+BN+ReLU, sep(s1->s2)+BN+ReLU, sep(s2->s3)
///   shortcut: pointwise(in->shortcut)+BN
template <typename T>
class XceptionBlock : public Module<T> {
 public:
  XceptionBlock(const std::string& name, std::size_t in, const XceptionSpec& spec = {})
      : Module<T>(name), in_(in), spec_(spec) {
    if (spec.s3 != spec.shortcut) {
      throw DimensionError(name + ": main path width " + std::to_string(spec.s3) +
                           " differs from shortcut width " + std::to_string(spec.shortcut));
    }
    main_ = std::make_unique<Sequential<T>>(name + ".main");
    main_->append(make_separable<T>(name + ".sep1", in, spec.s1, true));
    main_->template add<ReLU<T>>(name + ".sep1.relu");
    main_->append(make_separable<T>(name + ".sep2", spec.s1, spec.s2, true));
    main_->template add<ReLU<T>>(name + ".sep2.relu");
    main_->append(make_separable<T>(name + ".sep3", spec.s2, spec.s3, false));
    shortcut_ = std::make_unique<Sequential<T>>(name + ".shortcut");
    shortcut_->template add<Pointwise<T>>(name + ".shortcut.conv", in, spec.shortcut);
    shortcut_->template add<BatchNorm<T>>(name + ".shortcut.bn", spec.shortcut);
    out_relu_ = std::make_unique<ReLU<T>>(name + ".relu_out");
  }

  std::string type() const override { return "Xception"; }

  Tensor<T> forward(const Tensor<T>& x) override {
    check_input(x.shape());
    auto a = main_->forward(x);
    auto b = shortcut_->forward(x);
    return out_relu_->forward(add(a, b));
  }

  Tensor<T> infer(const Tensor<T>& x) const override {
    check_input(x.shape());
    return relu(add(main_->infer(x), shortcut_->infer(x)));
  }

  Tensor<T> backward(const Tensor<T>& dy) override {
    auto g = out_relu_->backward(dy);
    auto dx = main_->backward(g);
    auto ds = shortcut_->backward(g);
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += ds[i];
    return dx;
  }

  Shape output_shape(const Shape& in) const override {
    check_input(in);
    return main_->output_shape(in);
  }

  void collect(std::vector<Parameter<T>*>& out) override {
    main_->collect(out);
    shortcut_->collect(out);
  }
  void collect(std::vector<const Parameter<T>*>& out) const override {
    static_cast<const Module<T>&>(*main_).collect(out);
    static_cast<const Module<T>&>(*shortcut_).collect(out);
  }
  void describe(const Shape& in, std::vector<LayerRow>& rows) const override {
    main_->describe(in, rows);
    shortcut_->describe(in, rows);
    rows.push_back({this->name() + ".add", "Add", output_shape(in), 0});
  }

 private:
  void check_input(const Shape& in) const {
    if (in.empty() || in.back() != in_) {
      throw DimensionError(this->name() + ": expected " + std::to_string(in_) +
                           " input channels, got " + shape_str(in));
    }
  }

  std::size_t in_;
  XceptionSpec spec_;
  std::unique_ptr<Sequential<T>> main_;
  std::unique_ptr<Sequential<T>> shortcut_;
  std::unique_ptr<ReLU<T>> out_relu_;
};

// Closed-form parameter counts, cross-checked in tests against the tensors
// the blocks actually allocate.
inline std::size_t inception_param_count(std::size_t in, const InceptionSpec& s = {}) {
  return (in * s.f1 + s.f1) + (in * s.f2 + s.f2) + (s.f2 * s.f3 + s.f3) + (in * s.f4 + s.f4) +
         (s.f4 * s.f5 + s.f5) + (in * s.f6 + s.f6);
}

inline std::size_t residual_param_count(std::size_t in, const ResidualSpec& s, bool project) {
  std::size_t n = (in * s.n1 + s.n1) + (s.n1 * s.n2 + s.n2) + (s.n2 * s.n3 + s.n3);
  n += 4 * (s.n1 + s.n2 + s.n3);
  if (project) n += in * s.n3 + s.n3 + 4 * s.n3;
  return n;
}

inline std::size_t separable_param_count(std::size_t in, std::size_t out, bool batch_norm) {
  return in + in * out + out + (batch_norm ? 4 * out : 0);
}

inline std::size_t xception_param_count(std::size_t in, const XceptionSpec& s = {}) {
  return separable_param_count(in, s.s1, true) + separable_param_count(s.s1, s.s2, true) +
         separable_param_count(s.s2, s.s3, false) + (in * s.shortcut + s.shortcut) +
         4 * s.shortcut;
}

}  // namespace irx
