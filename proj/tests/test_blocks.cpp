#include <gtest/gtest.h>

#include <random>

#include "gradcheck.hpp"
#include "irx/blocks.hpp"
#include "irx/zoo.hpp"

using namespace irx;
using namespace irx::testing;

namespace {

template <typename M>
std::size_t brute_force_count(const M& m) {
  std::vector<const Parameter<double>*> ps;
  m.collect(ps);
  std::size_t n = 0;
  for (auto* p : ps) {
    std::size_t e = 1;
    for (auto d : p->value.shape()) e *= d;
    n += e;
  }
  return n;
}

void randomize(Module<double>& m, std::mt19937_64& rng) {
  std::vector<Parameter<double>*> ps;
  m.collect(ps);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  for (auto* p : ps) {
    if (!p->trainable) continue;
    const bool is_gamma = p->name.ends_with(".gamma") || p->name.ends_with(".kernel");
    for (auto& v : p->value.data()) v = is_gamma ? 1.0 + u(rng) : u(rng);
  }
}

void zero_all(Module<double>& m) {
  std::vector<Parameter<double>*> ps;
  m.collect(ps);
  for (auto* p : ps) {
    if (p->trainable) p->value.fill(0.0);
  }
}

}  // namespace

// -- inception -------------------------------------------------------------

TEST(Inception, OutputWidthAndLength) {
  for (std::size_t c : {1u, 4u, 65u}) {
    InceptionBlock<double> b("inc", c);
    for (std::size_t l : {1u, 9u, 49u}) EXPECT_EQ(b.output_shape({l, c}), (Shape{l, 256}));
  }
}

TEST(Inception, ParameterCount) {
  for (std::size_t c : {1u, 4u, 6u, 65u, 220u, 372u}) {
    InceptionBlock<double> b("inc", c);
    EXPECT_EQ(brute_force_count(b), 256 * c + 256 + 2 * 4160);
    EXPECT_EQ(inception_param_count(c), brute_force_count(b));
  }
}

TEST(Inception, PathsAreConcatenatedInOrder) {
  std::mt19937_64 rng(1);
  InceptionBlock<double> b("inc", 3);
  randomize(b, rng);
  auto x = random_tensor({2, 5, 3}, rng);
  auto y = b.infer(x);
  // path1 alone is relu(x W + b) over the first 64 channels
  std::vector<Parameter<double>*> ps;
  b.collect(ps);
  auto p1 = relu(pointwise_conv(x, ps[0]->value, ps[1]->value));
  for (std::size_t r = 0; r < 10; ++r) {
    for (std::size_t c = 0; c < 64; ++c) EXPECT_EQ(y[r * 256 + c], p1[r * 64 + c]);
  }
}

TEST(Inception, RejectsWrongWidth) {
  InceptionBlock<double> b("inc", 4);
  EXPECT_THROW(b.infer(Tensor<double>({2, 9, 5})), DimensionError);
}

// -- residual ----------------------------------------------------------------

TEST(IdentityBlock, ZeroWeightsPassReluOfInput) {
  auto b = make_identity_block<double>("id", 256);
  zero_all(*b);
  std::mt19937_64 rng(2);
  auto x = random_tensor({2, 9, 256}, rng);
  EXPECT_EQ(b->forward(x), relu(x));
  EXPECT_EQ(b->infer(x), relu(x));
}

TEST(IdentityBlock, ShapeAndCount) {
  auto b = make_identity_block<double>("id", 256);
  for (std::size_t l : {1u, 25u, 81u}) EXPECT_EQ(b->output_shape({l, 256}), (Shape{l, 256}));
  EXPECT_EQ(brute_force_count(*b), 38'784u);
  EXPECT_EQ(residual_param_count(256, {}, false), 38'784u);
  EXPECT_THROW(b->output_shape({9, 64}), DimensionError);
  EXPECT_THROW(make_identity_block<double>("bad", 128), DimensionError);
}

TEST(ConvBlock, WidthIndependentOfInput) {
  for (std::size_t c : {3u, 64u, 256u, 300u}) {
    auto b = make_conv_block<double>("cb", c);
    EXPECT_EQ(b->output_shape({7, c}), (Shape{7, 256}));
    EXPECT_EQ(brute_force_count(*b), residual_param_count(c, {}, true));
  }
  EXPECT_EQ(residual_param_count(256, {}, true), 38'784u + 256 * 256 + 256 + 4 * 256);
}

TEST(ConvBlock, IdentityProjectionMatchesIdentityBlock) {
  std::mt19937_64 rng(3);
  auto id = make_identity_block<double>("id", 256);
  auto cb = make_conv_block<double>("cb", 256);
  randomize(*id, rng);
  std::vector<Parameter<double>*> a, b;
  id->collect(a);
  cb->collect(b);
  // Shared main-path tensors first, projection conv + BN last.
  for (std::size_t i = 0; i < a.size(); ++i) b[i]->value = a[i]->value;
  auto& proj_w = b[a.size()]->value;
  proj_w.fill(0.0);
  for (std::size_t i = 0; i < 256; ++i) proj_w.at(i, i) = 1.0;
  // BN on the projection in inference with mean 0, var 1 - eps is exactly the identity.
  b[a.size() + 5]->value.fill(1.0 - kBatchNormEpsilon);
  auto x = random_tensor({2, 5, 256}, rng);
  auto ya = id->infer(x);
  auto yb = cb->infer(x);
  for (std::size_t i = 0; i < ya.size(); ++i) EXPECT_NEAR(ya[i], yb[i], 1e-12);
}

// -- xception ----------------------------------------------------------------

TEST(Xception, ZeroWeightsGiveZero) {
  XceptionBlock<double> b("x", 256);
  zero_all(b);
  std::mt19937_64 rng(4);
  auto x = random_tensor({2, 9, 256}, rng);
  const auto trained = b.forward(x);
  const auto inferred = b.infer(x);
  for (double v : trained.data()) EXPECT_EQ(v, 0.0);
  for (double v : inferred.data()) EXPECT_EQ(v, 0.0);
}

TEST(Xception, ShapeAndCount) {
  XceptionBlock<double> b("x", 256);
  for (std::size_t l : {1u, 49u}) EXPECT_EQ(b.output_shape({l, 256}), (Shape{l, 64}));
  EXPECT_EQ(brute_force_count(b), 42'368u);
  EXPECT_EQ(16'704u + 4'224 + 4'224 + 16'448 + 256 + 512, 42'368u);
  EXPECT_EQ(xception_param_count(256), 42'368u);
  EXPECT_THROW(b.output_shape({9, 64}), DimensionError);
}

TEST(Separable, CountFormula) {
  for (std::size_t in : {1u, 64u, 256u}) {
    for (std::size_t out : {1u, 64u}) {
      for (bool bn : {false, true}) {
        auto s = make_separable<double>("s", in, out, bn);
        EXPECT_EQ(brute_force_count(*s), in + in * out + out + (bn ? 4 * out : 0));
        EXPECT_EQ(separable_param_count(in, out, bn), brute_force_count(*s));
      }
    }
  }
}

TEST(Blocks, ChannelChainIsForced) {
  InceptionBlock<double> inc("inc", 7);
  auto id = make_identity_block<double>("id", 256);
  XceptionBlock<double> x("x", 256);
  auto s = inc.output_shape({9, 7});
  s = id->output_shape(s);
  s = x.output_shape(s);
  EXPECT_EQ(s, (Shape{9, 64}));
}

TEST(Blocks, BackwardWithoutForwardThrows) {
  InceptionBlock<double> inc("inc", 2);
  EXPECT_THROW(inc.backward(Tensor<double>({1, 3, 256})), StateError);
  auto id = make_identity_block<double>("id", 256);
  EXPECT_THROW(id->backward(Tensor<double>({1, 3, 256})), StateError);
  XceptionBlock<double> x("x", 256);
  EXPECT_THROW(x.backward(Tensor<double>({1, 3, 64})), StateError);
}

// -- gradient checks through whole blocks -------------------------------------

class BlockGradient : public ::testing::TestWithParam<int> {
 protected:
  std::mt19937_64 rng{static_cast<std::uint64_t>(GetParam()) * 104729 + 17};
};

TEST_P(BlockGradient, Inception) {
  InceptionSpec small{4, 3, 5, 2, 3, 4, 3};
  InceptionBlock<double> b("inc", 3, small);
  randomize(b, rng);
  auto r = check_module(b, random_tensor({2, 5, 3}, rng), rng);
  EXPECT_LT(r.max_error, kTolerance) << r.worst;
}

TEST_P(BlockGradient, IdentityBlock) {
  auto b = make_identity_block<double>("id", 6, {4, 5, 6});
  randomize(*b, rng);
  auto r = check_module(*b, random_tensor({2, 4, 6}, rng), rng);
  EXPECT_LT(r.max_error, kTolerance) << r.worst;
}

TEST_P(BlockGradient, ConvBlock) {
  auto b = make_conv_block<double>("cb", 3, {4, 5, 6});
  randomize(*b, rng);
  auto r = check_module(*b, random_tensor({2, 4, 3}, rng), rng);
  EXPECT_LT(r.max_error, kTolerance) << r.worst;
}

TEST_P(BlockGradient, Xception) {
  XceptionBlock<double> b("x", 6, {4, 5, 3, 3});
  randomize(b, rng);
  auto r = check_module(b, random_tensor({2, 4, 6}, rng), rng);
  EXPECT_LT(r.max_error, kTolerance) << r.worst;
}

INSTANTIATE_TEST_SUITE_P(Seeds, BlockGradient, ::testing::Range(0, 5));
