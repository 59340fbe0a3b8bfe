#include <gtest/gtest.h>

#include <random>

#include "gradcheck.hpp"
#include "irx/zoo.hpp"

using namespace irx;
using namespace irx::testing;

namespace {

// Published IRX-1D totals: (bands, classes, patch, total).
struct Row {
  std::size_t bands, classes, patch, total;
};
constexpr Row kPublished[] = {
    {220, 16, 9, 163'664}, {65, 8, 7, 123'464}, {6, 7, 7, 108'295}, {4, 8, 7, 107'848}};

void randomize(Model<double>& m, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  for (auto* p : m.parameters()) {
    if (!p->trainable) continue;
    const bool unit = p->name.ends_with(".gamma") || p->name.ends_with(".kernel");
    for (auto& v : p->value.data()) v = unit ? 1.0 + u(rng) : u(rng);
  }
}

}  // namespace

TEST(ParamFormula, PublishedTotals) {
  for (const auto& r : kPublished) EXPECT_EQ(param_formula(r.bands, r.classes), r.total);
  EXPECT_EQ(param_formula(372, 13), 202'381u);
}

// Re-derive base and slopes from three published rows by exact elimination,
// then confirm the fourth row and the band/class counts that fall out.
TEST(ParamFormula, LinearSolveFromPublishedRows) {
  const auto& a = kPublished[0];
  const auto& b = kPublished[1];
  const auto& c = kPublished[2];
  // total = base + x*bands + y*classes
  const long d1b = static_cast<long>(a.bands) - static_cast<long>(b.bands);
  const long d1k = static_cast<long>(a.classes) - static_cast<long>(b.classes);
  const long d1t = static_cast<long>(a.total) - static_cast<long>(b.total);
  const long d2b = static_cast<long>(b.bands) - static_cast<long>(c.bands);
  const long d2k = static_cast<long>(b.classes) - static_cast<long>(c.classes);
  const long d2t = static_cast<long>(b.total) - static_cast<long>(c.total);
  const long det = d1b * d2k - d1k * d2b;
  ASSERT_NE(det, 0);
  const long xn = d1t * d2k - d1k * d2t;
  const long yn = d1b * d2t - d1t * d2b;
  ASSERT_EQ(xn % det, 0);
  ASSERT_EQ(yn % det, 0);
  const long x = xn / det, y = yn / det;
  const long base = static_cast<long>(a.total) - x * static_cast<long>(a.bands) -
                    y * static_cast<long>(a.classes);
  EXPECT_EQ(x, 256);
  EXPECT_EQ(y, 65);
  EXPECT_EQ(base, 106'304);
  const auto& d = kPublished[3];
  EXPECT_EQ(base + x * static_cast<long>(d.bands) + y * static_cast<long>(d.classes),
            static_cast<long>(d.total));
}

TEST(ParamFormula, BaseDecomposition) {
  EXPECT_EQ(256u + 8'320 + 38'784 + 42'368 + 8'320 + 8'256, kIrxBaseParams);
}

TEST(Irx1d, PublishedCounts) {
  for (const auto& r : kPublished) {
    EXPECT_EQ(build_irx1d<float>(r.bands, r.classes, r.patch).parameter_count(), r.total);
  }
}

TEST(Irx1d, CountMatchesFormulaOverGrid) {
  for (std::size_t c : {1u, 2u, 17u, 100u, 255u, 372u, 512u}) {
    for (std::size_t k : {2u, 3u, 13u, 32u}) {
      for (std::size_t p : {3u, 5u, 7u, 9u, 15u}) {
        EXPECT_EQ(build_irx1d<float>(c, k, p).parameter_count(), param_formula(c, k))
            << c << "," << k << "," << p;
      }
    }
  }
}

TEST(Irx1d, SlopesLiveInEntryConvsAndOutputLayer) {
  auto base = build_irx1d<float>(10, 5, 7);
  auto more_bands = build_irx1d<float>(11, 5, 7);
  auto more_classes = build_irx1d<float>(10, 6, 7);
  auto a = base.parameters();
  auto b = more_bands.parameters();
  auto c = more_classes.parameters();
  ASSERT_EQ(a.size(), b.size());
  std::size_t band_delta = 0, class_delta = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i]->size() != b[i]->size()) {
      const bool entry = a[i]->name == "inception.path1.a.conv.weight" ||
                         a[i]->name == "inception.path2.a.conv.weight" ||
                         a[i]->name == "inception.path3.a.conv.weight" ||
                         a[i]->name == "inception.path4.a.conv.weight";
      EXPECT_TRUE(entry) << a[i]->name;
      band_delta += b[i]->size() - a[i]->size();
    }
    if (a[i]->size() != c[i]->size()) {
      EXPECT_TRUE(a[i]->name.starts_with("output.")) << a[i]->name;
      class_delta += c[i]->size() - a[i]->size();
    }
  }
  EXPECT_EQ(band_delta, 256u);
  EXPECT_EQ(class_delta, 65u);
}

TEST(Irx1d, ArgumentChecks) {
  EXPECT_THROW(build_irx1d<float>(4, 8, 8), ArgumentError);
  EXPECT_THROW(build_irx1d<float>(4, 1, 7), ArgumentError);
  EXPECT_THROW(build_irx1d<float>(0, 8, 7), ArgumentError);
}

TEST(Irx1d, ForwardShapesAndSummary) {
  auto m = build_irx1d<float>(5, 4, 3);
  Tensor<float> x({2, 9, 5}, 0.1f);
  EXPECT_EQ(m.infer(x).shape(), (Shape{2, 4}));
  EXPECT_THROW(m.infer(Tensor<float>({2, 9, 6})), DimensionError);
  EXPECT_THROW(m.backward(Tensor<float>({2, 4})), StateError);
  const auto s = m.summary();
  EXPECT_NE(s.find("Total params: " + std::to_string(param_formula(5, 4))), std::string::npos);
}

// Full IRX-1D, double precision, 3x3x4 patches, five seeds.
class Irx1dGradient : public ::testing::TestWithParam<int> {};

TEST_P(Irx1dGradient, EndToEnd) {
  std::mt19937_64 rng(static_cast<std::uint64_t>(GetParam()) * 31 + 5);
  auto m = build_irx1d<double>(4, 3, 3);
  randomize(m, rng);
  auto x = random_tensor({2, 9, 4}, rng);
  std::vector<int> labels{0, 2};
  auto loss = [&] {
    auto z = m.forward(x);
    return softmax_xent(z, std::span<const int>(labels));
  };
  (void)m.loss_and_gradients(x, labels);
  CheckResult r;
  for (auto* p : m.parameters()) {
    if (!p->trainable) continue;
    const auto grad = p->grad;
    for (auto i : probe_indices(p->size(), 6, rng)) {
      record(r, grad[i], robust_partial(p->value.storage(), i, loss, grad[i], r), p->name);
    }
  }
  EXPECT_GT(r.checked, 100u);
  EXPECT_LT(r.max_error, kTolerance) << r.worst;
}

INSTANTIATE_TEST_SUITE_P(Seeds, Irx1dGradient, ::testing::Range(0, 5));

TEST(Cnn2dGradient, SmallStack) {
  std::mt19937_64 rng(99);
  Cnn2dConfig c;
  c.bands = 2;
  c.classes = 3;
  c.patch = 5;
  c.stages = {stage(3, 3, PoolMode::avg, 2, Padding::same, Padding::valid),
              stage(2, 3, PoolMode::max, 2, Padding::valid, Padding::same, 2)};
  c.dense = {4};
  auto m = build_cnn2d<double>(c);
  EXPECT_EQ(m.parameter_count(), cnn2d_param_count(c));
  randomize(m, rng);
  auto x = random_tensor({2, 5, 5, 2}, rng);
  std::vector<int> labels{1, 2};
  auto loss = [&] { return softmax_xent(m.forward(x), std::span<const int>(labels)); };
  (void)m.loss_and_gradients(x, labels);
  CheckResult r;
  for (auto* p : m.parameters()) {
    const auto grad = p->grad;
    for (auto i : probe_indices(p->size(), 20, rng)) {
      record(r, grad[i], robust_partial(p->value.storage(), i, loss, grad[i], r), p->name);
    }
  }
  EXPECT_LT(r.max_error, kTolerance) << r.worst;
}

// -- 2-D CNN presets -----------------------------------------------------------

TEST(Cnn2dPresets, ReproducePublishedTotals) {
  for (const auto& name : cnn2d_preset_names()) {
    const auto p = cnn2d_preset(name);
    EXPECT_EQ(cnn2d_param_count(p.config), p.published_total) << name;
    EXPECT_EQ(build_cnn2d<float>(p.config).parameter_count(), p.published_total) << name;
  }
}

TEST(Cnn2dPresets, DocumentedChains) {
  EXPECT_EQ(spatial_chain(cnn2d_preset("aviris-ng").config),
            (std::vector<std::size_t>{7, 7, 5, 5, 3}));
  EXPECT_EQ(spatial_chain(cnn2d_preset("etm+").config), (std::vector<std::size_t>{7, 7, 7, 7, 7}));
  EXPECT_EQ(published_cnn2d_total("aviris-ng"), 2'593'713u);
  EXPECT_EQ(published_cnn2d_total("sentinel-2"), 9'513'458u);
  EXPECT_EQ(published_cnn2d_total("etm+"), 2'563'907u);
}

TEST(Cnn2dPresets, SearchRediscoversFrozenConventions) {
  for (const auto& name : {"dais", "sentinel-2"}) {
    const auto frozen = cnn2d_preset(name);
    auto r = search_convention(published_stack(name), frozen.published_total);
    ASSERT_TRUE(r.best.has_value()) << name;
    EXPECT_EQ(*r.best, frozen.config) << name << ": " << describe_convention(*r.best);
  }
}

TEST(Cnn2dPresets, ArchitectureRoundTrip) {
  for (const auto& name : cnn2d_preset_names()) {
    const auto c = cnn2d_preset(name).config;
    EXPECT_EQ(decode_architecture(encode_architecture(c), c.bands, c.classes, c.patch), c);
  }
  EXPECT_THROW(decode_architecture("conv 1 2 sideways 1 pool max 2 same 1; dense; lr 0.1", 1, 2, 7),
               FormatError);
}

TEST(Cnn2d, UnderflowNamesTheLayer) {
  auto c = published_stack("aviris-ng");
  for (auto& s : c.stages) {
    s.conv_padding = Padding::valid;
    s.pool_padding = Padding::valid;
  }
  // 7 -> 3 (conv1) -> 1 (pool1) -> conv2 (3x3) underflows
  try {
    (void)build_cnn2d<float>(c);
    FAIL();
  } catch (const DimensionError& e) {
    EXPECT_NE(std::string(e.what()).find("conv2"), std::string::npos) << e.what();
  }
}

// -- audit ---------------------------------------------------------------------

TEST(Audit, Statuses) {
  auto dais = audit(build_irx1d<float>(65, 8, 7), 123'464);
  EXPECT_EQ(dais.delta, 0);
  EXPECT_EQ(dais.status, AuditStatus::exact);

  auto aviris = audit(build_irx1d<float>(372, 13, 7), 202'400);
  EXPECT_EQ(aviris.delta, -19);
  EXPECT_EQ(aviris.status, AuditStatus::documented_anomaly);

  auto wrong = audit(build_irx1d<float>(65, 8, 7), 123'465);
  EXPECT_EQ(wrong.status, AuditStatus::mismatch);

  auto m = build_cnn2d<float>(cnn2d_preset("dais").config);
  auto self = audit(m, m.parameter_count());
  std::size_t sum = 0;
  for (const auto& r : self.rows) sum += r.count;
  EXPECT_EQ(sum, self.total);
  EXPECT_EQ(self.delta, 0);
}
