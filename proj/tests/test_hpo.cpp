#include <gtest/gtest.h>

#include <filesystem>
#include <cmath>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include "irx/hpo.hpp"

using namespace irx;

namespace {

SearchSpace tiny_space() {
  SearchSpace s;
  s.min_conv = 1;
  s.max_conv = 2;
  s.filters = {100, 200};
  s.kernels = {3};
  s.pool_kernels = {2, 3};
  s.pool_modes = {PoolMode::max};
  s.min_dense = 1;
  s.max_dense = 2;
  s.units = {50, 100, 150};
  s.learning_rates = {0.01, 0.001};
  s.patch = 9;
  return s;
}

// Exhaustive enumeration of every lattice point of a small space.
std::vector<HpoConfig> enumerate(const SearchSpace& s) {
  std::vector<std::vector<ConvGene>> convs;
  std::vector<ConvGene> genes;
  for (auto f : s.filters)
    for (auto k : s.kernels)
      for (auto pk : s.pool_kernels)
        for (auto pm : s.pool_modes) genes.push_back({f, k, pk, pm});
  std::function<void(std::vector<ConvGene>&)> grow_conv = [&](std::vector<ConvGene>& cur) {
    if (cur.size() >= s.min_conv) convs.push_back(cur);
    if (cur.size() == s.max_conv) return;
    for (const auto& g : genes) {
      cur.push_back(g);
      grow_conv(cur);
      cur.pop_back();
    }
  };
  std::vector<ConvGene> c0;
  grow_conv(c0);
  std::vector<std::vector<std::size_t>> denses;
  std::function<void(std::vector<std::size_t>&)> grow_dense = [&](std::vector<std::size_t>& cur) {
    if (cur.size() >= s.min_dense) denses.push_back(cur);
    if (cur.size() == s.max_dense) return;
    for (auto u : s.units) {
      cur.push_back(u);
      grow_dense(cur);
      cur.pop_back();
    }
  };
  std::vector<std::size_t> d0;
  grow_dense(d0);
  std::vector<HpoConfig> out;
  for (const auto& c : convs)
    for (const auto& d : denses)
      for (double lr : s.learning_rates) out.push_back({c, d, lr});
  return out;
}

TrialFn wrap(const SyntheticObjective& obj) {
  return [obj](const HpoConfig& c, std::uint64_t, std::size_t) { return obj(c); };
}

}  // namespace

TEST(Sample, TenThousandDrawsStayInBoundsAndBuild) {
  const auto s = SearchSpace::standard();
  Rng rng(1);
  std::map<std::size_t, std::size_t> layers;
  for (int i = 0; i < 10000; ++i) {
    const auto c = sample(s, rng);
    ASSERT_TRUE(s.contains(c)) << format_config(c);
    ASSERT_FALSE(infeasibility(c, 7).has_value()) << format_config(c);
    const auto chain = spatial_chain(to_cnn2d(c, 4, 3, 7));
    ASSERT_GE(chain.back(), 1u);
    ++layers[c.conv.size()];
  }
  // uniform over the feasible lattice puts almost all mass on 5 conv layers
  EXPECT_GT(layers[5], 8500u);
  EXPECT_GT(layers[4], 300u);
}

TEST(Sample, RejectionsAreLogged) {
  const auto s = SearchSpace::standard();
  Rng rng(2);
  std::vector<std::string> rejected;
  for (int i = 0; i < 50; ++i) sample(s, rng, &rejected);
  ASSERT_FALSE(rejected.empty());
  EXPECT_NE(rejected.front().find("conv="), std::string::npos);
}

TEST(Sample, SameSeedSameConfiguration) {
  const auto s = SearchSpace::standard();
  EXPECT_EQ(sample(s, 42), sample(s, 42));
  EXPECT_NE(format_config(sample(s, 42)), format_config(sample(s, 43)));
}

TEST(Sample, SmallSpaceBuildsEveryDraw) {
  auto s = SearchSpace::standard();
  s.filters = {100};
  s.units = {50};
  Rng rng(3);
  for (int i = 0; i < 3; ++i) {
    const auto c = sample(s, rng);
    const auto m = build_cnn2d<float>(to_cnn2d(c, 4, 3, 7));
    EXPECT_EQ(m.parameter_count(), cnn2d_param_count(to_cnn2d(c, 4, 3, 7)));
  }
}

TEST(Lattice, CardinalityMatchesEnumeration) {
  const auto tiny = tiny_space();
  const auto all = enumerate(tiny);
  EXPECT_EQ(static_cast<double>(all.size()), tiny.cardinality());
  std::set<std::string> distinct;
  for (const auto& c : all) distinct.insert(format_config(c));
  EXPECT_EQ(distinct.size(), all.size());

  const auto std_space = SearchSpace::standard();
  EXPECT_EQ(std_space.per_conv(), 48u);  // 6 filter counts x 2 kernels x 2 pool kernels x 2 pool types
  const double conv = 48.0 * 48 + 48.0 * 48 * 48 + std::pow(48.0, 4) + std::pow(48.0, 5);
  EXPECT_EQ(std_space.cardinality(), conv * (16 + 64) * 2);
  EXPECT_EQ(std_space.cardinality(), 41636044800.0);
}

TEST(Lattice, SamplingIsUniformOnSmallSpace) {
  auto s = tiny_space();
  s.patch = 15;  // every point feasible
  const auto all = enumerate(s);
  std::map<std::string, std::size_t> freq;
  for (const auto& c : all) freq[format_config(c)] = 0;
  Rng rng(4);
  const std::size_t draws = 200 * all.size();
  for (std::size_t i = 0; i < draws; ++i) ++freq.at(format_config(sample(s, rng)));
  // chi-square with |lattice|-1 dof; mean = dof, sd = sqrt(2 dof)
  double chi2 = 0;
  for (const auto& [k, n] : freq) chi2 += (double(n) - 200.0) * (double(n) - 200.0) / 200.0;
  const double dof = double(all.size() - 1);
  EXPECT_LT(chi2, dof + 5 * std::sqrt(2 * dof));
}

TEST(Lattice, ConfigTextRoundTrip) {
  const auto s = SearchSpace::standard();
  Rng rng(5);
  for (int i = 0; i < 200; ++i) {
    const auto c = sample(s, rng);
    EXPECT_EQ(parse_config(format_config(c)), c);
  }
  EXPECT_THROW(parse_config("conv=100:3:max|dense=50|lr=0.01"), FormatError);
  EXPECT_THROW(parse_config("dense=50"), FormatError);
  EXPECT_THROW(parse_config("conv=100:3:sum:2|dense=50|lr=0.01"), FormatError);
}

TEST(Lattice, MutationIsOneStep) {
  const auto s = SearchSpace::standard();
  Rng rng(6);
  std::size_t moved = 0;
  for (int i = 0; i < 2000; ++i) {
    const auto c = sample(s, rng);
    const auto m = mutate(s, c, rng);
    ASSERT_TRUE(s.contains(m));
    const auto d = lattice_distance(s, c, m);
    ASSERT_LE(d, 1u) << format_config(c) << " -> " << format_config(m);
    moved += d == 1;
  }
  EXPECT_GT(moved, 1500u);
  const auto c = sample(s, 7);
  EXPECT_EQ(lattice_distance(s, c, c), 0u);
  const auto enc = encode(s, c);
  EXPECT_EQ(enc.size(), 34u);
  for (double v : enc) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
}

TEST(Surrogate, IncumbentHasNoExpectedImprovement) {
  const auto s = SearchSpace::standard();
  const auto obj = SyntheticObjective::standard();
  Rng rng(8);
  std::vector<std::vector<double>> x;
  std::vector<double> y;
  std::vector<HpoConfig> cs;
  for (int i = 0; i < 12; ++i) {
    cs.push_back(sample(s, rng));
    x.push_back(encode(s, cs.back()));
    y.push_back(obj(cs.back()));
  }
  const GaussianProcess gp(x, y, 1e-12);
  const auto best = std::max_element(y.begin(), y.end()) - y.begin();
  EXPECT_LT(gp.expected_improvement(x[std::size_t(best)], y[std::size_t(best)]), 1e-6);
  const auto [mu, sd] = gp.predict(x[0]);
  EXPECT_NEAR(mu, y[0], 1e-5);
  EXPECT_LT(sd, 1e-4);
}

TEST(Suggest, EmptyHistoryBehavesAsSample) {
  const auto s = SearchSpace::standard();
  Rng a(9), b(9);
  const auto sug = suggest(s, {}, a);
  EXPECT_EQ(sug.config, sample(s, b));
  EXPECT_FALSE(sug.note.empty());
}

TEST(Suggest, IdenticalObjectivesFallBackWithWarning) {
  const auto s = SearchSpace::standard();
  Rng rng(10);
  std::vector<Observation> h;
  for (int i = 0; i < 4; ++i) h.push_back({sample(s, rng), 0.5});
  const auto sug = suggest(s, h, rng);
  EXPECT_NE(sug.note.find("sampled instead"), std::string::npos);
  EXPECT_TRUE(s.contains(sug.config));
}

TEST(Suggest, ConcentratesNearTheBestRegion) {
  const auto obj = SyntheticObjective::standard();
  const auto& s = obj.space;
  Rng rng(11);
  std::vector<Observation> h;
  for (int i = 0; i < 15; ++i) {
    const auto c = sample(s, rng);
    h.push_back({c, obj(c)});
  }
  h.push_back({obj.target, obj(obj.target)});
  std::size_t near = 0;
  for (int i = 0; i < 20; ++i) {
    const auto sug = suggest(s, h, rng);
    near += lattice_distance(s, sug.config, obj.target) <= 1;
    h.push_back({sug.config, obj(sug.config)});
  }
  EXPECT_GE(near, 12u);
}

TEST(Study, DeterministicMonotoneAndResumable) {
  const auto obj = SyntheticObjective::standard();
  StudyOptions o;
  o.trials = 30;
  o.seed = 12;
  const auto a = run_study(obj.space, wrap(obj), o);
  const auto b = run_study(obj.space, wrap(obj), o);
  EXPECT_EQ(a.str(), b.str());
  ASSERT_EQ(a.trials.size(), 30u);
  const auto bsf = a.best_so_far();
  for (std::size_t i = 1; i < bsf.size(); ++i) EXPECT_GE(bsf[i], bsf[i - 1]);

  const auto path = std::filesystem::temp_directory_path() / "irx_study_resume.tsv";
  std::filesystem::remove(path);
  auto part = o;
  part.trials = 11;
  part.record = path;
  run_study(obj.space, wrap(obj), part);
  EXPECT_EQ(parse_study(read_text(path)).trials.size(), 11u);
  auto rest = part;
  rest.trials = 30;
  const auto resumed = run_study(obj.space, wrap(obj), rest);
  EXPECT_EQ(resumed.str(), a.str());
  EXPECT_EQ(read_text(path), a.str());
  EXPECT_EQ(parse_study(a.str()).best()->config, a.best()->config);
  std::filesystem::remove(path);
}

TEST(Study, FailedTrialsAreRecordedAndSkipped) {
  const auto obj = SyntheticObjective::standard();
  StudyOptions o;
  o.trials = 12;
  o.seed = 13;
  std::ostringstream log;
  o.log = &log;
  int calls = 0;
  const auto rec = run_study(obj.space,
                             [&](const HpoConfig& c, std::uint64_t, std::size_t) {
                               if (++calls % 3 == 0) throw NumericError("diverged");
                               return obj(c);
                             },
                             o);
  ASSERT_EQ(rec.trials.size(), 12u);
  std::size_t failed = 0;
  for (const auto& t : rec.trials) failed += t.status == "failed";
  EXPECT_EQ(failed, 4u);
  EXPECT_EQ(parse_study(rec.str()).str(), rec.str());
  EXPECT_NE(log.str().find("diverged"), std::string::npos);
  EXPECT_EQ(rec.best()->status, "ok");
}

TEST(Study, RecordErrors) {
  EXPECT_THROW(parse_trial("0\tconv=100:3:max:2\t0.5\tok"), FormatError);
  EXPECT_THROW(parse_study("1\tconv=100:3:max:2,100:3:max:2|dense=50,50|lr=0.01\t0.5\tok\t1\n"), FormatError);
  EXPECT_THROW(parse_trial("0\tconv=100:3:max:2,100:3:max:2|dense=50,50|lr=0.01\t0.5\tmaybe\t1"), FormatError);
}

TEST(Study, BayesianBeatsRandomSearchOnPairedSeeds) {
  const auto obj = SyntheticObjective::standard();
  int wins = 0;
  for (std::uint64_t seed = 100; seed < 120; ++seed) {
    StudyOptions bo;
    bo.seed = seed;
    auto rnd = bo;
    rnd.random_starts = rnd.trials;
    const double b = run_study(obj.space, wrap(obj), bo).best()->objective;
    const double r = run_study(obj.space, wrap(obj), rnd).best()->objective;
    wins += b >= r;
  }
  EXPECT_GE(wins, 14);
}
