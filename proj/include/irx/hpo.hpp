#pragma once

// Hyperparameter search for the 2-D CNN baseline: lattice sampling, a
// Gaussian-process / expected-improvement suggester, and resumable studies.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "irx/io.hpp"
#include "irx/zoo.hpp"

namespace irx {

struct ConvGene {
  std::size_t filters = 100;
  std::size_t kernel = 3;
  std::size_t pool_kernel = 2;
  PoolMode pool_mode = PoolMode::max;

  bool operator==(const ConvGene&) const = default;
};

struct HpoConfig {
  std::vector<ConvGene> conv;
  std::vector<std::size_t> dense;
  double learning_rate = 0.01;

  bool operator==(const HpoConfig&) const = default;
};

/// Discrete search space. Every conv layer picks its own filters, kernel,
/// pool kernel and pool type; every dense layer its own width.
struct SearchSpace {
  std::size_t min_conv = 2, max_conv = 5;
  std::vector<std::size_t> filters{100, 200, 300, 400, 500, 600};
  std::vector<std::size_t> kernels{3, 5};
  std::vector<std::size_t> pool_kernels{2, 3};
  std::vector<PoolMode> pool_modes{PoolMode::max, PoolMode::avg};
  std::size_t min_dense = 2, max_dense = 3;
  std::vector<std::size_t> units{50, 100, 150, 200};
  std::vector<double> learning_rates{0.01, 0.001};
  std::size_t patch = 7;  // input extent used for the feasibility check

  static SearchSpace standard() { return {}; }

  std::size_t per_conv() const {
    return filters.size() * kernels.size() * pool_kernels.size() * pool_modes.size();
  }

  // Weight of each layer count under uniform lattice sampling.
  std::vector<double> conv_weights() const {
    std::vector<double> w;
    for (std::size_t l = min_conv; l <= max_conv; ++l) w.push_back(std::pow(double(per_conv()), double(l)));
    return w;
  }
  std::vector<double> dense_weights() const {
    std::vector<double> w;
    for (std::size_t l = min_dense; l <= max_dense; ++l) w.push_back(std::pow(double(units.size()), double(l)));
    return w;
  }

  /// Number of lattice points (feasible or not).
  double cardinality() const {
    double c = 0, d = 0;
    for (double w : conv_weights()) c += w;
    for (double w : dense_weights()) d += w;
    return c * d * static_cast<double>(learning_rates.size());
  }

  bool contains(const HpoConfig& c) const {
    auto in = [](const auto& v, const auto& x) { return std::find(v.begin(), v.end(), x) != v.end(); };
    if (c.conv.size() < min_conv || c.conv.size() > max_conv) return false;
    if (c.dense.size() < min_dense || c.dense.size() > max_dense) return false;
    for (const auto& g : c.conv) {
      if (!in(filters, g.filters) || !in(kernels, g.kernel) || !in(pool_kernels, g.pool_kernel) ||
          !in(pool_modes, g.pool_mode)) {
        return false;
      }
    }
    for (auto u : c.dense) {
      if (!in(units, u)) return false;
    }
    return in(learning_rates, c.learning_rate);
  }
};

// ---------------------------------------------------------------------------
// text form: conv=300:3:max:2,500:5:avg:3|dense=150,100|lr=0.01

inline std::string format_config(const HpoConfig& c) {
  std::ostringstream os;
  os << "conv=";
  for (std::size_t i = 0; i < c.conv.size(); ++i) {
    const auto& g = c.conv[i];
    os << (i ? "," : "") << g.filters << ':' << g.kernel << ':' << to_string(g.pool_mode) << ':'
       << g.pool_kernel;
  }
  os << "|dense=";
  for (std::size_t i = 0; i < c.dense.size(); ++i) os << (i ? "," : "") << c.dense[i];
  os.precision(17);
  os << "|lr=" << c.learning_rate;
  return os.str();
}

inline HpoConfig parse_config(const std::string& text) {
  auto split = [](const std::string& s, char sep) {
    std::vector<std::string> out;
    std::istringstream is(s);
    std::string item;
    while (std::getline(is, item, sep)) out.push_back(item);
    return out;
  };
  auto count = [&](const std::string& s) -> std::size_t {
    std::size_t used = 0;
    const auto v = std::stoul(s, &used);
    if (used != s.size()) throw FormatError("");
    return v;
  };
  HpoConfig c;
  try {
    const auto parts = split(text, '|');
    if (parts.size() != 3 || parts[0].rfind("conv=", 0) != 0 || parts[1].rfind("dense=", 0) != 0 ||
        parts[2].rfind("lr=", 0) != 0) {
      throw FormatError("");
    }
    for (const auto& layer : split(parts[0].substr(5), ',')) {
      const auto f = split(layer, ':');
      if (f.size() != 4) throw FormatError("");
      ConvGene g;
      g.filters = count(f[0]);
      g.kernel = count(f[1]);
      if (f[2] == "max") g.pool_mode = PoolMode::max;
      else if (f[2] == "avg") g.pool_mode = PoolMode::avg;
      else throw FormatError("");
      g.pool_kernel = count(f[3]);
      c.conv.push_back(g);
    }
    for (const auto& u : split(parts[1].substr(6), ',')) c.dense.push_back(count(u));
    std::size_t used = 0;
    c.learning_rate = std::stod(parts[2].substr(3), &used);
    if (used != parts[2].size() - 3) throw FormatError("");
  } catch (const std::exception&) {
    throw FormatError("malformed configuration '" + text + "'");
  }
  return c;
}

/// Same-padded stride-1 convolutions, valid stride-1 pools (the documented
/// published-preset convention), on a patch x patch input.
inline Cnn2dConfig to_cnn2d(const HpoConfig& c, std::size_t bands, std::size_t classes, std::size_t patch) {
  Cnn2dConfig out;
  out.bands = bands;
  out.classes = classes;
  out.patch = patch;
  for (const auto& g : c.conv) {
    out.stages.push_back(stage(g.filters, g.kernel, g.pool_mode, g.pool_kernel, Padding::same, Padding::valid, 1));
  }
  out.dense = c.dense;
  return out;
}

/// Empty when the shape chain is valid, otherwise the reason it is not.
inline std::optional<std::string> infeasibility(const HpoConfig& c, std::size_t patch) {
  try {
    (void)spatial_chain(to_cnn2d(c, 1, 2, patch));
    return std::nullopt;
  } catch (const Error& e) {
    return std::string(e.what());
  }
}

using Rng = std::mt19937_64;

namespace detail {

template <typename V>
const typename V::value_type& pick(const V& v, Rng& rng) {
  return v[std::uniform_int_distribution<std::size_t>(0, v.size() - 1)(rng)];
}

inline ConvGene random_gene(const SearchSpace& s, Rng& rng) {
  return {pick(s.filters, rng), pick(s.kernels, rng), pick(s.pool_kernels, rng), pick(s.pool_modes, rng)};
}

inline std::size_t weighted_count(std::size_t lo, const std::vector<double>& w, Rng& rng) {
  std::discrete_distribution<std::size_t> d(w.begin(), w.end());
  return lo + d(rng);
}

}  // namespace detail

/// One point drawn uniformly from the lattice, ignoring feasibility.
inline HpoConfig sample_lattice(const SearchSpace& s, Rng& rng) {
  HpoConfig c;
  const auto nconv = detail::weighted_count(s.min_conv, s.conv_weights(), rng);
  for (std::size_t i = 0; i < nconv; ++i) c.conv.push_back(detail::random_gene(s, rng));
  const auto ndense = detail::weighted_count(s.min_dense, s.dense_weights(), rng);
  for (std::size_t i = 0; i < ndense; ++i) c.dense.push_back(detail::pick(s.units, rng));
  c.learning_rate = detail::pick(s.learning_rates, rng);
  return c;
}

/// Uniform over the feasible lattice: infeasible draws are logged through
/// `rejected` (when given) and redrawn.
inline HpoConfig sample(const SearchSpace& s, Rng& rng, std::vector<std::string>* rejected = nullptr) {
  for (int attempt = 0; attempt < 100000; ++attempt) {
    auto c = sample_lattice(s, rng);
    const auto why = infeasibility(c, s.patch);
    if (!why) return c;
    if (rejected) rejected->push_back(format_config(c) + ": " + *why);
  }
  throw StateError("search space has no feasible configuration for patch " + std::to_string(s.patch));
}

inline HpoConfig sample(const SearchSpace& s, std::uint64_t seed) {
  Rng rng(seed);
  return sample(s, rng);
}

// ---------------------------------------------------------------------------
// lattice geometry

namespace detail {

template <typename V, typename X>
long position(const V& v, const X& x) {
  const auto it = std::find(v.begin(), v.end(), x);
  if (it == v.end()) throw ArgumentError("value outside the search space");
  return static_cast<long>(it - v.begin());
}

}  // namespace detail

/// Steps between two configurations: layer-count difference, plus per shared
/// layer the ordinal index differences of every choice, plus lr.
inline std::size_t lattice_distance(const SearchSpace& s, const HpoConfig& a, const HpoConfig& b) {
  using detail::position;
  auto gap = [](long x, long y) { return static_cast<std::size_t>(std::abs(x - y)); };
  std::size_t d = gap(long(a.conv.size()), long(b.conv.size())) + gap(long(a.dense.size()), long(b.dense.size()));
  for (std::size_t i = 0; i < std::min(a.conv.size(), b.conv.size()); ++i) {
    const auto &x = a.conv[i], &y = b.conv[i];
    d += gap(position(s.filters, x.filters), position(s.filters, y.filters));
    d += gap(position(s.kernels, x.kernel), position(s.kernels, y.kernel));
    d += gap(position(s.pool_kernels, x.pool_kernel), position(s.pool_kernels, y.pool_kernel));
    d += x.pool_mode != y.pool_mode;
  }
  for (std::size_t i = 0; i < std::min(a.dense.size(), b.dense.size()); ++i) {
    d += gap(position(s.units, a.dense[i]), position(s.units, b.dense[i]));
  }
  d += gap(position(s.learning_rates, a.learning_rate), position(s.learning_rates, b.learning_rate));
  return d;
}

/// A single lattice step: one choice moved to a neighbouring value, or one
/// layer added / removed at the end.
inline HpoConfig mutate(const SearchSpace& s, HpoConfig c, Rng& rng) {
  auto step = [&](const auto& values, auto& x) {
    const long i = detail::position(values, x);
    long j = i + (std::bernoulli_distribution(0.5)(rng) ? 1 : -1);
    if (j < 0 || j >= static_cast<long>(values.size())) j = 2 * i - j;
    if (j < 0 || j >= static_cast<long>(values.size())) return;  // single-valued dimension
    x = values[static_cast<std::size_t>(j)];
  };
  const std::size_t genes = 4 * c.conv.size() + c.dense.size() + 3;
  const std::size_t g = std::uniform_int_distribution<std::size_t>(0, genes - 1)(rng);
  if (g < 4 * c.conv.size()) {
    auto& layer = c.conv[g / 4];
    switch (g % 4) {
      case 0: step(s.filters, layer.filters); break;
      case 1: step(s.kernels, layer.kernel); break;
      case 2: step(s.pool_kernels, layer.pool_kernel); break;
      default: step(s.pool_modes, layer.pool_mode); break;
    }
  } else if (g < 4 * c.conv.size() + c.dense.size()) {
    step(s.units, c.dense[g - 4 * c.conv.size()]);
  } else if (g == genes - 3) {
    step(s.learning_rates, c.learning_rate);
  } else if (g == genes - 2) {
    const bool grow = c.conv.size() < s.max_conv && (c.conv.size() == s.min_conv || std::bernoulli_distribution(0.5)(rng));
    if (grow) c.conv.push_back(detail::random_gene(s, rng));
    else if (c.conv.size() > s.min_conv) c.conv.pop_back();
  } else {
    const bool grow = c.dense.size() < s.max_dense && (c.dense.size() == s.min_dense || std::bernoulli_distribution(0.5)(rng));
    if (grow) c.dense.push_back(detail::pick(s.units, rng));
    else if (c.dense.size() > s.min_dense) c.dense.pop_back();
  }
  return c;
}

/// Fixed-length vector in [0,1]: ordinal choices scaled by position,
/// binary choices as 0/1, absent layers as zeros with a presence flag.
inline std::vector<double> encode(const SearchSpace& s, const HpoConfig& c) {
  auto ord = [](const auto& values, const auto& x) {
    return values.size() < 2 ? 0.0 : double(detail::position(values, x)) / double(values.size() - 1);
  };
  auto span_of = [](std::size_t lo, std::size_t hi, std::size_t v) {
    return hi == lo ? 0.0 : double(v - lo) / double(hi - lo);
  };
  std::vector<double> e;
  e.push_back(span_of(s.min_conv, s.max_conv, c.conv.size()));
  for (std::size_t i = 0; i < s.max_conv; ++i) {
    if (i < c.conv.size()) {
      const auto& g = c.conv[i];
      e.insert(e.end(), {1.0, ord(s.filters, g.filters), ord(s.kernels, g.kernel),
                         ord(s.pool_kernels, g.pool_kernel), ord(s.pool_modes, g.pool_mode)});
    } else {
      e.insert(e.end(), 5, 0.0);
    }
  }
  e.push_back(span_of(s.min_dense, s.max_dense, c.dense.size()));
  for (std::size_t i = 0; i < s.max_dense; ++i) {
    if (i < c.dense.size()) e.insert(e.end(), {1.0, ord(s.units, c.dense[i])});
    else e.insert(e.end(), 2, 0.0);
  }
  e.push_back(ord(s.learning_rates, c.learning_rate));
  return e;
}

// ---------------------------------------------------------------------------
// surrogate

inline constexpr double kGpNoise = 1e-6;
inline constexpr std::size_t kCandidates = 512;
inline constexpr std::size_t kMutationParents = 5;
inline constexpr double kLengthScales[] = {0.25, 0.5, 1.0, 2.0};

/// Zero-mean GP with a unit-variance squared-exponential kernel on
/// standardised objectives. The length scale is the grid value with the
/// highest marginal likelihood.
class GaussianProcess {
 public:
  GaussianProcess(std::vector<std::vector<double>> x, std::vector<double> y, double noise = kGpNoise)
      : x_(std::move(x)), noise_(noise) {
    if (x_.empty() || x_.size() != y.size()) throw ArgumentError("GP needs matching, non-empty data");
    const double n = static_cast<double>(y.size());
    double mean = 0;
    for (double v : y) mean += v;
    mean /= n;
    double var = 0;
    for (double v : y) var += (v - mean) * (v - mean);
    mean_ = mean;
    scale_ = std::sqrt(var / n);
    if (!(scale_ > 1e-12)) throw StateError("GP: all objectives identical");
    Eigen::VectorXd ys(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) ys[static_cast<Eigen::Index>(i)] = (y[i] - mean_) / scale_;
    double best = -std::numeric_limits<double>::infinity();
    for (double ell : kLengthScales) {
      Eigen::LLT<Eigen::MatrixXd> llt(gram(ell));
      if (llt.info() != Eigen::Success) continue;
      const Eigen::VectorXd alpha = llt.solve(ys);
      const Eigen::MatrixXd L = llt.matrixL();
      const double lml = -0.5 * ys.dot(alpha) - L.diagonal().array().log().sum();
      if (lml > best) {
        best = lml;
        ell_ = ell;
        alpha_ = alpha;
        llt_ = llt;
      }
    }
    if (!std::isfinite(best)) throw NumericError("GP: kernel matrix not positive definite");
  }

  double length_scale() const { return ell_; }

  // Posterior mean and standard deviation in objective units.
  std::pair<double, double> predict(const std::vector<double>& q) const {
    Eigen::VectorXd k(static_cast<Eigen::Index>(x_.size()));
    for (std::size_t i = 0; i < x_.size(); ++i) k[static_cast<Eigen::Index>(i)] = kernel(q, x_[i], ell_);
    const double mu = k.dot(alpha_);
    const Eigen::VectorXd v = llt_.matrixL().solve(k);
    const double var = std::max(0.0, 1.0 - v.squaredNorm());
    return {mean_ + scale_ * mu, scale_ * std::sqrt(var)};
  }

  /// Expected improvement over `incumbent` (maximisation).
  double expected_improvement(const std::vector<double>& q, double incumbent) const {
    const auto [mu, sd] = predict(q);
    const double gain = mu - incumbent;
    if (sd <= 0) return std::max(gain, 0.0);
    const double z = gain / sd;
    const double cdf = 0.5 * std::erfc(-z / std::sqrt(2.0));
    const double pdf = std::exp(-0.5 * z * z) / std::sqrt(2.0 * M_PI);
    return std::max(0.0, gain * cdf + sd * pdf);
  }

 private:
  static double kernel(const std::vector<double>& a, const std::vector<double>& b, double ell) {
    double d2 = 0;
    for (std::size_t i = 0; i < a.size(); ++i) d2 += (a[i] - b[i]) * (a[i] - b[i]);
    return std::exp(-0.5 * d2 / (ell * ell));
  }

  Eigen::MatrixXd gram(double ell) const {
    const auto n = static_cast<Eigen::Index>(x_.size());
    Eigen::MatrixXd k(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j < n; ++j) k(i, j) = kernel(x_[std::size_t(i)], x_[std::size_t(j)], ell);
      k(i, i) += noise_;
    }
    return k;
  }

  std::vector<std::vector<double>> x_;
  double noise_;
  double mean_ = 0, scale_ = 1, ell_ = 1;
  Eigen::VectorXd alpha_;
  Eigen::LLT<Eigen::MatrixXd> llt_;
};

struct Observation {
  HpoConfig config;
  double objective = 0.0;
};

struct Suggestion {
  HpoConfig config;
  double expected_improvement = 0.0;  // 0 for random fallbacks
  std::string note;                   // why the surrogate was bypassed, if it was
};

/// Next configuration to evaluate. Candidates are feasible, untried lattice
/// points: half fresh uniform draws, half single-step mutations of the best
/// observations. Falls back to `sample` when there is no usable history.
inline Suggestion suggest(const SearchSpace& s, const std::vector<Observation>& history, Rng& rng,
                          const std::vector<HpoConfig>& tried = {}) {
  auto seen = [&](const HpoConfig& c) {
    for (const auto& t : tried) {
      if (t == c) return true;
    }
    for (const auto& o : history) {
      if (o.config == c) return true;
    }
    return false;
  };
  auto fresh = [&]() {
    for (int i = 0; i < 1000; ++i) {
      auto c = sample(s, rng);
      if (!seen(c)) return c;
    }
    return sample(s, rng);
  };
  if (history.empty()) return {fresh(), 0.0, "no completed trials"};

  std::vector<std::vector<double>> x;
  std::vector<double> y;
  for (const auto& o : history) {
    x.push_back(encode(s, o.config));
    y.push_back(o.objective);
  }
  std::optional<GaussianProcess> gp;
  try {
    gp.emplace(x, y);
  } catch (const StateError& e) {
    return {fresh(), 0.0, std::string("surrogate unavailable (") + e.what() + "); sampled instead"};
  }
  const double incumbent = *std::max_element(y.begin(), y.end());

  std::vector<std::size_t> order(history.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](auto a, auto b) { return history[a].objective > history[b].objective; });
  const std::size_t parents = std::min(kMutationParents, history.size());

  std::vector<HpoConfig> candidates;
  for (std::size_t i = 0; i < kCandidates / 2; ++i) candidates.push_back(sample(s, rng));
  for (std::size_t i = 0; i < kCandidates - kCandidates / 2; ++i) {
    auto c = mutate(s, history[order[i % parents]].config, rng);
    if (!infeasibility(c, s.patch)) candidates.push_back(std::move(c));
  }

  Suggestion best{{}, -1.0, ""};
  for (auto& c : candidates) {
    if (seen(c)) continue;
    const double ei = gp->expected_improvement(encode(s, c), incumbent);
    if (ei > best.expected_improvement) best = {c, ei, ""};
  }
  if (best.expected_improvement < 0) return {fresh(), 0.0, "every candidate already tried; sampled instead"};
  return best;
}

// ---------------------------------------------------------------------------
// studies

struct Trial {
  std::size_t id = 0;
  HpoConfig config;
  double objective = std::numeric_limits<double>::quiet_NaN();
  std::string status = "ok";  // ok | failed
  std::uint64_t seed = 0;
};

/// "id<TAB>config<TAB>objective<TAB>status<TAB>seed"
inline std::string format_trial(const Trial& t) {
  std::ostringstream os;
  os.precision(17);
  os << t.id << '\t' << format_config(t.config) << '\t';
  if (t.status == "ok") os << t.objective;
  else os << "nan";
  os << '\t' << t.status << '\t' << t.seed << "\n";
  return os.str();
}

inline Trial parse_trial(const std::string& line) {
  std::vector<std::string> f;
  std::istringstream is(line);
  std::string cell;
  while (std::getline(is, cell, '\t')) f.push_back(cell);
  if (f.size() != 5) throw FormatError("study record line needs 5 tab-separated fields: '" + line + "'");
  Trial t;
  try {
    t.id = std::stoul(f[0]);
    t.config = parse_config(f[1]);
    t.status = f[3];
    t.seed = std::stoull(f[4]);
    if (t.status == "ok") t.objective = std::stod(f[2]);
  } catch (const FormatError&) {
    throw;
  } catch (const std::exception&) {
    throw FormatError("malformed study record line '" + line + "'");
  }
  if (t.status != "ok" && t.status != "failed") throw FormatError("unknown trial status '" + t.status + "'");
  return t;
}

struct StudyRecord {
  std::vector<Trial> trials;

  std::optional<Trial> best() const {
    std::optional<Trial> b;
    for (const auto& t : trials) {
      if (t.status == "ok" && (!b || t.objective > b->objective)) b = t;
    }
    return b;
  }

  std::vector<double> best_so_far() const {
    std::vector<double> out;
    double b = -std::numeric_limits<double>::infinity();
    for (const auto& t : trials) {
      if (t.status == "ok") b = std::max(b, t.objective);
      out.push_back(b);
    }
    return out;
  }

  std::string str() const {
    std::string s;
    for (const auto& t : trials) s += format_trial(t);
    return s;
  }
};

inline StudyRecord parse_study(const std::string& text) {
  StudyRecord r;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    if (trim(line).empty()) continue;
    auto t = parse_trial(line);
    if (t.id != r.trials.size()) {
      throw FormatError("study record out of order: trial " + std::to_string(t.id) + " at line " +
                        std::to_string(r.trials.size() + 1));
    }
    r.trials.push_back(std::move(t));
  }
  return r;
}

/// Objective for one trial; may throw, which marks the trial failed.
using TrialFn = std::function<double(const HpoConfig&, std::uint64_t seed, std::size_t epochs)>;

struct StudyOptions {
  std::size_t trials = 50;
  std::size_t epochs = 100;
  std::uint64_t seed = 0;
  std::size_t random_starts = 5;  // uniform draws before the surrogate takes over
  std::filesystem::path record;   // appended after every trial when set
  std::ostream* log = nullptr;
};

inline std::uint64_t trial_seed(std::uint64_t study_seed, std::size_t id) {
  std::seed_seq seq{static_cast<std::uint32_t>(study_seed), static_cast<std::uint32_t>(study_seed >> 32),
                    static_cast<std::uint32_t>(id), 0x5eed7u};
  std::uint32_t out[2];
  seq.generate(out, out + 2);
  return (std::uint64_t(out[0]) << 32) | out[1];
}

/// Runs trials sequentially. With `opt.record` pointing at an existing file
/// the completed trials are replayed and the study continues after them;
/// every suggestion depends only on (seed, trial id, previous trials), so a
/// resumed study matches an uninterrupted one.
inline StudyRecord run_study(const SearchSpace& s, const TrialFn& objective, const StudyOptions& opt) {
  StudyRecord rec;
  if (!opt.record.empty() && std::filesystem::exists(opt.record)) {
    rec = parse_study(read_text(opt.record));
    for (const auto& t : rec.trials) {
      if (!s.contains(t.config)) throw DataError("study record trial " + std::to_string(t.id) + " lies outside the search space");
    }
  }
  for (std::size_t id = rec.trials.size(); id < opt.trials; ++id) {
    Rng rng(trial_seed(opt.seed, id) ^ 0xA5A5A5A5ULL);
    std::vector<Observation> history;
    std::vector<HpoConfig> tried;
    for (const auto& t : rec.trials) {
      tried.push_back(t.config);
      if (t.status == "ok") history.push_back({t.config, t.objective});
    }
    Suggestion sug;
    if (id < opt.random_starts) {
      sug = suggest(s, {}, rng, tried);
    } else {
      sug = suggest(s, history, rng, tried);
      if (!sug.note.empty() && opt.log) *opt.log << "warning: trial " << id << ": " << sug.note << "\n";
    }
    Trial t;
    t.id = id;
    t.config = sug.config;
    t.seed = trial_seed(opt.seed, id);
    try {
      t.objective = objective(t.config, t.seed, opt.epochs);
      if (!std::isfinite(t.objective)) throw NumericError("objective is not finite");
    } catch (const std::exception& e) {
      t.status = "failed";
      t.objective = std::numeric_limits<double>::quiet_NaN();
      if (opt.log) *opt.log << "trial " << id << " failed: " << e.what() << "\n";
    }
    rec.trials.push_back(t);
    if (!opt.record.empty()) {
      const auto text = rec.str();
      write_text_atomic(opt.record, text);
    }
    if (opt.log) *opt.log << format_trial(t);
  }
  return rec;
}

// ---------------------------------------------------------------------------
// synthetic objective with a known optimum

/// Smooth bowl on the encoded lattice, 0.95 at `target` and falling off
/// with squared encoded distance; layer-count and lr mismatches weigh most.
struct SyntheticObjective {
  SearchSpace space;
  HpoConfig target;

  static SyntheticObjective standard() {
    SyntheticObjective o;
    o.target.conv = {{400, 3, 2, PoolMode::max}, {300, 5, 2, PoolMode::avg}, {200, 3, 2, PoolMode::max}};
    o.target.dense = {150, 100};
    o.target.learning_rate = 0.01;
    return o;
  }

  double optimum() const { return 0.95; }

  double operator()(const HpoConfig& c) const {
    const auto a = encode(space, c);
    const auto b = encode(space, target);
    double d2 = 0;
    for (std::size_t i = 0; i < a.size(); ++i) d2 += (a[i] - b[i]) * (a[i] - b[i]);
    return optimum() * std::exp(-0.1 * d2);
  }
};

}  // namespace irx
