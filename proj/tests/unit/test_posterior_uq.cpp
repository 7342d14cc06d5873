#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "hsbnn/error.hpp"
#include "hsbnn/posterior_uq.hpp"
#include "test_util.hpp"

using namespace hsbnn;
using namespace hsbnn::uq;

namespace {

// Beta(2,5) CDF in closed form: 1 - (1-x)^6 - 6x(1-x)^5
double beta25_cdf(double x) { return 1.0 - std::pow(1 - x, 6) - 6 * x * std::pow(1 - x, 5); }

double beta25_quantile(double p) {
  double lo = 0.0, hi = 1.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (beta25_cdf(mid) < p ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

std::vector<double> uniform_draws(int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u;
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

std::vector<double> grid101() {
  std::vector<double> g;
  for (int i = 0; i <= 100; ++i) g.push_back(i / 100.0);
  return g;
}

PosteriorSamples samples_for(const bnn::Model& model, int s, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z;
  PosteriorSamples out;
  out.draws.resize(s, static_cast<Eigen::Index>(model.num_params()));
  for (auto& v : out.draws.reshaped()) v = z(rng);
  out.chain_id.assign(static_cast<std::size_t>(s), 0);
  out.layer_sizes = model.architecture().layer_sizes;
  return out;
}

}  // namespace

TEST(PredictiveDraws, ZeroParametersGiveHalf) {
  bnn::Model model;
  PosteriorSamples s;
  s.draws = Eigen::MatrixXd::Zero(7, 491);
  s.chain_id.assign(7, 0);
  const auto d = predictive_draws(s, model, Eigen::VectorXd::Ones(25));
  ASSERT_EQ(d.size(), 7);
  for (double v : d) EXPECT_EQ(v, 0.5);
}

TEST(PredictiveDraws, PreservesStorageOrder) {
  bnn::Model model(bnn::Architecture{{3, 2, 1}});
  const auto s = samples_for(model, 12, 1);
  const Eigen::VectorXd x = Eigen::VectorXd::LinSpaced(3, -1, 1);
  const auto d = predictive_draws(s, model, x);
  for (int r = 0; r < 12; ++r) EXPECT_EQ(d[r], model.forward(s.draws.row(r).transpose(), x));
}

TEST(PredictiveDraws, ArchitectureMismatchIsRejected) {
  bnn::Model model(bnn::Architecture{{3, 2, 1}});
  auto s = samples_for(model, 4, 1);
  s.layer_sizes = {3, 3, 1};
  EXPECT_THROW(predictive_draws(s, model, Eigen::VectorXd::Zero(3)), ConfigError);
  s.layer_sizes = model.architecture().layer_sizes;
  EXPECT_THROW(predictive_draws(s, model, Eigen::VectorXd::Zero(4)), ConfigError);
}

TEST(CredibleInterval, ConstantDraws) {
  const std::vector<double> c(50, 0.37);
  const auto [lo, hi] = credible_interval(c, 0.2);
  EXPECT_EQ(lo, 0.37);
  EXPECT_EQ(hi, 0.37);
}

TEST(CredibleInterval, UniformGridOrderStatistics) {
  const auto [lo, hi] = credible_interval(grid101(), 0.2);
  EXPECT_NEAR(lo, 0.10, 1e-12);
  EXPECT_NEAR(hi, 0.90, 1e-12);
}

TEST(CredibleInterval, BetaDrawsCoverAnalyticQuantiles) {
  std::mt19937_64 rng(12);
  std::gamma_distribution<double> ga(2.0), gb(5.0);
  std::vector<double> d(10000);
  for (auto& v : d) {
    const double a = ga(rng), b = gb(rng);
    v = a / (a + b);
  }
  const auto [lo, hi] = credible_interval(d, 0.2);
  EXPECT_NEAR(lo, beta25_quantile(0.1), 0.02);
  EXPECT_NEAR(hi, beta25_quantile(0.9), 0.02);
}

TEST(CredibleInterval, EmptyDrawsRejected) {
  EXPECT_THROW(credible_interval(std::vector<double>{}, 0.2), DataError);
}

TEST(HcMembership, Examples) {
  HcConfig cfg;
  EXPECT_TRUE(hc_membership(std::vector<double>(100, 0.95), cfg));
  EXPECT_TRUE(hc_membership(std::vector<double>(100, 0.05), cfg));
  EXPECT_FALSE(hc_membership(uniform_draws(10000, 1), cfg));
  EXPECT_FALSE(hc_membership(std::vector<double>(100, 0.5), cfg));
}

TEST(HcMembership, TiesAtThresholdAreNotMembers) {
  HcConfig cfg;
  EXPECT_FALSE(hc_membership(std::vector<double>(10, 0.8), cfg));
  EXPECT_FALSE(hc_membership(std::vector<double>(10, 0.2), cfg));
  // exactly 80% of draws above upper is not strictly more than 1 - alpha
  std::vector<double> d(8, 0.9);
  d.insert(d.end(), 2, 0.5);
  EXPECT_FALSE(hc_membership(d, cfg));
  d.push_back(0.9);
  EXPECT_TRUE(hc_membership(d, cfg));
}

TEST(LcMembership, Examples) {
  HcConfig cfg;
  EXPECT_TRUE(lc_membership(uniform_draws(10000, 2), cfg, 0.2));
  EXPECT_TRUE(lc_membership(grid101(), cfg, 0.2));
  EXPECT_FALSE(lc_membership(std::vector<double>(100, 0.99), cfg, 0.2));
  std::vector<double> bimodal(50, 0.01);
  bimodal.insert(bimodal.end(), 50, 0.99);
  EXPECT_TRUE(lc_membership(bimodal, cfg, 0.2));
}

// A point prediction of 0.99 with a 90% interval from 0.01 to 0.999 is low
// confidence. With draws confined to [0,1] the lower tail forces the mean down
// to about 0.94, so the point prediction here is the median.
TEST(LcMembership, ConfidentLookingPredictionCanBeLowConfidence) {
  std::vector<double> d(11, 0.01);
  d.insert(d.end(), 169, 0.99);
  d.insert(d.end(), 20, 0.9995);
  std::vector<double> sorted = d;
  std::sort(sorted.begin(), sorted.end());
  EXPECT_NEAR(quantile_sorted(sorted, 0.5), 0.99, 1e-12);
  const auto [lo, hi] = credible_interval(d, 0.1);
  EXPECT_NEAR(lo, 0.01, 1e-12);
  EXPECT_GE(hi, 0.999);
  EXPECT_TRUE(lc_membership(d, HcConfig{}, 0.1));
  // at alpha = 0.2 the same draws are high confidence instead
  EXPECT_FALSE(lc_membership(d, HcConfig{}, 0.2));
  EXPECT_TRUE(hc_membership(d, HcConfig{}));
}

TEST(HcMembership, RaisingAlphaNeverShrinksTheSet) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> centre(0.0, 1.0);
  for (int pixel = 0; pixel < 200; ++pixel) {
    std::normal_distribution<double> z(centre(rng), 0.15);
    std::vector<double> d(200);
    for (auto& v : d) v = std::clamp(z(rng), 0.0, 1.0);
    bool prev = false;
    for (double alpha : {0.05, 0.1, 0.2, 0.3, 0.5}) {
      const bool now = hc_membership(d, HcConfig{0.2, 0.8, alpha});
      EXPECT_TRUE(now || !prev);
      prev = now;
    }
  }
}

TEST(Summarize, HcAndLcAreDisjointWithDefaults) {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u;
  for (int pixel = 0; pixel < 500; ++pixel) {
    std::gamma_distribution<double> ga(0.2 + 5 * u(rng)), gb(0.2 + 5 * u(rng));
    std::vector<double> d(300);
    for (auto& v : d) {
      const double a = ga(rng), b = gb(rng);
      v = a + b > 0 ? a / (a + b) : 0.5;
    }
    const auto s = summarize(d, HcConfig{});
    EXPECT_FALSE(s.hc && s.lc);
    EXPECT_LE(s.q_lo, s.q_hi);
    EXPECT_LE(s.p_below + s.p_above, 1.0);
  }
}

TEST(SummarizeFeatures, MeanMatchesRecomputation) {
  bnn::Model model(bnn::Architecture{{3, 4, 1}});
  const auto s = samples_for(model, 40, 2);
  fpca::FeatureMatrix fm;
  fm.scores = Eigen::MatrixXd::Random(6, 3);
  for (int i = 0; i < 6; ++i) {
    fm.labels.push_back(i % 2);
    fm.abundance.push_back(i % 2 ? 0.25 : 0.0);
    fm.pixels.push_back({"MLS-1200", i, 2 * i});
  }
  const auto summary = summarize_features(s, model, fm, HcConfig{});
  ASSERT_EQ(summary.size(), 6u);
  for (int i = 0; i < 6; ++i) {
    const auto d = predictive_draws(s, model, fm.scores.row(i).transpose());
    EXPECT_NEAR(summary.stats[i].mean, d.mean(), 1e-12);
  }
}

TEST(SummaryCsv, RoundTrip) {
  test::TempDir dir;
  PredictiveSummary s;
  for (int i = 0; i < 4; ++i) {
    s.pixels.push_back({"SAS-1430", i, i + 1});
    s.abundance.push_back(0.1 * i);
    s.stats.push_back({0.1 + 0.2 * i, 0.05 * i, 0.3 + 0.1 * i, 0.25, 0.5, i == 1, i == 2});
  }
  write_summary_csv(dir.path() / "s.csv", s);
  const auto back = read_summary_csv(dir.path() / "s.csv");
  ASSERT_EQ(back.size(), 4u);
  for (int i = 0; i < 4; ++i) {
    EXPECT_EQ(back.pixels[i], s.pixels[i]);
    EXPECT_EQ(back.abundance[i], s.abundance[i]);
    EXPECT_EQ(back.stats[i].mean, s.stats[i].mean);
    EXPECT_EQ(back.stats[i].q_hi, s.stats[i].q_hi);
    EXPECT_EQ(back.stats[i].hc, s.stats[i].hc);
    EXPECT_EQ(back.stats[i].lc, s.stats[i].lc);
  }
  EXPECT_THROW(read_summary_csv(dir.path() / "none.csv"), IoError);
}

TEST(HcConfig, Validation) {
  EXPECT_NO_THROW(HcConfig{}.validate());
  EXPECT_THROW((HcConfig{0.8, 0.2, 0.2}.validate()), ConfigError);
  EXPECT_THROW((HcConfig{0.2, 0.8, 1.0}.validate()), ConfigError);
}
