#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "realpg/env.hpp"

using namespace realpg;

namespace {

EnvConfig env(double sigma, double p, double alpha = 1.0) {
  EnvConfig c;
  c.feature_noise = sigma;
  c.label_flip_prob = p;
  c.signal_scale = alpha;
  return c;
}

std::vector<double> center(double alpha, int q) {
  std::vector<double> f(5, 0.0);
  f[static_cast<std::size_t>(q - 1)] = alpha;
  return f;
}

}  // namespace

TEST(EnvConfigValidation, RejectsOutOfRange) {
  EXPECT_THROW(env(-0.1, 0.2).validate(), ConfigError);
  EXPECT_THROW(env(0.5, 1.0).validate(), ConfigError);
  EXPECT_THROW(env(0.5, -0.1).validate(), ConfigError);
  auto c = env(0.5, 0.2);
  c.prompt_dim = 4;
  EXPECT_THROW(c.validate(), ConfigError);
  EXPECT_THROW(make_dataset(env(0.5, 0.2), 0, 1), ConfigError);
}

TEST(MakeDataset, NoiselessLimit) {
  const auto ds = make_dataset(env(0.0, 0.0, 1.5), 100, 3);
  ASSERT_EQ(ds.size(), 100u);
  for (const auto& ex : ds.examples) {
    EXPECT_EQ(ex.features, center(1.5, ex.quality));
    EXPECT_EQ(ex.gold, ex.quality);
  }
}

TEST(MakeDataset, Deterministic) {
  const auto a = make_dataset(env(0.5, 0.2), 500, 9);
  const auto b = make_dataset(env(0.5, 0.2), 500, 9);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].features, b[i].features);
    EXPECT_EQ(a[i].gold, b[i].gold);
    EXPECT_EQ(a[i].quality, b[i].quality);
  }
}

TEST(MakeDataset, LabelsStayNearQuality) {
  for (const auto& ex : make_dataset(env(0.5, 0.6), 2000, 4).examples) {
    EXPECT_GE(ex.gold, 1);
    EXPECT_LE(ex.gold, 5);
    EXPECT_LE(std::abs(ex.gold - ex.quality), 1);
  }
}

TEST(MakeDataset, MismatchRateMatchesClampedKernel) {
  const double p = 0.2;
  // Exact: interior levels mismatch with prob p, boundary levels with p/2.
  double expected = 0.0;
  for (int q = 1; q <= 5; ++q)
    for (int d : {-1, 0, 1}) {
      const double pd = d == 0 ? 1 - p : p / 2;
      if (std::clamp(q + d, 1, 5) != q) expected += pd / 5.0;
    }
  EXPECT_NEAR(mismatch_probability(env(0.5, p)), expected, 1e-15);
  const std::size_t n = 100000;
  const auto ds = make_dataset(env(0.5, p), n, 21);
  const double rate =
      static_cast<double>(std::count_if(ds.examples.begin(), ds.examples.end(),
                                        [](const JudgeExample& e) { return e.gold != e.quality; })) /
      static_cast<double>(n);
  EXPECT_NEAR(rate, expected, 3.0 * std::sqrt(expected * (1 - expected) / n));
}

TEST(MakeDataset, GoldMarginalSymmetricAboutThree) {
  const std::size_t n = 100000;
  const auto ds = make_dataset(env(0.5, 0.2), n, 22);
  double sum = 0.0, sq = 0.0;
  for (const auto& e : ds.examples) {
    sum += e.gold;
    sq += e.gold * e.gold;
  }
  const double mean = sum / n;
  const double sd = std::sqrt(sq / n - mean * mean);
  EXPECT_NEAR(mean, 3.0, 3.0 * sd / std::sqrt(static_cast<double>(n)));
}

TEST(PosteriorMean, InteriorLatticePointIsSymmetric) {
  EXPECT_NEAR(posterior_mean(env(0.0, 0.2), center(1.0, 3)), 3.0, 1e-15);
}

TEST(PosteriorMean, TopBoundaryClampAsymmetry) {
  const double p = 0.2;
  const double expected = 5 * (1 - p) + 4 * (p / 2) + 5 * (p / 2);
  EXPECT_NEAR(posterior_mean(env(0.0, p), center(1.0, 5)), expected, 1e-12);
  EXPECT_NEAR(expected, 4.9, 1e-12);
}

TEST(PosteriorMean, SmallNoiseApproachesLatticeValue) {
  EXPECT_NEAR(posterior_mean(env(0.05, 0.2), center(1.0, 5)), 4.9, 1e-9);
}

TEST(PosteriorMean, EquidistantFeaturesGiveUniformPosterior) {
  const std::vector<double> f(5, 0.3);
  EXPECT_NEAR(posterior_mean(env(0.5, 0.0), f), 3.0, 1e-12);
}

TEST(PosteriorMean, ZeroNoiseOffLatticeThrows) {
  EXPECT_THROW(posterior_mean(env(0.0, 0.2), std::vector<double>{0.5, 0, 0, 0, 0}), std::domain_error);
}

TEST(PosteriorMean, AlwaysInScoreRange) {
  for (const auto& ex : make_dataset(env(1.5, 0.4, 2.0), 2000, 5).examples) {
    const double mu = posterior_mean(env(1.5, 0.4, 2.0), ex.features);
    EXPECT_GE(mu, 1.0);
    EXPECT_LE(mu, 5.0);
  }
}

TEST(PosteriorMean, BeatsSimpleCompetitorsInSquaredError) {
  const auto cfg = env(0.5, 0.2);
  const auto ds = make_dataset(cfg, 100000, 33);
  double mse_mu = 0, mse_const = 0, mse_dec = 0, mse_up = 0, mse_down = 0;
  for (const auto& ex : ds.examples) {
    const double y = ex.gold;
    const double mu = posterior_mean(cfg, ex.features);
    const auto argmax = std::max_element(ex.features.begin(), ex.features.end()) - ex.features.begin();
    const double qhat = 1.0 + static_cast<double>(argmax);
    mse_mu += (mu - y) * (mu - y);
    mse_const += (3.0 - y) * (3.0 - y);
    mse_dec += (qhat - y) * (qhat - y);
    mse_up += (qhat + 0.5 - y) * (qhat + 0.5 - y);
    mse_down += (qhat - 0.5 - y) * (qhat - 0.5 - y);
  }
  const double n = static_cast<double>(ds.size());
  for (double other : {mse_const, mse_dec, mse_up, mse_down}) EXPECT_LE(mse_mu / n, other / n + 1e-3);
}

TEST(DatasetFile, RoundTripIsBitExact) {
  const auto ds = make_dataset(env(0.7, 0.3, 1.2), 50, 8);
  std::stringstream first;
  write_dataset(ds, first);
  const auto back = read_dataset(first);
  EXPECT_EQ(back.config, ds.config);
  EXPECT_EQ(back.seed, ds.seed);
  ASSERT_EQ(back.size(), ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    EXPECT_EQ(back[i].features, ds[i].features);
    EXPECT_EQ(back[i].gold, ds[i].gold);
    EXPECT_EQ(back[i].quality, ds[i].quality);
  }
  std::stringstream second;
  write_dataset(back, second);
  EXPECT_EQ(first.str(), second.str());
}

TEST(DatasetFile, HeaderPlusOneLinePerRecord) {
  std::stringstream s;
  write_dataset(make_dataset(env(0.5, 0.2), 1000, 1), s);
  const auto text = s.str();
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 1001);
}

TEST(DatasetFile, MalformedInputRejected) {
  std::stringstream empty;
  EXPECT_THROW(read_dataset(empty), ConfigError);
  std::stringstream garbage("not json\n");
  EXPECT_THROW(read_dataset(garbage), ConfigError);
  std::stringstream full;
  write_dataset(make_dataset(env(0.5, 0.2), 3, 1), full);
  auto text = full.str();
  text.erase(text.rfind('{'));  // drop the last record
  std::stringstream truncated(text);
  EXPECT_THROW(read_dataset(truncated), ConfigError);
}
