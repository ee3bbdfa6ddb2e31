#include <gtest/gtest.h>

#include <cmath>
#include <stdexcept>
#include <vector>

#include "realpg/metrics.hpp"
#include "realpg/oracle.hpp"
#include "realpg/rng.hpp"

using namespace realpg;
using Vec = std::vector<double>;

TEST(Pearson, Examples) {
  EXPECT_NEAR(pearson(Vec{1, 2, 3}, Vec{2, 4, 6}), 1.0, 1e-15);
  EXPECT_NEAR(pearson(Vec{1, 2, 3}, Vec{3, 2, 1}), -1.0, 1e-15);
  EXPECT_NEAR(pearson(Vec{1, 2, 3}, Vec{1, 3, 2}), 0.5, 1e-15);
}

TEST(Pearson, Errors) {
  EXPECT_THROW(pearson(Vec{1, 1, 1}, Vec{1, 2, 3}), std::domain_error);
  EXPECT_THROW(pearson(Vec{1, 2, 3}, Vec{4, 4, 4}), std::domain_error);
  EXPECT_THROW(pearson(Vec{1}, Vec{1}), std::invalid_argument);
  EXPECT_THROW(pearson(Vec{1, 2}, Vec{1, 2, 3}), std::invalid_argument);
}

TEST(Pearson, AffineInvariance) {
  Rng rng = make_stream({31});
  for (int trial = 0; trial < 50; ++trial) {
    Vec p(40), g(40);
    for (std::size_t i = 0; i < p.size(); ++i) {
      p[i] = 10.0 * uniform01(rng);
      g[i] = 1.0 + std::floor(5.0 * uniform01(rng));
    }
    const double base = pearson(p, g);
    const double a = 0.1 + 5.0 * uniform01(rng), b = 20.0 * uniform01(rng) - 10.0;
    Vec q(p.size()), n(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) {
      q[i] = a * p[i] + b;
      n[i] = -a * p[i] + b;
    }
    EXPECT_NEAR(pearson(q, g), base, 1e-12);
    EXPECT_NEAR(pearson(n, g), -base, 1e-12);
  }
}

TEST(Spearman, Examples) {
  EXPECT_NEAR(spearman(Vec{1, 2, 2, 3}, Vec{10, 20, 20, 30}), 1.0, 1e-15);
  EXPECT_NEAR(spearman(Vec{1, 2, 3, 4}, Vec{1, 3, 2, 4}), 0.8, 1e-15);
  Vec g{0.3, 1.7, -2.0, 5.5, 4.0}, p(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) p[i] = std::exp(g[i]);
  EXPECT_NEAR(spearman(p, g), 1.0, 1e-15);
  EXPECT_THROW(spearman(Vec{2, 2, 2}, Vec{1, 2, 3}), std::domain_error);
}

TEST(Spearman, AverageRanks) {
  EXPECT_EQ(average_ranks(Vec{10, 20, 20, 30}), (Vec{1, 2.5, 2.5, 4}));
  EXPECT_EQ(average_ranks(Vec{5, 5, 5}), (Vec{2, 2, 2}));
}

TEST(KendallTauB, Examples) {
  EXPECT_NEAR(kendall_tau_b(Vec{1, 2, 3, 4}, Vec{2, 5, 7, 9}), 1.0, 1e-15);
  EXPECT_NEAR(kendall_tau_b(Vec{1, 2, 3}, Vec{1, 3, 2}), 1.0 / 3.0, 1e-15);
  EXPECT_NEAR(kendall_tau_b(Vec{1, 2, 3, 4}, Vec{4, 3, 2, 1}), -1.0, 1e-15);
  EXPECT_THROW(kendall_tau_b(Vec{3, 3, 3}, Vec{1, 2, 3}), std::domain_error);
}

TEST(KendallTauB, TiesHandCount) {
  // pairs: (1,2) tied in a only; (1,3),(2,3) concordant; C=2, D=0, Tx=1, Ty=0
  EXPECT_NEAR(kendall_tau_b(Vec{1, 1, 2}, Vec{1, 2, 3}), 2.0 / std::sqrt(3.0 * 2.0), 1e-15);
}

TEST(KendallTau, VariantA) {
  EXPECT_NEAR(kendall_tau(Vec{1, 1, 2}, Vec{1, 2, 3}, TauVariant::a), 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(kendall_tau(Vec{1, 2, 3}, Vec{1, 3, 2}, TauVariant::a), 1.0 / 3.0, 1e-15);
}

TEST(RankCorrelations, MonotoneInvariance) {
  Rng rng = make_stream({32});
  for (int trial = 0; trial < 30; ++trial) {
    Vec p(30), g(30);
    for (std::size_t i = 0; i < p.size(); ++i) {
      p[i] = std::floor(8.0 * uniform01(rng));
      g[i] = 1.0 + std::floor(5.0 * uniform01(rng));
    }
    Vec tp(p.size()), tg(g.size());
    for (std::size_t i = 0; i < p.size(); ++i) {
      tp[i] = std::exp(0.7 * p[i]) + 3.0;
      tg[i] = g[i] * g[i] * g[i];
    }
    EXPECT_NEAR(spearman(tp, g), spearman(p, g), 1e-12);
    EXPECT_NEAR(spearman(p, tg), spearman(p, g), 1e-12);
    EXPECT_NEAR(kendall_tau_b(tp, tg), kendall_tau_b(p, g), 1e-12);
  }
}

TEST(Correlations, MatchNaiveReference) {
  Rng rng = make_stream({33});
  for (int v = 0; v < 100; ++v) {
    const bool ties = v % 2 == 0;
    const std::size_t n = 5 + static_cast<std::size_t>(uniform01(rng) * 60.0);
    Vec p(n), g(n);
    for (std::size_t i = 0; i < n; ++i) {
      p[i] = ties ? std::floor(6.0 * uniform01(rng)) : 10.0 * uniform01(rng);
      g[i] = ties ? 1.0 + std::floor(5.0 * uniform01(rng)) : 5.0 * uniform01(rng);
    }
    EXPECT_NEAR(pearson(p, g), oracle::reference::pearson(p, g), 1e-12);
    EXPECT_NEAR(spearman(p, g), oracle::reference::spearman(p, g), 1e-12);
    EXPECT_NEAR(kendall_tau_b(p, g), oracle::reference::kendall_tau_b(p, g), 1e-12);
  }
}

TEST(ErrorMetrics, Examples) {
  const auto same = error_metrics(Vec{1, 2, 3}, Vec{1, 2, 3});
  EXPECT_EQ(same.rmse, 0.0);
  EXPECT_EQ(same.mae, 0.0);
  const auto one = error_metrics(Vec{3}, Vec{5});
  EXPECT_EQ(one.rmse, 2.0);
  EXPECT_EQ(one.mae, 2.0);
  const auto two = error_metrics(Vec{1, 5}, Vec{2, 3});
  EXPECT_NEAR(two.rmse, std::sqrt(2.5), 1e-15);
  EXPECT_NEAR(two.mae, 1.5, 1e-15);
  EXPECT_THROW(error_metrics(Vec{}, Vec{}), std::invalid_argument);
}

TEST(ErrorMetrics, RmseDominatesMae) {
  Rng rng = make_stream({34});
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + static_cast<std::size_t>(uniform01(rng) * 20.0);
    Vec p(n), g(n);
    for (std::size_t i = 0; i < n; ++i) {
      p[i] = 9.0 * uniform01(rng);
      g[i] = 1.0 + std::floor(5.0 * uniform01(rng));
    }
    const auto e = error_metrics(p, g);
    EXPECT_GE(e.rmse + 1e-15, e.mae);
    EXPECT_GE(e.mae, 0.0);
  }
}

TEST(TokenEntropy, Examples) {
  EXPECT_NEAR(token_entropy(Vec(12, 1.0 / 12.0)), std::log(12.0), 1e-14);
  EXPECT_EQ(token_entropy(Vec{0, 1, 0}), 0.0);
  EXPECT_NEAR(token_entropy(Vec{0.5, 0.5, 0, 0}), std::log(2.0), 1e-15);
}

TEST(Report, ConstantPredictionsGiveNullCorrelations) {
  const auto m = compute_report(Vec{3, 3, 3}, Vec{1, 2, 5});
  EXPECT_TRUE(std::isnan(m.r));
  EXPECT_TRUE(std::isnan(m.rho));
  EXPECT_TRUE(std::isnan(m.tau));
  EXPECT_EQ(m.n, 3u);
  nlohmann::ordered_json j;
  to_json(j, m);
  j = nlohmann::ordered_json::parse(j.dump());  // NaN serializes as null
  EXPECT_TRUE(j["r"].is_null());
  for (const char* key : {"r", "rho", "tau", "rmse", "mae", "n", "mean_entropy", "mean_resp_len"})
    EXPECT_TRUE(j.contains(key)) << key;
}

TEST(Report, TauVariantFlag) {
  const Vec p{1, 1, 2}, g{1, 2, 3};
  EXPECT_NEAR(compute_report(p, g, TauVariant::a).tau, 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(compute_report(p, g, TauVariant::b).tau, 2.0 / std::sqrt(6.0), 1e-15);
}
