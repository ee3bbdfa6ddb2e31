#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "realpg/oracle.hpp"

using namespace realpg;
using namespace realpg::oracle;

namespace {

TinyInstance single_prompt(int num_cot, int L, double lambda, int gold) {
  TinyInstance inst;
  inst.policy.vocab.vocab_size = VocabLayout::kNumDigits + num_cot;
  inst.policy.cot_length = L;
  inst.reward.lambda = lambda;
  JudgeExample ex;
  ex.features = {0.4, -1.1, 0.3, 0.9, -0.2};
  ex.gold = gold;
  ex.quality = gold;
  inst.prompts.push_back(ex);
  return inst;
}

double agreement_error(const GradVector& a, const GradVector& b) { return relative_error(a, b, 1e-8); }

}  // namespace

TEST(ExactObjective, SingleCotSingleTerm) {
  auto inst = single_prompt(1, 1, 0.0, 4);
  Rng rng = make_stream({1});
  const auto p = random_params(inst.policy, rng, 1.0);
  const PolicyView pv(inst.policy, p);
  const std::vector<int> cot{10};
  const double resid = pv.rail_value(inst.prompts[0].features, cot) - 4.0;
  EXPECT_NEAR(exact_objective(p, inst), resid * resid, 1e-14);
}

TEST(ExactObjective, PointMassOnGoldIsZero) {
  auto inst = single_prompt(2, 2, 0.0, 3);
  ParamVector p(inst.policy.param_count(), 0.0);
  const auto V = static_cast<std::size_t>(inst.policy.vocab_size());
  const auto bias = V * static_cast<std::size_t>(inst.policy.context_dim());
  for (std::size_t k = 0; k < V; ++k) p[bias + k] = k == 3 ? 0.0 : -800.0;
  EXPECT_NEAR(exact_objective(p, inst), 0.0, 1e-12);
}

TEST(ExactObjective, MatchesMonteCarlo) {
  Rng rng = make_stream({2});
  const auto inst = random_instance(rng, 2, 2, 1.0, 3);
  const auto p = random_params(inst.policy, rng, 1.0);
  const PolicyView pv(inst.policy, p);
  const std::size_t per_prompt = 1000000 / inst.prompts.size();
  double estimate = 0.0, variance = 0.0;
  for (std::size_t xi = 0; xi < inst.prompts.size(); ++xi) {
    const auto& ex = inst.prompts[xi];
    Rng s = make_stream({3, xi});
    double sum = 0.0, sq = 0.0;
    for (std::size_t n = 0; n < per_prompt; ++n) {
      const auto t = pv.sample(ex.features, xi, s);
      const double resid = pv.expected_score(t.score_dist) - ex.gold;
      const double loss = resid * resid - inst.reward.lambda * std::log(t.score_dist[static_cast<std::size_t>(ex.gold)]);
      sum += loss;
      sq += loss * loss;
    }
    const double mean = sum / static_cast<double>(per_prompt);
    const double var = sq / static_cast<double>(per_prompt) - mean * mean;
    estimate += inst.weight(xi) * mean;
    variance += inst.weight(xi) * inst.weight(xi) * var / static_cast<double>(per_prompt);
  }
  EXPECT_NEAR(estimate, exact_objective(p, inst), 3.0 * std::sqrt(variance));
}

TEST(ExactGradient, MatchesFiniteDifferences) {
  double worst = 0.0;
  for (std::size_t i = 0; i < 50; ++i) {
    Rng rng = make_stream({4, i});
    const auto inst = random_instance(rng, 2, 1 + static_cast<int>(i % 2), (i / 2) % 2 ? 1.0 : 0.0, 1 + i % 3);
    const auto p = random_params(inst.policy, rng, 1.0);
    const auto exact = exact_gradient(p, inst);
    const auto fd = finite_diff_gradient(p, inst);
    EXPECT_TRUE(gradients_agree(exact, fd, 1e-6, 1e-8)) << "instance " << i;
    EXPECT_LE(max_abs_diff(exact, fd), 1e-8) << "instance " << i;
    worst = std::max(worst, agreement_error(exact, fd));
  }
  EXPECT_LE(worst, 1e-6);
}

TEST(ExactGradient, ConstantRewardTermOneVanishes) {
  Rng rng = make_stream({5});
  const auto inst = random_instance(rng, 2, 2, 0.0, 2);
  const auto p = random_params(inst.policy, rng, 1.5);
  const RewardTable table(inst.prompts.size(), std::vector<double>(4, 2.7));
  EXPECT_LE(max_abs(exact_reinforce_gradient(p, inst, table)), 1e-14);
}

TEST(ExactGradient, SingleCotTokenIsTermTwoOnly) {
  auto inst = single_prompt(1, 2, 1.0, 2);
  Rng rng = make_stream({6});
  const auto p = random_params(inst.policy, rng, 1.0);
  const std::vector<int> cot{10, 10};
  const auto& f = inst.prompts[0].features;
  EXPECT_EQ(max_abs(grad_log_prob_cot(inst.policy, p, f, cot)), 0.0);
  // the only trajectory is fixed, so the gradient is that of its reward
  const auto term2 = central_difference(
      [&](std::span<const double> q) {
        const PolicyView pv(inst.policy, q);
        return real_reward(pv.rail_value(f, cot), pv.log_prob_token(f, cot, 2), 2, 1.0);
      },
      p);
  EXPECT_TRUE(gradients_agree(exact_gradient(p, inst), term2, 1e-6, 1e-8));
}

TEST(FiniteDifference, QuadraticIsExact) {
  const std::vector<double> a{1.5, -2.0, 0.25, 3.0}, b{0.5, 1.0, -4.0, 2.0};
  const auto fn = [&](std::span<const double> x) {
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) s += a[i] * x[i] * x[i] + b[i] * x[i];
    return s;
  };
  const std::vector<double> x{0.3, -0.7, 1.1, 0.05};
  const auto g = central_difference(fn, x, 1e-5);
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(g[i], 2.0 * a[i] * x[i] + b[i], 1e-9);
}

TEST(FiniteDifference, StepSweepIsVShaped) {
  std::vector<double> err(3, 0.0);
  const double steps[] = {1e-4, 1e-5, 1e-6};
  for (std::size_t i = 0; i < 10; ++i) {
    Rng rng = make_stream({7, i});
    const auto inst = random_instance(rng, 2, 2, 1.0, 2);
    const auto p = random_params(inst.policy, rng, 2.0);
    const auto exact = exact_gradient(p, inst);
    for (std::size_t s = 0; s < 3; ++s)
      err[s] = std::max(err[s], max_abs_diff(finite_diff_gradient(p, inst, steps[s]), exact));
  }
  EXPECT_LT(err[1], err[0]);
  EXPECT_LT(err[1], err[2]);
}

TEST(EstimatorExpectation, UnstabilizedRealIsUnbiased) {
  for (std::size_t i = 0; i < 6; ++i) {
    Rng rng = make_stream({8, i});
    const auto inst = random_instance(rng, 2, 1 + static_cast<int>(i % 2), 0.5 * static_cast<double>(i % 3), 2);
    const auto p = random_params(inst.policy, rng, 1.0);
    const auto exact = exact_gradient(p, inst);
    for (std::size_t K : {2u, 3u})
      for (bool baseline : {false, true}) {
        EstimatorConfig est;
        est.beta = 1.0;
        est.advantage = {baseline, false};
        EXPECT_LE(max_abs_diff(estimator_expectation(est, p, inst, K), exact), 1e-10)
            << "instance " << i << " K=" << K << " baseline=" << baseline;
      }
  }
}

TEST(EstimatorExpectation, IndependentOfGroupSize) {
  Rng rng = make_stream({9});
  const auto inst = random_instance(rng, 2, 1, 1.0, 2);
  const auto p = random_params(inst.policy, rng, 1.0);
  EstimatorConfig est;
  est.beta = 1.0;
  est.advantage = {true, false};
  const auto g2 = estimator_expectation(est, p, inst, 2);
  for (std::size_t K : {3u, 4u}) EXPECT_LE(max_abs_diff(estimator_expectation(est, p, inst, K), g2), 1e-10);
}

TEST(EstimatorExpectation, EqualRewardsGiveZeroTermOne) {
  Rng rng = make_stream({10});
  const auto inst = random_instance(rng, 2, 2, 0.0, 2);
  const auto p = random_params(inst.policy, rng, 1.0);
  const RewardTable table{std::vector<double>(4, -1.5), std::vector<double>(4, 0.25)};
  for (bool standardize : {false, true})
    EXPECT_LE(max_abs(reinforce_expectation(p, inst, 2, {true, standardize}, table)), 1e-14);
}

TEST(EstimatorExpectation, BaselineTermHasZeroMean) {
  Rng rng = make_stream({11});
  const auto inst = random_instance(rng, 2, 2, 1.0, 2);
  const auto p = random_params(inst.policy, rng, 1.0);
  EXPECT_LE(max_abs(expected_baseline_term(p, inst, 3)), 1e-12);
}

TEST(EnumerationLimits, Rejected) {
  Rng rng = make_stream({12});
  const auto big = random_instance(rng, 3, 2, 1.0, 1);  // 9 CoT sequences
  const auto p = random_params(big.policy, rng, 1.0);
  EXPECT_THROW(exact_objective(p, big), EnumerationLimitError);
  EXPECT_THROW(exact_gradient(p, big), EnumerationLimitError);

  auto many = random_instance(rng, 2, 1, 1.0, 4);
  many.prompts.push_back(many.prompts[0]);
  many.prompt_weights.clear();
  const auto q = random_params(many.policy, rng, 1.0);
  EXPECT_THROW(exact_objective(q, many), EnumerationLimitError);

  const auto ok = random_instance(rng, 2, 2, 1.0, 1);
  const auto r = random_params(ok.policy, rng, 1.0);
  EstimatorConfig rl;
  rl.kind = EstimatorKind::standard_rl;
  EXPECT_THROW(estimator_expectation(rl, r, ok, 4), EnumerationLimitError);
}

TEST(PosteriorMeanOptimality, IndependentLabelIsSkipped) {
  DiscreteJoint j;
  j.px = {0.3, 0.7};
  j.pc_given_x = {{0.5, 0.5}, {0.2, 0.8}};
  j.y_values = {1, 2, 3};
  j.py_given_x = {{0.2, 0.3, 0.5}, {0.2, 0.3, 0.5}};
  OptimalityReport report;
  Rng rng = make_stream({13});
  check_joint(j, 10, rng, report);
  EXPECT_EQ(report.joints_skipped, 1u);
  EXPECT_EQ(report.joints_checked, 0u);
}

TEST(PosteriorMeanOptimality, DeterministicLabelIsRecoveredExactly) {
  DiscreteJoint j;
  j.px = {0.25, 0.5, 0.25};
  j.pc_given_x = {{1.0}, {1.0}, {1.0}};
  j.y_values = {1, 2, 3};
  j.py_given_x = {{0, 0, 1}, {1, 0, 0}, {0, 1, 0}};
  const auto mu = conditional_mean(j);
  EXPECT_EQ(mu, (JointFunction{3, 1, 2}));
  EXPECT_NEAR(population_mse(j, mu), 0.0, 1e-15);
  EXPECT_NEAR(population_pearson(j, mu), 1.0, 1e-12);
  OptimalityReport report;
  Rng rng = make_stream({14});
  check_joint(j, 200, rng, report);
  EXPECT_EQ(report.joints_checked, 1u);
  EXPECT_TRUE(report.passed());
}

TEST(PosteriorMeanOptimality, RandomSuitePasses) {
  const auto report = posterior_mean_suite(200, 200, 99);
  EXPECT_TRUE(report.passed());
  EXPECT_EQ(report.joints_checked + report.joints_skipped, 200u);
  EXPECT_GT(report.joints_checked, 100u);
  EXPECT_GT(report.probes, 0u);
}
