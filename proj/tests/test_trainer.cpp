#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "realpg/checkpoint.hpp"
#include "realpg/infer.hpp"
#include "realpg/optimizer.hpp"
#include "realpg/trainer.hpp"

using namespace realpg;

namespace {

TrainConfig small_config(std::uint64_t seed = 1) {
  TrainConfig c;
  c.policy.vocab.vocab_size = 12;
  c.policy.cot_length = 2;
  c.batch_size = 8;
  c.group_size = 4;
  c.steps = 20;
  c.learning_rate = 0.05;
  c.seed = seed;
  return c;
}

const JudgeDataset& small_data() {
  static const JudgeDataset ds = make_dataset(EnvConfig{}, 64, 5);
  return ds;
}

std::string csv(const std::vector<StepLog>& logs) {
  std::ostringstream os;
  write_step_csv(os, logs);
  return os.str();
}

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("realpg_test_trainer_" + name);
}

}  // namespace

TEST(Optimizer, SgdDeltaIsScaledGradient) {
  auto s = OptimizerState::fresh(OptimizerKind::sgd, 3);
  const std::vector<double> g{0.5, -2.0, 0.0};
  const auto d = optimizer_update(s, g, 0.1);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(d[i], 0.1 * g[i]);
}

TEST(Optimizer, AdamFirstStepIsSignTimesRate) {
  auto s = OptimizerState::fresh(OptimizerKind::adam, 4);
  const std::vector<double> g{0.3, -7.0, 1e-3, 2.0};
  const auto d = optimizer_update(s, g, 0.01);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(d[i], 0.01 * (g[i] > 0 ? 1.0 : -1.0), 1e-7);
  EXPECT_EQ(s.t, 1u);
}

TEST(Optimizer, AdamMatchesHandComputedSecondStep) {
  auto s = OptimizerState::fresh(OptimizerKind::adam, 1);
  optimizer_update(s, std::vector<double>{1.0}, 0.1);
  const auto d = optimizer_update(s, std::vector<double>{-2.0}, 0.1);
  const double m = 0.9 * 0.1 + 0.1 * -2.0;                  // 0.09 - 0.2
  const double v = 0.999 * 0.001 + 0.001 * 4.0;
  const double mhat = m / (1 - 0.81), vhat = v / (1 - 0.999 * 0.999);
  EXPECT_NEAR(d[0], 0.1 * mhat / (std::sqrt(vhat) + 1e-8), 1e-15);
}

TEST(Optimizer, AdamZeroGradientNeverMoves) {
  auto s = OptimizerState::fresh(OptimizerKind::adam, 5);
  for (int i = 0; i < 100; ++i)
    for (double v : optimizer_update(s, std::vector<double>(5, 0.0), 1.0)) EXPECT_EQ(v, 0.0);
}

TEST(Optimizer, NamesRoundTrip) {
  EXPECT_EQ(optimizer_kind_from_string("sgd"), OptimizerKind::sgd);
  EXPECT_EQ(optimizer_kind_from_string("adam"), OptimizerKind::adam);
  EXPECT_THROW(optimizer_kind_from_string("lion"), ConfigError);
}

TEST(SamplingFilter, Semantics) {
  EXPECT_TRUE(filter_keeps(SamplingFilter::all, 0.0));
  EXPECT_TRUE(filter_keeps(SamplingFilter::all, 1.0));
  EXPECT_FALSE(filter_keeps(SamplingFilter::partial, 0.0));
  EXPECT_FALSE(filter_keeps(SamplingFilter::partial, 1.0));
  EXPECT_TRUE(filter_keeps(SamplingFilter::partial, 0.5));
  EXPECT_FALSE(filter_keeps(SamplingFilter::exclude_all_wrong, 0.0));
  EXPECT_TRUE(filter_keeps(SamplingFilter::exclude_all_wrong, 1.0));
  EXPECT_TRUE(filter_keeps(SamplingFilter::exclude_all_right, 0.0));
  EXPECT_FALSE(filter_keeps(SamplingFilter::exclude_all_right, 1.0));
  for (auto f : {SamplingFilter::all, SamplingFilter::partial, SamplingFilter::exclude_all_wrong,
                 SamplingFilter::exclude_all_right})
    EXPECT_EQ(sampling_filter_from_string(to_string(f)), f);
}

TEST(TrainConfigValidation, RejectsBadValues) {
  auto c = small_config();
  c.group_size = 1;
  EXPECT_THROW(c.validate(), ConfigError);
  c = small_config();
  c.batch_size = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = small_config();
  c.reward.lambda = -1.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = small_config();
  c.estimator.beta = -0.1;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(TrainStep, FullyAccurateGroupsLeaveParamsAndMomentsUntouched) {
  // Score head pinned on digit 3 and every gold set to 3: all groups have acc = 1.
  auto c = small_config();
  JudgeDataset ds = small_data();
  for (auto& ex : ds.examples) ex.gold = 3;
  auto state = initial_state(c);
  const std::size_t bias0 = static_cast<std::size_t>(c.policy.vocab_size() * c.policy.context_dim());
  state.params[bias0 + 3] = 60.0;
  const auto before = state;
  const std::vector<std::size_t> batch{0, 1, 2, 3, 4, 5, 6, 7};
  const auto log = train_step(state, ds, batch, c);
  EXPECT_EQ(log.kept_frac, 0.0);
  EXPECT_EQ(state.params, before.params);
  EXPECT_EQ(state.optimizer.m, before.optimizer.m);
  EXPECT_EQ(state.optimizer.v, before.optimizer.v);
  EXPECT_EQ(state.step, before.step + 1);
  for (const auto& g : log.groups) {
    EXPECT_EQ(g.accuracy, 1.0);
    EXPECT_FALSE(g.kept);
  }
}

TEST(TrainStep, FilterDecisionsMatchLoggedAccuracies) {
  for (auto f : {SamplingFilter::all, SamplingFilter::partial, SamplingFilter::exclude_all_wrong,
                 SamplingFilter::exclude_all_right}) {
    auto c = small_config();
    c.filter = f;
    c.steps = 10;
    c.policy.cot_length = 1;
    const auto res = train_run(c, small_data());
    for (const auto& l : res.logs) {
      std::size_t kept = 0;
      for (const auto& g : l.groups) {
        EXPECT_EQ(g.kept, filter_keeps(f, g.accuracy));
        kept += g.kept;
      }
      EXPECT_DOUBLE_EQ(l.kept_frac, static_cast<double>(kept) / static_cast<double>(l.groups.size()));
      EXPECT_GE(l.kept_frac, 0.0);
      EXPECT_LE(l.kept_frac, 1.0);
    }
  }
}

TEST(TrainStep, NonFiniteStateRaisesNumericError) {
  auto c = small_config();
  auto state = initial_state(c);
  state.params[0] = std::numeric_limits<double>::quiet_NaN();
  const std::vector<std::size_t> batch{0, 1};
  EXPECT_THROW(train_step(state, small_data(), batch, c), NumericError);
}

TEST(TrainRun, ZeroStepsKeepsInitialParams) {
  auto c = small_config();
  c.steps = 0;
  const auto res = train_run(c, small_data());
  EXPECT_EQ(res.state.params, init_policy(c.policy, c.seed));
  EXPECT_TRUE(res.logs.empty());
}

TEST(TrainRun, ZeroLearningRateKeepsParamsButLogs) {
  for (auto opt : {OptimizerKind::sgd, OptimizerKind::adam}) {
    auto c = small_config();
    c.learning_rate = 0.0;
    c.optimizer = opt;
    const auto res = train_run(c, small_data());
    EXPECT_EQ(res.state.params, init_policy(c.policy, c.seed));
    EXPECT_EQ(res.logs.size(), c.steps);
  }
}

TEST(TrainRun, BitIdenticalAcrossRepeatsAndThreadCounts) {
  for (auto kind : {EstimatorKind::real, EstimatorKind::standard_rl, EstimatorKind::raft, EstimatorKind::jepo}) {
    auto c = small_config(3);
    c.estimator.kind = kind;
    const auto a = train_run(c, small_data(), 1);
    const auto b = train_run(c, small_data(), 1);
    const auto d = train_run(c, small_data(), 4);
    EXPECT_EQ(csv(a.logs), csv(b.logs));
    EXPECT_EQ(csv(a.logs), csv(d.logs));
    EXPECT_EQ(a.state.params, d.state.params);
  }
}

TEST(TrainRun, RealImprovesPearsonOnDefaultEnvironment) {
  TrainConfig c;  // defaults
  c.steps = 150;
  c.batch_size = 128;
  c.seed = 2;
  const auto train = make_dataset(EnvConfig{}, 2000, 11);
  const auto test = make_dataset(EnvConfig{}, 1000, 12);
  const auto init = init_policy(c.policy, c.seed);
  const auto before = evaluate(PolicyView(c.policy, init), test, {InferMode::rail, 1, 0}).report.r;
  const auto res = train_run(c, train);
  const auto after = evaluate(PolicyView(c.policy, res.state.params), test, {InferMode::rail, 1, 0}).report.r;
  EXPECT_GE(after - before, 0.3);
  EXPECT_LT(res.logs.back().entropy, res.logs.front().entropy);
}

TEST(StepCsv, HeaderAndRowCount) {
  auto c = small_config();
  c.steps = 5;
  const auto text = csv(train_run(c, small_data()).logs);
  EXPECT_EQ(text.substr(0, text.find('\n')), "step,mean_reward,mean_acc,kept_frac,grad_norm,entropy,resp_len");
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 6);
}

TEST(Checkpoint, SaveLoadIsBitExact) {
  auto c = small_config();
  c.steps = 3;
  const auto res = train_run(c, small_data());
  const auto ck = res.checkpoint(c);
  const auto path = temp_path("roundtrip.bin");
  save_checkpoint(ck, path.string());
  const auto back = load_checkpoint(path.string());
  EXPECT_EQ(back.params, ck.params);
  EXPECT_EQ(back.optimizer, ck.optimizer);
  EXPECT_EQ(back.step, ck.step);
  EXPECT_EQ(back.policy, ck.policy);
  for (std::size_t i = 0; i < ck.params.size(); ++i)
    EXPECT_EQ(std::bit_cast<std::uint64_t>(back.params[i]), std::bit_cast<std::uint64_t>(ck.params[i]));
  std::filesystem::remove(path);
}

TEST(Checkpoint, StartsWithMagic) {
  const auto bytes = serialize_checkpoint(train_run(small_config(), small_data()).checkpoint(small_config()));
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 7), "REALPG1");
}

TEST(Checkpoint, TruncatedFileRejected) {
  const auto bytes = serialize_checkpoint(Checkpoint{small_config().policy, OptimizerState::fresh(OptimizerKind::adam, 246),
                                                      0, ParamVector(small_config().policy.param_count(), 0.5)});
  for (std::size_t cut : {std::size_t{3}, std::size_t{20}, bytes.size() / 2, bytes.size() - 1})
    EXPECT_THROW(deserialize_checkpoint(std::vector<char>(bytes.begin(), bytes.begin() + cut)), CompatibilityError);
}

TEST(Checkpoint, BadMagicAndVersionRejected) {
  auto c = small_config();
  auto bytes = serialize_checkpoint(Checkpoint{c.policy, OptimizerState::fresh(OptimizerKind::sgd, 0), 0,
                                               ParamVector(c.policy.param_count(), 0.0)});
  auto bad = bytes;
  bad[0] = 'X';
  EXPECT_THROW(deserialize_checkpoint(bad), CompatibilityError);
  bad = bytes;
  bad[7] = 9;  // version field follows the 7-byte magic
  EXPECT_THROW(deserialize_checkpoint(bad), CompatibilityError);
}

TEST(Checkpoint, DimensionMismatchRejected) {
  auto c = small_config();
  const Checkpoint ck{c.policy, OptimizerState::fresh(OptimizerKind::sgd, 0), 0, ParamVector(c.policy.param_count())};
  auto other = c.policy;
  other.vocab.vocab_size = 14;
  EXPECT_THROW(require_compatible(ck, other), CompatibilityError);
  auto tc = c;
  tc.policy = other;
  EXPECT_THROW(state_from_checkpoint(ck, tc), CompatibilityError);
}

TEST(Checkpoint, MissingFileRejected) {
  EXPECT_THROW(load_checkpoint(temp_path("does_not_exist.bin").string()), CompatibilityError);
}
