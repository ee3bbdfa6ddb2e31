#pragma once

// Group-based gradient estimators. Every estimator returns an ascent
// direction on expected reward, averaged over the K members of a group.
//
//   real         (1/K) sum_i [ A~_i grad log pi(c_i|x) + beta * grad r_i ]
//                grad r_i = -2 (y_hat_i - y*) grad y_hat_i + lambda grad log pi(y*|x,c_i)
//   standard_rl  (1/K) sum_i A~_i grad [log pi(c_i|x) + log pi(y_i|x,c_i)], binary reward
//   raft         (1/K) sum_i grad r_i  (prediction update only)
//   jepo         (1/K) sum_i [ A~_i grad log pi(c_i|x) + grad log pi(y*|x,c_i) ],
//                reward log pi(y*|x,c_i)

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "realpg/env.hpp"
#include "realpg/errors.hpp"
#include "realpg/policy.hpp"
#include "realpg/reward.hpp"

namespace realpg {

enum class EstimatorKind { real, standard_rl, raft, jepo };

inline std::string_view to_string(EstimatorKind k) {
  switch (k) {
    case EstimatorKind::real: return "real";
    case EstimatorKind::standard_rl: return "standard_rl";
    case EstimatorKind::raft: return "raft";
    case EstimatorKind::jepo: return "jepo";
  }
  return "?";
}

inline EstimatorKind estimator_kind_from_string(std::string_view s) {
  if (s == "real") return EstimatorKind::real;
  if (s == "standard_rl") return EstimatorKind::standard_rl;
  if (s == "raft") return EstimatorKind::raft;
  if (s == "jepo") return EstimatorKind::jepo;
  throw ConfigError("unknown estimator kind '" + std::string(s) + "'");
}

struct AdvantageOptions {
  bool leave_one_out = true;  // subtract the RLOO baseline
  bool standardize = true;    // divide by sigma(A) + eps and clip
  static constexpr double kClip = 1.0;
  static constexpr double kEps = 1e-8;
};

struct EstimatorConfig {
  EstimatorKind kind = EstimatorKind::real;
  double beta = 0.01;
  AdvantageOptions advantage;
  // jepo only: weight Term 1 by the raw advantage instead of the standardized one.
  bool raw_jepo_weights = false;

  void validate() const {
    if (!(beta >= 0.0) || !std::isfinite(beta)) throw ConfigError("beta must be finite and >= 0");
  }
};

struct Advantages {
  std::vector<double> baselines;
  std::vector<double> raw;
  std::vector<double> standardized;
  double sigma = 0.0;  // population std of raw
};

/// Leave-one-out baselines, raw advantages, and clip(A / (sigma + eps), -1, 1).
/// With standardization off the "standardized" weights are the raw ones.
inline Advantages rloo_advantages(std::span<const double> rewards, AdvantageOptions opts = {}) {
  const std::size_t K = rewards.size();
  if (K == 0) throw std::invalid_argument("rloo_advantages: empty group");
  if (opts.leave_one_out && K < 2)
    throw std::invalid_argument("rloo_advantages: leave-one-out baseline needs K >= 2");
  Advantages a;
  a.baselines.assign(K, 0.0);
  a.raw.resize(K);
  double total = 0.0;
  for (double r : rewards) total += r;
  for (std::size_t i = 0; i < K; ++i) {
    if (opts.leave_one_out) a.baselines[i] = (total - rewards[i]) / static_cast<double>(K - 1);
    a.raw[i] = rewards[i] - a.baselines[i];
  }
  double mean = 0.0;
  for (double v : a.raw) mean += v;
  mean /= static_cast<double>(K);
  double var = 0.0;
  for (double v : a.raw) var += (v - mean) * (v - mean);
  a.sigma = std::sqrt(var / static_cast<double>(K));
  if (opts.standardize) {
    a.standardized.resize(K);
    for (std::size_t i = 0; i < K; ++i)
      a.standardized[i] = std::clamp(a.raw[i] / (a.sigma + AdvantageOptions::kEps),
                                     -AdvantageOptions::kClip, AdvantageOptions::kClip);
  } else {
    a.standardized = a.raw;
  }
  return a;
}

struct Group {
  std::size_t prompt_index = 0;
  int gold = 0;
  std::vector<Trajectory> trajectories;
  std::vector<double> rail_values;  // y_hat_i
  std::vector<double> logp_gold;    // log pi(y* | x, c_i)
  std::vector<double> rewards;
  Advantages advantages;
  double accuracy = 0.0;

  std::size_t size() const noexcept { return trajectories.size(); }
};

/// Scalar reward for member i under the estimator's reward definition.
inline double estimator_reward(EstimatorKind kind, double y_hat, double logp_gold, int sampled,
                               int gold, const RewardConfig& reward) {
  switch (kind) {
    case EstimatorKind::real:
    case EstimatorKind::raft: return real_reward(y_hat, logp_gold, gold, reward.lambda);
    case EstimatorKind::standard_rl: return binary_reward(sampled, gold);
    case EstimatorKind::jepo: return logp_gold;
  }
  return 0.0;
}

/// Scores a set of sampled trajectories for one prompt: RAIL values, gold
/// log-likelihoods, rewards, group accuracy and advantages.
inline Group make_group(const PolicyView& policy, const JudgeExample& example,
                        std::size_t prompt_index, std::vector<Trajectory> trajectories,
                        const EstimatorConfig& est, const RewardConfig& reward) {
  Group g;
  g.prompt_index = prompt_index;
  g.gold = example.gold;
  g.trajectories = std::move(trajectories);
  const std::size_t K = g.trajectories.size();
  g.rail_values.resize(K);
  g.logp_gold.resize(K);
  g.rewards.resize(K);
  std::vector<int> sampled(K);
  for (std::size_t i = 0; i < K; ++i) {
    const auto& t = g.trajectories[i];
    g.rail_values[i] = policy.expected_score(t.score_dist);
    g.logp_gold[i] = policy.log_prob_token(example.features, t.cot, example.gold);
    sampled[i] = t.score_token;
    g.rewards[i] = estimator_reward(est.kind, g.rail_values[i], g.logp_gold[i], t.score_token,
                                    example.gold, reward);
  }
  g.accuracy = group_accuracy(sampled, example.gold);
  g.advantages = rloo_advantages(g.rewards, est.advantage);
  return g;
}

namespace detail {

inline void add_prediction_update(const PolicyView& policy, std::span<const double> prompt,
                                  std::span<const int> cot, int gold, double lambda, double scale,
                                  std::span<double> grad) {
  // grad of -(y_hat - y*)^2 + lambda log pi(y*)
  const double y_hat = policy.rail_value(prompt, cot);
  policy.add_grad_rail(prompt, cot, scale * -2.0 * (y_hat - static_cast<double>(gold)), grad);
  if (lambda != 0.0) policy.add_grad_log_prob_token(prompt, cot, gold, scale * lambda, grad);
}

}  // namespace detail

/// Adds scale * (estimator gradient of the group) into grad.
inline void add_group_gradient(const PolicyView& policy, const Group& group,
                               std::span<const double> prompt, const EstimatorConfig& est,
                               const RewardConfig& reward, double scale, std::span<double> grad) {
  const std::size_t K = group.size();
  if (K == 0) return;
  const double inv_k = scale / static_cast<double>(K);
  const auto& weights = group.advantages.standardized;
  for (std::size_t i = 0; i < K; ++i) {
    const auto& t = group.trajectories[i];
    switch (est.kind) {
      case EstimatorKind::real:
        if (weights[i] != 0.0) policy.add_grad_log_prob_cot(prompt, t.cot, inv_k * weights[i], grad);
        if (est.beta != 0.0)
          detail::add_prediction_update(policy, prompt, t.cot, group.gold, reward.lambda,
                                        inv_k * est.beta, grad);
        break;
      case EstimatorKind::standard_rl:
        if (weights[i] != 0.0) {
          policy.add_grad_log_prob_cot(prompt, t.cot, inv_k * weights[i], grad);
          policy.add_grad_log_prob_token(prompt, t.cot, t.score_token, inv_k * weights[i], grad);
        }
        break;
      case EstimatorKind::raft:
        detail::add_prediction_update(policy, prompt, t.cot, group.gold, reward.lambda, inv_k, grad);
        break;
      case EstimatorKind::jepo: {
        const double w = est.raw_jepo_weights ? group.advantages.raw[i] : weights[i];
        if (w != 0.0) policy.add_grad_log_prob_cot(prompt, t.cot, inv_k * w, grad);
        policy.add_grad_log_prob_token(prompt, t.cot, group.gold, inv_k, grad);
        break;
      }
    }
  }
}

inline GradVector group_gradient(const PolicyView& policy, const Group& group,
                                 std::span<const double> prompt, const EstimatorConfig& est,
                                 const RewardConfig& reward) {
  GradVector g(policy.config().param_count(), 0.0);
  add_group_gradient(policy, group, prompt, est, reward, 1.0, g);
  return g;
}

inline GradVector real_gradient(const PolicyView& policy, const Group& group,
                                std::span<const double> prompt, double beta, double lambda) {
  EstimatorConfig est;
  est.kind = EstimatorKind::real;
  est.beta = beta;
  return group_gradient(policy, group, prompt, est, RewardConfig{lambda});
}

inline GradVector standard_rl_gradient(const PolicyView& policy, const Group& group,
                                       std::span<const double> prompt) {
  EstimatorConfig est;
  est.kind = EstimatorKind::standard_rl;
  return group_gradient(policy, group, prompt, est, RewardConfig{0.0});
}

inline GradVector raft_gradient(const PolicyView& policy, const Group& group,
                                std::span<const double> prompt, double lambda) {
  EstimatorConfig est;
  est.kind = EstimatorKind::raft;
  return group_gradient(policy, group, prompt, est, RewardConfig{lambda});
}

inline GradVector jepo_gradient(const PolicyView& policy, const Group& group,
                                std::span<const double> prompt, bool raw_weights = false) {
  EstimatorConfig est;
  est.kind = EstimatorKind::jepo;
  est.raw_jepo_weights = raw_weights;
  return group_gradient(policy, group, prompt, est, RewardConfig{0.0});
}

}  // namespace realpg
