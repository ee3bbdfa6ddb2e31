#pragma once

// Ground truth on instances small enough to enumerate: every CoT sequence,
// and every K-tuple of sampled outcomes for estimator expectations.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "realpg/env.hpp"
#include "realpg/errors.hpp"
#include "realpg/estimator.hpp"
#include "realpg/policy.hpp"
#include "realpg/reward.hpp"
#include "realpg/rng.hpp"

namespace realpg::oracle {

struct TinyInstance {
  static constexpr std::size_t kMaxCotSequences = 4;
  static constexpr std::size_t kMaxPrompts = 4;

  PolicyConfig policy;
  std::vector<JudgeExample> prompts;
  std::vector<double> prompt_weights;  // P(x); uniform when empty
  RewardConfig reward;

  double weight(std::size_t i) const {
    return prompt_weights.empty() ? 1.0 / static_cast<double>(prompts.size()) : prompt_weights[i];
  }

  void validate() const {
    policy.validate();
    std::size_t seqs = 1;
    for (int t = 0; t < policy.cot_length; ++t) seqs *= static_cast<std::size_t>(policy.vocab.num_cot());
    if (seqs > kMaxCotSequences)
      throw EnumerationLimitError("instance has " + std::to_string(seqs) + " CoT sequences, limit is 4");
    if (prompts.empty() || prompts.size() > kMaxPrompts)
      throw EnumerationLimitError("instance needs 1..4 prompts");
    if (!prompt_weights.empty() && prompt_weights.size() != prompts.size())
      throw std::invalid_argument("prompt_weights length must match prompts");
  }
};

/// All CoT sequences of length L over the CoT tokens, in lexicographic order.
inline std::vector<std::vector<int>> enumerate_cots(const PolicyConfig& config) {
  std::vector<std::vector<int>> out{{}};
  for (int t = 0; t < config.cot_length; ++t) {
    std::vector<std::vector<int>> next;
    for (const auto& prefix : out) {
      for (int tok = config.vocab.first_cot(); tok < config.vocab_size(); ++tok) {
        auto seq = prefix;
        seq.push_back(tok);
        next.push_back(std::move(seq));
      }
    }
    out = std::move(next);
  }
  return out;
}

/// Expected loss sum_x P(x) sum_c pi(c|x) [ s (y_hat - y*)^2 - lambda log pi(y*|x,c) ]
/// with s = squared_weight (1 for the regression-aware objective).
inline double exact_objective(std::span<const double> params, const TinyInstance& inst,
                              double squared_weight = 1.0) {
  inst.validate();
  const PolicyView policy(inst.policy, params);
  const auto cots = enumerate_cots(inst.policy);
  double total = 0.0;
  for (std::size_t xi = 0; xi < inst.prompts.size(); ++xi) {
    const auto& ex = inst.prompts[xi];
    for (const auto& c : cots) {
      const double pc = std::exp(policy.log_prob_cot(ex.features, c));
      const double resid = policy.rail_value(ex.features, c) - ex.gold;
      const double lp = policy.log_prob_token(ex.features, c, ex.gold);
      total += inst.weight(xi) * pc * (squared_weight * resid * resid - inst.reward.lambda * lp);
    }
  }
  return total;
}

/// Gradient of the expected reward (= -grad of exact_objective), assembled
/// from the two closed-form terms pi r grad log pi + pi grad r.
inline GradVector exact_gradient(std::span<const double> params, const TinyInstance& inst,
                                 double squared_weight = 1.0) {
  inst.validate();
  const PolicyView policy(inst.policy, params);
  const auto cots = enumerate_cots(inst.policy);
  GradVector g(params.size(), 0.0);
  for (std::size_t xi = 0; xi < inst.prompts.size(); ++xi) {
    const auto& ex = inst.prompts[xi];
    for (const auto& c : cots) {
      const double w = inst.weight(xi) * std::exp(policy.log_prob_cot(ex.features, c));
      const double y_hat = policy.rail_value(ex.features, c);
      const double lp = policy.log_prob_token(ex.features, c, ex.gold);
      const double resid = y_hat - ex.gold;
      const double r = -squared_weight * resid * resid + inst.reward.lambda * lp;
      policy.add_grad_log_prob_cot(ex.features, c, w * r, g);
      policy.add_grad_rail(ex.features, c, w * -2.0 * squared_weight * resid, g);
      policy.add_grad_log_prob_token(ex.features, c, ex.gold, w * inst.reward.lambda, g);
    }
  }
  return g;
}

/// Central differences of an arbitrary scalar function of the parameters.
inline GradVector central_difference(const std::function<double(std::span<const double>)>& fn,
                                     std::span<const double> params, double step = 1e-5) {
  std::vector<double> work(params.begin(), params.end());
  GradVector g(params.size());
  for (std::size_t i = 0; i < work.size(); ++i) {
    const double orig = work[i];
    work[i] = orig + step;
    const double up = fn(work);
    work[i] = orig - step;
    const double down = fn(work);
    work[i] = orig;
    g[i] = (up - down) / (2.0 * step);
  }
  return g;
}

/// Central differences of the expected reward, -exact_objective, so the
/// result is directly comparable with exact_gradient.
inline GradVector finite_diff_gradient(std::span<const double> params, const TinyInstance& inst,
                                       double step = 1e-5, double squared_weight = 1.0) {
  return central_difference(
      [&](std::span<const double> p) { return -exact_objective(p, inst, squared_weight); }, params, step);
}

/// Exact gradient of E[1(y = y*)] over CoT and score token (binary-reward REINFORCE).
inline GradVector exact_binary_rl_gradient(std::span<const double> params, const TinyInstance& inst) {
  inst.validate();
  const PolicyView policy(inst.policy, params);
  GradVector g(params.size(), 0.0);
  for (std::size_t xi = 0; xi < inst.prompts.size(); ++xi) {
    const auto& ex = inst.prompts[xi];
    for (const auto& c : enumerate_cots(inst.policy)) {
      const double pc = std::exp(policy.log_prob_cot(ex.features, c));
      const double w = inst.weight(xi) * pc * policy.score_dist(ex.features, c)[static_cast<std::size_t>(ex.gold)];
      policy.add_grad_log_prob_cot(ex.features, c, w, g);
      policy.add_grad_log_prob_token(ex.features, c, ex.gold, w, g);
    }
  }
  return g;
}

/// Reward fixed per (prompt index, CoT index in enumerate_cots order).
using RewardTable = std::vector<std::vector<double>>;

/// REINFORCE gradient sum_x P(x) sum_c pi(c|x) r(x,c) grad log pi(c|x).
inline GradVector exact_reinforce_gradient(std::span<const double> params, const TinyInstance& inst,
                                           const RewardTable& table) {
  inst.validate();
  const PolicyView policy(inst.policy, params);
  const auto cots = enumerate_cots(inst.policy);
  GradVector g(params.size(), 0.0);
  for (std::size_t xi = 0; xi < inst.prompts.size(); ++xi)
    for (std::size_t ci = 0; ci < cots.size(); ++ci) {
      const auto& f = inst.prompts[xi].features;
      const double w = inst.weight(xi) * std::exp(policy.log_prob_cot(f, cots[ci]));
      policy.add_grad_log_prob_cot(f, cots[ci], w * table[xi][ci], g);
    }
  return g;
}

namespace detail {

struct Outcome {
  std::size_t cot_index = 0;
  int score_token = 0;
  double prob = 0.0;
};

inline constexpr std::size_t kMaxTuples = 250000;

/// Calls visit(tuple, probability) for every K-tuple of outcomes.
template <class Visit>
void for_each_tuple(const std::vector<Outcome>& outcomes, std::size_t K, Visit&& visit) {
  double count = std::pow(static_cast<double>(outcomes.size()), static_cast<double>(K));
  if (count > static_cast<double>(kMaxTuples))
    throw EnumerationLimitError("K-tuple enumeration too large (" + std::to_string(count) + ")");
  std::vector<std::size_t> idx(K, 0);
  std::vector<const Outcome*> tuple(K);
  while (true) {
    double p = 1.0;
    for (std::size_t i = 0; i < K; ++i) {
      tuple[i] = &outcomes[idx[i]];
      p *= tuple[i]->prob;
    }
    visit(tuple, p);
    std::size_t pos = 0;
    while (pos < K && ++idx[pos] == outcomes.size()) idx[pos++] = 0;
    if (pos == K) break;
  }
}

inline std::vector<Outcome> outcomes_for(const PolicyView& policy, const JudgeExample& ex,
                                         const std::vector<std::vector<int>>& cots,
                                         bool include_score_token) {
  std::vector<Outcome> out;
  for (std::size_t ci = 0; ci < cots.size(); ++ci) {
    const double pc = std::exp(policy.log_prob_cot(ex.features, cots[ci]));
    if (!include_score_token) {
      out.push_back({ci, ex.gold, pc});
      continue;
    }
    const auto sd = policy.score_dist(ex.features, cots[ci]);
    for (std::size_t y = 0; y < sd.size(); ++y) out.push_back({ci, static_cast<int>(y), pc * sd[y]});
  }
  return out;
}

inline Trajectory make_trajectory(const PolicyView& policy, const JudgeExample& ex, std::size_t xi,
                                  const std::vector<int>& cot, int score_token) {
  Trajectory t;
  t.prompt_index = xi;
  t.cot = cot;
  t.score_token = score_token;
  t.logp_cot = policy.log_prob_cot(ex.features, cot);
  t.score_dist = policy.score_dist(ex.features, cot);
  return t;
}

}  // namespace detail

/// Exact expectation of the sampled group estimator over all K-tuples of
/// outcomes. Only standard_rl depends on the sampled score token, so the
/// other estimators enumerate CoT sequences alone.
inline GradVector estimator_expectation(const EstimatorConfig& est, std::span<const double> params,
                                        const TinyInstance& inst, std::size_t K) {
  inst.validate();
  const PolicyView policy(inst.policy, params);
  const auto cots = enumerate_cots(inst.policy);
  GradVector g(params.size(), 0.0);
  for (std::size_t xi = 0; xi < inst.prompts.size(); ++xi) {
    const auto& ex = inst.prompts[xi];
    const bool with_token = est.kind == EstimatorKind::standard_rl;
    const auto outcomes = detail::outcomes_for(policy, ex, cots, with_token);
    std::vector<Trajectory> cache;
    for (const auto& o : outcomes) cache.push_back(detail::make_trajectory(policy, ex, xi, cots[o.cot_index], o.score_token));
    detail::for_each_tuple(outcomes, K, [&](const std::vector<const detail::Outcome*>& tuple, double p) {
      if (p == 0.0) return;
      std::vector<Trajectory> trajs;
      trajs.reserve(K);
      for (const auto* o : tuple) trajs.push_back(cache[static_cast<std::size_t>(o - outcomes.data())]);
      const Group group = make_group(policy, ex, xi, std::move(trajs), est, inst.reward);
      add_group_gradient(policy, group, ex.features, est, inst.reward, inst.weight(xi) * p, g);
    });
  }
  return g;
}

/// Exact expectation of the Term-1-only estimator whose rewards come from a
/// fixed table (a policy-independent reward, so the Term-2 part is zero).
inline GradVector reinforce_expectation(std::span<const double> params, const TinyInstance& inst,
                                        std::size_t K, AdvantageOptions opts, const RewardTable& table) {
  inst.validate();
  const PolicyView policy(inst.policy, params);
  const auto cots = enumerate_cots(inst.policy);
  GradVector g(params.size(), 0.0);
  for (std::size_t xi = 0; xi < inst.prompts.size(); ++xi) {
    const auto& ex = inst.prompts[xi];
    const auto outcomes = detail::outcomes_for(policy, ex, cots, false);
    detail::for_each_tuple(outcomes, K, [&](const std::vector<const detail::Outcome*>& tuple, double p) {
      std::vector<double> rewards(K);
      for (std::size_t i = 0; i < K; ++i) rewards[i] = table[xi][tuple[i]->cot_index];
      const auto adv = rloo_advantages(rewards, opts);
      for (std::size_t i = 0; i < K; ++i)
        policy.add_grad_log_prob_cot(ex.features, cots[tuple[i]->cot_index],
                                     inst.weight(xi) * p * adv.standardized[i] / static_cast<double>(K), g);
    });
  }
  return g;
}

/// Exact expectation of (1/K) sum_i b_i grad log pi(c_i|x) with leave-one-out
/// baselines b_i of the REAL rewards.
inline GradVector expected_baseline_term(std::span<const double> params, const TinyInstance& inst,
                                         std::size_t K) {
  inst.validate();
  const PolicyView policy(inst.policy, params);
  const auto cots = enumerate_cots(inst.policy);
  GradVector g(params.size(), 0.0);
  for (std::size_t xi = 0; xi < inst.prompts.size(); ++xi) {
    const auto& ex = inst.prompts[xi];
    std::vector<double> rewards_by_cot;
    for (const auto& c : cots)
      rewards_by_cot.push_back(real_reward(policy.rail_value(ex.features, c),
                                           policy.log_prob_token(ex.features, c, ex.gold), ex.gold,
                                           inst.reward.lambda));
    const auto outcomes = detail::outcomes_for(policy, ex, cots, false);
    detail::for_each_tuple(outcomes, K, [&](const std::vector<const detail::Outcome*>& tuple, double p) {
      std::vector<double> rewards(K);
      for (std::size_t i = 0; i < K; ++i) rewards[i] = rewards_by_cot[tuple[i]->cot_index];
      const auto adv = rloo_advantages(rewards, {true, false});
      for (std::size_t i = 0; i < K; ++i)
        policy.add_grad_log_prob_cot(ex.features, cots[tuple[i]->cot_index],
                                     inst.weight(xi) * p * adv.baselines[i] / static_cast<double>(K), g);
    });
  }
  return g;
}

// ---- error measures ----

inline double max_abs(std::span<const double> v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

/// max|a - b| / max(max|b|, floor).
inline double relative_error(std::span<const double> a, std::span<const double> b, double floor = 1e-8) {
  return max_abs_diff(a, b) / std::max(max_abs(b), floor);
}

/// Agreement test used throughout: max|a-b| <= max(rel * max|b|, abs_floor).
inline bool gradients_agree(std::span<const double> a, std::span<const double> b, double rel = 1e-6,
                            double abs_floor = 1e-8) {
  return max_abs_diff(a, b) <= std::max(rel * max_abs(b), abs_floor);
}

inline double cosine(std::span<const double> a, std::span<const double> b) {
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  if (aa == 0.0 || bb == 0.0) return 0.0;
  return ab / std::sqrt(aa * bb);
}

// ---- random tiny instances ----

inline ParamVector random_params(const PolicyConfig& config, Rng& rng, double magnitude = 1.0) {
  ParamVector p(config.param_count());
  for (auto& v : p) v = magnitude * (2.0 * uniform01(rng) - 1.0);
  return p;
}

inline TinyInstance random_instance(Rng& rng, int num_cot, int cot_length, double lambda,
                                    std::size_t num_prompts = 2) {
  TinyInstance inst;
  inst.policy.vocab.vocab_size = VocabLayout::kNumDigits + num_cot;
  inst.policy.prompt_dim = 5;
  inst.policy.cot_length = cot_length;
  inst.policy.temperature = 1.0;
  inst.reward.lambda = lambda;
  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t i = 0; i < num_prompts; ++i) {
    JudgeExample ex;
    ex.features.resize(5);
    for (auto& f : ex.features) f = normal(rng);
    ex.gold = 1 + static_cast<int>(uniform01(rng) * 5.0);
    ex.quality = ex.gold;
    inst.prompts.push_back(std::move(ex));
  }
  double total = 0.0;
  for (std::size_t i = 0; i < num_prompts; ++i) {
    inst.prompt_weights.push_back(0.2 + uniform01(rng));
    total += inst.prompt_weights.back();
  }
  for (auto& w : inst.prompt_weights) w /= total;
  return inst;
}

// ---- the posterior mean is MSE- and Pearson-optimal ----

/// P(x, c, y) = P(x) pi(c|x) P(y|x) on finite supports.
struct DiscreteJoint {
  std::vector<double> px;
  std::vector<std::vector<double>> pc_given_x;
  std::vector<double> y_values;
  std::vector<std::vector<double>> py_given_x;

  std::size_t nx() const { return px.size(); }
  std::size_t nc() const { return pc_given_x.empty() ? 0 : pc_given_x[0].size(); }
  std::size_t ny() const { return y_values.size(); }
  double prob(std::size_t x, std::size_t c, std::size_t y) const {
    return px[x] * pc_given_x[x][c] * py_given_x[x][y];
  }
};

namespace detail {

inline std::vector<double> random_simplex(Rng& rng, std::size_t n) {
  std::vector<double> v(n);
  double total = 0.0;
  for (auto& x : v) total += x = -std::log(1.0 - uniform01(rng));  // Exp(1) -> Dirichlet(1)
  for (auto& x : v) x /= total;
  return v;
}

}  // namespace detail

inline DiscreteJoint random_joint(Rng& rng) {
  const auto size = [&](std::size_t lo) { return lo + static_cast<std::size_t>(uniform01(rng) * static_cast<double>(6 - lo)); };
  DiscreteJoint j;
  const std::size_t nx = size(1), nc = size(1), ny = size(2);
  j.px = detail::random_simplex(rng, nx);
  for (std::size_t x = 0; x < nx; ++x) {
    j.pc_given_x.push_back(detail::random_simplex(rng, nc));
    j.py_given_x.push_back(detail::random_simplex(rng, ny));
  }
  for (std::size_t y = 0; y < ny; ++y) j.y_values.push_back(static_cast<double>(y + 1));
  return j;
}

/// A function of (x, c), stored row-major as values[x * nc + c].
using JointFunction = std::vector<double>;

/// mu(x, c) = E[y | x, c], computed by conditioning the full joint.
inline JointFunction conditional_mean(const DiscreteJoint& j) {
  JointFunction mu(j.nx() * j.nc(), 0.0);
  for (std::size_t x = 0; x < j.nx(); ++x)
    for (std::size_t c = 0; c < j.nc(); ++c) {
      double mass = 0.0, first = 0.0;
      for (std::size_t y = 0; y < j.ny(); ++y) {
        mass += j.prob(x, c, y);
        first += j.prob(x, c, y) * j.y_values[y];
      }
      mu[x * j.nc() + c] = mass > 0.0 ? first / mass : 0.0;
    }
  return mu;
}

/// E[y | x] from the label factor alone.
inline std::vector<double> prompt_mean(const DiscreteJoint& j) {
  std::vector<double> m(j.nx(), 0.0);
  for (std::size_t x = 0; x < j.nx(); ++x)
    for (std::size_t y = 0; y < j.ny(); ++y) m[x] += j.py_given_x[x][y] * j.y_values[y];
  return m;
}

inline double population_mse(const DiscreteJoint& j, const JointFunction& f) {
  double mse = 0.0;
  for (std::size_t x = 0; x < j.nx(); ++x)
    for (std::size_t c = 0; c < j.nc(); ++c)
      for (std::size_t y = 0; y < j.ny(); ++y) {
        const double d = f[x * j.nc() + c] - j.y_values[y];
        mse += j.prob(x, c, y) * d * d;
      }
  return mse;
}

struct PopulationMoments {
  double var_f = 0.0;
  double var_y = 0.0;
  double cov = 0.0;
};

inline PopulationMoments population_moments(const DiscreteJoint& j, const JointFunction& f) {
  double ef = 0.0, ey = 0.0;
  for (std::size_t x = 0; x < j.nx(); ++x)
    for (std::size_t c = 0; c < j.nc(); ++c)
      for (std::size_t y = 0; y < j.ny(); ++y) {
        const double p = j.prob(x, c, y);
        ef += p * f[x * j.nc() + c];
        ey += p * j.y_values[y];
      }
  PopulationMoments m;
  for (std::size_t x = 0; x < j.nx(); ++x)
    for (std::size_t c = 0; c < j.nc(); ++c)
      for (std::size_t y = 0; y < j.ny(); ++y) {
        const double p = j.prob(x, c, y);
        const double df = f[x * j.nc() + c] - ef;
        const double dy = j.y_values[y] - ey;
        m.var_f += p * df * df;
        m.var_y += p * dy * dy;
        m.cov += p * df * dy;
      }
  return m;
}

/// Population Pearson correlation of f(x,c) with y; NaN if either variance vanishes.
inline double population_pearson(const DiscreteJoint& j, const JointFunction& f) {
  const auto m = population_moments(j, f);
  constexpr double kTiny = 1e-300;
  if (m.var_f <= kTiny || m.var_y <= kTiny) return std::nan("");
  return m.cov / std::sqrt(m.var_f * m.var_y);
}

struct OptimalityReport {
  std::size_t joints_checked = 0;
  std::size_t joints_skipped = 0;
  std::size_t probes = 0;
  std::size_t mse_violations = 0;
  std::size_t pearson_violations = 0;
  std::size_t affine_violations = 0;
  std::size_t reduction_violations = 0;
  double max_affine_error = 0.0;
  double max_reduction_error = 0.0;

  bool passed() const {
    return mse_violations == 0 && pearson_violations == 0 && affine_violations == 0 &&
           reduction_violations == 0;
  }
};

inline constexpr double kOptimalityTolerance = 1e-12;
// Variance below this makes a joint degenerate (skipped).
inline constexpr double kDegenerateVariance = 1e-14;

/// Checks one joint against `n_competitors` random predictors; accumulates into `report`.
inline void check_joint(const DiscreteJoint& j, std::size_t n_competitors, Rng& rng, OptimalityReport& report) {
  const auto mu = conditional_mean(j);
  const auto mu_m = population_moments(j, mu);
  if (mu_m.var_y <= kDegenerateVariance || mu_m.var_f <= kDegenerateVariance) {
    ++report.joints_skipped;
    return;
  }
  ++report.joints_checked;

  // (d) under the factorization mu(x, c) depends on x only
  const auto mx = prompt_mean(j);
  for (std::size_t x = 0; x < j.nx(); ++x)
    for (std::size_t c = 0; c < j.nc(); ++c) {
      const double err = std::abs(mu[x * j.nc() + c] - mx[x]);
      report.max_reduction_error = std::max(report.max_reduction_error, err);
      if (err > kOptimalityTolerance * (1.0 + std::abs(mx[x]))) ++report.reduction_violations;
    }

  const double mse_mu = population_mse(j, mu);
  const double rho_mu = mu_m.cov / std::sqrt(mu_m.var_f * mu_m.var_y);
  const double y_lo = j.y_values.front(), y_hi = j.y_values.back();

  // (c) positive affine maps of mu keep its correlation
  {
    const double a = 0.01 + 10.0 * uniform01(rng);
    const double b = 20.0 * uniform01(rng) - 10.0;
    JointFunction t(mu.size());
    for (std::size_t i = 0; i < mu.size(); ++i) t[i] = a * mu[i] + b;
    const double err = std::abs(population_pearson(j, t) - rho_mu);
    report.max_affine_error = std::max(report.max_affine_error, err);
    if (!(err <= kOptimalityTolerance)) ++report.affine_violations;
  }

  const auto check_probe = [&](const JointFunction& f) {
    ++report.probes;
    if (mse_mu > population_mse(j, f) + kOptimalityTolerance * (1.0 + mse_mu)) ++report.mse_violations;
    const double rho_f = population_pearson(j, f);
    if (!std::isnan(rho_f) && rho_f > rho_mu + kOptimalityTolerance) ++report.pearson_violations;
  };

  JointFunction f(mu.size()), probe(mu.size());
  for (std::size_t k = 0; k < n_competitors; ++k) {
    // Alternate between arbitrary functions and small perturbations of mu.
    const bool near = k % 2 == 1;
    const double scale = near ? 0.1 * uniform01(rng) : 1.0;
    for (std::size_t i = 0; i < f.size(); ++i)
      f[i] = near ? mu[i] + scale * (2.0 * uniform01(rng) - 1.0)
                  : y_lo + (y_hi - y_lo) * uniform01(rng);
    check_probe(f);
    // a f + b with random (possibly negative) slope
    const double a = 4.0 * uniform01(rng) - 2.0;
    const double b = 6.0 * uniform01(rng) - 3.0;
    for (std::size_t i = 0; i < f.size(); ++i) probe[i] = a * f[i] + b;
    check_probe(probe);
    // least-squares affine recalibration of f, the best af + b
    const auto fm = population_moments(j, f);
    if (fm.var_f > kDegenerateVariance) {
      double ef = 0.0, ey = 0.0;
      for (std::size_t x = 0; x < j.nx(); ++x)
        for (std::size_t c = 0; c < j.nc(); ++c)
          for (std::size_t y = 0; y < j.ny(); ++y) {
            ef += j.prob(x, c, y) * f[x * j.nc() + c];
            ey += j.prob(x, c, y) * j.y_values[y];
          }
      const double slope = fm.cov / fm.var_f;
      for (std::size_t i = 0; i < f.size(); ++i) probe[i] = ey + slope * (f[i] - ef);
      check_probe(probe);
    }
  }
}

inline OptimalityReport posterior_mean_suite(std::size_t n_joints, std::size_t n_competitors, std::uint64_t seed) {
  OptimalityReport report;
  for (std::size_t i = 0; i < n_joints; ++i) {
    Rng rng = make_stream({seed, 0x1e33aULL, i});
    check_joint(random_joint(rng), n_competitors, rng, report);
  }
  return report;
}

// ---- naive metric references (definitional, O(n^2)) ----

namespace reference {

inline double pearson(std::span<const double> a, std::span<const double> b) {
  // Covariance as the mean over all ordered pairs of half the product of differences.
  const std::size_t n = a.size();
  long double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < n; ++k) {
      const long double da = static_cast<long double>(a[i]) - a[k];
      const long double db = static_cast<long double>(b[i]) - b[k];
      sab += da * db;
      saa += da * da;
      sbb += db * db;
    }
  return static_cast<double>(sab / std::sqrt(saa * sbb));
}

/// Rank of each value: 1 + (number smaller) + (number of other equal values) / 2.
inline std::vector<double> ranks(std::span<const double> v) {
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    double less = 0, equal = 0;
    for (std::size_t k = 0; k < v.size(); ++k) {
      if (v[k] < v[i]) ++less;
      else if (v[k] == v[i] && k != i) ++equal;
    }
    r[i] = 1.0 + less + equal / 2.0;
  }
  return r;
}

inline double spearman(std::span<const double> a, std::span<const double> b) {
  const auto ra = ranks(a);
  const auto rb = ranks(b);
  return pearson(ra, rb);
}

inline int sign(double v) { return (v > 0) - (v < 0); }

/// tau-b = sum sgn sgn / sqrt((n0 - n1)(n0 - n2)), n1/n2 from tie-group sizes.
inline double kendall_tau_b(std::span<const double> a, std::span<const double> b) {
  const std::size_t n = a.size();
  long long s = 0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = i + 1; k < n; ++k) s += sign(a[i] - a[k]) * sign(b[i] - b[k]);
  const auto tie_pairs = [n](std::span<const double> v) {
    double t = 0;
    std::vector<bool> seen(n, false);
    for (std::size_t i = 0; i < n; ++i) {
      if (seen[i]) continue;
      double m = 0;
      for (std::size_t k = i; k < n; ++k)
        if (v[k] == v[i]) {
          seen[k] = true;
          ++m;
        }
      t += m * (m - 1) / 2;
    }
    return t;
  };
  const double n0 = static_cast<double>(n) * static_cast<double>(n - 1) / 2.0;
  return static_cast<double>(s) / std::sqrt((n0 - tie_pairs(a)) * (n0 - tie_pairs(b)));
}

}  // namespace reference

}  // namespace realpg::oracle
