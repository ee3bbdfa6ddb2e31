#pragma once

// The `verify` suite: closed-form gradients against finite differences,
// exact enumeration against finite differences, estimator expectations
// against exact gradients, the posterior-mean optimality run, and the metric
// implementations against naive references. Soft checks are diagnostics
// that are reported but never fail the run.

#include <chrono>
#include <cstdio>
#include <cstdint>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "realpg/estimator.hpp"
#include "realpg/metrics.hpp"
#include "realpg/oracle.hpp"
#include "realpg/policy.hpp"
#include "realpg/rng.hpp"

namespace realpg {

enum class VerifyScale { quick, full };

inline VerifyScale verify_scale_from_string(std::string_view s) {
  if (s == "quick") return VerifyScale::quick;
  if (s == "full") return VerifyScale::full;
  throw ConfigError("unknown verify scale '" + std::string(s) + "'");
}

// Deliberate defects for mutation-testing the suite itself.
enum class InjectedFault { none, token_prob_sign };

struct CheckResult {
  std::string name;
  bool hard = true;
  bool passed = false;
  double max_error = 0.0;
  std::size_t cases = 0;
  std::string detail;
  double seconds = 0.0;
};

struct VerifyReport {
  VerifyScale scale = VerifyScale::quick;
  std::vector<CheckResult> checks;

  bool passed() const {
    for (const auto& c : checks)
      if (c.hard && !c.passed) return false;
    return true;
  }

  const CheckResult* find(std::string_view name) const {
    for (const auto& c : checks)
      if (c.name == name) return &c;
    return nullptr;
  }
};

inline nlohmann::ordered_json to_json(const VerifyReport& r) {
  nlohmann::ordered_json checks = nlohmann::ordered_json::array();
  for (const auto& c : r.checks)
    checks.push_back({{"name", c.name},
                      {"hard", c.hard},
                      {"passed", c.passed},
                      {"max_error", c.max_error},
                      {"cases", c.cases},
                      {"detail", c.detail}});
  return {{"scale", r.scale == VerifyScale::quick ? "quick" : "full"},
          {"passed", r.passed()},
          {"checks", checks}};
}

namespace verify_detail {

inline constexpr double kFdStep = 1e-5;
inline constexpr double kFdRelTol = 1e-6;
inline constexpr double kFdAbsFloor = 1e-8;
inline constexpr double kExactTol = 1e-10;

struct PolicyCase {
  PolicyConfig config;
  ParamVector params;
  std::vector<double> prompt;
  std::vector<int> cot;
};

inline PolicyCase random_policy_case(Rng& rng) {
  PolicyCase c;
  c.config.vocab.vocab_size = 11 + static_cast<int>(uniform01(rng) * 6.0);
  c.config.prompt_dim = 5;
  c.config.cot_length = 1 + static_cast<int>(uniform01(rng) * 3.0);
  const double temps[] = {0.5, 1.0, 2.0};
  c.config.temperature = temps[static_cast<int>(uniform01(rng) * 3.0)];
  c.config.renormalize_digits = uniform01(rng) < 0.3;
  c.params = oracle::random_params(c.config, rng, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  c.prompt.resize(5);
  for (auto& f : c.prompt) f = normal(rng);
  for (int t = 0; t < c.config.cot_length; ++t)
    c.cot.push_back(c.config.vocab.first_cot() +
                    static_cast<int>(uniform01(rng) * c.config.vocab.num_cot()));
  return c;
}

// Accumulates one comparison into a check.
inline void record(CheckResult& check, std::span<const double> analytic, std::span<const double> reference,
                   double rel_tol, double abs_floor) {
  ++check.cases;
  check.max_error = std::max(check.max_error, oracle::relative_error(analytic, reference, abs_floor));
  if (!oracle::gradients_agree(analytic, reference, rel_tol, abs_floor)) check.passed = false;
}

inline void record_abs(CheckResult& check, std::span<const double> a, std::span<const double> b, double tol) {
  ++check.cases;
  const double err = oracle::max_abs_diff(a, b);
  check.max_error = std::max(check.max_error, err);
  if (!(err <= tol)) check.passed = false;
}

template <class Fn>
CheckResult timed(std::string name, bool hard, Fn&& fn) {
  CheckResult c;
  c.name = std::move(name);
  c.hard = hard;
  c.passed = true;
  const auto t0 = std::chrono::steady_clock::now();
  fn(c);
  c.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return c;
}

}  // namespace verify_detail

/// 50 random enumerable instances (V_cot = 2, L in {1,2}, lambda in {0,1}):
/// exact_gradient vs central differences of the exact objective.
inline CheckResult check_exact_vs_finite_difference(std::size_t n_instances, std::uint64_t seed) {
  using namespace verify_detail;
  return timed("oracle.exact_gradient_vs_fd", true, [&](CheckResult& c) {
    for (std::size_t i = 0; i < n_instances; ++i) {
      Rng rng = make_stream({seed, 0xe4aULL, i});
      const int L = 1 + static_cast<int>(i % 2);
      const double lambda = (i / 2) % 2 == 0 ? 0.0 : 1.0;
      const auto inst = oracle::random_instance(rng, 2, L, lambda, 1 + i % 3);
      const auto params = oracle::random_params(inst.policy, rng, 1.0);
      const auto exact = oracle::exact_gradient(params, inst);
      const auto fd = oracle::finite_diff_gradient(params, inst, kFdStep);
      record(c, exact, fd, kFdRelTol, kFdAbsFloor);
    }
  });
}

/// Unstabilized REAL estimator expectation equals the exact gradient, with
/// and without the leave-one-out baseline, for K in {2, 3}.
inline CheckResult check_real_unbiased(std::size_t n_instances, std::uint64_t seed) {
  using namespace verify_detail;
  return timed("oracle.real_estimator_unbiased", true, [&](CheckResult& c) {
    for (std::size_t i = 0; i < n_instances; ++i) {
      Rng rng = make_stream({seed, 0xb1a5ULL, i});
      const auto inst = oracle::random_instance(rng, 2, 1 + static_cast<int>(i % 2), (i % 3) * 0.5, 2);
      const auto params = oracle::random_params(inst.policy, rng, 1.0);
      const auto exact = oracle::exact_gradient(params, inst);
      for (std::size_t K : {2u, 3u})
        for (bool baseline : {false, true}) {
          EstimatorConfig est;
          est.kind = EstimatorKind::real;
          est.beta = 1.0;
          est.advantage = {baseline, false};
          record_abs(c, oracle::estimator_expectation(est, params, inst, K), exact, kExactTol);
        }
    }
  });
}

/// Binary-reward estimator vs exact REINFORCE on the full (CoT, score) sequence;
/// JEPO estimator vs the exact gradient of E[log pi(y*|x,c)].
inline CheckResult check_baseline_estimators_unbiased(std::size_t n_instances, std::uint64_t seed) {
  using namespace verify_detail;
  return timed("oracle.other_estimators_unbiased", true, [&](CheckResult& c) {
    for (std::size_t i = 0; i < n_instances; ++i) {
      Rng rng = make_stream({seed, 0x57dULL, i});
      const auto inst = oracle::random_instance(rng, 2, 1, 1.0, 2);
      const auto params = oracle::random_params(inst.policy, rng, 1.0);
      const auto exact_rl = oracle::exact_binary_rl_gradient(params, inst);
      const auto exact_jepo = oracle::exact_gradient(params, inst, /*squared_weight=*/0.0);
      for (bool baseline : {false, true}) {
        EstimatorConfig rl;
        rl.kind = EstimatorKind::standard_rl;
        rl.advantage = {baseline, false};
        record_abs(c, oracle::estimator_expectation(rl, params, inst, 2), exact_rl, kExactTol);
        EstimatorConfig jepo;
        jepo.kind = EstimatorKind::jepo;
        jepo.advantage = {baseline, false};
        record_abs(c, oracle::estimator_expectation(jepo, params, inst, 2), exact_jepo, kExactTol);
      }
    }
  });
}

/// With a fixed reward table the estimator expectation is plain REINFORCE.
inline CheckResult check_reinforce_reduction(std::size_t n_instances, std::uint64_t seed) {
  using namespace verify_detail;
  return timed("oracle.policy_independent_reduction", true, [&](CheckResult& c) {
    for (std::size_t i = 0; i < n_instances; ++i) {
      Rng rng = make_stream({seed, 0x7ab1eULL, i});
      const auto inst = oracle::random_instance(rng, 2, 2, 0.0, 2);
      const auto params = oracle::random_params(inst.policy, rng, 1.0);
      oracle::RewardTable table(inst.prompts.size(), std::vector<double>(4));
      for (auto& row : table)
        for (auto& v : row) v = 4.0 * uniform01(rng) - 2.0;
      const auto exact = oracle::exact_reinforce_gradient(params, inst, table);
      for (bool baseline : {false, true})
        record_abs(c, oracle::reinforce_expectation(params, inst, 2, {baseline, false}, table), exact, kExactTol);
      record_abs(c, oracle::expected_baseline_term(params, inst, 3),
                 std::vector<double>(params.size(), 0.0), kExactTol);
    }
  });
}

/// Closed-form policy gradients vs central differences on random instances.
inline CheckResult check_policy_gradients(std::size_t n_instances, std::uint64_t seed, InjectedFault fault) {
  using namespace verify_detail;
  return timed("policy.gradients_vs_fd", true, [&](CheckResult& c) {
    for (std::size_t i = 0; i < n_instances; ++i) {
      Rng rng = make_stream({seed, 0x901ULL, i});
      const auto pc = random_policy_case(rng);
      const auto& cfg = pc.config;
      const auto view_at = [&](std::span<const double> p) { return PolicyView(cfg, p); };

      const auto g_cot = grad_log_prob_cot(cfg, pc.params, pc.prompt, pc.cot);
      const auto fd_cot = oracle::central_difference(
          [&](std::span<const double> p) { return view_at(p).log_prob_cot(pc.prompt, pc.cot); }, pc.params, kFdStep);
      record(c, g_cot, fd_cot, kFdRelTol, kFdAbsFloor);

      const int k = static_cast<int>(uniform01(rng) * cfg.vocab_size());
      auto g_tok = grad_token_prob(cfg, pc.params, pc.prompt, pc.cot, k);
      if (fault == InjectedFault::token_prob_sign)
        for (auto& v : g_tok) v = -v;
      const auto fd_tok = oracle::central_difference(
          [&](std::span<const double> p) {
            return view_at(p).score_dist(pc.prompt, pc.cot)[static_cast<std::size_t>(k)];
          },
          pc.params, kFdStep);
      record(c, g_tok, fd_tok, kFdRelTol, kFdAbsFloor);

      const auto rail = rail_value_and_grad(cfg, pc.params, pc.prompt, pc.cot);
      const auto fd_rail = oracle::central_difference(
          [&](std::span<const double> p) { return view_at(p).rail_value(pc.prompt, pc.cot); }, pc.params, kFdStep);
      record(c, rail.grad, fd_rail, kFdRelTol, kFdAbsFloor);
    }
  });
}

inline CheckResult check_posterior_mean_optimality(std::size_t joints, std::size_t competitors, std::uint64_t seed) {
  return verify_detail::timed("oracle.posterior_mean_optimality", true, [&](CheckResult& c) {
    const auto r = oracle::posterior_mean_suite(joints, competitors, seed);
    c.cases = r.joints_checked;
    c.passed = r.passed();
    c.max_error = std::max(r.max_affine_error, r.max_reduction_error);
    c.detail = "checked=" + std::to_string(r.joints_checked) + " skipped=" + std::to_string(r.joints_skipped) +
               " probes=" + std::to_string(r.probes) + " violations(mse,pearson,affine,reduction)=" +
               std::to_string(r.mse_violations) + "," + std::to_string(r.pearson_violations) + "," +
               std::to_string(r.affine_violations) + "," + std::to_string(r.reduction_violations);
  });
}

/// Random vectors with and without ties against the O(n^2) references.
inline CheckResult check_metrics_reference(std::size_t n_vectors, std::uint64_t seed) {
  return verify_detail::timed("metrics.naive_reference", true, [&](CheckResult& c) {
    std::normal_distribution<double> normal(0.0, 1.0);
    for (std::size_t i = 0; i < n_vectors; ++i) {
      Rng rng = make_stream({seed, 0x3e7ULL, i});
      const std::size_t n = 5 + static_cast<std::size_t>(uniform01(rng) * 60.0);
      const bool ties = i % 2 == 0;
      std::vector<double> a(n), b(n);
      for (std::size_t k = 0; k < n; ++k) {
        a[k] = normal(rng);
        b[k] = 0.6 * a[k] + normal(rng);
        if (ties) {
          a[k] = std::round(a[k] * 1.5);
          b[k] = std::round(b[k] * 1.5);
        }
      }
      try {
        const double errs[] = {std::abs(pearson(a, b) - oracle::reference::pearson(a, b)),
                               std::abs(spearman(a, b) - oracle::reference::spearman(a, b)),
                               std::abs(kendall_tau_b(a, b) - oracle::reference::kendall_tau_b(a, b))};
        ++c.cases;
        for (double e : errs) {
          c.max_error = std::max(c.max_error, e);
          if (!(e <= 1e-12)) c.passed = false;
        }
      } catch (const std::domain_error&) {
        // constant vector after rounding; nothing to compare
      }
    }
  });
}

/// Diagnostic: cosine between the stabilized (standardized, clipped) REAL
/// estimator expectation and the exact gradient.
inline CheckResult check_stabilized_direction(std::size_t n_instances, std::uint64_t seed) {
  return verify_detail::timed("diag.stabilized_direction", false, [&](CheckResult& c) {
    double min_cos = 1.0;
    std::size_t reversed = 0;
    for (std::size_t i = 0; i < n_instances; ++i) {
      Rng rng = make_stream({seed, 0xd1aULL, i});
      const auto inst = oracle::random_instance(rng, 2, 2, 1.0, 2);
      const auto params = oracle::random_params(inst.policy, rng, 1.0);
      EstimatorConfig est;
      est.beta = 1.0;
      const auto stab = oracle::estimator_expectation(est, params, inst, 3);
      const double cs = oracle::cosine(stab, oracle::exact_gradient(params, inst));
      min_cos = std::min(min_cos, cs);
      reversed += cs <= 0.0;
      ++c.cases;
    }
    c.passed = reversed == 0;
    c.max_error = 1.0 - min_cos;
    c.detail = "min_cosine=" + std::to_string(min_cos) + " reversed=" + std::to_string(reversed);
  });
}

/// Diagnostic: finite-difference error across steps {1e-3 .. 1e-7}; the
/// error should bottom out at an interior step.
inline CheckResult check_fd_step_sweep(std::uint64_t seed) {
  return verify_detail::timed("diag.fd_step_sweep", false, [&](CheckResult& c) {
    Rng rng = make_stream({seed, 0x57e9ULL});
    const auto inst = oracle::random_instance(rng, 2, 2, 1.0, 2);
    const auto params = oracle::random_params(inst.policy, rng, 1.0);
    const auto exact = oracle::exact_gradient(params, inst);
    std::vector<double> errs;
    std::string detail;
    for (double h : {1e-3, 1e-4, 1e-5, 1e-6, 1e-7}) {
      errs.push_back(oracle::max_abs_diff(oracle::finite_diff_gradient(params, inst, h), exact));
      char buf[64];
      std::snprintf(buf, sizeof(buf), "%sh=%.0e:%.3e", detail.empty() ? "" : " ", h, errs.back());
      detail += buf;
    }
    const auto best = std::min_element(errs.begin(), errs.end()) - errs.begin();
    c.cases = errs.size();
    c.passed = best > 0 && best + 1 < static_cast<long>(errs.size());
    c.max_error = errs[static_cast<std::size_t>(best)];
    c.detail = detail;
  });
}

inline VerifyReport run_verification(VerifyScale scale, std::uint64_t seed = 2024,
                                     InjectedFault fault = InjectedFault::none) {
  const bool full = scale == VerifyScale::full;
  VerifyReport r;
  r.scale = scale;
  r.checks.push_back(check_policy_gradients(full ? 100 : 20, seed, fault));
  r.checks.push_back(check_exact_vs_finite_difference(full ? 50 : 10, seed));
  r.checks.push_back(check_real_unbiased(full ? 10 : 3, seed));
  r.checks.push_back(check_baseline_estimators_unbiased(full ? 10 : 3, seed));
  r.checks.push_back(check_reinforce_reduction(full ? 10 : 3, seed));
  r.checks.push_back(check_posterior_mean_optimality(full ? 1000 : 100, full ? 1000 : 100, seed));
  r.checks.push_back(check_metrics_reference(100, seed));
  r.checks.push_back(check_stabilized_direction(full ? 20 : 5, seed));
  r.checks.push_back(check_fd_step_sweep(seed));
  return r;
}

}  // namespace realpg
