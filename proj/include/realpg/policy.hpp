#pragma once

// Linear-softmax autoregressive policy over a vocabulary whose first ten
// tokens are the digits 0..9 and whose remaining tokens are reasoning (CoT)
// tokens. A response is L CoT tokens followed by one score token.
//
// Parameter layout (also the checkpoint layout): W is V rows by F columns,
// row-major, followed by the V biases. F = d + V + 1 where the context is
// [prompt features (d) | one-hot previous token (V) | position t/L (1)].

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "realpg/errors.hpp"
#include "realpg/metrics.hpp"
#include "realpg/rng.hpp"

namespace realpg {

using ParamVector = std::vector<double>;
using GradVector = std::vector<double>;

struct VocabLayout {
  static constexpr int kNumDigits = 10;

  int vocab_size = 12;

  static constexpr bool is_digit(int token) noexcept { return token >= 0 && token < kNumDigits; }
  bool is_cot(int token) const noexcept { return token >= kNumDigits && token < vocab_size; }
  int num_cot() const noexcept { return vocab_size - kNumDigits; }
  int first_cot() const noexcept { return kNumDigits; }

  void validate() const {
    // One CoT token is allowed so that degenerate-support instances exist.
    if (vocab_size < kNumDigits + 1)
      throw ConfigError("vocab_size must be at least 11 (ten digits plus a CoT token)");
  }
};

struct PolicyConfig {
  VocabLayout vocab;
  int prompt_dim = 5;
  int cot_length = 1;
  double temperature = 1.0;
  // Divide the expected score by the total digit mass.
  bool renormalize_digits = false;

  int vocab_size() const noexcept { return vocab.vocab_size; }
  int context_dim() const noexcept { return prompt_dim + vocab.vocab_size + 1; }
  std::size_t param_count() const noexcept {
    const auto v = static_cast<std::size_t>(vocab.vocab_size);
    return v * static_cast<std::size_t>(context_dim()) + v;
  }

  void validate() const {
    vocab.validate();
    if (prompt_dim < 1) throw ConfigError("prompt_dim must be >= 1");
    if (cot_length < 1) throw ConfigError("cot_length must be >= 1");
    if (!(temperature > 0.0) || !std::isfinite(temperature))
      throw ConfigError("temperature must be finite and > 0");
  }

  friend bool operator==(const PolicyConfig& a, const PolicyConfig& b) {
    return a.vocab.vocab_size == b.vocab.vocab_size && a.prompt_dim == b.prompt_dim &&
           a.cot_length == b.cot_length && a.temperature == b.temperature &&
           a.renormalize_digits == b.renormalize_digits;
  }
};

enum class PositionKind { cot, score };

struct Trajectory {
  std::size_t prompt_index = 0;
  std::vector<int> cot;
  int score_token = -1;
  double logp_cot = 0.0;
  std::vector<double> score_dist;
  // Mean entropy of the L + 1 sampling distributions, in nats.
  double mean_entropy = 0.0;
};

/// Uniform [-0.01, 0.01] parameters from a stream keyed by `seed`.
inline ParamVector init_policy(const PolicyConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng = make_stream({seed, 0x1a17ULL});
  ParamVector params(config.param_count());
  for (auto& p : params) p = -0.01 + 0.02 * uniform01(rng);
  return params;
}

/// Read-only view binding a configuration to a parameter vector. All
/// quantities the estimators need are computed here in closed form.
class PolicyView {
 public:
  PolicyView(const PolicyConfig& config, std::span<const double> params)
      : config_(config), params_(params) {
    if (params.size() != config.param_count())
      throw CompatibilityError("parameter vector has length " + std::to_string(params.size()) +
                               ", configuration expects " +
                               std::to_string(config.param_count()));
  }

  const PolicyConfig& config() const noexcept { return config_; }
  std::span<const double> params() const noexcept { return params_; }

  std::vector<double> context(std::span<const double> prompt, int prev_token, int position) const {
    if (static_cast<int>(prompt.size()) != config_.prompt_dim)
      throw CompatibilityError("prompt feature length " + std::to_string(prompt.size()) +
                               " does not match prompt_dim " + std::to_string(config_.prompt_dim));
    std::vector<double> x(static_cast<std::size_t>(config_.context_dim()), 0.0);
    std::copy(prompt.begin(), prompt.end(), x.begin());
    if (prev_token >= 0) x[static_cast<std::size_t>(config_.prompt_dim + prev_token)] = 1.0;
    x.back() = static_cast<double>(position) / static_cast<double>(config_.cot_length);
    return x;
  }

  /// Context at the score position, after the full CoT.
  std::vector<double> score_context(std::span<const double> prompt, std::span<const int> cot) const {
    check_cot(cot);
    return context(prompt, cot.back(), config_.cot_length);
  }

  std::vector<double> logits(std::span<const double> features) const {
    const int V = config_.vocab_size();
    const int F = config_.context_dim();
    std::vector<double> z(static_cast<std::size_t>(V));
    const double* w = params_.data();
    const double* b = params_.data() + static_cast<std::ptrdiff_t>(V) * F;
    for (int j = 0; j < V; ++j) {
      double acc = b[j];
      const double* row = w + static_cast<std::ptrdiff_t>(j) * F;
      for (int f = 0; f < F; ++f) acc += row[f] * features[static_cast<std::size_t>(f)];
      z[static_cast<std::size_t>(j)] = acc;
    }
    for (double v : z)
      if (!std::isfinite(v)) throw NumericError("non-finite logit: parameters have diverged");
    return z;
  }

  /// softmax(z / T). Under the CoT mask the digit entries are exactly zero.
  std::vector<double> dist(std::span<const double> features, PositionKind kind) const {
    return softmax(logits(features), kind);
  }

  std::vector<double> log_dist(std::span<const double> features, PositionKind kind) const {
    const auto z = logits(features);
    const double T = config_.temperature;
    const int begin = kind == PositionKind::cot ? config_.vocab.first_cot() : 0;
    double zmax = -std::numeric_limits<double>::infinity();
    for (std::size_t j = static_cast<std::size_t>(begin); j < z.size(); ++j) zmax = std::max(zmax, z[j] / T);
    double total = 0.0;
    for (std::size_t j = static_cast<std::size_t>(begin); j < z.size(); ++j) total += std::exp(z[j] / T - zmax);
    const double lse = zmax + std::log(total);
    std::vector<double> out(z.size(), -std::numeric_limits<double>::infinity());
    for (std::size_t j = static_cast<std::size_t>(begin); j < z.size(); ++j) out[j] = z[j] / T - lse;
    return out;
  }

  Trajectory sample(std::span<const double> prompt, std::size_t prompt_index, Rng& rng) const {
    Trajectory traj;
    traj.prompt_index = prompt_index;
    traj.cot.reserve(static_cast<std::size_t>(config_.cot_length));
    double entropy = 0.0;
    int prev = -1;
    for (int t = 0; t < config_.cot_length; ++t) {
      const auto x = context(prompt, prev, t);
      const auto p = dist(x, PositionKind::cot);
      const int tok = draw(p, rng);
      traj.cot.push_back(tok);
      traj.logp_cot += log_dist(x, PositionKind::cot)[static_cast<std::size_t>(tok)];
      entropy += token_entropy(p);
      prev = tok;
    }
    const auto xs = context(prompt, prev, config_.cot_length);
    traj.score_dist = dist(xs, PositionKind::score);
    traj.score_token = draw(traj.score_dist, rng);
    entropy += token_entropy(traj.score_dist);
    traj.mean_entropy = entropy / static_cast<double>(config_.cot_length + 1);
    return traj;
  }

  double log_prob_cot(std::span<const double> prompt, std::span<const int> cot) const {
    check_cot(cot);
    double total = 0.0;
    int prev = -1;
    for (int t = 0; t < config_.cot_length; ++t) {
      const int tok = cot[static_cast<std::size_t>(t)];
      total += log_dist(context(prompt, prev, t), PositionKind::cot)[static_cast<std::size_t>(tok)];
      prev = tok;
    }
    return total;
  }

  double log_prob_token(std::span<const double> prompt, std::span<const int> cot, int token) const {
    check_token(token);
    const double lp =
        log_dist(score_context(prompt, cot), PositionKind::score)[static_cast<std::size_t>(token)];
    if (!std::isfinite(lp)) throw NumericError("score token has zero probability");
    return lp;
  }

  std::vector<double> score_dist(std::span<const double> prompt, std::span<const int> cot) const {
    return dist(score_context(prompt, cot), PositionKind::score);
  }

  /// Expected digit value sum_k k * pi(k) over the raw score distribution
  /// (or divided by the digit mass when renormalize_digits is set).
  double expected_score(std::span<const double> score_probs) const {
    double num = 0.0, mass = 0.0;
    for (int k = 0; k < VocabLayout::kNumDigits; ++k) {
      num += k * score_probs[static_cast<std::size_t>(k)];
      mass += score_probs[static_cast<std::size_t>(k)];
    }
    if (!config_.renormalize_digits) return num;
    if (!(mass > 0.0)) throw NumericError("zero digit mass at score position");
    return num / mass;
  }

  double rail_value(std::span<const double> prompt, std::span<const int> cot) const {
    return expected_score(score_dist(prompt, cot));
  }

  // ---- gradient accumulators: grad += scale * d(quantity)/d(theta) ----

  void add_grad_log_prob_cot(std::span<const double> prompt, std::span<const int> cot, double scale,
                             std::span<double> grad) const {
    check_cot(cot);
    const double T = config_.temperature;
    std::vector<double> dz(static_cast<std::size_t>(config_.vocab_size()));
    int prev = -1;
    for (int t = 0; t < config_.cot_length; ++t) {
      const auto x = context(prompt, prev, t);
      const auto p = dist(x, PositionKind::cot);
      const int tok = cot[static_cast<std::size_t>(t)];
      for (std::size_t j = 0; j < dz.size(); ++j) dz[j] = -p[j] / T;
      dz[static_cast<std::size_t>(tok)] += 1.0 / T;
      add_logit_grad(x, dz, scale, grad);
      prev = tok;
    }
  }

  /// d pi(token | score context) / d theta.
  void add_grad_token_prob(std::span<const double> prompt, std::span<const int> cot, int token,
                           double scale, std::span<double> grad) const {
    check_token(token);
    const auto x = score_context(prompt, cot);
    const auto p = dist(x, PositionKind::score);
    const double T = config_.temperature;
    const double pk = p[static_cast<std::size_t>(token)];
    std::vector<double> dz(p.size());
    for (std::size_t j = 0; j < p.size(); ++j) dz[j] = -pk * p[j] / T;
    dz[static_cast<std::size_t>(token)] += pk / T;
    add_logit_grad(x, dz, scale, grad);
  }

  void add_grad_log_prob_token(std::span<const double> prompt, std::span<const int> cot, int token,
                               double scale, std::span<double> grad) const {
    check_token(token);
    const auto x = score_context(prompt, cot);
    const auto p = dist(x, PositionKind::score);
    const double T = config_.temperature;
    std::vector<double> dz(p.size());
    for (std::size_t j = 0; j < p.size(); ++j) dz[j] = -p[j] / T;
    dz[static_cast<std::size_t>(token)] += 1.0 / T;
    add_logit_grad(x, dz, scale, grad);
  }

  /// d y_hat / d theta; returns y_hat.
  double add_grad_rail(std::span<const double> prompt, std::span<const int> cot, double scale,
                       std::span<double> grad) const {
    const auto x = score_context(prompt, cot);
    const auto p = dist(x, PositionKind::score);
    const double T = config_.temperature;
    const double y_hat = expected_score(p);
    std::vector<double> dz(p.size(), 0.0);
    if (config_.renormalize_digits) {
      double mass = 0.0;
      for (int k = 0; k < VocabLayout::kNumDigits; ++k) mass += p[static_cast<std::size_t>(k)];
      for (int k = 0; k < VocabLayout::kNumDigits; ++k)
        dz[static_cast<std::size_t>(k)] = p[static_cast<std::size_t>(k)] * (k - y_hat) / (T * mass);
    } else {
      // sum_k k p_k (delta_kj - p_j) / T = p_j (k_j - y_hat) / T, with k_j = 0 off the digits.
      for (std::size_t j = 0; j < p.size(); ++j) {
        const double kj = VocabLayout::is_digit(static_cast<int>(j)) ? static_cast<double>(j) : 0.0;
        dz[j] = p[j] * (kj - y_hat) / T;
      }
    }
    add_logit_grad(x, dz, scale, grad);
    return y_hat;
  }

 private:
  std::vector<double> softmax(const std::vector<double>& z, PositionKind kind) const {
    const double T = config_.temperature;
    const std::size_t begin =
        kind == PositionKind::cot ? static_cast<std::size_t>(config_.vocab.first_cot()) : 0;
    std::vector<double> p(z.size(), 0.0);
    double zmax = -std::numeric_limits<double>::infinity();
    for (std::size_t j = begin; j < z.size(); ++j) zmax = std::max(zmax, z[j] / T);
    double total = 0.0;
    for (std::size_t j = begin; j < z.size(); ++j) {
      p[j] = std::exp(z[j] / T - zmax);
      total += p[j];
    }
    for (std::size_t j = begin; j < z.size(); ++j) p[j] /= total;
    return p;
  }

  static int draw(const std::vector<double>& p, Rng& rng) {
    const double u = uniform01(rng);
    double cum = 0.0;
    int last = -1;
    for (std::size_t j = 0; j < p.size(); ++j) {
      if (p[j] <= 0.0) continue;
      cum += p[j];
      last = static_cast<int>(j);
      if (u < cum) return last;
    }
    return last;  // rounding left u just above the cumulative total
  }

  void add_logit_grad(std::span<const double> x, std::span<const double> dz, double scale,
                      std::span<double> grad) const {
    if (grad.size() != config_.param_count())
      throw std::invalid_argument("gradient buffer has wrong length");
    const int V = config_.vocab_size();
    const int F = config_.context_dim();
    double* w = grad.data();
    double* b = grad.data() + static_cast<std::ptrdiff_t>(V) * F;
    for (int j = 0; j < V; ++j) {
      const double g = scale * dz[static_cast<std::size_t>(j)];
      if (g == 0.0) continue;
      double* row = w + static_cast<std::ptrdiff_t>(j) * F;
      for (int f = 0; f < F; ++f) row[f] += g * x[static_cast<std::size_t>(f)];
      b[j] += g;
    }
  }

  void check_cot(std::span<const int> cot) const {
    if (static_cast<int>(cot.size()) != config_.cot_length)
      throw std::invalid_argument("CoT length " + std::to_string(cot.size()) + " != cot_length " +
                                  std::to_string(config_.cot_length));
    for (int tok : cot)
      if (!config_.vocab.is_cot(tok)) throw std::invalid_argument("CoT contains a non-CoT token");
  }

  void check_token(int token) const {
    if (token < 0 || token >= config_.vocab_size())
      throw std::invalid_argument("token id out of range");
  }

  PolicyConfig config_;
  std::span<const double> params_;
};

// Free-function forms of the view operations.

inline std::vector<double> token_dist(const PolicyConfig& config, std::span<const double> params,
                                      std::span<const double> features, PositionKind kind) {
  return PolicyView(config, params).dist(features, kind);
}

inline Trajectory sample_trajectory(const PolicyConfig& config, std::span<const double> params,
                                    std::span<const double> prompt, std::size_t prompt_index,
                                    Rng& rng) {
  return PolicyView(config, params).sample(prompt, prompt_index, rng);
}

inline double log_prob_token(const PolicyConfig& config, std::span<const double> params,
                             std::span<const double> prompt, std::span<const int> cot, int token) {
  return PolicyView(config, params).log_prob_token(prompt, cot, token);
}

inline GradVector grad_log_prob_cot(const PolicyConfig& config, std::span<const double> params,
                                    std::span<const double> prompt, std::span<const int> cot) {
  GradVector g(config.param_count(), 0.0);
  PolicyView(config, params).add_grad_log_prob_cot(prompt, cot, 1.0, g);
  return g;
}

inline GradVector grad_token_prob(const PolicyConfig& config, std::span<const double> params,
                                  std::span<const double> prompt, std::span<const int> cot,
                                  int token) {
  GradVector g(config.param_count(), 0.0);
  PolicyView(config, params).add_grad_token_prob(prompt, cot, token, 1.0, g);
  return g;
}

struct RailValueGrad {
  double value = 0.0;
  GradVector grad;
};

inline RailValueGrad rail_value_and_grad(const PolicyConfig& config, std::span<const double> params,
                                         std::span<const double> prompt, std::span<const int> cot) {
  RailValueGrad out;
  out.grad.assign(config.param_count(), 0.0);
  out.value = PolicyView(config, params).add_grad_rail(prompt, cot, 1.0, out.grad);
  return out;
}

}  // namespace realpg
