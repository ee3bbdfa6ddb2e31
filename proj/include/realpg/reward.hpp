#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>

namespace realpg {

struct RewardConfig {
  double lambda = 1.0;  // weight of log pi(y* | x, c)
};

/// -(y_hat - y*)^2 + lambda * log pi(y* | x, c). Depends on the policy
/// through both y_hat and logp_gold.
inline double real_reward(double y_hat, double logp_gold, int gold, double lambda) {
  const double r = y_hat - static_cast<double>(gold);
  return -r * r + lambda * logp_gold;
}

/// 1 when the sampled score token is the digit token of y*.
inline double binary_reward(int sampled_token, int gold) {
  return sampled_token == gold ? 1.0 : 0.0;
}

inline double group_accuracy(std::span<const int> sampled_tokens, int gold) {
  if (sampled_tokens.empty()) throw std::invalid_argument("group_accuracy: empty group");
  std::size_t hits = 0;
  for (int t : sampled_tokens) hits += (t == gold);
  return static_cast<double>(hits) / static_cast<double>(sampled_tokens.size());
}

}  // namespace realpg
