#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "realpg/errors.hpp"

namespace realpg {

enum class OptimizerKind : std::uint8_t { sgd = 0, adam = 1 };

inline std::string_view to_string(OptimizerKind k) { return k == OptimizerKind::sgd ? "sgd" : "adam"; }

inline OptimizerKind optimizer_kind_from_string(std::string_view s) {
  if (s == "sgd") return OptimizerKind::sgd;
  if (s == "adam") return OptimizerKind::adam;
  throw ConfigError("unknown optimizer '" + std::string(s) + "'");
}

struct OptimizerState {
  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEps = 1e-8;

  OptimizerKind kind = OptimizerKind::adam;
  std::uint64_t t = 0;
  std::vector<double> m;
  std::vector<double> v;

  static OptimizerState fresh(OptimizerKind kind, std::size_t dim) {
    OptimizerState s;
    s.kind = kind;
    if (kind == OptimizerKind::adam) {
      s.m.assign(dim, 0.0);
      s.v.assign(dim, 0.0);
    }
    return s;
  }

  friend bool operator==(const OptimizerState&, const OptimizerState&) = default;
};

/// Returns the ascent delta for `grad` and advances the optimizer state.
/// sgd: lr * g. adam: lr * m_hat / (sqrt(v_hat) + eps) with bias correction.
inline std::vector<double> optimizer_update(OptimizerState& state, std::span<const double> grad,
                                            double lr) {
  std::vector<double> delta(grad.size());
  ++state.t;
  if (state.kind == OptimizerKind::sgd) {
    for (std::size_t i = 0; i < grad.size(); ++i) delta[i] = lr * grad[i];
    return delta;
  }
  if (state.m.size() != grad.size() || state.v.size() != grad.size())
    throw std::invalid_argument("optimizer state dimension does not match gradient");
  const double c1 = 1.0 - std::pow(OptimizerState::kBeta1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(OptimizerState::kBeta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < grad.size(); ++i) {
    const double g = grad[i];
    state.m[i] = OptimizerState::kBeta1 * state.m[i] + (1.0 - OptimizerState::kBeta1) * g;
    state.v[i] = OptimizerState::kBeta2 * state.v[i] + (1.0 - OptimizerState::kBeta2) * g * g;
    delta[i] = lr * (state.m[i] / c1) / (std::sqrt(state.v[i] / c2) + OptimizerState::kEps);
  }
  return delta;
}

}  // namespace realpg
