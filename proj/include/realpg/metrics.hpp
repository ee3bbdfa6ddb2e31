#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

namespace realpg {

enum class TauVariant { a, b };

struct MetricsReport {
  double r = 0.0;
  double rho = 0.0;
  double tau = 0.0;
  double rmse = 0.0;
  double mae = 0.0;
  std::size_t n = 0;
  double mean_entropy = 0.0;
  double mean_resp_len = 0.0;
};

inline void to_json(nlohmann::ordered_json& j, const MetricsReport& m) {
  j = nlohmann::ordered_json{{"r", m.r},
                             {"rho", m.rho},
                             {"tau", m.tau},
                             {"rmse", m.rmse},
                             {"mae", m.mae},
                             {"n", m.n},
                             {"mean_entropy", m.mean_entropy},
                             {"mean_resp_len", m.mean_resp_len}};
}

namespace detail {

inline void check_paired(std::span<const double> a, std::span<const double> b, std::size_t min_n,
                         const char* what) {
  if (a.size() != b.size()) throw std::invalid_argument(std::string(what) + ": length mismatch");
  if (a.size() < min_n)
    throw std::invalid_argument(std::string(what) + ": need at least " + std::to_string(min_n) +
                                " samples");
}

}  // namespace detail

/// Sample Pearson correlation. Throws when either input has zero variance.
inline double pearson(std::span<const double> preds, std::span<const double> golds) {
  detail::check_paired(preds, golds, 2, "pearson");
  const auto n = static_cast<double>(preds.size());
  const double mx = std::accumulate(preds.begin(), preds.end(), 0.0) / n;
  const double my = std::accumulate(golds.begin(), golds.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const double dx = preds[i] - mx;
    const double dy = golds[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx <= 0.0 || syy <= 0.0) throw std::domain_error("pearson: zero variance");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

/// 1-based ranks; tied values share the mean of the rank span they occupy.
inline std::vector<double> average_ranks(std::span<const double> values) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(values.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && values[order[j + 1]] == values[order[i]]) ++j;
    const double rank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = rank;
    i = j + 1;
  }
  return ranks;
}

inline double spearman(std::span<const double> preds, std::span<const double> golds) {
  detail::check_paired(preds, golds, 2, "spearman");
  const auto rp = average_ranks(preds);
  const auto rg = average_ranks(golds);
  return pearson(rp, rg);
}

/// Kendall rank correlation by exact pair counting. tau-b divides by the
/// tie-corrected pair counts; tau-a by n(n-1)/2.
inline double kendall_tau(std::span<const double> preds, std::span<const double> golds,
                          TauVariant variant = TauVariant::b) {
  detail::check_paired(preds, golds, 2, "kendall_tau");
  long long concordant = 0, discordant = 0, ties_x = 0, ties_y = 0;
  const std::size_t n = preds.size();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double dx = preds[i] - preds[j];
      const double dy = golds[i] - golds[j];
      if (dx == 0.0 && dy == 0.0) continue;
      if (dx == 0.0) {
        ++ties_x;
      } else if (dy == 0.0) {
        ++ties_y;
      } else if ((dx > 0.0) == (dy > 0.0)) {
        ++concordant;
      } else {
        ++discordant;
      }
    }
  }
  const auto cd = static_cast<double>(concordant + discordant);
  const double num = static_cast<double>(concordant - discordant);
  if (variant == TauVariant::a) {
    const double pairs = 0.5 * static_cast<double>(n) * static_cast<double>(n - 1);
    return num / pairs;
  }
  // ties_x counts pairs tied only in preds, ties_y pairs tied only in golds.
  const double denom = std::sqrt((cd + static_cast<double>(ties_x)) * (cd + static_cast<double>(ties_y)));
  if (cd + static_cast<double>(ties_x) == 0.0 || cd + static_cast<double>(ties_y) == 0.0)
    throw std::domain_error("kendall_tau: fully tied input");
  return std::clamp(num / denom, -1.0, 1.0);
}

inline double kendall_tau_b(std::span<const double> preds, std::span<const double> golds) {
  return kendall_tau(preds, golds, TauVariant::b);
}

struct ErrorMetrics {
  double rmse = 0.0;
  double mae = 0.0;
};

inline ErrorMetrics error_metrics(std::span<const double> preds, std::span<const double> golds) {
  detail::check_paired(preds, golds, 1, "error_metrics");
  double se = 0.0, ae = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const double d = preds[i] - golds[i];
    se += d * d;
    ae += std::abs(d);
  }
  const auto n = static_cast<double>(preds.size());
  return {std::sqrt(se / n), ae / n};
}

/// Shannon entropy in nats, with 0 ln 0 = 0.
inline double token_entropy(std::span<const double> dist) {
  double h = 0.0;
  for (double p : dist)
    if (p > 0.0) h -= p * std::log(p);
  return h;
}

/// Full report; correlations are reported as NaN (JSON null) when undefined
/// because one side is constant.
inline MetricsReport compute_report(std::span<const double> preds, std::span<const double> golds,
                                    TauVariant tau_variant = TauVariant::b) {
  MetricsReport m;
  m.n = preds.size();
  const auto guarded = [](auto&& fn) {
    try {
      return fn();
    } catch (const std::domain_error&) {
      return std::nan("");
    }
  };
  m.r = guarded([&] { return pearson(preds, golds); });
  m.rho = guarded([&] { return spearman(preds, golds); });
  m.tau = guarded([&] { return kendall_tau(preds, golds, tau_variant); });
  const auto err = error_metrics(preds, golds);
  m.rmse = err.rmse;
  m.mae = err.mae;
  return m;
}

}  // namespace realpg
