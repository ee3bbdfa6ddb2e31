#pragma once

#include <cstdint>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "realpg/env.hpp"
#include "realpg/errors.hpp"
#include "realpg/metrics.hpp"
#include "realpg/parallel.hpp"
#include "realpg/policy.hpp"
#include "realpg/rng.hpp"

namespace realpg {

enum class InferMode { rail, greedy, rail_avg_n };

inline std::string_view to_string(InferMode m) {
  switch (m) {
    case InferMode::rail: return "rail";
    case InferMode::greedy: return "greedy";
    case InferMode::rail_avg_n: return "rail_avg_n";
  }
  return "?";
}

inline InferMode infer_mode_from_string(std::string_view s) {
  if (s == "rail") return InferMode::rail;
  if (s == "greedy") return InferMode::greedy;
  if (s == "rail_avg_n") return InferMode::rail_avg_n;
  throw ConfigError("unknown inference mode '" + std::string(s) + "'");
}

struct Prediction {
  std::size_t prompt_index = 0;
  double value = 0.0;
  InferMode mode = InferMode::rail;
  double entropy = 0.0;  // mean per-token entropy along the generated CoT(s)
};

/// Samples one CoT and returns the expected digit value at the score position.
inline Prediction rail_predict(const PolicyView& policy, std::span<const double> prompt,
                               std::size_t prompt_index, Rng& rng) {
  const Trajectory t = policy.sample(prompt, prompt_index, rng);
  return {prompt_index, policy.expected_score(t.score_dist), InferMode::rail, t.mean_entropy};
}

/// Mean of n RAIL values drawn sequentially from `rng`; n = 1 reproduces
/// rail_predict on the same stream.
inline Prediction average_of_n(const PolicyView& policy, std::span<const double> prompt,
                               std::size_t prompt_index, int n, Rng& rng) {
  if (n < 1) throw ConfigError("average_of_n needs N >= 1");
  double sum = 0.0, entropy = 0.0;
  for (int i = 0; i < n; ++i) {
    const auto p = rail_predict(policy, prompt, prompt_index, rng);
    sum += p.value;
    entropy += p.entropy;
  }
  return {prompt_index, sum / n, InferMode::rail_avg_n, entropy / n};
}

/// Lowest-id argmax over [begin, end).
inline int argmax_range(std::span<const double> v, int begin, int end) {
  int best = begin;
  for (int j = begin + 1; j < end; ++j)
    if (v[static_cast<std::size_t>(j)] > v[static_cast<std::size_t>(best)]) best = j;
  return best;
}

/// Argmax CoT, then the argmax digit at the score position.
inline Prediction greedy_predict(const PolicyView& policy, std::span<const double> prompt,
                                 std::size_t prompt_index) {
  const auto& cfg = policy.config();
  int prev = -1;
  double entropy = 0.0;
  for (int t = 0; t < cfg.cot_length; ++t) {
    const auto x = policy.context(prompt, prev, t);
    const auto z = policy.logits(x);
    entropy += token_entropy(policy.dist(x, PositionKind::cot));
    prev = argmax_range(z, cfg.vocab.first_cot(), cfg.vocab_size());
  }
  const auto xs = policy.context(prompt, prev, cfg.cot_length);
  const auto z = policy.logits(xs);
  entropy += token_entropy(policy.dist(xs, PositionKind::score));
  const int digit = argmax_range(z, 0, VocabLayout::kNumDigits);
  return {prompt_index, static_cast<double>(digit), InferMode::greedy,
          entropy / (cfg.cot_length + 1)};
}

struct InferSettings {
  InferMode mode = InferMode::rail;
  int n = 10;  // used by rail_avg_n
  std::uint64_t seed = 0;
};

struct EvalResult {
  std::vector<Prediction> predictions;
  MetricsReport report;
};

/// Predicts every example (prompt i draws from stream (seed, i)) and scores
/// the predictions against the gold labels.
inline EvalResult evaluate(const PolicyView& policy, const JudgeDataset& data,
                           const InferSettings& settings, unsigned threads = 1) {
  EvalResult out;
  out.predictions.resize(data.size());
  parallel_for(data.size(), threads, [&](std::size_t i) {
    const auto& f = data[i].features;
    Rng rng = make_stream({settings.seed, 0x1fe7ULL, i});
    switch (settings.mode) {
      case InferMode::rail: out.predictions[i] = rail_predict(policy, f, i, rng); break;
      case InferMode::greedy: out.predictions[i] = greedy_predict(policy, f, i); break;
      case InferMode::rail_avg_n: out.predictions[i] = average_of_n(policy, f, i, settings.n, rng); break;
    }
  });
  std::vector<double> preds(data.size()), golds(data.size());
  double entropy = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    preds[i] = out.predictions[i].value;
    golds[i] = data[i].gold;
    entropy += out.predictions[i].entropy;
  }
  out.report = compute_report(preds, golds);
  out.report.mean_entropy = entropy / static_cast<double>(data.size());
  out.report.mean_resp_len = static_cast<double>(policy.config().cot_length + 1);
  return out;
}

inline constexpr std::string_view kPredictionCsvHeader = "prompt_idx,pred,gold,mode";

}  // namespace realpg
