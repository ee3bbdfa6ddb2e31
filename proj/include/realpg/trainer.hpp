#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "realpg/checkpoint.hpp"
#include "realpg/env.hpp"
#include "realpg/errors.hpp"
#include "realpg/estimator.hpp"
#include "realpg/optimizer.hpp"
#include "realpg/parallel.hpp"
#include "realpg/policy.hpp"
#include "realpg/reward.hpp"
#include "realpg/rng.hpp"

namespace realpg {

/// Group-accuracy filters for dynamic sampling.
enum class SamplingFilter { all, partial, exclude_all_wrong, exclude_all_right };

inline std::string_view to_string(SamplingFilter f) {
  switch (f) {
    case SamplingFilter::all: return "all";
    case SamplingFilter::partial: return "partial";
    case SamplingFilter::exclude_all_wrong: return "exclude_all_wrong";
    case SamplingFilter::exclude_all_right: return "exclude_all_right";
  }
  return "?";
}

inline SamplingFilter sampling_filter_from_string(std::string_view s) {
  if (s == "all") return SamplingFilter::all;
  if (s == "partial") return SamplingFilter::partial;
  if (s == "exclude_all_wrong") return SamplingFilter::exclude_all_wrong;
  if (s == "exclude_all_right") return SamplingFilter::exclude_all_right;
  throw ConfigError("unknown sampling filter '" + std::string(s) + "'");
}

inline bool filter_keeps(SamplingFilter f, double acc) {
  switch (f) {
    case SamplingFilter::all: return true;
    case SamplingFilter::partial: return acc > 0.0 && acc < 1.0;
    case SamplingFilter::exclude_all_wrong: return acc > 0.0;
    case SamplingFilter::exclude_all_right: return acc < 1.0;
  }
  return false;
}

struct TrainConfig {
  PolicyConfig policy;
  EstimatorConfig estimator;
  RewardConfig reward;
  std::uint64_t steps = 500;
  std::size_t batch_size = 256;
  std::size_t group_size = 16;
  double learning_rate = 0.1;
  OptimizerKind optimizer = OptimizerKind::adam;
  SamplingFilter filter = SamplingFilter::partial;
  std::uint64_t seed = 0;  // keys initialization, shuffling and sampling streams

  void validate() const {
    policy.validate();
    estimator.validate();
    if (!(reward.lambda >= 0.0) || !std::isfinite(reward.lambda))
      throw ConfigError("lambda must be finite and >= 0");
    if (group_size < 2) throw ConfigError("group_size must be >= 2");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate))
      throw ConfigError("learning_rate must be finite and >= 0");
  }
};

struct GroupRecord {
  std::size_t prompt_index = 0;
  double accuracy = 0.0;
  bool kept = false;
};

struct StepLog {
  std::uint64_t step = 0;
  double mean_reward = 0.0;
  double mean_acc = 0.0;
  double kept_frac = 0.0;
  double grad_norm = 0.0;
  double entropy = 0.0;
  double resp_len = 0.0;
  std::vector<GroupRecord> groups;
};

struct TrainState {
  ParamVector params;
  OptimizerState optimizer;
  std::uint64_t step = 0;
};

inline TrainState initial_state(const TrainConfig& config) {
  TrainState s;
  s.params = init_policy(config.policy, config.seed);
  s.optimizer = OptimizerState::fresh(config.optimizer, s.params.size());
  return s;
}

inline TrainState state_from_checkpoint(const Checkpoint& ck, const TrainConfig& config) {
  require_compatible(ck, config.policy);
  TrainState s;
  s.params = ck.params;
  s.optimizer = ck.optimizer.kind == config.optimizer
                    ? ck.optimizer
                    : OptimizerState::fresh(config.optimizer, ck.params.size());
  s.step = ck.step;
  return s;
}

namespace detail {

inline std::string state_dump(const TrainState& state, const StepLog& log, std::string_view what) {
  std::ostringstream os;
  os << what << " at step " << log.step << " (kept_frac=" << log.kept_frac
     << ", grad_norm=" << log.grad_norm << ", mean_reward=" << log.mean_reward << ")";
  double max_abs = 0.0;
  for (double p : state.params) max_abs = std::max(max_abs, std::abs(p));
  os << "; max |theta| = " << max_abs << ", optimizer t = " << state.optimizer.t;
  return os.str();
}

}  // namespace detail

/// One iteration: sample K trajectories per prompt, score and filter the
/// groups, average the estimator gradient over kept groups and take an
/// ascent step. `batch` holds dataset indices.
inline StepLog train_step(TrainState& state, const JudgeDataset& data,
                          std::span<const std::size_t> batch, const TrainConfig& config,
                          unsigned threads = 1) {
  const PolicyView policy(config.policy, state.params);
  const std::size_t B = batch.size();
  const std::size_t K = config.group_size;
  const std::size_t dim = state.params.size();

  std::vector<Group> groups(B);
  std::vector<GradVector> grads(B);
  std::vector<char> kept(B, 0);
  parallel_for(B, threads, [&](std::size_t slot) {
    const JudgeExample& ex = data[batch[slot]];
    std::vector<Trajectory> trajs;
    trajs.reserve(K);
    for (std::size_t i = 0; i < K; ++i) {
      Rng rng = make_stream({config.seed, 0x5a3bULL, state.step, slot, i});
      trajs.push_back(policy.sample(ex.features, batch[slot], rng));
    }
    groups[slot] = make_group(policy, ex, batch[slot], std::move(trajs), config.estimator, config.reward);
    kept[slot] = filter_keeps(config.filter, groups[slot].accuracy) ? 1 : 0;
    if (kept[slot]) {
      grads[slot].assign(dim, 0.0);
      add_group_gradient(policy, groups[slot], ex.features, config.estimator, config.reward, 1.0,
                         grads[slot]);
    }
  });

  StepLog log;
  log.step = state.step;
  log.resp_len = static_cast<double>(config.policy.cot_length + 1);
  std::size_t n_kept = 0;
  double reward_sum = 0.0, entropy_sum = 0.0, acc_sum = 0.0;
  GradVector grad(dim, 0.0);
  for (std::size_t slot = 0; slot < B; ++slot) {
    const Group& g = groups[slot];
    for (std::size_t i = 0; i < g.size(); ++i) {
      reward_sum += g.rewards[i];
      entropy_sum += g.trajectories[i].mean_entropy;
    }
    acc_sum += g.accuracy;
    log.groups.push_back({g.prompt_index, g.accuracy, kept[slot] != 0});
    if (kept[slot]) {
      ++n_kept;
      for (std::size_t j = 0; j < dim; ++j) grad[j] += grads[slot][j];
    }
  }
  const auto n_traj = static_cast<double>(B * K);
  log.mean_reward = reward_sum / n_traj;
  log.entropy = entropy_sum / n_traj;
  log.mean_acc = acc_sum / static_cast<double>(B);
  log.kept_frac = static_cast<double>(n_kept) / static_cast<double>(B);

  if (n_kept > 0) {
    double sq = 0.0;
    for (auto& g : grad) {
      g /= static_cast<double>(n_kept);
      sq += g * g;
    }
    log.grad_norm = std::sqrt(sq);
    if (!std::isfinite(log.grad_norm))
      throw NumericError(detail::state_dump(state, log, "non-finite gradient"));
    const auto delta = optimizer_update(state.optimizer, grad, config.learning_rate);
    for (std::size_t j = 0; j < dim; ++j) state.params[j] += delta[j];
    for (double p : state.params)
      if (!std::isfinite(p)) throw NumericError(detail::state_dump(state, log, "non-finite parameters"));
  }
  ++state.step;
  return log;
}

/// Dataset order for round-robin minibatches, keyed by the run seed.
inline std::vector<std::size_t> shuffled_order(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng = make_stream({seed, 0x5f1eULL});
  for (std::size_t i = n; i > 1; --i) {
    const auto j = static_cast<std::size_t>(uniform01(rng) * static_cast<double>(i));
    std::swap(order[i - 1], order[std::min(j, i - 1)]);
  }
  return order;
}

struct TrainResult {
  TrainState state;
  std::vector<StepLog> logs;

  Checkpoint checkpoint(const TrainConfig& config) const {
    return Checkpoint{config.policy, state.optimizer, state.step, state.params};
  }
};

using StepCallback = std::function<void(const StepLog&, const TrainState&)>;

/// Runs config.steps train steps from `start` over round-robin minibatches
/// of the seed-shuffled dataset. `on_step` fires after every step.
inline TrainResult train_run(const TrainConfig& config, const JudgeDataset& data, TrainState start,
                             unsigned threads = 1, const StepCallback& on_step = {}) {
  config.validate();
  if (data.size() == 0) throw ConfigError("training dataset is empty");
  TrainResult result{std::move(start), {}};
  const auto order = shuffled_order(data.size(), config.seed);
  std::vector<std::size_t> batch(config.batch_size);
  std::size_t cursor = 0;
  result.logs.reserve(static_cast<std::size_t>(config.steps));
  for (std::uint64_t s = 0; s < config.steps; ++s) {
    for (auto& b : batch) {
      b = order[cursor];
      cursor = (cursor + 1) % order.size();
    }
    result.logs.push_back(train_step(result.state, data, batch, config, threads));
    if (on_step) on_step(result.logs.back(), result.state);
  }
  return result;
}

inline TrainResult train_run(const TrainConfig& config, const JudgeDataset& data, unsigned threads = 1,
                             const StepCallback& on_step = {}) {
  return train_run(config, data, initial_state(config), threads, on_step);
}

// ---- CSV output ----

/// Shortest round-trip decimal form, so CSVs are byte-stable.
inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline constexpr std::string_view kStepCsvHeader = "step,mean_reward,mean_acc,kept_frac,grad_norm,entropy,resp_len";

inline void write_step_row(std::ostream& out, const StepLog& l) {
  out << l.step << ',' << format_double(l.mean_reward) << ',' << format_double(l.mean_acc) << ','
      << format_double(l.kept_frac) << ',' << format_double(l.grad_norm) << ','
      << format_double(l.entropy) << ',' << format_double(l.resp_len) << '\n';
}

inline void write_step_csv(std::ostream& out, std::span<const StepLog> logs) {
  out << kStepCsvHeader << '\n';
  for (const auto& l : logs) write_step_row(out, l);
}

}  // namespace realpg
