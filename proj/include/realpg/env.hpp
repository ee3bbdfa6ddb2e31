#pragma once

// Synthetic pointwise-judging environment. A latent quality q in 1..5 is
// drawn uniformly; prompt features are a noisy scaled one-hot of q; the gold
// score is q moved by -1/0/+1 with probabilities (p/2, 1-p, p/2) and clamped
// back into 1..5. The Bayes posterior mean E[y* | f] is exact.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "realpg/errors.hpp"
#include "realpg/rng.hpp"

namespace realpg {

struct EnvConfig {
  static constexpr int kScoreMin = 1;
  static constexpr int kScoreMax = 5;
  static constexpr int kNumLevels = kScoreMax - kScoreMin + 1;

  double feature_noise = 0.5;    // sigma_x
  double signal_scale = 1.0;     // alpha
  double label_flip_prob = 0.2;  // p
  int prompt_dim = 5;

  void validate() const {
    if (!(feature_noise >= 0.0) || !std::isfinite(feature_noise))
      throw ConfigError("feature_noise must be finite and >= 0");
    if (!std::isfinite(signal_scale)) throw ConfigError("signal_scale must be finite");
    if (!(label_flip_prob >= 0.0 && label_flip_prob < 1.0))
      throw ConfigError("label_flip_prob must lie in [0, 1)");
    if (prompt_dim != kNumLevels) throw ConfigError("prompt_dim must equal 5 (one axis per score level)");
  }

  friend bool operator==(const EnvConfig&, const EnvConfig&) = default;
};

struct JudgeExample {
  std::vector<double> features;
  int gold = 0;
  int quality = 0;  // retained for oracle queries only
};

struct JudgeDataset {
  EnvConfig config;
  std::uint64_t seed = 0;
  std::vector<JudgeExample> examples;

  std::size_t size() const noexcept { return examples.size(); }
  const JudgeExample& operator[](std::size_t i) const { return examples[i]; }
};

namespace detail {

inline std::vector<double> level_center(const EnvConfig& config, int q) {
  std::vector<double> c(static_cast<std::size_t>(config.prompt_dim), 0.0);
  c[static_cast<std::size_t>(q - EnvConfig::kScoreMin)] = config.signal_scale;
  return c;
}

}  // namespace detail

inline JudgeDataset make_dataset(const EnvConfig& config, std::size_t n, std::uint64_t seed) {
  config.validate();
  if (n < 1) throw ConfigError("dataset size must be >= 1");
  JudgeDataset ds{config, seed, {}};
  ds.examples.reserve(n);
  Rng rng = make_stream({seed, 0xda7aULL});
  std::normal_distribution<double> noise(0.0, 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    JudgeExample ex;
    ex.quality = EnvConfig::kScoreMin +
                 static_cast<int>(uniform01(rng) * static_cast<double>(EnvConfig::kNumLevels));
    ex.features = detail::level_center(config, ex.quality);
    if (config.feature_noise > 0.0)
      for (auto& f : ex.features) f += config.feature_noise * noise(rng);
    const double u = uniform01(rng);
    const double p = config.label_flip_prob;
    const int delta = u < 0.5 * p ? -1 : (u < p ? 1 : 0);
    ex.gold = std::clamp(ex.quality + delta, EnvConfig::kScoreMin, EnvConfig::kScoreMax);
    ds.examples.push_back(std::move(ex));
  }
  return ds;
}

/// E[y* | q] under the clamped flip kernel.
inline double expected_gold_given_quality(const EnvConfig& config, int q) {
  const double p = config.label_flip_prob;
  const auto clampq = [](int v) { return std::clamp(v, EnvConfig::kScoreMin, EnvConfig::kScoreMax); };
  return 0.5 * p * clampq(q - 1) + (1.0 - p) * q + 0.5 * p * clampq(q + 1);
}

/// P(y* != q): a flip at a boundary level is absorbed half the time.
inline double mismatch_probability(const EnvConfig& config) {
  const double p = config.label_flip_prob;
  const double interior = EnvConfig::kNumLevels - 2;
  return (interior * p + 2.0 * 0.5 * p) / EnvConfig::kNumLevels;
}

/// Posterior P(q | f) over the five levels.
inline std::vector<double> quality_posterior(const EnvConfig& config, std::span<const double> f) {
  config.validate();
  if (static_cast<int>(f.size()) != config.prompt_dim)
    throw std::invalid_argument("feature vector length does not match prompt_dim");
  std::vector<double> post(EnvConfig::kNumLevels, 0.0);
  if (config.feature_noise == 0.0) {
    for (int q = EnvConfig::kScoreMin; q <= EnvConfig::kScoreMax; ++q) {
      if (std::ranges::equal(f, detail::level_center(config, q))) {
        post[static_cast<std::size_t>(q - EnvConfig::kScoreMin)] = 1.0;
        return post;
      }
    }
    throw std::domain_error("posterior undefined: zero feature noise and features off the lattice");
  }
  const double two_var = 2.0 * config.feature_noise * config.feature_noise;
  std::vector<double> logw(post.size());
  for (int q = EnvConfig::kScoreMin; q <= EnvConfig::kScoreMax; ++q) {
    const auto c = detail::level_center(config, q);
    double d2 = 0.0;
    for (std::size_t i = 0; i < c.size(); ++i) d2 += (f[i] - c[i]) * (f[i] - c[i]);
    logw[static_cast<std::size_t>(q - EnvConfig::kScoreMin)] = -d2 / two_var;
  }
  const double mx = *std::ranges::max_element(logw);
  double total = 0.0;
  for (std::size_t i = 0; i < post.size(); ++i) total += post[i] = std::exp(logw[i] - mx);
  for (auto& v : post) v /= total;
  return post;
}

inline double posterior_mean(const EnvConfig& config, std::span<const double> f) {
  const auto post = quality_posterior(config, f);
  double mu = 0.0;
  for (int q = EnvConfig::kScoreMin; q <= EnvConfig::kScoreMax; ++q)
    mu += post[static_cast<std::size_t>(q - EnvConfig::kScoreMin)] * expected_gold_given_quality(config, q);
  return mu;
}

// ---- dataset file: one JSON header line, then one record per line ----

inline nlohmann::ordered_json env_config_json(const EnvConfig& c) {
  return {{"feature_noise", c.feature_noise},
          {"signal_scale", c.signal_scale},
          {"label_flip_prob", c.label_flip_prob},
          {"prompt_dim", c.prompt_dim}};
}

inline void write_dataset(const JudgeDataset& ds, std::ostream& out) {
  nlohmann::ordered_json header{{"format", "realpg-dataset-v1"},
                                {"config", env_config_json(ds.config)},
                                {"seed", ds.seed},
                                {"n", ds.size()}};
  out << header.dump() << '\n';
  for (const auto& ex : ds.examples) {
    nlohmann::ordered_json rec{{"q", ex.quality}, {"y", ex.gold}, {"f", ex.features}};
    out << rec.dump() << '\n';
  }
}

inline void save_dataset(const JudgeDataset& ds, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  write_dataset(ds, out);
  if (!out) throw std::runtime_error("write failed for " + path);
}

inline JudgeDataset read_dataset(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw ConfigError("dataset file is empty");
  JudgeDataset ds;
  try {
    const auto header = nlohmann::json::parse(line);
    if (header.at("format") != "realpg-dataset-v1") throw ConfigError("unknown dataset format");
    const auto& c = header.at("config");
    ds.config.feature_noise = c.at("feature_noise").get<double>();
    ds.config.signal_scale = c.at("signal_scale").get<double>();
    ds.config.label_flip_prob = c.at("label_flip_prob").get<double>();
    ds.config.prompt_dim = c.at("prompt_dim").get<int>();
    ds.seed = header.at("seed").get<std::uint64_t>();
    const auto n = header.at("n").get<std::size_t>();
    ds.examples.reserve(n);
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const auto rec = nlohmann::json::parse(line);
      JudgeExample ex;
      ex.quality = rec.at("q").get<int>();
      ex.gold = rec.at("y").get<int>();
      ex.features = rec.at("f").get<std::vector<double>>();
      if (static_cast<int>(ex.features.size()) != ds.config.prompt_dim)
        throw ConfigError("record feature length does not match header prompt_dim");
      if (ex.gold < EnvConfig::kScoreMin || ex.gold > EnvConfig::kScoreMax)
        throw ConfigError("record gold score out of range");
      ds.examples.push_back(std::move(ex));
    }
    if (ds.examples.size() != n) throw ConfigError("dataset record count does not match header");
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed dataset file: ") + e.what());
  }
  ds.config.validate();
  return ds;
}

inline JudgeDataset load_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open dataset " + path);
  return read_dataset(in);
}

}  // namespace realpg
