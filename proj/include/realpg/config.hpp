#pragma once

// Run configuration: one JSON document covering every module. Loading
// merges the user document over the defaults and rejects unknown keys;
// to_json emits every field, so a resolved document fully describes a run.

#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "realpg/env.hpp"
#include "realpg/errors.hpp"
#include "realpg/infer.hpp"
#include "realpg/metrics.hpp"
#include "realpg/trainer.hpp"

namespace realpg {

struct DataSettings {
  std::size_t train_size = 2000;
  std::uint64_t train_seed = 11;
  std::size_t test_size = 1000;
  std::uint64_t test_seed = 12;
  std::string train_path;  // empty: generate from env + size + seed
  std::string test_path;
};

struct InferConfig {
  std::vector<InferMode> modes{InferMode::greedy, InferMode::rail, InferMode::rail_avg_n};
  int n = 10;
  std::uint64_t seed = 0;
  TauVariant tau_variant = TauVariant::b;

  InferSettings settings(InferMode mode) const { return {mode, n, seed}; }
};

struct EvalPaths {
  std::string checkpoint;
  std::string data;  // empty: the test split from `data`
};

struct RunConfig {
  EnvConfig env;
  DataSettings data;
  TrainConfig train;
  std::uint64_t eval_every = 0;     // 0: no learning-curve CSV
  std::string init_checkpoint;      // empty: fresh initialization
  InferConfig infer;
  EvalPaths eval;
  std::string output_dir = "realpg_out";

  void validate() const {
    env.validate();
    train.validate();
    if (train.policy.prompt_dim != env.prompt_dim)
      throw ConfigError("policy prompt_dim must equal env prompt_dim");
    if (data.train_size < 1 || data.test_size < 1) throw ConfigError("dataset sizes must be >= 1");
    if (infer.n < 1) throw ConfigError("infer.n must be >= 1");
    if (infer.modes.empty()) throw ConfigError("infer.modes must not be empty");
    if (output_dir.empty()) throw ConfigError("output.dir must not be empty");
  }
};

inline std::string_view to_string(TauVariant v) { return v == TauVariant::a ? "a" : "b"; }

inline TauVariant tau_variant_from_string(std::string_view s) {
  if (s == "a") return TauVariant::a;
  if (s == "b") return TauVariant::b;
  throw ConfigError("unknown tau_variant '" + std::string(s) + "'");
}

inline nlohmann::ordered_json to_json(const RunConfig& c) {
  using nlohmann::ordered_json;
  const auto& t = c.train;
  ordered_json modes = ordered_json::array();
  for (auto m : c.infer.modes) modes.push_back(std::string(to_string(m)));
  return ordered_json{
      {"env", env_config_json(c.env)},
      {"data",
       {{"train_size", c.data.train_size},
        {"train_seed", c.data.train_seed},
        {"test_size", c.data.test_size},
        {"test_seed", c.data.test_seed},
        {"train_path", c.data.train_path},
        {"test_path", c.data.test_path}}},
      {"policy",
       {{"vocab_size", t.policy.vocab.vocab_size},
        {"cot_length", t.policy.cot_length},
        {"temperature", t.policy.temperature},
        {"renormalize_digits", t.policy.renormalize_digits}}},
      {"reward", {{"lambda", t.reward.lambda}}},
      {"estimator",
       {{"kind", std::string(to_string(t.estimator.kind))},
        {"beta", t.estimator.beta},
        {"leave_one_out", t.estimator.advantage.leave_one_out},
        {"standardize", t.estimator.advantage.standardize},
        {"raw_jepo_weights", t.estimator.raw_jepo_weights}}},
      {"train",
       {{"steps", t.steps},
        {"batch_size", t.batch_size},
        {"group_size", t.group_size},
        {"learning_rate", t.learning_rate},
        {"optimizer", std::string(to_string(t.optimizer))},
        {"filter", std::string(to_string(t.filter))},
        {"seed", t.seed},
        {"init_checkpoint", c.init_checkpoint},
        {"eval_every", c.eval_every}}},
      {"infer",
       {{"modes", modes},
        {"n", c.infer.n},
        {"seed", c.infer.seed},
        {"tau_variant", std::string(to_string(c.infer.tau_variant))}}},
      {"eval", {{"checkpoint", c.eval.checkpoint}, {"data", c.eval.data}}},
      {"output", {{"dir", c.output_dir}}}};
}

namespace config_detail {

using Json = nlohmann::ordered_json;

inline const Json& field(const Json& j, const char* section, const char* key) {
  return j.at(section).at(key);
}

inline std::string where(const char* section, const char* key) {
  return std::string(section) + "." + key;
}

inline std::uint64_t get_uint(const Json& j, const char* s, const char* k) {
  const auto& v = field(j, s, k);
  if (!v.is_number_unsigned()) throw ConfigError(where(s, k) + " must be a non-negative integer");
  return v.get<std::uint64_t>();
}

inline int get_int(const Json& j, const char* s, const char* k) {
  const auto& v = field(j, s, k);
  if (!v.is_number_integer()) throw ConfigError(where(s, k) + " must be an integer");
  return v.get<int>();
}

inline double get_double(const Json& j, const char* s, const char* k) {
  const auto& v = field(j, s, k);
  if (!v.is_number()) throw ConfigError(where(s, k) + " must be a number");
  return v.get<double>();
}

inline bool get_bool(const Json& j, const char* s, const char* k) {
  const auto& v = field(j, s, k);
  if (!v.is_boolean()) throw ConfigError(where(s, k) + " must be a boolean");
  return v.get<bool>();
}

inline std::string get_string(const Json& j, const char* s, const char* k) {
  const auto& v = field(j, s, k);
  if (!v.is_string()) throw ConfigError(where(s, k) + " must be a string");
  return v.get<std::string>();
}

/// Overlays `user` onto `base`, which holds every valid key.
inline void merge_strict(Json& base, const Json& user, const std::string& path) {
  if (!user.is_object()) throw ConfigError((path.empty() ? "config" : path) + " must be a JSON object");
  for (auto it = user.begin(); it != user.end(); ++it) {
    const std::string key = path.empty() ? it.key() : path + "." + it.key();
    if (!base.contains(it.key())) throw ConfigError("unknown config key '" + key + "'");
    auto& slot = base[it.key()];
    if (slot.is_object())
      merge_strict(slot, it.value(), key);
    else
      slot = it.value();
  }
}

}  // namespace config_detail

/// Builds a RunConfig from a complete document (as produced by to_json).
inline RunConfig from_resolved_json(const nlohmann::ordered_json& j) {
  using namespace config_detail;
  RunConfig c;
  c.env.feature_noise = get_double(j, "env", "feature_noise");
  c.env.signal_scale = get_double(j, "env", "signal_scale");
  c.env.label_flip_prob = get_double(j, "env", "label_flip_prob");
  c.env.prompt_dim = get_int(j, "env", "prompt_dim");

  c.data.train_size = get_uint(j, "data", "train_size");
  c.data.train_seed = get_uint(j, "data", "train_seed");
  c.data.test_size = get_uint(j, "data", "test_size");
  c.data.test_seed = get_uint(j, "data", "test_seed");
  c.data.train_path = get_string(j, "data", "train_path");
  c.data.test_path = get_string(j, "data", "test_path");

  auto& t = c.train;
  t.policy.vocab.vocab_size = get_int(j, "policy", "vocab_size");
  t.policy.cot_length = get_int(j, "policy", "cot_length");
  t.policy.temperature = get_double(j, "policy", "temperature");
  t.policy.renormalize_digits = get_bool(j, "policy", "renormalize_digits");
  t.policy.prompt_dim = c.env.prompt_dim;

  t.reward.lambda = get_double(j, "reward", "lambda");

  t.estimator.kind = estimator_kind_from_string(get_string(j, "estimator", "kind"));
  t.estimator.beta = get_double(j, "estimator", "beta");
  t.estimator.advantage.leave_one_out = get_bool(j, "estimator", "leave_one_out");
  t.estimator.advantage.standardize = get_bool(j, "estimator", "standardize");
  t.estimator.raw_jepo_weights = get_bool(j, "estimator", "raw_jepo_weights");

  t.steps = get_uint(j, "train", "steps");
  t.batch_size = get_uint(j, "train", "batch_size");
  t.group_size = get_uint(j, "train", "group_size");
  t.learning_rate = get_double(j, "train", "learning_rate");
  t.optimizer = optimizer_kind_from_string(get_string(j, "train", "optimizer"));
  t.filter = sampling_filter_from_string(get_string(j, "train", "filter"));
  t.seed = get_uint(j, "train", "seed");
  c.init_checkpoint = get_string(j, "train", "init_checkpoint");
  c.eval_every = get_uint(j, "train", "eval_every");

  const auto& modes = field(j, "infer", "modes");
  if (!modes.is_array()) throw ConfigError("infer.modes must be an array of mode names");
  c.infer.modes.clear();
  for (const auto& m : modes) {
    if (!m.is_string()) throw ConfigError("infer.modes entries must be strings");
    c.infer.modes.push_back(infer_mode_from_string(m.get<std::string>()));
  }
  c.infer.n = get_int(j, "infer", "n");
  c.infer.seed = get_uint(j, "infer", "seed");
  c.infer.tau_variant = tau_variant_from_string(get_string(j, "infer", "tau_variant"));

  c.eval.checkpoint = get_string(j, "eval", "checkpoint");
  c.eval.data = get_string(j, "eval", "data");
  c.output_dir = get_string(j, "output", "dir");

  c.validate();
  return c;
}

/// Parses a `--section.key=value` override value: JSON if it parses, else a string.
inline nlohmann::ordered_json parse_override_value(const std::string& text) {
  try {
    return nlohmann::ordered_json::parse(text);
  } catch (const nlohmann::json::parse_error&) {
    return text;
  }
}

struct Override {
  std::string path;  // dotted, e.g. "train.seed"
  std::string value;
};

/// Sets a dotted path inside `doc`; the path must already exist.
inline void apply_override(nlohmann::ordered_json& doc, const Override& o) {
  nlohmann::ordered_json* node = &doc;
  std::string_view rest = o.path;
  while (true) {
    const auto dot = rest.find('.');
    const std::string key(rest.substr(0, dot));
    if (!node->is_object() || !node->contains(key))
      throw ConfigError("unknown config key '" + o.path + "'");
    node = &(*node)[key];
    if (dot == std::string_view::npos) break;
    rest.remove_prefix(dot + 1);
  }
  if (node->is_object()) throw ConfigError("override '" + o.path + "' names a section, not a key");
  *node = parse_override_value(o.value);
}

/// Defaults, then the user document (may be null), then overrides.
inline RunConfig resolve_config(const nlohmann::ordered_json& user, const std::vector<Override>& overrides = {}) {
  auto doc = to_json(RunConfig{});
  if (!user.is_null()) config_detail::merge_strict(doc, user, "");
  for (const auto& o : overrides) apply_override(doc, o);
  try {
    return from_resolved_json(doc);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("invalid config: ") + e.what());
  }
}

inline nlohmann::ordered_json read_config_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return nlohmann::ordered_json::parse(ss.str());
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("malformed config " + path + ": " + e.what());
  }
}

inline std::string resolved_text(const RunConfig& c) { return to_json(c).dump(2) + "\n"; }

}  // namespace realpg
