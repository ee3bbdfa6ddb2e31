#pragma once

// Subcommand bodies shared by the CLI and the tests. Each writes its
// resolved configuration next to its outputs and reports failures through
// the error types in errors.hpp.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "json.hpp"
#include "realpg/checkpoint.hpp"
#include "realpg/config.hpp"
#include "realpg/env.hpp"
#include "realpg/infer.hpp"
#include "realpg/trainer.hpp"
#include "realpg/verify.hpp"

namespace realpg {

enum ExitCode : int {
  kExitOk = 0,
  kExitVerifyFailed = 1,
  kExitConfig = 2,
  kExitNumeric = 3,
  kExitCompat = 4,
};

enum class Split { train, test };

inline Split split_from_string(std::string_view s) {
  if (s == "train") return Split::train;
  if (s == "test") return Split::test;
  throw ConfigError("unknown split '" + std::string(s) + "'");
}

inline JudgeDataset dataset_for(const RunConfig& c, Split split) {
  const bool train = split == Split::train;
  const std::string& path = train ? c.data.train_path : c.data.test_path;
  if (!path.empty()) {
    auto ds = load_dataset(path);
    if (ds.config.prompt_dim != c.env.prompt_dim)
      throw CompatibilityError("dataset " + path + " prompt_dim does not match the config");
    return ds;
  }
  return make_dataset(c.env, train ? c.data.train_size : c.data.test_size,
                      train ? c.data.train_seed : c.data.test_seed);
}

namespace command_detail {

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

inline std::filesystem::path prepare_dir(const std::string& dir) {
  std::filesystem::path p(dir);
  std::filesystem::create_directories(p);
  return p;
}

inline std::string report_text(const MetricsReport& r) {
  nlohmann::ordered_json j;
  to_json(j, r);
  return j.dump(2) + "\n";
}

inline std::string predictions_text(const EvalResult& res, const JudgeDataset& data) {
  std::string out(kPredictionCsvHeader);
  out += '\n';
  for (const auto& p : res.predictions) {
    out += std::to_string(p.prompt_index) + ',' + format_double(p.value) + ',' +
           std::to_string(data[p.prompt_index].gold) + ',' + std::string(to_string(p.mode)) + '\n';
  }
  return out;
}

inline EvalResult evaluate_mode(const PolicyView& policy, const JudgeDataset& data, const RunConfig& c,
                                InferMode mode, unsigned threads) {
  auto res = evaluate(policy, data, c.infer.settings(mode), threads);
  if (c.infer.tau_variant != TauVariant::b) {
    std::vector<double> preds, golds;
    for (const auto& p : res.predictions) {
      preds.push_back(p.value);
      golds.push_back(data[p.prompt_index].gold);
    }
    const auto entropy = res.report.mean_entropy;
    const auto len = res.report.mean_resp_len;
    res.report = compute_report(preds, golds, c.infer.tau_variant);
    res.report.mean_entropy = entropy;
    res.report.mean_resp_len = len;
  }
  return res;
}

/// Writes report_<mode>.json and predictions_<mode>.csv for every configured mode.
inline std::vector<EvalResult> write_evaluations(const std::filesystem::path& dir, const PolicyView& policy,
                                                 const JudgeDataset& data, const RunConfig& c,
                                                 unsigned threads, std::ostream& log) {
  std::vector<EvalResult> results;
  for (auto mode : c.infer.modes) {
    auto res = evaluate_mode(policy, data, c, mode, threads);
    const std::string name(to_string(mode));
    write_text(dir / ("report_" + name + ".json"), report_text(res.report));
    write_text(dir / ("predictions_" + name + ".csv"), predictions_text(res, data));
    log << name << ": r=" << res.report.r << " rho=" << res.report.rho << " tau=" << res.report.tau
        << " rmse=" << res.report.rmse << " mae=" << res.report.mae << '\n';
    results.push_back(std::move(res));
  }
  return results;
}

inline constexpr std::string_view kCurveCsvHeader = "step,r,rho,tau,rmse,mae,entropy,resp_len";

inline void write_curve_row(std::ostream& out, std::uint64_t step, const MetricsReport& r) {
  out << step << ',' << format_double(r.r) << ',' << format_double(r.rho) << ',' << format_double(r.tau) << ','
      << format_double(r.rmse) << ',' << format_double(r.mae) << ',' << format_double(r.mean_entropy) << ','
      << format_double(r.mean_resp_len) << '\n';
}

}  // namespace command_detail

/// Writes the dataset for `split` to `out_path` and its resolved config to
/// `<out_path>.resolved.json`. Returns the record count.
inline std::size_t cmd_gen_data(const RunConfig& c, Split split, const std::string& out_path) {
  c.validate();
  const auto ds = make_dataset(c.env, split == Split::train ? c.data.train_size : c.data.test_size,
                               split == Split::train ? c.data.train_seed : c.data.test_seed);
  const std::filesystem::path out(out_path);
  if (out.has_parent_path()) std::filesystem::create_directories(out.parent_path());
  save_dataset(ds, out_path);
  command_detail::write_text(out_path + ".resolved.json", resolved_text(c));
  return ds.size();
}

struct TrainOutcome {
  TrainResult result;
  std::vector<EvalResult> evaluations;  // one per configured inference mode
};

/// Trains, then evaluates the final policy on the test split. Outputs in
/// output_dir: train.resolved.json, checkpoint.bin, steps.csv, curve.csv
/// (when eval_every > 0), report_<mode>.json, predictions_<mode>.csv.
inline TrainOutcome cmd_train(const RunConfig& c, unsigned threads, std::ostream& log = std::cout) {
  using namespace command_detail;
  c.validate();
  const auto train_data = dataset_for(c, Split::train);
  const auto test_data = dataset_for(c, Split::test);
  const auto dir = prepare_dir(c.output_dir);
  write_text(dir / "train.resolved.json", resolved_text(c));

  TrainState start = c.init_checkpoint.empty()
                         ? initial_state(c.train)
                         : state_from_checkpoint(load_checkpoint(c.init_checkpoint), c.train);

  std::ofstream steps(dir / "steps.csv", std::ios::binary | std::ios::trunc);
  if (!steps) throw std::runtime_error("cannot open steps.csv for writing");
  steps << kStepCsvHeader << '\n';

  std::ofstream curve;
  const auto curve_point = [&](std::uint64_t step, const ParamVector& params) {
    const PolicyView policy(c.train.policy, params);
    write_curve_row(curve, step, evaluate_mode(policy, test_data, c, InferMode::rail, threads).report);
  };
  if (c.eval_every > 0) {
    curve.open(dir / "curve.csv", std::ios::binary | std::ios::trunc);
    if (!curve) throw std::runtime_error("cannot open curve.csv for writing");
    curve << kCurveCsvHeader << '\n';
    curve_point(start.step, start.params);
  }

  const std::uint64_t first = start.step;
  TrainOutcome out;
  out.result = train_run(c.train, train_data, std::move(start), threads,
                         [&](const StepLog& l, const TrainState& s) {
                           write_step_row(steps, l);
                           const auto done = s.step - first;
                           if (c.eval_every > 0 && (done % c.eval_every == 0 || done == c.train.steps))
                             curve_point(s.step, s.params);
                         });
  steps.close();
  save_checkpoint(out.result.checkpoint(c.train), (dir / "checkpoint.bin").string());

  const PolicyView policy(c.train.policy, out.result.state.params);
  out.evaluations = write_evaluations(dir, policy, test_data, c, threads, log);
  return out;
}

/// Evaluates eval.checkpoint on eval.data (or the test split) in every
/// configured mode. Outputs in output_dir: eval.resolved.json plus the
/// per-mode report and prediction files.
inline std::vector<EvalResult> cmd_eval(const RunConfig& c, unsigned threads, std::ostream& log = std::cout) {
  c.validate();
  if (c.eval.checkpoint.empty()) throw ConfigError("eval.checkpoint is required");
  const auto ck = load_checkpoint(c.eval.checkpoint);
  require_compatible(ck, c.train.policy);
  const auto data = c.eval.data.empty() ? dataset_for(c, Split::test) : load_dataset(c.eval.data);
  if (data.config.prompt_dim != ck.policy.prompt_dim)
    throw CompatibilityError("dataset prompt_dim does not match the checkpoint");
  const auto dir = command_detail::prepare_dir(c.output_dir);
  command_detail::write_text(dir / "eval.resolved.json", resolved_text(c));
  const PolicyView policy(c.train.policy, ck.params);
  return command_detail::write_evaluations(dir, policy, data, c, threads, log);
}

/// Runs the verification suite, writes the JSON report and returns the exit code.
inline int cmd_verify(VerifyScale scale, const std::string& report_path, std::uint64_t seed,
                      InjectedFault fault, std::ostream& log = std::cout) {
  const auto report = run_verification(scale, seed, fault);
  for (const auto& c : report.checks)
    log << (c.passed ? "PASS " : (c.hard ? "FAIL " : "WARN ")) << c.name << " cases=" << c.cases
        << " max_error=" << c.max_error << (c.detail.empty() ? "" : " " + c.detail) << '\n';
  const std::filesystem::path out(report_path);
  if (out.has_parent_path()) std::filesystem::create_directories(out.parent_path());
  command_detail::write_text(out, to_json(report).dump(2) + "\n");
  log << "report: " << report_path << '\n';
  return report.passed() ? kExitOk : kExitVerifyFailed;
}

}  // namespace realpg
