// realpg: gen-data, train, eval and verify subcommands.
// Config keys can be overridden with --section.key=value.

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "realpg/realpg.hpp"

namespace {

using namespace realpg;

/// Moves every `--section.key=value` argument out of argv into `overrides`.
std::vector<std::string> split_overrides(int argc, char** argv, std::vector<Override>& overrides) {
  std::vector<std::string> rest;
  for (int i = 0; i < argc; ++i) {
    std::string arg = argv[i];
    const auto eq = arg.find('=');
    const auto dot = arg.find('.');
    if (i > 0 && arg.rfind("--", 0) == 0 && dot != std::string::npos && eq != std::string::npos && dot < eq) {
      overrides.push_back({arg.substr(2, eq - 2), arg.substr(eq + 1)});
      continue;
    }
    rest.push_back(std::move(arg));
  }
  return rest;
}

RunConfig load_run_config(const std::string& path, const std::vector<Override>& overrides) {
  const auto user = path.empty() ? nlohmann::ordered_json() : read_config_file(path);
  return resolve_config(user, overrides);
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<Override> overrides;
  auto args = split_overrides(argc, argv, overrides);

  CLI::App app{"Regression-aware policy-gradient engine for synthetic judge environments"};
  app.require_subcommand(1);

  std::string config_path;

  auto* gen = app.add_subcommand("gen-data", "Write a synthetic dataset file");
  std::string gen_out, gen_split = "train";
  gen->add_option("--config", config_path, "Run config (JSON)");
  gen->add_option("--out", gen_out, "Output dataset path")->required();
  gen->add_option("--split", gen_split, "Which split to generate: train or test");

  auto* train = app.add_subcommand("train", "Train a policy and evaluate it on the test split");
  train->add_option("--config", config_path, "Run config (JSON)");

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint");
  std::string eval_ckpt, eval_data, eval_mode, eval_out;
  std::optional<int> eval_n;
  eval->add_option("--config", config_path, "Run config (JSON)");
  eval->add_option("--checkpoint", eval_ckpt, "Checkpoint path (eval.checkpoint)");
  eval->add_option("--data", eval_data, "Dataset path (eval.data)");
  eval->add_option("--mode", eval_mode, "Single inference mode: rail, greedy or rail_avg_n");
  eval->add_option("--n", eval_n, "Generations averaged by rail_avg_n (infer.n)");
  eval->add_option("--out-dir", eval_out, "Output directory (output.dir)");

  auto* verify = app.add_subcommand("verify", "Run the gradient and estimator verification suite");
  std::string scale = "quick", report_path = "verify_report.json", fault = "none";
  std::uint64_t verify_seed = 2024;
  verify->add_option("--scale", scale, "quick or full");
  verify->add_option("--report", report_path, "JSON report path");
  verify->add_option("--seed", verify_seed, "Suite seed");
  verify->add_option("--inject-fault", fault, "none or token_prob_sign (self-test of the suite)");

  std::vector<const char*> cargv;
  for (const auto& a : args) cargv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(cargv.size()), cargv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  const unsigned threads = thread_count_from_env();
  try {
    if (*gen) {
      const auto cfg = load_run_config(config_path, overrides);
      const auto n = cmd_gen_data(cfg, split_from_string(gen_split), gen_out);
      std::cout << "wrote " << n << " records to " << gen_out << '\n';
    } else if (*train) {
      cmd_train(load_run_config(config_path, overrides), threads);
    } else if (*eval) {
      if (!eval_ckpt.empty()) overrides.push_back({"eval.checkpoint", nlohmann::json(eval_ckpt).dump()});
      if (!eval_data.empty()) overrides.push_back({"eval.data", nlohmann::json(eval_data).dump()});
      if (!eval_mode.empty()) overrides.push_back({"infer.modes", nlohmann::json::array({eval_mode}).dump()});
      if (eval_n) overrides.push_back({"infer.n", std::to_string(*eval_n)});
      if (!eval_out.empty()) overrides.push_back({"output.dir", nlohmann::json(eval_out).dump()});
      cmd_eval(load_run_config(config_path, overrides), threads);
    } else if (*verify) {
      if (!overrides.empty()) throw ConfigError("verify takes no config overrides");
      InjectedFault f = InjectedFault::none;
      if (fault == "token_prob_sign")
        f = InjectedFault::token_prob_sign;
      else if (fault != "none")
        throw ConfigError("unknown fault '" + fault + "'");
      return cmd_verify(verify_scale_from_string(scale), report_path, verify_seed, f);
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const CompatibilityError& e) {
    std::cerr << "compatibility error: " << e.what() << '\n';
    return kExitCompat;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitConfig;
  }
  return kExitOk;
}
