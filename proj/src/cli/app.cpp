#include <iostream>

#include "CLI11.hpp"
#include "kanslu/cli/commands.hpp"
#include "kanslu/errors.hpp"
#include "kanslu/train/checkpoint.hpp"

namespace kanslu::cli {

namespace {

struct CommonFlags {
  std::string config;
  std::vector<std::string> overrides;
  std::string out = "runs/latest";
  std::size_t seeds = 0;  // 0 keeps the config value
};

void add_common(CLI::App* cmd, CommonFlags& f, bool with_seeds) {
  cmd->add_option("--config", f.config, "JSON config file")->check(CLI::ExistingFile);
  cmd->add_option("--override", f.overrides, "Dotted override key.path=value (repeatable)");
  cmd->add_option("--out", f.out, "Output directory");
  if (with_seeds) cmd->add_option("--seeds", f.seeds, "Number of training seeds (overrides train.seeds)");
}

std::optional<std::filesystem::path> optional_path(const std::string& s) {
  if (s.empty()) return std::nullopt;
  return std::filesystem::path(s);
}

AppConfig common_config(const CommonFlags& f) {
  std::vector<std::string> overrides = f.overrides;
  if (f.seeds > 0) overrides.push_back("train.seeds=" + std::to_string(f.seeds));
  return load_config(optional_path(f.config), overrides);
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"KAN dense heads for spoken-language understanding"};
  app.require_subcommand(1);

  CommonFlags train_flags, ablate_flags;
  CLI::App* train = app.add_subcommand("train", "Train a model and write checkpoint, logs and metrics");
  add_common(train, train_flags, true);

  CLI::App* ablate = app.add_subcommand("ablate", "Sweep head configurations, hidden sizes or basis families");
  add_common(ablate, ablate_flags, true);
  std::string axis;
  std::size_t parallel = 1;
  ablate->add_option("--axis", axis, "config | hidden | basis (overrides ablate.axis)");
  ablate->add_option("--parallel", parallel, "Variants trained concurrently")->check(CLI::PositiveNumber);

  EvalOptions eval_opts;
  std::string eval_config, eval_out, eval_split = "test";
  CLI::App* eval = app.add_subcommand("eval", "Evaluate a checkpoint on one data split");
  eval->add_option("--checkpoint", eval_opts.checkpoint, "Checkpoint file or training output directory")
      ->required()
      ->check(CLI::ExistingPath);
  eval->add_option("--config", eval_config, "JSON config (default: effective_config.json next to the checkpoint)");
  eval->add_option("--override", eval_opts.overrides, "Dotted override key.path=value (repeatable)");
  eval->add_option("--split", eval_split, "train | validation | test");
  eval->add_option("--out", eval_out, "Directory for eval_metrics.json");

  ExplainOptions explain_opts;
  std::string explain_config, alignment, filler = "silence";
  std::uint64_t filler_seed = 0;
  CLI::App* explain = app.add_subcommand("explain", "Occlusion relevance of time segments for one utterance");
  explain->add_option("--checkpoint", explain_opts.checkpoint, "Checkpoint file or training output directory")
      ->required()
      ->check(CLI::ExistingPath);
  explain->add_option("--wav", explain_opts.wav, "16-bit PCM mono WAV file")->required()->check(CLI::ExistingFile);
  explain->add_option("--alignment", alignment, "Word alignment JSON")->check(CLI::ExistingFile);
  explain->add_option("--segments", explain_opts.segments, "Uniform segments when no alignment is given")
      ->check(CLI::PositiveNumber);
  explain->add_option("--filler", filler, "silence | noise");
  explain->add_option("--seed", filler_seed, "Seed of the noise filler");
  explain->add_option("--config", explain_config, "JSON config (default: effective_config.json next to the checkpoint)");
  explain->add_option("--override", explain_opts.overrides, "Dotted override key.path=value (repeatable)");
  std::string explain_out = ".";
  explain->add_option("--out", explain_out, "Directory for relevance.json and relevance.svg");

  SelfcheckOptions check_opts;
  CLI::App* selfcheck = app.add_subcommand("selfcheck", "Run the oracle and gradient self-checks");
  selfcheck->add_option("--seeds", check_opts.seeds, "Seeds per gradient check")->check(CLI::PositiveNumber);
  // Negative-control hook for the test suite; not listed in --help.
  selfcheck->add_option("--inject", check_opts.inject)->group("");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfigError;
  }

  try {
    if (*train) return cmd_train(common_config(train_flags), train_flags.out, out);
    if (*ablate) {
      if (!axis.empty()) ablate_flags.overrides.push_back("ablate.axis=" + axis);
      return cmd_ablate(common_config(ablate_flags), ablate_flags.out, parallel, out);
    }
    if (*eval) {
      eval_opts.config_path = optional_path(eval_config);
      eval_opts.out_dir = optional_path(eval_out);
      try {
        eval_opts.split = data::split_from_string(eval_split);
      } catch (const std::exception& e) {
        throw ConfigError(std::string("--split: ") + e.what());
      }
      return cmd_eval(eval_opts, out);
    }
    if (*explain) {
      explain_opts.alignment = optional_path(alignment);
      explain_opts.config_path = optional_path(explain_config);
      explain_opts.out_dir = explain_out;
      try {
        explain_opts.occlusion.filler = relevance::filler_from_string(filler);
      } catch (const std::exception& e) {
        throw ConfigError(std::string("--filler: ") + e.what());
      }
      explain_opts.occlusion.seed = filler_seed;
      return cmd_explain(explain_opts, out);
    }
    if (*selfcheck) {
      if (!check_opts.inject.empty()) {
        const auto names = selfcheck_names();
        if (std::find(names.begin(), names.end(), check_opts.inject) == names.end()) {
          throw ConfigError("--inject: unknown check '" + check_opts.inject + "'");
        }
      }
      return cmd_selfcheck(check_opts, out);
    }
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << std::endl;
    return kExitConfigError;
  } catch (const train::CheckpointMismatch& e) {
    err << "checkpoint does not match the model: " << e.what() << std::endl;
    return kExitConfigError;
  } catch (const TrainingAborted& e) {
    err << "training aborted: " << e.what() << std::endl;
    return kExitTrainingAborted;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << std::endl;
    return kExitConfigError;
  }
  return kExitConfigError;
}

}  // namespace kanslu::cli
