#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "kanslu/cli/config.hpp"
#include "kanslu/cli/selfcheck.hpp"
#include "kanslu/relevance/relevance.hpp"
#include "kanslu/train/metrics.hpp"

namespace kanslu::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitSelfcheckFailed = 1;
inline constexpr int kExitConfigError = 2;
inline constexpr int kExitTrainingAborted = 3;

inline constexpr const char* kCheckpointFile = "checkpoint.kanckpt";
inline constexpr const char* kEffectiveConfigFile = "effective_config.json";

// Loads (and featurises) the configured data source.
data::PreparedData load_data(const AppConfig& config);

// Fills input_frames and labels from the data when they were left open and
// checks explicit values against it.
void resolve_config(AppConfig& config, const data::PreparedData& data);

// Model geometry for a resolved config; in_dim is only used by embedding heads.
blocks::ModelSpec model_spec(const AppConfig& config, std::size_t in_dim);

struct SeedOutcome {
  std::uint64_t seed = 0;
  train::FitResult fit;
  train::MetricsReport test;
  std::size_t params = 0;
};

// Initialises a model from Rng(derive_seed(seed, 1)), trains and evaluates
// on the test split. With `out_dir`, writes the checkpoint, train_log.jsonl,
// timing.jsonl and metrics.json there.
SeedOutcome train_seed(const AppConfig& config, const data::PreparedData& data, std::uint64_t seed,
                       const std::optional<std::filesystem::path>& out_dir, std::ostream* progress);

// Seeds train.seed, train.seed+1, ...; per-seed subdirectories and a
// summary.json when there is more than one.
int cmd_train(const AppConfig& config, const std::filesystem::path& out_dir, std::ostream& log);

struct EvalOptions {
  // Checkpoint file or a training output directory.
  std::filesystem::path checkpoint;
  std::optional<std::filesystem::path> config_path;
  std::vector<std::string> overrides;
  data::Split split = data::Split::Test;
  std::optional<std::filesystem::path> out_dir;
};
int cmd_eval(const EvalOptions& options, std::ostream& log);

struct AblationRow {
  std::string variant;
  std::size_t params = 0;
  double throughput_it_s = 0.0;
  double accuracy_mean = 0.0;
  double accuracy_std = 0.0;
  double f1_mean = 0.0;
  double f1_std = 0.0;
  std::string status = "ok";
};

struct AblationVariant {
  std::string name;
  AppConfig config;
};
std::vector<AblationVariant> ablation_variants(const AppConfig& config);
std::vector<AblationRow> run_ablation(const AppConfig& config, const data::PreparedData& data, std::size_t parallel,
                                      const std::optional<std::filesystem::path>& out_dir, std::ostream* progress);
std::string ablation_csv(const std::vector<AblationRow>& rows);
int cmd_ablate(const AppConfig& config, const std::filesystem::path& out_dir, std::size_t parallel, std::ostream& log);

struct ExplainOptions {
  std::filesystem::path checkpoint;
  std::filesystem::path wav;
  std::optional<std::filesystem::path> alignment;
  std::optional<std::filesystem::path> config_path;
  std::vector<std::string> overrides;
  std::size_t segments = 8;
  relevance::OcclusionOptions occlusion;
  std::filesystem::path out_dir = ".";
};
int cmd_explain(const ExplainOptions& options, std::ostream& log);

int cmd_selfcheck(const SelfcheckOptions& options, std::ostream& log);

// Sample mean and (n-1) standard deviation; std is 0 for a single value.
std::pair<double, double> mean_std(const std::vector<double>& values);

// Full command-line entry point; returns the process exit code.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace kanslu::cli
