#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "kanslu/blocks/model.hpp"
#include "kanslu/data/dataset.hpp"
#include "kanslu/data/prepare.hpp"
#include "kanslu/features/mel.hpp"
#include "kanslu/train/fit.hpp"

namespace kanslu::cli {

enum class DataSource { Synth, Manifest, Embeddings };
std::string_view to_string(DataSource source);

struct DataConfig {
  DataSource source = DataSource::Synth;
  data::SynthConfig synth;
  std::filesystem::path manifest;
  data::EmbeddingPaths embeddings;
};

enum class AblationAxis { Config, Hidden, Basis };
std::string_view to_string(AblationAxis axis);
AblationAxis ablation_axis_from_string(std::string_view name);

// FKF(a) fixes the FF width and varies the KAN width; FKF(b) varies both.
enum class HiddenMode { A, B, Both };
std::string_view to_string(HiddenMode mode);
HiddenMode hidden_mode_from_string(std::string_view name);

struct AblationConfig {
  AblationAxis axis = AblationAxis::Config;
  std::vector<blocks::BlockKind> kinds{std::begin(blocks::kAllBlockKinds), std::end(blocks::kAllBlockKinds)};
  std::vector<basis::Family> families{std::begin(basis::kAllFamilies), std::end(basis::kAllFamilies)};
  std::vector<std::size_t> hidden{32, 64, 128, 256, 512, 1024};
  HiddenMode hidden_mode = HiddenMode::Both;
  // FF width held fixed in mode (a).
  std::size_t fixed_hidden = 128;
};

// Everything a command needs, after defaults, file contents and overrides.
struct AppConfig {
  blocks::ModelSpec model;
  // 0 derives the CNN input width from the longest training utterance.
  std::size_t input_frames = 0;
  features::MelConfig mel;
  DataConfig data;
  train::RunConfig train;
  std::size_t seeds = 1;
  AblationConfig ablate;
  // Class names; empty means derived from the data.
  std::vector<std::string> labels;
};

// Parses a config document. Unknown keys and ill-typed values raise
// ConfigError naming the dotted field. Training defaults follow the model
// kind unless overridden.
AppConfig config_from_json(const nlohmann::json& doc);
// Complete document with every field; config_from_json(config_to_json(c)) == c.
nlohmann::json config_to_json(const AppConfig& config);

// "a.b.c=value": value is parsed as JSON, falling back to a plain string.
void apply_override(nlohmann::json& doc, std::string_view assignment);

nlohmann::json read_json_file(const std::filesystem::path& path);
// Reads `path` (or starts from {}), applies overrides in order and parses.
AppConfig load_config(const std::optional<std::filesystem::path>& path, const std::vector<std::string>& overrides);

bool operator==(const AppConfig& a, const AppConfig& b);

}  // namespace kanslu::cli
