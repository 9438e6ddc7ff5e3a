#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "kanslu/data/dataset.hpp"
#include "kanslu/features/mel.hpp"

namespace kanslu::data {

// Log-mel features of every synthetic waveform, grouped by split.
PreparedData prepare_synth(const SynthDataset& synth, const features::MelConfig& mel);

// Featurises manifest entries: `.melf` sources are read from the feature
// cache, anything else is decoded as WAV.
PreparedData prepare_manifest(const Manifest& manifest, const features::MelConfig& mel);
ad::Tensor featurize_entry(const ManifestEntry& entry, features::MelExtractor& extractor);

struct EmbeddingPaths {
  std::filesystem::path train;
  std::filesystem::path validation;
  std::filesystem::path test;
};

// Label names default to "class<i>" for i below the largest index + 1.
PreparedData prepare_embeddings(const EmbeddingPaths& paths, std::vector<std::string> label_names = {});

}  // namespace kanslu::data
