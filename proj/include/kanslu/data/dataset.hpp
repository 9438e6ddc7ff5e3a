#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "kanslu/autodiff/tensor.hpp"
#include "kanslu/features/audio.hpp"

namespace kanslu::data {

enum class Split { Train, Validation, Test };

std::string_view to_string(Split split);
// Accepts train, validation and test.
Split split_from_string(std::string_view token);

struct ManifestEntry {
  std::string source;
  std::string label;
  Split split = Split::Train;
};

struct Manifest {
  std::vector<ManifestEntry> entries;
  // Class name -> index, in lexicographic order.
  std::map<std::string, std::size_t> label_map;

  std::vector<std::string> labels() const;
  std::vector<std::size_t> indices(Split split) const;
  std::size_t label_index(const std::string& label) const;
};

// Rebuilds label_map from the entries and checks split disjointness.
void finalize_manifest(Manifest& manifest);

// CSV with header `path,label,split` (columns in any order). Relative paths
// are resolved against `base_dir`.
Manifest parse_manifest(std::istream& in, const std::filesystem::path& base_dir = {});
Manifest load_manifest(const std::filesystem::path& path);

struct Embeddings {
  ad::Tensor features;  // [N, D]
  std::vector<std::size_t> labels;
};

// "EMBD", u32 N, u32 D, N·D little-endian f32, then N u32 labels.
Embeddings load_embeddings(const std::filesystem::path& path);
void write_embeddings(const std::filesystem::path& path, const Embeddings& embeddings);

enum class Locus { Full, MiddleThird };

std::string_view to_string(Locus locus);
Locus locus_from_string(std::string_view name);

struct SynthConfig {
  std::size_t num_classes = 8;
  std::size_t per_class = 200;
  std::uint64_t seed = 7;
  double snr_db = 10.0;
  Locus locus = Locus::Full;
};

struct SynthDataset {
  Manifest manifest;
  // Parallel to manifest.entries.
  std::vector<features::Waveform> waveforms;
  // Three tone frequencies per class, indexed like label_map.
  std::vector<std::vector<double>> signatures;
};

inline constexpr double kSynthDuration = 1.0;
inline constexpr double kSynthAmplitude = 0.2;
inline constexpr double kSynthMaxShift = 0.05;

// Each class is a fixed chord of three sinusoids drawn from 200-4000 Hz;
// examples add Gaussian noise at the requested SNR and a random circular
// shift of up to ±50 ms. Splits are stratified 70/15/15 per class.
SynthDataset synth_dataset(const SynthConfig& cfg);

// One featurised example: [1, M, T] spectrogram or [D] embedding.
struct Example {
  ad::Tensor features;
  std::size_t label = 0;
};

struct Batch {
  ad::Tensor features;  // [B, 1, M, T_max] or [B, D]
  std::vector<std::size_t> labels;
  // Original frame counts (1 for embeddings).
  std::vector<std::size_t> lengths;
  // Positions of the examples in their source.
  std::vector<std::size_t> indices;
};

// Zero-pads spectrograms on the time axis to the longest example.
Batch collate(const std::vector<Example>& examples, std::vector<std::size_t> indices = {});

// Chunks of a seeded permutation of [0, count); the last chunk may be short.
std::vector<std::vector<std::size_t>> epoch_order(std::size_t count, std::size_t batch_size, std::uint64_t seed,
                                                  std::uint64_t epoch, bool shuffle = true);

using ExampleSource = std::function<Example(std::size_t index)>;

// Epoch-wise batches over an indexable example source. Every index appears
// exactly once per epoch; composition depends only on (seed, epoch).
class BatchStream {
 public:
  BatchStream(std::size_t count, ExampleSource source, std::size_t batch_size, std::uint64_t shuffle_seed,
              bool shuffle = true);

  void start_epoch(std::uint64_t epoch);
  std::optional<Batch> next();
  std::size_t batches_per_epoch() const;
  std::size_t size() const noexcept { return count_; }

 private:
  std::size_t count_;
  ExampleSource source_;
  std::size_t batch_size_;
  std::uint64_t seed_;
  bool shuffle_;
  std::vector<std::vector<std::size_t>> order_;
  std::size_t cursor_ = 0;
};

// Manifest entries of one split, featurised on demand; read failures raise
// IoError naming the file.
using Featurizer = std::function<ad::Tensor(const ManifestEntry& entry)>;
BatchStream batches(const Manifest& manifest, Split split, std::size_t batch_size, std::uint64_t shuffle_seed,
                    Featurizer featurizer);

// Featurised, labelled examples of one split held in memory.
struct LabeledSet {
  std::vector<ad::Tensor> features;
  std::vector<std::size_t> labels;

  std::size_t size() const noexcept { return labels.size(); }
  ExampleSource source() const;
};

struct PreparedData {
  LabeledSet train;
  LabeledSet validation;
  LabeledSet test;
  std::vector<std::string> labels;

  std::size_t num_classes() const noexcept { return labels.size(); }
  // Largest frame count over all splits (0 for embeddings).
  std::size_t max_frames() const;
};

}  // namespace kanslu::data
