#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "kanslu/blocks/model.hpp"
#include "kanslu/features/audio.hpp"
#include "kanslu/features/mel.hpp"

namespace kanslu::relevance {

struct Segment {
  double start = 0.0;  // seconds
  double end = 0.0;
  std::string label;  // empty when no word is known

  friend bool operator==(const Segment&, const Segment&) = default;
};

enum class SegmentSource { Uniform, Provided };
std::string_view to_string(SegmentSource source);

struct SegmentSet {
  std::vector<Segment> segments;
  SegmentSource source = SegmentSource::Uniform;

  std::size_t size() const noexcept { return segments.size(); }
  // Sorted, non-overlapping, positive-length segments inside [0, duration].
  // RangeError for segments outside the audio, ValueError otherwise.
  void validate(double duration) const;
};

// n equal contiguous segments covering [0, duration].
SegmentSet uniform_segments(double duration, std::size_t n);

// {"segments":[{"start":s,"end":e,"word":w}, ...]}; "word" is optional.
SegmentSet parse_alignment(std::string_view json_text);
SegmentSet load_alignment(const std::filesystem::path& path);

enum class Filler { Silence, Noise };
std::string_view to_string(Filler filler);
Filler filler_from_string(std::string_view name);

struct OcclusionOptions {
  Filler filler = Filler::Silence;
  // Noise filler: segment j draws from Rng(derive_seed(seed, j)).
  std::uint64_t seed = 0;
};

// Maps a waveform to class probabilities.
using Classifier = std::function<std::vector<double>(const features::Waveform&)>;

struct RelevanceReport {
  std::size_t predicted_class = 0;
  double class_probability = 0.0;
  // p0 - p_j for each segment, in segment order.
  std::vector<double> scores;
  SegmentSet segments;
  double duration = 0.0;
};

// Index range [first, last) of the samples a segment covers.
std::pair<std::size_t, std::size_t> segment_samples(const Segment& s, std::size_t num_samples, double sample_rate);

RelevanceReport segment_relevance(const Classifier& classify, const features::Waveform& wav,
                                  const SegmentSet& segments, const OcclusionOptions& options = {});

// Mel features followed by an eval-mode forward pass. The model must have a
// CNN backbone and is borrowed for the classifier's lifetime.
Classifier model_classifier(blocks::Model& model, features::MelConfig mel);

std::string report_json(const RelevanceReport& report, const std::vector<std::string>& labels);
// Bar chart of segment scores drawn over the waveform envelope.
std::string report_svg(const RelevanceReport& report, const features::Waveform& wav,
                       const std::vector<std::string>& labels);

}  // namespace kanslu::relevance
