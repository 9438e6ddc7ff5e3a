#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace kanslu::features {

inline constexpr double kTargetSampleRate = 16000.0;

struct Waveform {
  std::vector<double> samples;
  double sample_rate = kTargetSampleRate;

  double duration() const { return static_cast<double>(samples.size()) / sample_rate; }
};

// RIFF/WAVE, 16-bit PCM, mono. Samples are scaled by 1/32768 and resampled
// to `target_rate` when the header rate differs.
Waveform decode_wav(std::span<const std::uint8_t> bytes, double target_rate = kTargetSampleRate);
Waveform load_wav(const std::filesystem::path& path, double target_rate = kTargetSampleRate);

// 16-bit PCM mono; samples are clipped to [-1, 1) before quantisation.
std::vector<std::uint8_t> encode_wav(const Waveform& wav);
void write_wav(const std::filesystem::path& path, const Waveform& wav);

// Linear interpolation onto the new rate; N input samples give
// floor((N-1)·to/from) + 1 outputs.
std::vector<double> resample_linear(std::span<const double> samples, double from_rate, double to_rate);

}  // namespace kanslu::features
