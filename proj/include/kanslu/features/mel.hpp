#pragma once

#include <cstddef>
#include <filesystem>
#include <memory>
#include <span>
#include <vector>

#include "kanslu/autodiff/tensor.hpp"
#include "kanslu/features/audio.hpp"

namespace kanslu::features {

inline constexpr double kLogFloor = 1e-6;

struct MelConfig {
  double sample_rate = kTargetSampleRate;
  std::size_t n_fft = 400;
  std::size_t win_length = 400;
  std::size_t hop_length = 160;
  std::size_t n_mels = 64;
  double f_min = 0.0;
  // 0 selects sample_rate / 2.
  double f_max = 0.0;

  std::size_t num_bins() const { return n_fft / 2 + 1; }
  double effective_f_max() const { return f_max > 0.0 ? f_max : sample_rate / 2.0; }
  void validate() const;

  friend bool operator==(const MelConfig&, const MelConfig&) = default;
};

double hz_to_mel(double hz);
double mel_to_hz(double mel);

// Frame count with centre padding: 1 + floor(samples / hop).
std::size_t frame_count(std::size_t samples, const MelConfig& cfg);

// The n_mels+2 edge frequencies; filter j peaks at edges[j+1].
std::vector<double> mel_edge_frequencies(const MelConfig& cfg);

// Triangular filters [n_mels, n_fft/2+1] with unit peaks on the HTK mel scale.
ad::Tensor mel_filterbank(const MelConfig& cfg);

// Reusable extractor owning an FFT plan and work buffers. Instances are not
// shared between threads; construct one per worker.
class MelExtractor {
 public:
  explicit MelExtractor(MelConfig cfg = {});
  ~MelExtractor();
  MelExtractor(MelExtractor&&) noexcept;
  MelExtractor& operator=(MelExtractor&&) noexcept;
  MelExtractor(const MelExtractor&) = delete;
  MelExtractor& operator=(const MelExtractor&) = delete;

  const MelConfig& config() const noexcept { return cfg_; }
  // log(mel power + 1e-6) as [1, n_mels, T].
  ad::Tensor operator()(std::span<const double> samples);

 private:
  struct Impl;
  MelConfig cfg_;
  std::unique_ptr<Impl> impl_;
};

ad::Tensor melspectrogram(const Waveform& wav, const MelConfig& cfg = {});

// Feature cache: "MELF", u32 M, u32 T, then M·T little-endian f32 (mel-major).
void write_melf(const std::filesystem::path& path, const ad::Tensor& features);
ad::Tensor read_melf(const std::filesystem::path& path);

}  // namespace kanslu::features
