#include "kanslu/features/mel.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <mutex>
#include <numbers>
#include <string>

#include "kanslu/errors.hpp"

namespace kanslu::features {

namespace {

// FFTW's planner is not thread-safe; execution on distinct buffers is.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

}  // namespace

void MelConfig::validate() const {
  if (sample_rate <= 0.0) throw ParameterError("sample_rate must be positive");
  if (n_fft < 2) throw ParameterError("n_fft must be at least 2");
  if (win_length == 0 || win_length > n_fft) throw ParameterError("win_length must be in [1, n_fft]");
  if (hop_length == 0) throw ParameterError("hop_length must be positive");
  if (n_mels == 0 || n_mels >= num_bins()) throw ParameterError("n_mels must be in [1, n_fft/2]");
  if (f_min < 0.0 || f_min >= effective_f_max() || effective_f_max() > sample_rate / 2.0) {
    throw ParameterError("need 0 <= f_min < f_max <= sample_rate/2");
  }
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

std::size_t frame_count(std::size_t samples, const MelConfig& cfg) { return 1 + samples / cfg.hop_length; }

std::vector<double> mel_edge_frequencies(const MelConfig& cfg) {
  const double lo = hz_to_mel(cfg.f_min), hi = hz_to_mel(cfg.effective_f_max());
  std::vector<double> edges(cfg.n_mels + 2);
  const double step = (hi - lo) / static_cast<double>(cfg.n_mels + 1);
  for (std::size_t i = 0; i < edges.size(); ++i) edges[i] = mel_to_hz(lo + step * static_cast<double>(i));
  return edges;
}

ad::Tensor mel_filterbank(const MelConfig& cfg) {
  cfg.validate();
  const std::size_t bins = cfg.num_bins();
  const auto edges = mel_edge_frequencies(cfg);
  ad::Tensor fb({cfg.n_mels, bins});
  for (std::size_t k = 0; k < bins; ++k) {
    const double f = cfg.sample_rate / 2.0 * static_cast<double>(k) / static_cast<double>(bins - 1);
    for (std::size_t m = 0; m < cfg.n_mels; ++m) {
      const double down = (f - edges[m]) / (edges[m + 1] - edges[m]);
      const double up = (edges[m + 2] - f) / (edges[m + 2] - edges[m + 1]);
      fb[m * bins + k] = std::max(0.0, std::min(down, up));
    }
  }
  return fb;
}

struct MelExtractor::Impl {
  double* frame = nullptr;
  fftw_complex* spectrum = nullptr;
  fftw_plan plan = nullptr;
  std::vector<double> window;
  ad::Tensor filterbank;
  std::vector<double> power;

  ~Impl() {
    std::lock_guard lock(planner_mutex());
    if (plan) fftw_destroy_plan(plan);
    fftw_free(frame);
    fftw_free(spectrum);
  }
};

MelExtractor::MelExtractor(MelConfig cfg) : cfg_(cfg), impl_(std::make_unique<Impl>()) {
  cfg_.validate();
  const std::size_t n = cfg_.n_fft;
  impl_->frame = fftw_alloc_real(n);
  impl_->spectrum = fftw_alloc_complex(cfg_.num_bins());
  {
    std::lock_guard lock(planner_mutex());
    impl_->plan = fftw_plan_dft_r2c_1d(static_cast<int>(n), impl_->frame, impl_->spectrum, FFTW_ESTIMATE);
  }
  if (!impl_->plan) throw ContractError("FFTW could not build a plan");
  // Periodic Hann of win_length, centred inside n_fft.
  impl_->window.assign(n, 0.0);
  const std::size_t offset = (n - cfg_.win_length) / 2;
  for (std::size_t i = 0; i < cfg_.win_length; ++i) {
    impl_->window[offset + i] =
        0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(cfg_.win_length));
  }
  impl_->filterbank = mel_filterbank(cfg_);
  impl_->power.resize(cfg_.num_bins());
}

MelExtractor::~MelExtractor() = default;
MelExtractor::MelExtractor(MelExtractor&&) noexcept = default;
MelExtractor& MelExtractor::operator=(MelExtractor&&) noexcept = default;

ad::Tensor MelExtractor::operator()(std::span<const double> samples) {
  const std::size_t len = samples.size();
  if (len < cfg_.win_length) {
    throw LengthError("waveform has " + std::to_string(len) + " samples, need at least " +
                      std::to_string(cfg_.win_length));
  }
  const std::size_t n = cfg_.n_fft, pad = n / 2, bins = cfg_.num_bins(), mels = cfg_.n_mels;
  const std::size_t frames = frame_count(len, cfg_);
  // Reflect padding about the end samples, excluding them.
  auto at = [&](std::ptrdiff_t i) {
    const auto last = static_cast<std::ptrdiff_t>(len) - 1;
    while (i < 0 || i > last) i = i < 0 ? -i : 2 * last - i;
    return samples[static_cast<std::size_t>(i)];
  };
  ad::Tensor out({1, mels, frames});
  const auto& fb = impl_->filterbank;
  for (std::size_t t = 0; t < frames; ++t) {
    const auto start = static_cast<std::ptrdiff_t>(t * cfg_.hop_length) - static_cast<std::ptrdiff_t>(pad);
    for (std::size_t i = 0; i < n; ++i) impl_->frame[i] = at(start + static_cast<std::ptrdiff_t>(i)) * impl_->window[i];
    fftw_execute(impl_->plan);
    for (std::size_t k = 0; k < bins; ++k) {
      impl_->power[k] = impl_->spectrum[k][0] * impl_->spectrum[k][0] + impl_->spectrum[k][1] * impl_->spectrum[k][1];
    }
    for (std::size_t m = 0; m < mels; ++m) {
      double acc = 0.0;
      const double* row = fb.data().data() + m * bins;
      for (std::size_t k = 0; k < bins; ++k) acc += row[k] * impl_->power[k];
      out[m * frames + t] = std::log(acc + kLogFloor);
    }
  }
  return out;
}

ad::Tensor melspectrogram(const Waveform& wav, const MelConfig& cfg) {
  if (std::abs(wav.sample_rate - cfg.sample_rate) > 1e-9) {
    throw ParameterError("waveform rate " + std::to_string(wav.sample_rate) + " Hz differs from mel config rate " +
                         std::to_string(cfg.sample_rate) + " Hz");
  }
  MelExtractor extract(cfg);
  return extract(wav.samples);
}

namespace {

void put_u32(std::ostream& out, std::uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>(v >> (8 * i));
  out.write(b, 4);
}

std::uint32_t get_u32(const unsigned char* b) {
  return static_cast<std::uint32_t>(b[0]) | static_cast<std::uint32_t>(b[1]) << 8 |
         static_cast<std::uint32_t>(b[2]) << 16 | static_cast<std::uint32_t>(b[3]) << 24;
}

}  // namespace

void write_melf(const std::filesystem::path& path, const ad::Tensor& features) {
  const std::size_t rank = features.rank();
  if (!(rank == 2 || (rank == 3 && features.dim(0) == 1))) {
    throw DimensionError("MELF stores [M, T] or [1, M, T], got " + ad::shape_str(features.shape()));
  }
  const std::size_t m = features.dim(rank - 2), t = features.dim(rank - 1);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write feature cache " + path.string());
  out.write("MELF", 4);
  put_u32(out, static_cast<std::uint32_t>(m));
  put_u32(out, static_cast<std::uint32_t>(t));
  for (double v : features.data()) {
    const auto f = static_cast<float>(v);
    std::uint32_t bits;
    std::memcpy(&bits, &f, 4);
    put_u32(out, bits);
  }
}

ad::Tensor read_melf(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open feature cache " + path.string());
  std::vector<unsigned char> b((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (b.size() < 12 || std::memcmp(b.data(), "MELF", 4) != 0) throw FormatError(path.string() + ": not a MELF file");
  const std::size_t m = get_u32(b.data() + 4), t = get_u32(b.data() + 8);
  const std::size_t expected = 12 + 4 * m * t;
  if (b.size() != expected) {
    throw FormatError(path.string() + ": MELF payload has " + std::to_string(b.size()) + " bytes, expected " +
                      std::to_string(expected));
  }
  ad::Tensor out({1, m, t});
  for (std::size_t i = 0; i < m * t; ++i) {
    const std::uint32_t bits = get_u32(b.data() + 12 + 4 * i);
    float f;
    std::memcpy(&f, &bits, 4);
    out[i] = f;
  }
  return out;
}

}  // namespace kanslu::features
