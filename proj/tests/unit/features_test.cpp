#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <numbers>

#include "kanslu/errors.hpp"
#include "kanslu/features/audio.hpp"
#include "kanslu/features/mel.hpp"
#include "kanslu/random.hpp"

using namespace kanslu;
using features::MelConfig;
using features::Waveform;

namespace {

void put16(std::vector<std::uint8_t>& b, std::uint16_t v) {
  b.push_back(v & 0xFF);
  b.push_back(v >> 8);
}
void put32(std::vector<std::uint8_t>& b, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) b.push_back((v >> (8 * i)) & 0xFF);
}

// Hand-built RIFF header, independent of encode_wav.
std::vector<std::uint8_t> wav_bytes(const std::vector<std::int16_t>& pcm, std::uint32_t rate, std::uint16_t channels = 1,
                                    std::uint16_t bits = 16) {
  std::vector<std::uint8_t> b;
  const std::uint32_t data_bytes = static_cast<std::uint32_t>(pcm.size() * 2);
  for (char c : std::string("RIFF")) b.push_back(c);
  put32(b, 36 + data_bytes);
  for (char c : std::string("WAVEfmt ")) b.push_back(c);
  put32(b, 16);
  put16(b, 1);
  put16(b, channels);
  put32(b, rate);
  put32(b, rate * channels * bits / 8);
  put16(b, channels * bits / 8);
  put16(b, bits);
  for (char c : std::string("data")) b.push_back(c);
  put32(b, data_bytes);
  for (std::int16_t s : pcm) put16(b, static_cast<std::uint16_t>(s));
  return b;
}

Waveform sine(double hz, double seconds, double amp = 0.5) {
  Waveform w;
  w.samples.resize(static_cast<std::size_t>(seconds * w.sample_rate));
  for (std::size_t i = 0; i < w.samples.size(); ++i) {
    w.samples[i] = amp * std::sin(2.0 * std::numbers::pi * hz * static_cast<double>(i) / w.sample_rate);
  }
  return w;
}

}  // namespace

TEST(Wav, ZerosDecodeToZeros) {
  Waveform w = features::decode_wav(wav_bytes(std::vector<std::int16_t>(16000, 0), 16000));
  ASSERT_EQ(w.samples.size(), 16000u);
  for (double v : w.samples) EXPECT_EQ(v, 0.0);
  EXPECT_EQ(w.sample_rate, 16000.0);
}

TEST(Wav, FullScaleSquareWaveScaling) {
  std::vector<std::int16_t> pcm;
  for (int i = 0; i < 100; ++i) pcm.push_back(i % 2 ? 32767 : -32767);
  Waveform w = features::decode_wav(wav_bytes(pcm, 16000));
  EXPECT_NEAR(w.samples[0], -0.99997, 1e-5);
  EXPECT_NEAR(w.samples[1], 0.99997, 1e-5);
  EXPECT_DOUBLE_EQ(w.samples[1], 32767.0 / 32768.0);
}

TEST(Wav, EightKilohertzResamplesToTwoNMinusOne) {
  std::vector<std::int16_t> pcm(801);
  for (std::size_t i = 0; i < pcm.size(); ++i) pcm[i] = static_cast<std::int16_t>(i * 10);
  Waveform w = features::decode_wav(wav_bytes(pcm, 8000));
  ASSERT_EQ(w.samples.size(), 2 * pcm.size() - 1);
  // Odd outputs sit halfway between neighbours.
  EXPECT_NEAR(w.samples[3], (pcm[1] + pcm[2]) / 2.0 / 32768.0, 1e-15);
  EXPECT_DOUBLE_EQ(w.samples[4], pcm[2] / 32768.0);
}

TEST(Wav, MultichannelRejectedWithCount) {
  try {
    features::decode_wav(wav_bytes(std::vector<std::int16_t>(20, 0), 16000, 2));
    FAIL() << "expected UnsupportedFormatError";
  } catch (const UnsupportedFormatError& e) {
    EXPECT_NE(std::string(e.what()).find('2'), std::string::npos) << e.what();
  }
}

TEST(Wav, MalformedHeadersRejected) {
  auto bytes = wav_bytes(std::vector<std::int16_t>(20, 0), 16000);
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  EXPECT_THROW(features::decode_wav(bad_magic), FormatError);
  EXPECT_THROW(features::decode_wav(std::span(bytes).first(20)), FormatError);
  EXPECT_THROW(features::decode_wav(wav_bytes(std::vector<std::int16_t>(20, 0), 16000, 1, 8)), UnsupportedFormatError);
}

TEST(Wav, EncodeDecodeRoundTripAndFileErrors) {
  Waveform w = sine(440, 0.1);
  Waveform back = features::decode_wav(features::encode_wav(w));
  ASSERT_EQ(back.samples.size(), w.samples.size());
  for (std::size_t i = 0; i < w.samples.size(); ++i) EXPECT_NEAR(back.samples[i], w.samples[i], 1.0 / 32768.0);
  const auto path = std::filesystem::temp_directory_path() / "kanslu_missing.wav";
  std::filesystem::remove(path);
  try {
    features::load_wav(path);
    FAIL();
  } catch (const std::exception& e) {
    EXPECT_NE(std::string(e.what()).find("kanslu_missing.wav"), std::string::npos);
  }
}

TEST(Mel, FrameCountFormulaOnRandomDurations) {
  Rng rng(3);
  MelConfig cfg;
  features::MelExtractor ex(cfg);
  for (int i = 0; i < 50; ++i) {
    const std::size_t len = 400 + rng() % 40000;
    std::vector<double> x(len, 0.01);
    const ad::Tensor s = ex(x);
    ASSERT_EQ(s.shape(), (ad::Shape{1, 64, 1 + len / 160})) << len;
    EXPECT_EQ(features::frame_count(len, cfg), 1 + len / 160);
  }
  EXPECT_EQ(features::frame_count(16000, cfg), 101u);
}

TEST(Mel, SilenceMapsToLogFloor) {
  const ad::Tensor s = features::melspectrogram(Waveform{std::vector<double>(16000, 0.0)});
  for (double v : s.data()) EXPECT_DOUBLE_EQ(v, std::log(1e-6));
  EXPECT_NEAR(std::log(features::kLogFloor), -13.8155, 1e-4);
}

TEST(Mel, OneKilohertzToneLocalisesToNearestCentre) {
  // Independent centre table from the HTK formula.
  auto mel = [](double f) { return 2595.0 * std::log10(1.0 + f / 700.0); };
  auto hz = [](double m) { return 700.0 * (std::pow(10.0, m / 2595.0) - 1.0); };
  const double step = mel(8000.0) / 65.0;
  std::size_t nearest = 0;
  for (std::size_t j = 0; j < 64; ++j) {
    if (std::abs(hz(step * (j + 1)) - 1000.0) < std::abs(hz(step * (nearest + 1)) - 1000.0)) nearest = j;
  }
  const ad::Tensor s = features::melspectrogram(sine(1000.0, 1.0));
  const std::size_t t = s.dim(2);
  for (std::size_t f = 2; f + 2 < t; ++f) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < 64; ++j) {
      if (s[j * t + f] > s[best * t + f]) best = j;
    }
    EXPECT_EQ(best, nearest) << "frame " << f;
  }
}

TEST(Mel, FilterbankShapeRowsAndCoverage) {
  MelConfig cfg;
  const ad::Tensor fb = features::mel_filterbank(cfg);
  ASSERT_EQ(fb.shape(), (ad::Shape{64, 201}));
  for (std::size_t j = 0; j < 64; ++j) {
    double row = 0.0;
    for (std::size_t k = 0; k < 201; ++k) {
      EXPECT_GE(fb[j * 201 + k], 0.0);
      row += fb[j * 201 + k];
    }
    EXPECT_GT(row, 0.0) << j;
  }
  const auto edges = features::mel_edge_frequencies(cfg);
  ASSERT_EQ(edges.size(), 66u);
  for (std::size_t k = 0; k < 201; ++k) {
    const double f = 8000.0 * static_cast<double>(k) / 200.0;
    if (f <= edges[1] || f >= edges[64]) continue;
    double col = 0.0;
    for (std::size_t j = 0; j < 64; ++j) col += fb[j * 201 + k];
    EXPECT_GT(col, 0.0) << "bin " << k;
  }
  const double step = features::hz_to_mel(8000.0) / 65.0;
  EXPECT_NEAR(edges[1], features::mel_to_hz(features::hz_to_mel(0.0) + step), 1e-9);
  EXPECT_NEAR(features::hz_to_mel(1000.0), 2595.0 * std::log10(1.0 + 1000.0 / 700.0), 1e-9);
}

TEST(Mel, WhiteNoiseEnergyGrowsLinearlyWithDuration) {
  Rng rng(5);
  std::normal_distribution<double> gauss(0.0, 0.1);
  std::vector<double> xs, ys;
  for (double sec = 1.0; sec <= 4.0; sec += 0.5) {
    Waveform w;
    w.samples.resize(static_cast<std::size_t>(sec * 16000));
    for (double& v : w.samples) v = gauss(rng);
    const ad::Tensor s = features::melspectrogram(w);
    double energy = 0.0;
    for (double v : s.data()) energy += std::exp(v) - 1e-6;
    xs.push_back(sec);
    ys.push_back(energy);
  }
  const double n = static_cast<double>(xs.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) mx += xs[i] / n, my += ys[i] / n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxy += (xs[i] - mx) * (ys[i] - my);
    sxx += (xs[i] - mx) * (xs[i] - mx);
    syy += (ys[i] - my) * (ys[i] - my);
  }
  EXPECT_GT(sxy * sxy / (sxx * syy), 0.99);
}

TEST(Mel, DeterministicAndShortInputRejected) {
  const Waveform w = sine(300, 0.5);
  const auto bytes = features::encode_wav(w);
  const ad::Tensor a = features::melspectrogram(features::decode_wav(bytes));
  const ad::Tensor b = features::melspectrogram(features::decode_wav(bytes));
  ASSERT_EQ(a.numel(), b.numel());
  EXPECT_EQ(std::memcmp(a.data().data(), b.data().data(), a.numel() * sizeof(double)), 0);
  EXPECT_THROW(features::melspectrogram(Waveform{std::vector<double>(399, 0.0)}), LengthError);
  Waveform other = w;
  other.sample_rate = 8000;
  EXPECT_THROW(features::melspectrogram(other), ParameterError);
}

TEST(Mel, ConfigValidation) {
  MelConfig c;
  c.win_length = 500;
  EXPECT_THROW(c.validate(), ParameterError);
  c = MelConfig{};
  c.hop_length = 0;
  EXPECT_THROW(c.validate(), ParameterError);
  c = MelConfig{};
  c.n_mels = 201;
  EXPECT_THROW(c.validate(), ParameterError);
}

TEST(Melf, RoundTripAndSizeMismatch) {
  const ad::Tensor s = features::melspectrogram(sine(500, 0.3));
  const auto path = std::filesystem::temp_directory_path() / "kanslu_test.melf";
  features::write_melf(path, s);
  const ad::Tensor back = features::read_melf(path);
  ASSERT_EQ(back.shape(), s.shape());
  for (std::size_t i = 0; i < s.numel(); ++i) EXPECT_EQ(back[i], static_cast<double>(static_cast<float>(s[i])));
  std::filesystem::resize_file(path, std::filesystem::file_size(path) - 4);
  EXPECT_THROW(features::read_melf(path), FormatError);
  std::filesystem::remove(path);
}
