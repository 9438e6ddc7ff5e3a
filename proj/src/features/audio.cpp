#include "kanslu/features/audio.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

#include "kanslu/errors.hpp"

namespace kanslu::features {

namespace {

std::uint32_t read_u32(std::span<const std::uint8_t> b, std::size_t at) {
  return static_cast<std::uint32_t>(b[at]) | static_cast<std::uint32_t>(b[at + 1]) << 8 |
         static_cast<std::uint32_t>(b[at + 2]) << 16 | static_cast<std::uint32_t>(b[at + 3]) << 24;
}

std::uint16_t read_u16(std::span<const std::uint8_t> b, std::size_t at) {
  return static_cast<std::uint16_t>(b[at] | b[at + 1] << 8);
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

bool tag_is(std::span<const std::uint8_t> b, std::size_t at, const char* tag) {
  return std::memcmp(b.data() + at, tag, 4) == 0;
}

constexpr std::uint16_t kPcm = 1;
constexpr std::uint16_t kExtensible = 0xFFFE;

}  // namespace

std::vector<double> resample_linear(std::span<const double> samples, double from_rate, double to_rate) {
  if (from_rate <= 0.0 || to_rate <= 0.0) throw ParameterError("sample rates must be positive");
  if (samples.empty() || from_rate == to_rate) return {samples.begin(), samples.end()};
  const double ratio = to_rate / from_rate;
  const auto count = static_cast<std::size_t>(std::floor(static_cast<double>(samples.size() - 1) * ratio + 1e-9)) + 1;
  std::vector<double> out(count);
  for (std::size_t i = 0; i < count; ++i) {
    const double pos = static_cast<double>(i) / ratio;
    const auto lo = std::min(static_cast<std::size_t>(pos), samples.size() - 1);
    const std::size_t hi = std::min(lo + 1, samples.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    out[i] = samples[lo] + (samples[hi] - samples[lo]) * frac;
  }
  return out;
}

Waveform decode_wav(std::span<const std::uint8_t> b, double target_rate) {
  if (b.size() < 12 || !tag_is(b, 0, "RIFF") || !tag_is(b, 8, "WAVE")) {
    throw FormatError("not a RIFF/WAVE stream");
  }
  bool have_fmt = false;
  std::uint16_t channels = 0, bits = 0;
  std::uint32_t rate = 0;
  std::span<const std::uint8_t> data;
  bool have_data = false;
  std::size_t at = 12;
  while (at + 8 <= b.size()) {
    const std::uint32_t size = read_u32(b, at + 4);
    const std::size_t body = at + 8;
    if (size > b.size() - body) {
      // Truncated final data chunks are common in the wild; take what is there.
      if (!tag_is(b, at, "data")) throw FormatError("WAV chunk overruns the file");
    }
    const std::size_t avail = std::min<std::size_t>(size, b.size() - body);
    if (tag_is(b, at, "fmt ")) {
      if (avail < 16) throw FormatError("WAV fmt chunk too short");
      const std::uint16_t format = read_u16(b, body);
      channels = read_u16(b, body + 2);
      rate = read_u32(b, body + 4);
      bits = read_u16(b, body + 14);
      if (format != kPcm && format != kExtensible) {
        throw UnsupportedFormatError("WAV encoding " + std::to_string(format) + " is not PCM");
      }
      have_fmt = true;
    } else if (tag_is(b, at, "data")) {
      data = b.subspan(body, avail);
      have_data = true;
    }
    at = body + avail + (avail & 1);
  }
  if (!have_fmt) throw FormatError("WAV file has no fmt chunk");
  if (!have_data) throw FormatError("WAV file has no data chunk");
  if (channels != 1) {
    throw UnsupportedFormatError("only mono WAV is supported, file has " + std::to_string(channels) + " channels");
  }
  if (bits != 16) throw UnsupportedFormatError("only 16-bit PCM is supported, file has " + std::to_string(bits) + " bits");
  if (rate == 0) throw FormatError("WAV sample rate is zero");

  std::vector<double> samples(data.size() / 2);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    samples[i] = static_cast<double>(static_cast<std::int16_t>(read_u16(data, 2 * i))) / 32768.0;
  }
  Waveform wav;
  wav.sample_rate = target_rate;
  wav.samples = resample_linear(samples, rate, target_rate);
  return wav;
}

Waveform load_wav(const std::filesystem::path& path, double target_rate) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open WAV file " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return decode_wav(bytes, target_rate);
  } catch (const UnsupportedFormatError& e) {
    throw UnsupportedFormatError(path.string() + ": " + e.what());
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

std::vector<std::uint8_t> encode_wav(const Waveform& wav) {
  const auto rate = static_cast<std::uint32_t>(std::lround(wav.sample_rate));
  const auto data_bytes = static_cast<std::uint32_t>(wav.samples.size() * 2);
  std::vector<std::uint8_t> out;
  out.reserve(44 + data_bytes);
  for (char c : std::string("RIFF")) out.push_back(static_cast<std::uint8_t>(c));
  put_u32(out, 36 + data_bytes);
  for (char c : std::string("WAVEfmt ")) out.push_back(static_cast<std::uint8_t>(c));
  put_u32(out, 16);
  put_u16(out, kPcm);
  put_u16(out, 1);
  put_u32(out, rate);
  put_u32(out, rate * 2);
  put_u16(out, 2);
  put_u16(out, 16);
  for (char c : std::string("data")) out.push_back(static_cast<std::uint8_t>(c));
  put_u32(out, data_bytes);
  for (double s : wav.samples) {
    const double q = std::clamp(std::round(s * 32768.0), -32768.0, 32767.0);
    put_u16(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(q)));
  }
  return out;
}

void write_wav(const std::filesystem::path& path, const Waveform& wav) {
  const auto bytes = encode_wav(wav);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write WAV file " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace kanslu::features
