#include "kanslu/data/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numbers>
#include <random>
#include <set>
#include <sstream>

#include "kanslu/errors.hpp"
#include "kanslu/random.hpp"

namespace kanslu::data {

std::string_view to_string(Split split) {
  switch (split) {
    case Split::Train: return "train";
    case Split::Validation: return "validation";
    case Split::Test: return "test";
  }
  return "?";
}

Split split_from_string(std::string_view token) {
  for (Split s : {Split::Train, Split::Validation, Split::Test}) {
    if (to_string(s) == token) return s;
  }
  throw ValueError("unknown split '" + std::string(token) + "' (expected train, validation or test)");
}

std::vector<std::string> Manifest::labels() const {
  std::vector<std::string> out(label_map.size());
  for (const auto& [name, index] : label_map) out[index] = name;
  return out;
}

std::vector<std::size_t> Manifest::indices(Split split) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (entries[i].split == split) out.push_back(i);
  }
  return out;
}

std::size_t Manifest::label_index(const std::string& label) const {
  auto it = label_map.find(label);
  if (it == label_map.end()) throw ValueError("label '" + label + "' is not in the label map");
  return it->second;
}

void finalize_manifest(Manifest& manifest) {
  std::set<std::string> names;
  for (const auto& e : manifest.entries) names.insert(e.label);
  manifest.label_map.clear();
  for (const auto& n : names) manifest.label_map.emplace(n, manifest.label_map.size());
  std::map<std::string, Split> seen;
  for (const auto& e : manifest.entries) {
    auto [it, inserted] = seen.emplace(e.source, e.split);
    if (!inserted && it->second != e.split) {
      throw ValueError("splits are not disjoint: '" + e.source + "' appears in " + std::string(to_string(it->second)) +
                       " and " + std::string(to_string(e.split)));
    }
  }
}

namespace {

std::vector<std::string> split_csv_line(std::string line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace

Manifest parse_manifest(std::istream& in, const std::filesystem::path& base_dir) {
  std::string line;
  if (!std::getline(in, line)) throw FormatError("manifest is empty; expected header path,label,split");
  if (line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
  const auto header = split_csv_line(line);
  auto column = [&](const std::string& name) {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw FormatError("manifest header is missing column '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t c_path = column("path"), c_label = column("label"), c_split = column("split");
  Manifest m;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != header.size()) {
      throw FormatError("manifest line " + std::to_string(line_no) + " has " + std::to_string(cells.size()) +
                        " fields, header has " + std::to_string(header.size()));
    }
    std::filesystem::path p(cells[c_path]);
    if (p.is_relative() && !base_dir.empty()) p = base_dir / p;
    m.entries.push_back({p.string(), cells[c_label], split_from_string(cells[c_split])});
  }
  finalize_manifest(m);
  return m;
}

Manifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest " + path.string());
  return parse_manifest(in, path.parent_path());
}

namespace {

std::uint32_t get_u32(const unsigned char* b) {
  return static_cast<std::uint32_t>(b[0]) | static_cast<std::uint32_t>(b[1]) << 8 |
         static_cast<std::uint32_t>(b[2]) << 16 | static_cast<std::uint32_t>(b[3]) << 24;
}

void put_u32(std::ostream& out, std::uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>(v >> (8 * i));
  out.write(b, 4);
}

}  // namespace

Embeddings load_embeddings(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open embeddings " + path.string());
  std::vector<unsigned char> b((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (b.size() < 12 || std::memcmp(b.data(), "EMBD", 4) != 0) {
    throw FormatError(path.string() + ": bad magic, expected EMBD");
  }
  const std::size_t n = get_u32(b.data() + 4), d = get_u32(b.data() + 8);
  const std::size_t expected = 12 + 4 * n * d + 4 * n;
  if (b.size() != expected) {
    throw FormatError(path.string() + ": truncated or oversized payload, expected " + std::to_string(expected) +
                      " bytes, got " + std::to_string(b.size()));
  }
  Embeddings e;
  e.features = ad::Tensor({n, d});
  for (std::size_t i = 0; i < n * d; ++i) {
    const std::uint32_t bits = get_u32(b.data() + 12 + 4 * i);
    float f;
    std::memcpy(&f, &bits, 4);
    e.features[i] = f;
  }
  e.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) e.labels[i] = get_u32(b.data() + 12 + 4 * n * d + 4 * i);
  return e;
}

void write_embeddings(const std::filesystem::path& path, const Embeddings& e) {
  if (e.features.rank() != 2 || e.features.dim(0) != e.labels.size()) {
    throw DimensionError("embeddings need [N, D] features and N labels");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write embeddings " + path.string());
  out.write("EMBD", 4);
  put_u32(out, static_cast<std::uint32_t>(e.features.dim(0)));
  put_u32(out, static_cast<std::uint32_t>(e.features.dim(1)));
  for (double v : e.features.data()) {
    const auto f = static_cast<float>(v);
    std::uint32_t bits;
    std::memcpy(&bits, &f, 4);
    put_u32(out, bits);
  }
  for (std::size_t l : e.labels) put_u32(out, static_cast<std::uint32_t>(l));
}

std::string_view to_string(Locus locus) { return locus == Locus::Full ? "full" : "middle_third"; }

Locus locus_from_string(std::string_view name) {
  if (name == "full") return Locus::Full;
  if (name == "middle_third") return Locus::MiddleThird;
  throw ValueError("unknown locus '" + std::string(name) + "' (expected full or middle_third)");
}

SynthDataset synth_dataset(const SynthConfig& cfg) {
  if (cfg.num_classes < 2 || cfg.num_classes > 32) throw ParameterError("synthetic dataset needs 2 to 32 classes");
  if (cfg.per_class == 0) throw ParameterError("synthetic dataset needs at least one example per class");
  constexpr double rate = features::kTargetSampleRate;
  const auto n = static_cast<std::size_t>(kSynthDuration * rate);
  const auto max_shift = static_cast<long>(kSynthMaxShift * rate);
  const std::size_t held_out = cfg.per_class * 15 / 100;
  const std::size_t train = cfg.per_class - 2 * held_out;

  SynthDataset out;
  Rng class_rng(derive_seed(cfg.seed, 0));
  std::uniform_real_distribution<double> freq(200.0, 4000.0);
  for (std::size_t k = 0; k < cfg.num_classes; ++k) out.signatures.push_back({freq(class_rng), freq(class_rng), freq(class_rng)});

  Rng rng(derive_seed(cfg.seed, 1));
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  std::uniform_int_distribution<long> shift(-max_shift, max_shift);
  const std::size_t lo = cfg.locus == Locus::MiddleThird ? n / 3 : 0;
  const std::size_t hi = cfg.locus == Locus::MiddleThird ? 2 * n / 3 : n;

  for (std::size_t k = 0; k < cfg.num_classes; ++k) {
    char name[16];
    std::snprintf(name, sizeof name, "class%02zu", k);
    std::vector<std::size_t> order(cfg.per_class);
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (std::size_t i = order.size(); i-- > 1;) std::swap(order[i], order[rng() % (i + 1)]);
    std::vector<Split> split_of(cfg.per_class);
    for (std::size_t r = 0; r < cfg.per_class; ++r) {
      split_of[order[r]] = r < train ? Split::Train : (r < train + held_out ? Split::Validation : Split::Test);
    }
    for (std::size_t i = 0; i < cfg.per_class; ++i) {
      std::vector<double> clean(n, 0.0);
      for (double f : out.signatures[k]) {
        const double ph = phase(rng);
        for (std::size_t s = lo; s < hi; ++s) {
          clean[s] += kSynthAmplitude * std::sin(2.0 * std::numbers::pi * f * static_cast<double>(s) / rate + ph);
        }
      }
      double power = 0.0;
      for (double v : clean) power += v * v;
      power /= static_cast<double>(n);
      const double sigma = std::sqrt(power / std::pow(10.0, cfg.snr_db / 10.0));
      const long sh = shift(rng);
      features::Waveform w;
      w.samples.resize(n);
      for (std::size_t s = 0; s < n; ++s) {
        const auto src = static_cast<std::size_t>((static_cast<long>(s) - sh + static_cast<long>(n)) % static_cast<long>(n));
        w.samples[s] = clean[src] + sigma * gauss(rng);
      }
      char source[48];
      std::snprintf(source, sizeof source, "synth:%s/%04zu", name, i);
      out.manifest.entries.push_back({source, name, split_of[i]});
      out.waveforms.push_back(std::move(w));
    }
  }
  finalize_manifest(out.manifest);
  return out;
}

Batch collate(const std::vector<Example>& examples, std::vector<std::size_t> indices) {
  if (examples.empty()) throw DimensionError("cannot collate an empty batch");
  const ad::Tensor& first = examples.front().features;
  Batch b;
  b.indices = std::move(indices);
  const std::size_t count = examples.size();
  if (first.rank() == 1) {
    const std::size_t d = first.dim(0);
    b.features = ad::Tensor({count, d});
    for (std::size_t i = 0; i < count; ++i) {
      const auto& f = examples[i].features;
      if (f.shape() != first.shape()) throw DimensionError("embedding widths differ within a batch");
      std::copy(f.data().begin(), f.data().end(), b.features.data().begin() + static_cast<std::ptrdiff_t>(i * d));
      b.labels.push_back(examples[i].label);
      b.lengths.push_back(1);
    }
    return b;
  }
  if (first.rank() != 3 || first.dim(0) != 1) {
    throw DimensionError("expected [1, M, T] spectrogram or [D] embedding, got " + ad::shape_str(first.shape()));
  }
  const std::size_t m = first.dim(1);
  std::size_t t_max = 0;
  for (const auto& e : examples) {
    if (e.features.rank() != 3 || e.features.dim(1) != m) throw DimensionError("mel bin counts differ within a batch");
    t_max = std::max(t_max, e.features.dim(2));
  }
  b.features = ad::Tensor({count, 1, m, t_max});
  for (std::size_t i = 0; i < count; ++i) {
    const auto& f = examples[i].features;
    const std::size_t t = f.dim(2);
    for (std::size_t r = 0; r < m; ++r) {
      std::copy_n(f.data().begin() + static_cast<std::ptrdiff_t>(r * t), t,
                  b.features.data().begin() + static_cast<std::ptrdiff_t>((i * m + r) * t_max));
    }
    b.labels.push_back(examples[i].label);
    b.lengths.push_back(t);
  }
  return b;
}

std::vector<std::vector<std::size_t>> epoch_order(std::size_t count, std::size_t batch_size, std::uint64_t seed,
                                                  std::uint64_t epoch, bool shuffle) {
  if (batch_size == 0) throw ParameterError("batch size must be at least 1");
  std::vector<std::size_t> perm(count);
  for (std::size_t i = 0; i < count; ++i) perm[i] = i;
  if (shuffle) {
    Rng rng(derive_seed(seed, epoch));
    for (std::size_t i = count; i-- > 1;) std::swap(perm[i], perm[rng() % (i + 1)]);
  }
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t at = 0; at < count; at += batch_size) {
    out.emplace_back(perm.begin() + static_cast<std::ptrdiff_t>(at),
                     perm.begin() + static_cast<std::ptrdiff_t>(std::min(count, at + batch_size)));
  }
  return out;
}

BatchStream::BatchStream(std::size_t count, ExampleSource source, std::size_t batch_size, std::uint64_t shuffle_seed,
                         bool shuffle)
    : count_(count), source_(std::move(source)), batch_size_(batch_size), seed_(shuffle_seed), shuffle_(shuffle) {
  if (batch_size == 0) throw ParameterError("batch size must be at least 1");
  start_epoch(0);
}

void BatchStream::start_epoch(std::uint64_t epoch) {
  order_ = epoch_order(count_, batch_size_, seed_, epoch, shuffle_);
  cursor_ = 0;
}

std::optional<Batch> BatchStream::next() {
  if (cursor_ >= order_.size()) return std::nullopt;
  const auto& idx = order_[cursor_++];
  std::vector<Example> examples;
  examples.reserve(idx.size());
  for (std::size_t i : idx) examples.push_back(source_(i));
  return collate(examples, idx);
}

std::size_t BatchStream::batches_per_epoch() const { return (count_ + batch_size_ - 1) / batch_size_; }

BatchStream batches(const Manifest& manifest, Split split, std::size_t batch_size, std::uint64_t shuffle_seed,
                    Featurizer featurizer) {
  auto rows = manifest.indices(split);
  ExampleSource source = [&manifest, rows, featurizer = std::move(featurizer)](std::size_t i) {
    const ManifestEntry& e = manifest.entries[rows[i]];
    try {
      return Example{featurizer(e), manifest.label_index(e.label)};
    } catch (const IoError&) {
      throw;
    } catch (const std::exception& ex) {
      throw IoError("cannot read '" + e.source + "': " + ex.what());
    }
  };
  return BatchStream(rows.size(), std::move(source), batch_size, shuffle_seed);
}

ExampleSource LabeledSet::source() const {
  return [this](std::size_t i) { return Example{features[i], labels[i]}; };
}

std::size_t PreparedData::max_frames() const {
  std::size_t t = 0;
  for (const LabeledSet* s : {&train, &validation, &test}) {
    for (const auto& f : s->features) {
      if (f.rank() == 3) t = std::max(t, f.dim(2));
    }
  }
  return t;
}

}  // namespace kanslu::data
