#include <gtest/gtest.h>

#include <algorithm>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "kanslu/data/dataset.hpp"
#include "kanslu/data/prepare.hpp"
#include "kanslu/errors.hpp"
#include "kanslu/random.hpp"

using namespace kanslu;
using data::Split;

namespace {

std::filesystem::path temp_file(const std::string& name) { return std::filesystem::temp_directory_path() / name; }

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

data::Example spectrogram_example(std::size_t t, std::size_t label) {
  ad::Tensor f({1, 2, t});
  for (std::size_t i = 0; i < f.numel(); ++i) f[i] = 1.0 + static_cast<double>(i);
  return {f, label};
}

}  // namespace

TEST(Manifest, LexicographicLabelMap) {
  std::istringstream in("path,label,split\nx.wav,b,train\ny.wav,a,test\n");
  const data::Manifest m = data::parse_manifest(in);
  ASSERT_EQ(m.entries.size(), 2u);
  EXPECT_EQ(m.label_map.at("a"), 0u);
  EXPECT_EQ(m.label_map.at("b"), 1u);
  EXPECT_EQ(m.labels(), (std::vector<std::string>{"a", "b"}));
  EXPECT_EQ(m.indices(Split::Test), (std::vector<std::size_t>{1}));
}

TEST(Manifest, HeaderOnlyIsEmpty) {
  std::istringstream in("path,label,split\n");
  const data::Manifest m = data::parse_manifest(in);
  EXPECT_TRUE(m.entries.empty());
  EXPECT_TRUE(m.label_map.empty());
}

TEST(Manifest, ColumnsInAnyOrderAndRelativePaths) {
  std::istringstream in("split,path,label\nvalidation,a/x.wav,yes\n");
  const data::Manifest m = data::parse_manifest(in, "/data");
  EXPECT_EQ(m.entries[0].source, "/data/a/x.wav");
  EXPECT_EQ(m.entries[0].split, Split::Validation);
}

TEST(Manifest, DuplicatePathAcrossSplitsRejected) {
  std::istringstream in("path,label,split\nx.wav,a,train\nx.wav,a,test\n");
  EXPECT_THROW(data::parse_manifest(in), ValueError);
}

TEST(Manifest, MissingColumnNamed) {
  std::istringstream in("path,split\nx.wav,train\n");
  try {
    data::parse_manifest(in);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("label"), std::string::npos) << e.what();
  }
}

TEST(Manifest, UnknownSplitIsValueError) {
  std::istringstream in("path,label,split\nx.wav,a,dev\n");
  EXPECT_THROW(data::parse_manifest(in), ValueError);
}

TEST(Manifest, LoadFromFileResolvesAgainstItsDirectory) {
  const auto path = temp_file("kanslu_manifest.csv");
  std::ofstream(path) << "path,label,split\nclip.wav,go,train\n";
  const data::Manifest m = data::load_manifest(path);
  EXPECT_EQ(std::filesystem::path(m.entries[0].source), path.parent_path() / "clip.wav");
  std::filesystem::remove(path);
  EXPECT_THROW(data::load_manifest(path), IoError);
}

TEST(Embeddings, EmptyHeaderGivesEmptyDataset) {
  const auto path = temp_file("kanslu_empty.embd");
  {
    std::ofstream out(path, std::ios::binary);
    const std::uint32_t n = 0, d = 5;
    out.write("EMBD", 4);
    out.write(reinterpret_cast<const char*>(&n), 4);
    out.write(reinterpret_cast<const char*>(&d), 4);
  }
  const data::Embeddings e = data::load_embeddings(path);
  EXPECT_EQ(e.labels.size(), 0u);
  EXPECT_EQ(e.features.dim(0), 0u);
  std::filesystem::remove(path);
}

TEST(Embeddings, KnownBytesRoundTrip) {
  const auto path = temp_file("kanslu_known.embd");
  const float values[6] = {0.5f, -1.25f, 3.0f, 0.0f, 1e-3f, -7.5f};
  const std::uint32_t header[2] = {2, 3}, labels[2] = {1, 0};
  {
    std::ofstream out(path, std::ios::binary);
    out.write("EMBD", 4);
    out.write(reinterpret_cast<const char*>(header), 8);
    out.write(reinterpret_cast<const char*>(values), sizeof(values));
    out.write(reinterpret_cast<const char*>(labels), sizeof(labels));
  }
  const auto original = read_bytes(path);
  const data::Embeddings e = data::load_embeddings(path);
  ASSERT_EQ(e.features.shape(), (ad::Shape{2, 3}));
  for (std::size_t i = 0; i < 6; ++i) EXPECT_EQ(e.features[i], static_cast<double>(values[i]));
  EXPECT_EQ(e.labels, (std::vector<std::size_t>{1, 0}));
  data::write_embeddings(path, e);
  EXPECT_EQ(read_bytes(path), original);
  std::filesystem::remove(path);
}

TEST(Embeddings, TruncationNamesByteCounts) {
  const auto path = temp_file("kanslu_trunc.embd");
  data::Embeddings e{ad::Tensor({2, 3}), {0, 1}};
  data::write_embeddings(path, e);
  auto bytes = read_bytes(path);
  // Drop one float of the feature payload, keep the labels.
  bytes.erase(bytes.begin() + 12 + 20, bytes.begin() + 12 + 24);
  std::ofstream(path, std::ios::binary).write(reinterpret_cast<const char*>(bytes.data()), bytes.size());
  try {
    data::load_embeddings(path);
    FAIL();
  } catch (const FormatError& ex) {
    const std::string msg = ex.what();
    EXPECT_NE(msg.find("44"), std::string::npos) << msg;
    EXPECT_NE(msg.find("40"), std::string::npos) << msg;
  }
  bytes[0] = 'X';
  std::ofstream(path, std::ios::binary).write(reinterpret_cast<const char*>(bytes.data()), bytes.size());
  EXPECT_THROW(data::load_embeddings(path), FormatError);
  std::filesystem::remove(path);
}

TEST(Embeddings, RandomRoundTrips) {
  Rng rng(11);
  const auto path = temp_file("kanslu_random.embd");
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = rng() % 20, d = 1 + rng() % 16;
    data::Embeddings e{ad::Tensor({n, d}), {}};
    for (std::size_t i = 0; i < e.features.numel(); ++i) {
      e.features[i] = static_cast<float>(static_cast<double>(rng() % 20001) / 1000.0 - 10.0);
    }
    for (std::size_t i = 0; i < n; ++i) e.labels.push_back(rng() % 7);
    data::write_embeddings(path, e);
    const data::Embeddings back = data::load_embeddings(path);
    ASSERT_EQ(back.features.shape(), e.features.shape());
    EXPECT_TRUE(std::ranges::equal(back.features.data(), e.features.data()));
    EXPECT_EQ(back.labels, e.labels);
  }
  std::filesystem::remove(path);
}

TEST(Synth, DeterministicSignaturesAndWaveforms) {
  data::SynthConfig cfg;
  cfg.num_classes = 3;
  cfg.per_class = 10;
  const auto a = data::synth_dataset(cfg), b = data::synth_dataset(cfg);
  EXPECT_EQ(a.signatures, b.signatures);
  for (const auto& sig : a.signatures) {
    ASSERT_EQ(sig.size(), 3u);
    for (double f : sig) {
      EXPECT_GE(f, 200.0);
      EXPECT_LE(f, 4000.0);
    }
  }
  ASSERT_EQ(a.waveforms.size(), b.waveforms.size());
  for (std::size_t i = 0; i < a.waveforms.size(); ++i) EXPECT_EQ(a.waveforms[i].samples, b.waveforms[i].samples);
  cfg.seed = 8;
  EXPECT_NE(data::synth_dataset(cfg).signatures, a.signatures);
}

TEST(Synth, SplitSizes) {
  data::SynthConfig cfg;
  cfg.num_classes = 4;
  cfg.per_class = 100;
  const auto s = data::synth_dataset(cfg);
  EXPECT_EQ(s.manifest.entries.size(), 400u);
  EXPECT_EQ(s.manifest.indices(Split::Train).size(), 280u);
  EXPECT_EQ(s.manifest.indices(Split::Validation).size(), 60u);
  EXPECT_EQ(s.manifest.indices(Split::Test).size(), 60u);
  for (const auto& w : s.waveforms) EXPECT_EQ(w.samples.size(), 16000u);
  cfg.num_classes = 1;
  EXPECT_THROW(data::synth_dataset(cfg), ParameterError);
  cfg.num_classes = 33;
  EXPECT_THROW(data::synth_dataset(cfg), ParameterError);
}

TEST(Synth, NearestCentroidOnMeanMelVectors) {
  data::SynthConfig cfg;
  cfg.num_classes = 4;
  cfg.per_class = 100;
  const data::PreparedData d = data::prepare_synth(data::synth_dataset(cfg), features::MelConfig{});
  auto mean_vector = [](const ad::Tensor& s) {
    const std::size_t m = s.dim(1), t = s.dim(2);
    std::vector<double> v(m, 0.0);
    for (std::size_t j = 0; j < m; ++j) {
      for (std::size_t f = 0; f < t; ++f) v[j] += s[j * t + f] / static_cast<double>(t);
    }
    return v;
  };
  const std::size_t k = d.num_classes();
  std::vector<std::vector<double>> centroid(k, std::vector<double>(64, 0.0));
  std::vector<double> count(k, 0.0);
  for (std::size_t i = 0; i < d.train.size(); ++i) {
    const auto v = mean_vector(d.train.features[i]);
    for (std::size_t j = 0; j < 64; ++j) centroid[d.train.labels[i]][j] += v[j];
    count[d.train.labels[i]] += 1.0;
  }
  for (std::size_t c = 0; c < k; ++c) {
    for (double& x : centroid[c]) x /= count[c];
  }
  std::size_t correct = 0;
  for (std::size_t i = 0; i < d.test.size(); ++i) {
    const auto v = mean_vector(d.test.features[i]);
    std::size_t best = 0;
    double best_dist = 1e300;
    for (std::size_t c = 0; c < k; ++c) {
      double dist = 0.0;
      for (std::size_t j = 0; j < 64; ++j) dist += (v[j] - centroid[c][j]) * (v[j] - centroid[c][j]);
      if (dist < best_dist) best_dist = dist, best = c;
    }
    correct += best == d.test.labels[i];
  }
  EXPECT_GT(static_cast<double>(correct) / static_cast<double>(d.test.size()), 0.9);
}

TEST(Batches, LastPartialBatchKept) {
  std::vector<std::size_t> sizes;
  data::BatchStream s(10, [](std::size_t i) { return spectrogram_example(3, i % 2); }, 4, 1);
  while (auto b = s.next()) sizes.push_back(b->labels.size());
  EXPECT_EQ(sizes, (std::vector<std::size_t>{4, 4, 2}));
  EXPECT_EQ(s.batches_per_epoch(), 3u);
  EXPECT_THROW(data::BatchStream(10, [](std::size_t i) { return spectrogram_example(3, i); }, 0, 1), ParameterError);
}

TEST(Batches, SameSeedSameCompositionAndEpochCoverage) {
  for (std::uint64_t epoch = 0; epoch < 5; ++epoch) {
    EXPECT_EQ(data::epoch_order(23, 5, 9, epoch), data::epoch_order(23, 5, 9, epoch));
    std::multiset<std::size_t> seen;
    for (const auto& chunk : data::epoch_order(23, 5, 9, epoch)) seen.insert(chunk.begin(), chunk.end());
    ASSERT_EQ(seen.size(), 23u);
    for (std::size_t i = 0; i < 23; ++i) EXPECT_EQ(seen.count(i), 1u);
  }
  EXPECT_NE(data::epoch_order(23, 5, 9, 0), data::epoch_order(23, 5, 9, 1));
}

TEST(Batches, PaddingIsZeroAndLengthsRecorded) {
  const data::Batch b = data::collate({spectrogram_example(3, 0), spectrogram_example(5, 1)});
  ASSERT_EQ(b.features.shape(), (ad::Shape{2, 1, 2, 5}));
  EXPECT_EQ(b.lengths, (std::vector<std::size_t>{3, 5}));
  for (std::size_t m = 0; m < 2; ++m) {
    for (std::size_t t = 0; t < 5; ++t) {
      const double v = b.features[m * 5 + t];
      if (t < 3) {
        EXPECT_EQ(v, 1.0 + static_cast<double>(m * 3 + t));
      } else {
        EXPECT_EQ(v, 0.0);
      }
    }
  }
}

TEST(Batches, UnreadableSourceNamesPath) {
  std::istringstream in("path,label,split\n/nonexistent/clip.wav,a,train\n");
  const data::Manifest m = data::parse_manifest(in);
  features::MelExtractor ex(features::MelConfig{});
  auto stream = data::batches(m, Split::Train, 2, 1, [&](const data::ManifestEntry& e) { return data::featurize_entry(e, ex); });
  try {
    stream.next();
    FAIL();
  } catch (const IoError& e) {
    EXPECT_NE(std::string(e.what()).find("/nonexistent/clip.wav"), std::string::npos);
  }
}
