#include "kanslu/data/prepare.hpp"

#include <algorithm>

#include "kanslu/errors.hpp"

namespace kanslu::data {

namespace {

LabeledSet& split_set(PreparedData& d, Split s) {
  switch (s) {
    case Split::Train: return d.train;
    case Split::Validation: return d.validation;
    case Split::Test: return d.test;
  }
  return d.train;
}

}  // namespace

PreparedData prepare_synth(const SynthDataset& synth, const features::MelConfig& mel) {
  features::MelExtractor extract(mel);
  PreparedData out;
  out.labels = synth.manifest.labels();
  for (std::size_t i = 0; i < synth.manifest.entries.size(); ++i) {
    const auto& e = synth.manifest.entries[i];
    auto& set = split_set(out, e.split);
    set.features.push_back(extract(synth.waveforms[i].samples));
    set.labels.push_back(synth.manifest.label_index(e.label));
  }
  return out;
}

ad::Tensor featurize_entry(const ManifestEntry& entry, features::MelExtractor& extractor) {
  const std::filesystem::path p(entry.source);
  if (p.extension() == ".melf") {
    ad::Tensor f = features::read_melf(p);
    if (f.dim(1) != extractor.config().n_mels) {
      throw DimensionError(entry.source + ": cached features have " + std::to_string(f.dim(1)) + " mel bins, expected " +
                           std::to_string(extractor.config().n_mels));
    }
    return f;
  }
  return extractor(features::load_wav(p, extractor.config().sample_rate).samples);
}

PreparedData prepare_manifest(const Manifest& manifest, const features::MelConfig& mel) {
  features::MelExtractor extract(mel);
  PreparedData out;
  out.labels = manifest.labels();
  for (const auto& e : manifest.entries) {
    auto& set = split_set(out, e.split);
    try {
      set.features.push_back(featurize_entry(e, extract));
    } catch (const IoError&) {
      throw;
    } catch (const std::exception& ex) {
      throw IoError("cannot read '" + e.source + "': " + ex.what());
    }
    set.labels.push_back(manifest.label_index(e.label));
  }
  return out;
}

PreparedData prepare_embeddings(const EmbeddingPaths& paths, std::vector<std::string> label_names) {
  PreparedData out;
  std::size_t width = 0, classes = 0;
  bool have_width = false;
  auto load = [&](const std::filesystem::path& p, LabeledSet& set) {
    if (p.empty()) return;
    Embeddings e = load_embeddings(p);
    const std::size_t n = e.features.dim(0), d = e.features.dim(1);
    if (n == 0) return;
    if (have_width && d != width) {
      throw DimensionError(p.string() + ": embedding width " + std::to_string(d) + " differs from " +
                           std::to_string(width));
    }
    width = d;
    have_width = true;
    for (std::size_t i = 0; i < n; ++i) {
      ad::Tensor row({d});
      std::copy_n(e.features.data().begin() + static_cast<std::ptrdiff_t>(i * d), d, row.data().begin());
      set.features.push_back(std::move(row));
      set.labels.push_back(e.labels[i]);
      classes = std::max(classes, e.labels[i] + 1);
    }
  };
  load(paths.train, out.train);
  load(paths.validation, out.validation);
  load(paths.test, out.test);
  if (label_names.empty()) {
    for (std::size_t i = 0; i < classes; ++i) label_names.push_back("class" + std::to_string(i));
  } else if (label_names.size() < classes) {
    throw ValueError("embedding labels reach index " + std::to_string(classes - 1) + " but only " +
                     std::to_string(label_names.size()) + " label names were given");
  }
  out.labels = std::move(label_names);
  return out;
}

}  // namespace kanslu::data
