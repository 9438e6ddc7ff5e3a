#pragma once

#include <cstddef>
#include <optional>
#include <string_view>
#include <vector>

#include "kanslu/blocks/head.hpp"
#include "kanslu/nn/layers.hpp"

namespace kanslu::blocks {

enum class ModelKind { Cnn, EmbeddingHead };

std::string_view to_string(ModelKind kind);
ModelKind model_kind_from_string(std::string_view name);

struct ModelSpec {
  ModelKind kind = ModelKind::Cnn;
  // CNN input geometry; inputs are zero-padded or cropped to `frames`.
  std::size_t mel_bins = 64;
  std::size_t frames = 101;
  std::vector<std::size_t> channels = nn::kDefaultChannels;
  double dropout = nn::kDefaultDropout;
  // Embedding-head input width.
  std::size_t in_dim = 0;
  BlockConfig block;
};

// Zero-pads or crops the last axis of a [B,1,M,T] batch to `frames`.
ad::Tensor fit_time_axis(const ad::Tensor& batch, std::size_t frames);

// Feature extractor (CNN over mel spectrograms, or none for precomputed
// embeddings) followed by a dense head.
class Model {
 public:
  Model(ModelSpec spec, Rng& init_rng);

  const ModelSpec& spec() const noexcept { return spec_; }
  nn::CnnBackbone* backbone() noexcept { return backbone_ ? &*backbone_ : nullptr; }
  Head& head() noexcept { return head_; }
  const Head& head() const noexcept { return head_; }
  std::size_t feature_width() const { return head_.in_dim(); }
  std::size_t num_classes() const { return head_.out_dim(); }

  ad::Var forward(ad::Tape& tape, const ad::Tensor& input, bool training, Rng& rng);
  // Eval-mode class probabilities [B, K].
  ad::Tensor predict_proba(const ad::Tensor& input);

  ad::ParameterList parameters();
  std::size_t param_count();

 private:
  ModelSpec spec_;
  std::optional<nn::CnnBackbone> backbone_;
  Head head_;
};

}  // namespace kanslu::blocks
