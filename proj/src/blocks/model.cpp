#include "kanslu/blocks/model.hpp"

#include <algorithm>

#include "kanslu/errors.hpp"

namespace kanslu::blocks {

std::string_view to_string(ModelKind kind) { return kind == ModelKind::Cnn ? "cnn" : "embedding-head"; }

ModelKind model_kind_from_string(std::string_view name) {
  if (name == "cnn") return ModelKind::Cnn;
  if (name == "embedding-head") return ModelKind::EmbeddingHead;
  throw ConfigError("unknown model kind '" + std::string(name) + "' (expected cnn or embedding-head)");
}

ad::Tensor fit_time_axis(const ad::Tensor& batch, std::size_t frames) {
  if (batch.rank() != 4) throw DimensionError("expected [B, C, M, T] batch, got " + ad::shape_str(batch.shape()));
  const std::size_t t = batch.dim(3);
  if (t == frames) return batch;
  const std::size_t rows = batch.dim(0) * batch.dim(1) * batch.dim(2);
  ad::Tensor out({batch.dim(0), batch.dim(1), batch.dim(2), frames});
  const std::size_t keep = std::min(t, frames);
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(batch.data().begin() + static_cast<std::ptrdiff_t>(r * t), keep,
                out.data().begin() + static_cast<std::ptrdiff_t>(r * frames));
  }
  return out;
}

namespace {

Head make_head(const ModelSpec& spec, const std::optional<nn::CnnBackbone>& backbone, Rng& rng) {
  const std::size_t in = backbone ? backbone->output_width() : spec.in_dim;
  if (in == 0) throw ConfigError("embedding-head model needs a positive input width");
  return build_block(spec.block, in, rng);
}

std::optional<nn::CnnBackbone> make_backbone(const ModelSpec& spec, Rng& rng) {
  if (spec.kind != ModelKind::Cnn) return std::nullopt;
  return nn::CnnBackbone(spec.mel_bins, spec.frames, spec.channels, spec.dropout, rng);
}

}  // namespace

Model::Model(ModelSpec spec, Rng& init_rng)
    : spec_(std::move(spec)), backbone_(make_backbone(spec_, init_rng)), head_(make_head(spec_, backbone_, init_rng)) {}

ad::Var Model::forward(ad::Tape& tape, const ad::Tensor& input, bool training, Rng& rng) {
  if (backbone_) {
    ad::Var x = tape.constant(fit_time_axis(input, spec_.frames));
    return head_.forward(tape, backbone_->forward(tape, x, training, rng), training, rng);
  }
  return head_.forward(tape, tape.constant(input), training, rng);
}

ad::Tensor Model::predict_proba(const ad::Tensor& input) {
  ad::Tape tape;
  Rng unused(0);
  ad::Var logits = forward(tape, input, false, unused);
  return ad::softmax_rows(logits.value());
}

ad::ParameterList Model::parameters() {
  ad::ParameterList out;
  if (backbone_) backbone_->collect_parameters(out, "backbone.");
  head_.collect_parameters(out, "head.");
  return out;
}

std::size_t Model::param_count() { return ad::trainable_count(parameters()); }

}  // namespace kanslu::blocks
