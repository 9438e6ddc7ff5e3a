#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <vector>

#include "kanslu/autodiff/ops.hpp"
#include "kanslu/autodiff/parameter.hpp"
#include "kanslu/random.hpp"

namespace kanslu::nn {

inline constexpr double kDefaultDropout = 0.1;

// Affine map x·Wᵀ + b, W[out,in] and b[out] drawn from U(±1/sqrt(in)).
struct Linear {
  ad::Tensor weight;
  ad::Tensor bias;

  Linear(std::size_t in_dim, std::size_t out_dim, Rng& rng);

  std::size_t in_dim() const { return weight.dim(1); }
  std::size_t out_dim() const { return weight.dim(0); }
  std::size_t param_count() const { return weight.numel() + bias.numel(); }

  ad::Var forward(ad::Tape& tape, ad::Var x);
  void collect_parameters(ad::ParameterList& out, const std::string& prefix);
};

// linear -> layernorm -> GELU -> dropout
struct FFBlock {
  Linear linear;
  ad::Tensor gamma;
  ad::Tensor beta;
  double dropout_p = kDefaultDropout;

  FFBlock(std::size_t in_dim, std::size_t out_dim, double dropout_p, Rng& rng);

  std::size_t in_dim() const { return linear.in_dim(); }
  std::size_t out_dim() const { return linear.out_dim(); }
  std::size_t param_count() const { return linear.param_count() + gamma.numel() + beta.numel(); }

  ad::Var forward(ad::Tape& tape, ad::Var x, bool training, Rng& rng);
  void collect_parameters(ad::ParameterList& out, const std::string& prefix);
};

ad::Var ff_forward(ad::Tape& tape, FFBlock& block, ad::Var x, bool training, Rng& rng);

struct CnnShape {
  // Spatial size after each conv stage, before pooling.
  std::vector<std::array<std::size_t, 2>> conv_out;
  std::size_t out_height = 0;
  std::size_t out_width = 0;
  std::size_t channels = 0;
  std::size_t flat_width() const { return channels * out_height * out_width; }
};

// Shape algebra of the backbone: conv(k3,s1,p2) grows each side by 2,
// pooling after stages 2 and 4 floors by 2.
CnnShape cnn_output_shape(std::size_t mel_bins, std::size_t frames, const std::vector<std::size_t>& channels);

inline const std::vector<std::size_t> kDefaultChannels = {16, 32, 64, 128};

// Four conv -> batchnorm -> GELU -> dropout stages, max-pool after the
// second and fourth, then a channel-major flatten.
class CnnBackbone {
 public:
  struct Stage {
    ad::Tensor kernel;
    ad::Tensor bias;
    ad::Tensor gamma;
    ad::Tensor beta;
    ad::BatchNormStats stats;
  };

  CnnBackbone(std::size_t mel_bins, std::size_t frames, std::vector<std::size_t> channels, double dropout_p, Rng& rng);

  std::size_t mel_bins() const noexcept { return mel_bins_; }
  std::size_t frames() const noexcept { return frames_; }
  const std::vector<std::size_t>& channels() const noexcept { return channels_; }
  std::size_t output_width() const noexcept { return shape_.flat_width(); }
  const CnnShape& shape() const noexcept { return shape_; }
  std::vector<Stage>& stages() noexcept { return stages_; }
  std::size_t param_count() const;

  // melspec[B,1,M,T] with (M,T) equal to the construction shape -> [B, F].
  ad::Var forward(ad::Tape& tape, ad::Var melspec, bool training, Rng& rng);
  void collect_parameters(ad::ParameterList& out, const std::string& prefix);

 private:
  std::size_t mel_bins_;
  std::size_t frames_;
  std::vector<std::size_t> channels_;
  double dropout_p_;
  CnnShape shape_;
  std::vector<Stage> stages_;
};

ad::Var cnn_forward(ad::Tape& tape, CnnBackbone& backbone, ad::Var melspec, bool training, Rng& rng);

}  // namespace kanslu::nn
