#include "kanslu/nn/layers.hpp"

#include <cmath>
#include <random>

#include "kanslu/errors.hpp"

namespace kanslu::nn {
namespace {

void fill_uniform(ad::Tensor& t, double bound, Rng& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (double& v : t.data()) v = dist(rng);
}

constexpr std::size_t kMinInput = 8;

}  // namespace

Linear::Linear(std::size_t in_dim, std::size_t out_dim, Rng& rng) : weight({out_dim, in_dim}), bias({out_dim}) {
  if (in_dim == 0 || out_dim == 0) throw DimensionError("linear layer dimensions must be positive");
  const double bound = 1.0 / std::sqrt(static_cast<double>(in_dim));
  fill_uniform(weight, bound, rng);
  fill_uniform(bias, bound, rng);
  weight.set_requires_grad(true);
  bias.set_requires_grad(true);
}

ad::Var Linear::forward(ad::Tape& tape, ad::Var x) { return ad::linear(x, tape.leaf(weight), tape.leaf(bias)); }

void Linear::collect_parameters(ad::ParameterList& out, const std::string& prefix) {
  out.push_back({prefix + "weight", &weight, true});
  out.push_back({prefix + "bias", &bias, true});
}

FFBlock::FFBlock(std::size_t in_dim, std::size_t out_dim, double p, Rng& rng)
    : linear(in_dim, out_dim, rng), gamma({out_dim}, 1.0), beta({out_dim}, 0.0), dropout_p(p) {
  if (!(p >= 0.0 && p < 1.0)) throw ParameterError("dropout probability must be in [0, 1)");
  gamma.set_requires_grad(true);
  beta.set_requires_grad(true);
}

ad::Var FFBlock::forward(ad::Tape& tape, ad::Var x, bool training, Rng& rng) {
  if (x.value().rank() != 2 || x.value().dim(1) != in_dim()) {
    throw DimensionError("FF block expects [B, " + std::to_string(in_dim()) + "] input, got " +
                         ad::shape_str(x.shape()));
  }
  ad::Var h = linear.forward(tape, x);
  h = ad::layernorm(h, tape.leaf(gamma), tape.leaf(beta));
  h = ad::gelu(h);
  return ad::dropout(h, dropout_p, training, rng);
}

void FFBlock::collect_parameters(ad::ParameterList& out, const std::string& prefix) {
  linear.collect_parameters(out, prefix + "linear.");
  out.push_back({prefix + "norm.gamma", &gamma, true});
  out.push_back({prefix + "norm.beta", &beta, true});
}

ad::Var ff_forward(ad::Tape& tape, FFBlock& block, ad::Var x, bool training, Rng& rng) {
  return block.forward(tape, x, training, rng);
}

CnnShape cnn_output_shape(std::size_t mel_bins, std::size_t frames, const std::vector<std::size_t>& channels) {
  if (channels.size() != 4) throw DimensionError("CNN backbone needs exactly 4 stages");
  if (mel_bins < kMinInput || frames < kMinInput) {
    throw DimensionError("CNN input " + std::to_string(mel_bins) + "x" + std::to_string(frames) +
                         " too small at stage 1: need at least " + std::to_string(kMinInput) + "x" +
                         std::to_string(kMinInput) + " for two pooling steps");
  }
  CnnShape s;
  std::size_t h = mel_bins, w = frames;
  for (std::size_t stage = 0; stage < 4; ++stage) {
    h += 2;
    w += 2;
    s.conv_out.push_back({h, w});
    if (stage == 1 || stage == 3) {
      h /= 2;
      w /= 2;
    }
  }
  s.out_height = h;
  s.out_width = w;
  s.channels = channels.back();
  return s;
}

CnnBackbone::CnnBackbone(std::size_t mel_bins, std::size_t frames, std::vector<std::size_t> channels,
                         double dropout_p, Rng& rng)
    : mel_bins_(mel_bins), frames_(frames), channels_(std::move(channels)), dropout_p_(dropout_p) {
  shape_ = cnn_output_shape(mel_bins_, frames_, channels_);
  if (!(dropout_p >= 0.0 && dropout_p < 1.0)) throw ParameterError("dropout probability must be in [0, 1)");
  std::size_t cin = 1;
  for (std::size_t cout : channels_) {
    if (cout == 0) throw DimensionError("CNN stage channel count must be positive");
    Stage st{ad::Tensor({cout, cin, ad::kConvKernel, ad::kConvKernel}), ad::Tensor({cout}), ad::Tensor({cout}, 1.0),
             ad::Tensor({cout}, 0.0), ad::BatchNormStats(cout)};
    const double bound = 1.0 / std::sqrt(static_cast<double>(cin * ad::kConvKernel * ad::kConvKernel));
    fill_uniform(st.kernel, bound, rng);
    fill_uniform(st.bias, bound, rng);
    for (ad::Tensor* t : {&st.kernel, &st.bias, &st.gamma, &st.beta}) t->set_requires_grad(true);
    stages_.push_back(std::move(st));
    cin = cout;
  }
}

std::size_t CnnBackbone::param_count() const {
  std::size_t n = 0;
  for (const auto& st : stages_) n += st.kernel.numel() + st.bias.numel() + st.gamma.numel() + st.beta.numel();
  return n;
}

ad::Var CnnBackbone::forward(ad::Tape& tape, ad::Var melspec, bool training, Rng& rng) {
  const auto& s = melspec.shape();
  if (s.size() != 4 || s[1] != 1 || s[2] != mel_bins_ || s[3] != frames_) {
    throw DimensionError("CNN backbone built for [B, 1, " + std::to_string(mel_bins_) + ", " +
                         std::to_string(frames_) + "] input, got " + ad::shape_str(s));
  }
  ad::Var h = melspec;
  for (std::size_t i = 0; i < stages_.size(); ++i) {
    Stage& st = stages_[i];
    h = ad::conv2d(h, tape.leaf(st.kernel), tape.leaf(st.bias));
    h = ad::batchnorm2d(h, tape.leaf(st.gamma), tape.leaf(st.beta), st.stats, training);
    h = ad::gelu(h);
    h = ad::dropout(h, dropout_p_, training, rng);
    if (i == 1 || i == 3) h = ad::maxpool2d(h);
  }
  return ad::flatten(h);
}

void CnnBackbone::collect_parameters(ad::ParameterList& out, const std::string& prefix) {
  for (std::size_t i = 0; i < stages_.size(); ++i) {
    const std::string p = prefix + "conv" + std::to_string(i) + ".";
    Stage& st = stages_[i];
    out.push_back({p + "kernel", &st.kernel, true});
    out.push_back({p + "bias", &st.bias, true});
    out.push_back({p + "bn.gamma", &st.gamma, true});
    out.push_back({p + "bn.beta", &st.beta, true});
    out.push_back({p + "bn.running_mean", &st.stats.running_mean, false});
    out.push_back({p + "bn.running_var", &st.stats.running_var, false});
  }
}

ad::Var cnn_forward(ad::Tape& tape, CnnBackbone& backbone, ad::Var melspec, bool training, Rng& rng) {
  return backbone.forward(tape, melspec, training, rng);
}

}  // namespace kanslu::nn
