#pragma once

#include <cstddef>
#include <span>

#include "kanslu/autodiff/tape.hpp"
#include "kanslu/random.hpp"

namespace kanslu::ad {

inline constexpr double kNormEpsilon = 1e-5;
inline constexpr double kBatchNormMomentum = 0.1;
inline constexpr std::size_t kConvKernel = 3;
inline constexpr std::size_t kConvPadding = 2;

// a[m,k] · b[k,n]
Var matmul(Var a, Var b);
// x[B,in] · weightᵀ + bias, with weight[out,in] and bias[out].
Var linear(Var x, Var weight, Var bias);
Var add(Var a, Var b);
// Multiplies every element of x by the single-element tensor s.
Var scale(Var x, Var s);
Var sum(Var x);
// Σ weights[i]·x[i]; weights are constants.
Var weighted_sum(Var x, std::span<const double> weights);
Var reshape(Var x, Shape shape);
// [B, ...] -> [B, prod(...)], keeping row-major order.
Var flatten(Var x);

Var gelu(Var x);
Var swish(Var x);

// 3x3 cross-correlation, stride 1, zero padding 2: [B,Cin,H,W] -> [B,Cout,H+2,W+2].
Var conv2d(Var x, Var kernel, Var bias);

struct BatchNormStats {
  Tensor running_mean;
  Tensor running_var;

  BatchNormStats() = default;
  explicit BatchNormStats(std::size_t channels) : running_mean({channels}, 0.0), running_var({channels}, 1.0) {}
};

// Per-channel normalisation over (B,H,W). Training mode normalises with batch
// statistics and updates `stats`; eval mode uses `stats`.
Var batchnorm2d(Var x, Var gamma, Var beta, BatchNormStats& stats, bool training);
// Per-row normalisation of x[B,D] over D.
Var layernorm(Var x, Var gamma, Var beta);
// 2x2 window, stride 2, trailing odd row/column dropped.
Var maxpool2d(Var x);
// Inverted dropout; identity in eval mode or when p == 0.
Var dropout(Var x, double p, bool training, Rng& rng);
// Mean over the batch of -log softmax(logits)[target].
Var softmax_cross_entropy(Var logits, std::span<const std::size_t> targets);

Tensor softmax_rows(const Tensor& logits);

double gelu_value(double x);
double gelu_derivative(double x);
double swish_value(double x);
double swish_derivative(double x);

}  // namespace kanslu::ad
