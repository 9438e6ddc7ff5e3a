#pragma once

#include <cstddef>
#include <string>

#include "kanslu/autodiff/parameter.hpp"
#include "kanslu/autodiff/tape.hpp"
#include "kanslu/basis/basis.hpp"
#include "kanslu/random.hpp"

namespace kanslu::kan {

// L(x) = w1 · b(x)·U + w2 · B(x)·C with b = Swish and B(x) the per-input basis
// expansion. Every edge function phi_{i,o} is a linear combination of the
// shared basis, so the layer reduces to two matrix products.
class KanLayer {
 public:
  // Parameters are randomly initialised from `rng`.
  KanLayer(std::size_t in_dim, std::size_t out_dim, basis::BasisSpec spec, Rng& rng);

  std::size_t in_dim() const noexcept { return in_dim_; }
  std::size_t out_dim() const noexcept { return out_dim_; }
  const basis::BasisSpec& spec() const noexcept { return spec_; }
  std::size_t num_basis() const { return spec_.num_basis(); }
  std::size_t num_groups() const;

  // [I·n_basis, O], row (i·n_basis + g) holds the coefficient of basis g on input i.
  ad::Tensor& spline_coeffs() noexcept { return spline_coeffs_; }
  const ad::Tensor& spline_coeffs() const noexcept { return spline_coeffs_; }
  ad::Tensor& base_weights() noexcept { return base_weights_; }
  const ad::Tensor& base_weights() const noexcept { return base_weights_; }
  ad::Tensor& w1() noexcept { return w1_; }
  const ad::Tensor& w1() const noexcept { return w1_; }
  ad::Tensor& w2() noexcept { return w2_; }
  const ad::Tensor& w2() const noexcept { return w2_; }
  // GR-KAN only: [groups, m+1] and [groups, n].
  ad::Tensor& rational_numerator() noexcept { return numerator_; }
  const ad::Tensor& rational_numerator() const noexcept { return numerator_; }
  ad::Tensor& rational_denominator() noexcept { return denominator_; }
  const ad::Tensor& rational_denominator() const noexcept { return denominator_; }

  void collect_parameters(ad::ParameterList& out, const std::string& prefix);

 private:
  std::size_t in_dim_;
  std::size_t out_dim_;
  basis::BasisSpec spec_;
  ad::Tensor spline_coeffs_;
  ad::Tensor base_weights_;
  ad::Tensor w1_;
  ad::Tensor w2_;
  ad::Tensor numerator_;
  ad::Tensor denominator_;
};

// Per-input basis expansion x[B,I] -> [B, I·n_basis], differentiable in x.
ad::Var basis_expand(ad::Var x, const basis::BasisSpec& spec);
// Group-shared safe rational applied elementwise: x[B,I] -> [B,I]; input i
// uses coefficient row i / group_size.
ad::Var group_rational(ad::Var x, ad::Var numerator, ad::Var denominator, std::size_t group_size);

ad::Var kan_forward(ad::Tape& tape, KanLayer& layer, ad::Var x);

// Literal edge-by-edge evaluation that materialises the (B, O, I) tensor of
// edge activations. Test oracle only.
ad::Tensor kan_forward_naive(const KanLayer& layer, const ad::Tensor& x);

std::size_t kan_param_count(const KanLayer& layer);

// Least-squares fit of numerator coefficients so that P(x)/(1+|Q(x)|)
// approximates the identity on [-1, 1] for the given denominator.
void fit_numerator_to_identity(std::span<double> numerator, std::span<const double> denominator);

}  // namespace kanslu::kan
