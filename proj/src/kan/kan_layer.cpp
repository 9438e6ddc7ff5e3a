#include "kanslu/kan/kan_layer.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <random>
#include <vector>

#include "kanslu/autodiff/ops.hpp"
#include "kanslu/errors.hpp"

namespace kanslu::kan {

using basis::Family;

KanLayer::KanLayer(std::size_t in_dim, std::size_t out_dim, basis::BasisSpec spec, Rng& rng)
    : in_dim_(in_dim), out_dim_(out_dim), spec_(std::move(spec)) {
  if (in_dim == 0 || out_dim == 0) throw DimensionError("KAN layer dimensions must be positive");
  spec_.validate();
  const std::size_t nb = spec_.num_basis();

  base_weights_ = ad::Tensor({in_dim, out_dim});
  const double bound = std::sqrt(6.0 / static_cast<double>(in_dim + out_dim));
  std::uniform_real_distribution<double> uniform(-bound, bound);
  for (double& v : base_weights_.data()) v = uniform(rng);

  spline_coeffs_ = ad::Tensor({in_dim * nb, out_dim});
  std::normal_distribution<double> normal(0.0, 0.1 / std::sqrt(static_cast<double>(nb)));
  for (double& v : spline_coeffs_.data()) v = normal(rng);

  w1_ = ad::Tensor::scalar(1.0);
  w2_ = ad::Tensor::scalar(1.0);

  if (spec_.family == Family::GrKan) {
    const std::size_t groups = num_groups();
    numerator_ = ad::Tensor({groups, spec_.numerator_degree + 1});
    denominator_ = ad::Tensor({groups, spec_.denominator_degree});
    std::normal_distribution<double> small(0.0, 0.01);
    for (std::size_t g = 0; g < groups; ++g) {
      auto q = denominator_.data().subspan(g * spec_.denominator_degree, spec_.denominator_degree);
      for (double& v : q) v = small(rng);
      fit_numerator_to_identity(numerator_.data().subspan(g * (spec_.numerator_degree + 1), spec_.numerator_degree + 1),
                                q);
    }
    numerator_.set_requires_grad(true);
    denominator_.set_requires_grad(true);
  }
  for (ad::Tensor* t : {&base_weights_, &spline_coeffs_, &w1_, &w2_}) t->set_requires_grad(true);
}

std::size_t KanLayer::num_groups() const {
  if (spec_.family != Family::GrKan) return 0;
  return (in_dim_ + spec_.group_size - 1) / spec_.group_size;
}

void KanLayer::collect_parameters(ad::ParameterList& out, const std::string& prefix) {
  out.push_back({prefix + "base_weights", &base_weights_, true});
  out.push_back({prefix + "spline_coeffs", &spline_coeffs_, true});
  out.push_back({prefix + "w1", &w1_, true});
  out.push_back({prefix + "w2", &w2_, true});
  if (spec_.family == Family::GrKan) {
    out.push_back({prefix + "rational_p", &numerator_, true});
    out.push_back({prefix + "rational_q", &denominator_, true});
  }
}

void fit_numerator_to_identity(std::span<double> numerator, std::span<const double> denominator) {
  constexpr int kSamples = 1001;
  const auto cols = static_cast<Eigen::Index>(numerator.size());
  Eigen::MatrixXd a(kSamples, cols);
  Eigen::VectorXd b(kSamples);
  const std::vector<double> zeros(numerator.size(), 0.0);
  for (int s = 0; s < kSamples; ++s) {
    const double x = -1.0 + 2.0 * s / (kSamples - 1);
    // With P linear in its coefficients, R = sum_j p_j x^j / D(x).
    std::vector<double> unit(numerator.size(), 0.0);
    unit[0] = 1.0;
    const double inv_den = basis::rational_value(x, unit, denominator);
    double xp = 1.0;
    for (Eigen::Index j = 0; j < cols; ++j, xp *= x) a(s, j) = xp * inv_den;
    b(s) = x;
  }
  Eigen::VectorXd p = a.colPivHouseholderQr().solve(b);
  for (Eigen::Index j = 0; j < cols; ++j) numerator[static_cast<std::size_t>(j)] = p(j);
}

ad::Var basis_expand(ad::Var x, const basis::BasisSpec& spec) {
  const ad::Tensor& xv = x.value();
  if (xv.rank() != 2) throw DimensionError("basis_expand: expected [B, I] input, got " + ad::shape_str(xv.shape()));
  const std::size_t rows = xv.dim(0), in = xv.dim(1), nb = spec.num_basis();
  ad::Tensor out({rows, in * nb});
  for (std::size_t e = 0; e < rows * in; ++e) basis::basis_row(spec, xv[e], out.data().subspan(e * nb, nb));
  return x.tape().record(std::move(out), {x}, [spec, nb](ad::BackwardContext& ctx) {
    auto g = ctx.grad_output();
    auto xs = ctx.input(0).data();
    auto dx = ctx.grad_input(0);
    std::vector<double> d(nb);
    for (std::size_t e = 0; e < xs.size(); ++e) {
      basis::basis_row_derivative(spec, xs[e], d);
      double acc = 0.0;
      for (std::size_t j = 0; j < nb; ++j) acc += g[e * nb + j] * d[j];
      dx[e] += acc;
    }
  });
}

ad::Var group_rational(ad::Var x, ad::Var numerator, ad::Var denominator, std::size_t group_size) {
  const ad::Tensor& xv = x.value();
  const ad::Tensor& pv = numerator.value();
  const ad::Tensor& qv = denominator.value();
  if (xv.rank() != 2 || pv.rank() != 2 || qv.rank() != 2 || pv.dim(0) != qv.dim(0) ||
      pv.dim(0) != (xv.dim(1) + group_size - 1) / group_size) {
    throw DimensionError("group_rational: input " + ad::shape_str(xv.shape()) + " with group size " +
                         std::to_string(group_size) + " does not match coefficients " + ad::shape_str(pv.shape()) +
                         " / " + ad::shape_str(qv.shape()));
  }
  const std::size_t rows = xv.dim(0), in = xv.dim(1), mp = pv.dim(1), nq = qv.dim(1);
  ad::Tensor out(xv.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t i = 0; i < in; ++i) {
      const std::size_t g = i / group_size;
      out[r * in + i] = basis::rational_value(xv[r * in + i], pv.data().subspan(g * mp, mp), qv.data().subspan(g * nq, nq));
    }
  }
  return x.tape().record(
      std::move(out), {x, numerator, denominator}, [rows, in, mp, nq, group_size](ad::BackwardContext& ctx) {
        auto g = ctx.grad_output();
        auto xs = ctx.input(0).data();
        auto ps = ctx.input(1).data();
        auto qs = ctx.input(2).data();
        const bool need_x = ctx.needs_grad(0), need_p = ctx.needs_grad(1), need_q = ctx.needs_grad(2);
        std::vector<double> dp(mp), dq(nq);
        basis::RationalPartials r;
        r.dp = need_p ? std::span<double>(dp) : std::span<double>();
        r.dq = need_q ? std::span<double>(dq) : std::span<double>();
        for (std::size_t row = 0; row < rows; ++row) {
          for (std::size_t i = 0; i < in; ++i) {
            const std::size_t grp = i / group_size;
            const std::size_t e = row * in + i;
            basis::rational_partials(xs[e], ps.subspan(grp * mp, mp), qs.subspan(grp * nq, nq), r);
            if (need_x) ctx.grad_input(0)[e] += g[e] * r.dx;
            if (need_p) {
              auto gp = ctx.grad_input(1);
              for (std::size_t j = 0; j < mp; ++j) gp[grp * mp + j] += g[e] * dp[j];
            }
            if (need_q) {
              auto gq = ctx.grad_input(2);
              for (std::size_t j = 0; j < nq; ++j) gq[grp * nq + j] += g[e] * dq[j];
            }
          }
        }
      });
}

ad::Var kan_forward(ad::Tape& tape, KanLayer& layer, ad::Var x) {
  const ad::Tensor& xv = x.value();
  if (xv.rank() != 2 || xv.dim(1) != layer.in_dim()) {
    throw DimensionError("KAN layer expects [B, " + std::to_string(layer.in_dim()) + "] input, got " +
                         ad::shape_str(xv.shape()));
  }
  ad::Var base = ad::matmul(ad::swish(x), tape.leaf(layer.base_weights()));
  ad::Var expanded = layer.spec().family == Family::GrKan
                         ? group_rational(x, tape.leaf(layer.rational_numerator()),
                                          tape.leaf(layer.rational_denominator()), layer.spec().group_size)
                         : basis_expand(x, layer.spec());
  ad::Var spline = ad::matmul(expanded, tape.leaf(layer.spline_coeffs()));
  return ad::add(ad::scale(base, tape.leaf(layer.w1())), ad::scale(spline, tape.leaf(layer.w2())));
}

ad::Tensor kan_forward_naive(const KanLayer& layer, const ad::Tensor& x) {
  if (x.rank() != 2 || x.dim(1) != layer.in_dim()) {
    throw DimensionError("KAN layer expects [B, " + std::to_string(layer.in_dim()) + "] input, got " +
                         ad::shape_str(x.shape()));
  }
  const std::size_t batch = x.dim(0), in = layer.in_dim(), out = layer.out_dim(), nb = layer.num_basis();
  const auto& spec = layer.spec();
  const double w1 = layer.w1().item(), w2 = layer.w2().item();
  const auto& c = layer.spline_coeffs();
  const auto& u = layer.base_weights();
  const std::size_t mp = spec.numerator_degree + 1, nq = spec.denominator_degree;

  // edges[b][o][i] = phi_{i,o}(x_{b,i})
  std::vector<double> edges(batch * out * in);
  std::vector<double> row(nb);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t o = 0; o < out; ++o) {
      for (std::size_t i = 0; i < in; ++i) {
        const double xi = x[b * in + i];
        double spline = 0.0;
        if (spec.family == Family::GrKan) {
          const std::size_t g = i / spec.group_size;
          spline = c[i * out + o] * basis::rational_value(xi, layer.rational_numerator().data().subspan(g * mp, mp),
                                                           layer.rational_denominator().data().subspan(g * nq, nq));
        } else {
          basis::basis_row(spec, xi, row);
          for (std::size_t g = 0; g < nb; ++g) spline += c[(i * nb + g) * out + o] * row[g];
        }
        edges[(b * out + o) * in + i] = w1 * ad::swish_value(xi) * u[i * out + o] + w2 * spline;
      }
    }
  }
  ad::Tensor y({batch, out});
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t o = 0; o < out; ++o) {
      double acc = 0.0;
      for (std::size_t i = 0; i < in; ++i) acc += edges[(b * out + o) * in + i];
      y[b * out + o] = acc;
    }
  }
  return y;
}

std::size_t kan_param_count(const KanLayer& layer) {
  const std::size_t io = layer.in_dim() * layer.out_dim();
  std::size_t n = io * layer.num_basis() + io + 2;
  if (layer.spec().family == Family::GrKan) {
    n += layer.num_groups() * (layer.spec().numerator_degree + 1 + layer.spec().denominator_degree);
  }
  return n;
}

}  // namespace kanslu::kan
