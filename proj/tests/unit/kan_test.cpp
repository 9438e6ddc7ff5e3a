#include <gtest/gtest.h>

#include <chrono>
#include <cmath>

#include "kanslu/autodiff/ops.hpp"
#include "kanslu/errors.hpp"
#include "kanslu/kan/kan_layer.hpp"
#include "kanslu/oracles/oracles.hpp"
#include "test_helpers.hpp"

using namespace kanslu;
using basis::Family;
using test_util::random_tensor;

namespace {

basis::BasisSpec spec_of(Family f) {
  basis::BasisSpec s;
  s.family = f;
  if (f == Family::GrKan) s.group_size = 2;
  return s;
}

ad::Tensor forward(kan::KanLayer& layer, const ad::Tensor& x) {
  ad::Tape tape;
  return kan::kan_forward(tape, layer, tape.constant(x)).value();
}

}  // namespace

TEST(KanLayer, ShapesAndParamCount) {
  Rng rng(1);
  kan::KanLayer layer(2, 3, spec_of(Family::BSpline), rng);
  EXPECT_EQ(layer.spline_coeffs().shape(), (ad::Shape{16, 3}));
  EXPECT_EQ(kan::kan_param_count(layer), 56u);
  basis::BasisSpec cheb = spec_of(Family::Chebyshev);
  kan::KanLayer single(1, 1, cheb, rng);
  EXPECT_EQ(kan::kan_param_count(single), 8u);
}

TEST(KanLayer, GrKanParamCountIncludesGroups) {
  Rng rng(2);
  basis::BasisSpec s;
  s.family = Family::GrKan;
  kan::KanLayer layer(20, 3, s, rng);
  EXPECT_EQ(layer.num_groups(), 3u);
  EXPECT_EQ(layer.rational_numerator().shape(), (ad::Shape{3, 6}));
  EXPECT_EQ(layer.rational_denominator().shape(), (ad::Shape{3, 4}));
  EXPECT_EQ(kan::kan_param_count(layer), 2u * 20 * 3 + 2 + 3 * 10);
}

TEST(KanLayer, GrKanInitApproximatesIdentity) {
  Rng rng(3);
  basis::BasisSpec s;
  s.family = Family::GrKan;
  kan::KanLayer layer(8, 1, s, rng);
  for (double x = -1.0; x <= 1.0; x += 0.1) {
    EXPECT_NEAR(basis::rational_value(x, layer.rational_numerator().data().subspan(0, 6),
                                      layer.rational_denominator().data().subspan(0, 4)),
                x, 1e-2);
  }
}

TEST(KanForward, SplinePathOffGivesBaseActivation) {
  Rng rng(4);
  kan::KanLayer layer(3, 3, spec_of(Family::BSpline), rng);
  for (double& v : layer.spline_coeffs().data()) v = 0;
  for (double& v : layer.base_weights().data()) v = 0;
  for (std::size_t i = 0; i < 3; ++i) layer.base_weights()[i * 3 + i] = 1;
  ad::Tensor x = random_tensor({2, 3}, rng);
  ad::Tensor y = forward(layer, x);
  for (std::size_t i = 0; i < 6; ++i) EXPECT_NEAR(y[i], ad::swish_value(x[i]), 1e-15);
  layer.w1()[0] = 0;
  layer.w2()[0] = 0;
  ad::Tensor off = forward(layer, x);
  for (double v : off.data()) EXPECT_EQ(v, 0.0);
}

TEST(KanForward, WidthMismatchThrows) {
  Rng rng(5);
  kan::KanLayer layer(3, 2, spec_of(Family::Rbf), rng);
  EXPECT_THROW(forward(layer, ad::Tensor({2, 4})), DimensionError);
  EXPECT_THROW(kan::kan_forward_naive(layer, ad::Tensor({2, 4})), DimensionError);
}

TEST(KanForward, MatchesNaiveExpansionAllFamilies) {
  std::uniform_int_distribution<std::size_t> width(1, 8);
  for (Family f : basis::kAllFamilies) {
    for (int trial = 0; trial < 20; ++trial) {
      Rng rng(1000 + trial + 100 * static_cast<int>(f));
      const std::size_t in = width(rng), out = width(rng), batch = width(rng);
      kan::KanLayer layer(in, out, spec_of(f), rng);
      layer.w1()[0] = 0.3 + uniform01(rng);
      layer.w2()[0] = -0.5 + uniform01(rng);
      ad::Tensor x = random_tensor({batch, in}, rng, -1.5, 1.5);
      ad::Tensor fast = forward(layer, x);
      ad::Tensor slow = kan::kan_forward_naive(layer, x);
      for (std::size_t i = 0; i < fast.numel(); ++i) ASSERT_NEAR(fast[i], slow[i], 1e-10) << basis::to_string(f);
    }
  }
}

TEST(KanForward, SingleEdgeOneHotCoefficient) {
  Rng rng(6);
  kan::KanLayer layer(1, 1, spec_of(Family::Rbf), rng);
  for (double& v : layer.spline_coeffs().data()) v = 0;
  layer.spline_coeffs()[2] = 1.0;
  layer.w1()[0] = 0.7;
  layer.w2()[0] = 1.3;
  const double x = 0.23, u = layer.base_weights()[0];
  std::vector<double> row(6);
  basis::basis_row(layer.spec(), x, row);
  EXPECT_NEAR(forward(layer, ad::Tensor({1, 1}, {x}))[0], 1.3 * row[2] + 0.7 * ad::swish_value(x) * u, 1e-14);
}

TEST(KanForward, ZeroBatchRowsAreEqual) {
  Rng rng(7);
  kan::KanLayer layer(4, 3, spec_of(Family::BSpline), rng);
  ad::Tensor y = forward(layer, ad::Tensor({5, 4}));
  for (std::size_t b = 1; b < 5; ++b) {
    for (std::size_t o = 0; o < 3; ++o) EXPECT_DOUBLE_EQ(y[b * 3 + o], y[o]);
  }
}

TEST(KanForward, GradientsMatchFiniteDifferences) {
  for (Family f : basis::kAllFamilies) {
    Rng rng(8 + static_cast<int>(f));
    basis::BasisSpec spec = spec_of(f);
    kan::KanLayer proto(3, 2, spec, rng);
    std::vector<ad::Tensor> inputs{random_tensor({4, 3}, rng, -0.9, 0.9), proto.spline_coeffs(), proto.base_weights(),
                                   ad::Tensor::scalar(0.8), ad::Tensor::scalar(1.2)};
    if (f == Family::GrKan) {
      inputs.push_back(proto.rational_numerator());
      inputs.push_back(proto.rational_denominator());
      for (double& v : inputs.back().data()) v += 0.3;
    }
    auto r = oracles::gradcheck(
        [&](ad::Tape&, std::span<const ad::Var> v) {
          ad::Var expanded = f == Family::GrKan ? kan::group_rational(v[0], v[5], v[6], spec.group_size)
                                                : kan::basis_expand(v[0], spec);
          ad::Var base = ad::matmul(ad::swish(v[0]), v[2]);
          return ad::add(ad::scale(base, v[3]), ad::scale(ad::matmul(expanded, v[1]), v[4]));
        },
        inputs);
    for (std::size_t i = 0; i < r.relative_error.size(); ++i) {
      EXPECT_LT(r.relative_error[i], 1e-4) << basis::to_string(f) << " input " << i;
    }
  }
}

TEST(KanForward, LayerParametersReceiveGradients) {
  Rng rng(9);
  kan::KanLayer layer(3, 2, spec_of(Family::GrKan), rng);
  ad::Tape tape;
  tape.backward(ad::sum(kan::kan_forward(tape, layer, tape.constant(random_tensor({4, 3}, rng)))));
  ad::ParameterList params;
  layer.collect_parameters(params, "k.");
  for (const auto& p : params) EXPECT_TRUE(p.tensor->has_grad()) << p.name;
}

TEST(KanForward, FasterThanNaive) {
  Rng rng(10);
  kan::KanLayer layer(128, 128, spec_of(Family::BSpline), rng);
  ad::Tensor x = random_tensor({256, 128}, rng);
  auto time = [](auto&& fn) {
    auto t0 = std::chrono::steady_clock::now();
    fn();
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  };
  const double fast = time([&] { forward(layer, x); });
  const double slow = time([&] { kan::kan_forward_naive(layer, x); });
  EXPECT_GT(slow, 2.0 * fast) << "fast " << fast << "s naive " << slow << "s";
}
