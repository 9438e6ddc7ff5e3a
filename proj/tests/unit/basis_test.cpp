#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "kanslu/basis/basis.hpp"
#include "kanslu/errors.hpp"
#include "kanslu/oracles/oracles.hpp"

using namespace kanslu::basis;
namespace ad = kanslu::ad;

namespace {

std::vector<double> row(const BasisSpec& spec, double x) {
  std::vector<double> out(spec.num_basis());
  basis_row(spec, x, out);
  return out;
}

BasisSpec spec_of(Family f) {
  BasisSpec s;
  s.family = f;
  return s;
}

}  // namespace

TEST(Grid, KnotLayout) {
  Grid g(-1.0, 1.0, 5, 3);
  ASSERT_EQ(g.knots().size(), 12u);
  EXPECT_NEAR(g.knots()[0], -1.0 - 3 * 0.4, 1e-15);
  EXPECT_NEAR(g.knots()[3], -1.0, 1e-15);
  for (std::size_t i = 1; i < g.knots().size(); ++i) EXPECT_GT(g.knots()[i], g.knots()[i - 1]);
  EXPECT_THROW(Grid(1.0, 1.0, 5, 3), kanslu::ParameterError);
  EXPECT_THROW(Grid(0.0, 1.0, 0, 3), kanslu::ParameterError);
}

TEST(BSpline, OrderZeroIsOneHot) {
  Grid g(-1.0, 1.0, 5, 0);
  for (std::size_t j = 0; j < 5; ++j) {
    const double mid = -1.0 + (j + 0.5) * 0.4;
    ad::Tensor b = bspline_basis(ad::Tensor({1}, {mid}), g);
    for (std::size_t c = 0; c < 5; ++c) EXPECT_EQ(b[c], c == j ? 1.0 : 0.0);
  }
}

TEST(BSpline, PartitionOfUnityAndLocalSupport) {
  Grid g;
  double at_zero = 0;
  const ad::Tensor row = bspline_basis(ad::Tensor({1}, {0.0}), g);
  for (double v : row.data()) at_zero += v;
  EXPECT_NEAR(at_zero, 1.0, 1e-12);
  for (int i = 0; i < 1000; ++i) {
    const double x = -1.0 + 2.0 * i / 999.0 - (i == 999 ? 1e-12 : 0.0);
    std::vector<double> r(8);
    bspline_row(x, g, r);
    double s = 0;
    int nonzero = 0;
    for (double v : r) {
      EXPECT_GE(v, 0.0);
      s += v;
      nonzero += v != 0.0;
    }
    EXPECT_NEAR(s, 1.0, 1e-9);
    EXPECT_LE(nonzero, 4);
  }
}

TEST(BSpline, MatchesDeBoorOracle) {
  Grid g;
  for (int i = 0; i < 200; ++i) {
    const double x = -0.995 + 1.99 * i / 199.0;
    std::vector<double> r(8);
    bspline_row(x, g, r);
    for (std::size_t j = 0; j < 8; ++j) EXPECT_NEAR(r[j], kanslu::oracles::de_boor(x, g.knots(), j, 3), 1e-12);
  }
}

TEST(BSpline, ExtrapolatesOutsideRange) {
  Grid g;
  std::vector<double> r(8);
  bspline_row(1.3, g, r);
  double s = 0;
  for (double v : r) s += v;
  EXPECT_GT(s, 0.0);
}

TEST(Rbf, CenterBandwidthAndSymmetry) {
  Grid g;
  auto s = spec_of(Family::Rbf);
  auto centers = g.centers();
  EXPECT_EQ(row(s, centers[2])[2], 1.0);
  EXPECT_NEAR(row(s, centers[2] + 0.4)[2], std::exp(-1.0), 1e-12);
  EXPECT_NEAR(row(s, centers[2] + 0.13)[2], row(s, centers[2] - 0.13)[2], 1e-14);
}

TEST(Rswaf, PeakSymmetryAndUnitOffset) {
  auto s = spec_of(Family::Rswaf);
  auto c = s.grid.centers();
  EXPECT_EQ(row(s, c[3])[3], 1.0);
  EXPECT_NEAR(row(s, c[3] + 0.2)[3], row(s, c[3] - 0.2)[3], 1e-14);
  EXPECT_NEAR(row(s, c[3] + 0.4)[3], 0.41997434161402614, 1e-12);
}

TEST(Chebyshev, RecurrenceValues) {
  auto s = spec_of(Family::Chebyshev);
  auto r0 = row(s, 0.0);
  EXPECT_EQ(r0, (std::vector<double>{1, 0, -1, 0, 1}));
  auto r = row(s, 0.5);
  const double u = std::tanh(0.5);
  EXPECT_EQ(r[0], 1.0);
  EXPECT_NEAR(r[2], std::cos(2.0 * std::acos(u)), 1e-12);
  EXPECT_NEAR(r[4], std::cos(4.0 * std::acos(u)), 1e-12);
}

TEST(GrKanRational, HandValues) {
  std::vector<double> p{0, 1}, q{0};
  EXPECT_EQ(rational_value(0.37, p, q), 0.37);
  std::vector<double> p2{1, 0, 1}, q2{1};
  EXPECT_NEAR(rational_value(2.0, p2, q2), 5.0 / 3.0, 1e-15);
  std::vector<double> p3{0, 1}, q3{1e6};
  const double big = rational_value(1e3, p3, q3);
  EXPECT_TRUE(std::isfinite(big));
  EXPECT_LE(std::abs(big), 1e3);
}

TEST(BasisGrad, TrivialProperties) {
  auto s = spec_of(Family::Rbf);
  std::vector<double> d(s.num_basis());
  basis_row_derivative(s, s.grid.centers()[1], d);
  EXPECT_EQ(d[1], 0.0);
  auto b = spec_of(Family::BSpline);
  std::vector<double> db(8);
  for (double x : {-0.9, -0.31, 0.05, 0.77}) {
    basis_row_derivative(b, x, db);
    double sum = 0;
    for (double v : db) sum += v;
    EXPECT_NEAR(sum, 0.0, 1e-12);
  }
}

TEST(BasisGrad, MatchesFiniteDifferencesAwayFromKnots) {
  const double eps = 1e-6;
  for (Family f : {Family::BSpline, Family::Rbf, Family::Rswaf, Family::Chebyshev}) {
    auto s = spec_of(f);
    for (double x : {-0.93, -0.5, 0.1, 0.31, 0.87, 1.7}) {
      std::vector<double> d(s.num_basis()), up(s.num_basis()), dn(s.num_basis());
      basis_row_derivative(s, x, d);
      basis_row(s, x + eps, up);
      basis_row(s, x - eps, dn);
      double diff = 0, mag = 0;
      for (std::size_t j = 0; j < d.size(); ++j) {
        const double n = (up[j] - dn[j]) / (2 * eps);
        diff += (n - d[j]) * (n - d[j]);
        mag += n * n;
      }
      EXPECT_LT(std::sqrt(diff) / std::max(std::sqrt(mag), 1e-12), 1e-5) << to_string(f) << " x=" << x;
    }
  }
  std::vector<double> p{0.1, 1.0, -0.3, 0.2}, q{0.5, -0.2};
  for (double x : {-0.8, -0.2, 0.4, 1.3}) {
    RationalPartials r;
    rational_partials(x, p, q, r);
    const double n = (rational_value(x + eps, p, q) - rational_value(x - eps, p, q)) / (2 * eps);
    EXPECT_NEAR(r.dx, n, 1e-6 * std::max(1.0, std::abs(n)));
  }
}

TEST(Basis, FiniteOnWideRangeAndWidthConsistent) {
  for (Family f : {Family::BSpline, Family::Rbf, Family::Rswaf, Family::Chebyshev}) {
    auto s = spec_of(f);
    ad::Tensor x({201});
    for (std::size_t i = 0; i < 201; ++i) x[i] = -100.0 + i;
    ad::Tensor b = evaluate_basis(s, x);
    EXPECT_EQ(b.dim(1), s.num_basis());
    EXPECT_TRUE(b.all_finite());
    EXPECT_TRUE(basis_grad(s, x).all_finite());
  }
  std::vector<double> p{0, 1, 0.5}, q{0.3, 0.1};
  for (double x = -100; x <= 100; x += 1) EXPECT_TRUE(std::isfinite(rational_value(x, p, q)));
}

TEST(Basis, FamilyNames) {
  for (Family f : kAllFamilies) EXPECT_EQ(family_from_string(to_string(f)), f);
  EXPECT_THROW(family_from_string("wavelet"), kanslu::ParameterError);
}
