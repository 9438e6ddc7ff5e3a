#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "kanslu/autodiff/tensor.hpp"

namespace kanslu::basis {

enum class Family { BSpline, Rbf, Rswaf, Chebyshev, GrKan };

inline constexpr Family kAllFamilies[] = {Family::BSpline, Family::Rbf, Family::Rswaf, Family::Chebyshev,
                                          Family::GrKan};

std::string_view to_string(Family family);
// Accepts "bspline", "rbf", "rswaf", "chebyshev", "grkan".
Family family_from_string(std::string_view name);

// Uniform knot layout over [range_min, range_max] with `spline_order`
// extra knots on each side, G+2k+1 knots in total.
class Grid {
 public:
  Grid() : Grid(-1.0, 1.0, 5, 3) {}
  Grid(double range_min, double range_max, std::size_t num_intervals, std::size_t spline_order);

  double range_min() const noexcept { return range_min_; }
  double range_max() const noexcept { return range_max_; }
  std::size_t num_intervals() const noexcept { return num_intervals_; }
  std::size_t spline_order() const noexcept { return spline_order_; }
  double step() const noexcept { return (range_max_ - range_min_) / static_cast<double>(num_intervals_); }
  std::span<const double> knots() const noexcept { return knots_; }
  // The G+1 interior grid points, used as RBF/RSWAF centres.
  std::vector<double> centers() const;

  friend bool operator==(const Grid& a, const Grid& b) {
    return a.range_min_ == b.range_min_ && a.range_max_ == b.range_max_ && a.num_intervals_ == b.num_intervals_ &&
           a.spline_order_ == b.spline_order_;
  }

 private:
  double range_min_;
  double range_max_;
  std::size_t num_intervals_;
  std::size_t spline_order_;
  std::vector<double> knots_;
};

struct BasisSpec {
  Family family = Family::BSpline;
  Grid grid;
  std::size_t degree = 4;  // Chebyshev
  std::size_t numerator_degree = 5;
  std::size_t denominator_degree = 4;
  std::size_t group_size = 8;

  // Width of one input's basis expansion. GR-KAN exposes a single slot
  // holding its rational response.
  std::size_t num_basis() const;
  void validate() const;

  friend bool operator==(const BasisSpec&, const BasisSpec&) = default;
};

// Single-point row evaluators. `out` must have num_basis() entries.
void bspline_row(double x, const Grid& grid, std::span<double> out);
void bspline_row_derivative(double x, const Grid& grid, std::span<double> out);
void rbf_row(double x, const Grid& grid, std::span<double> out);
void rbf_row_derivative(double x, const Grid& grid, std::span<double> out);
void rswaf_row(double x, const Grid& grid, std::span<double> out);
void rswaf_row_derivative(double x, const Grid& grid, std::span<double> out);
void chebyshev_row(double x, std::size_t degree, std::span<double> out);
void chebyshev_row_derivative(double x, std::size_t degree, std::span<double> out);

// Dispatch on spec.family for the four linear-basis families.
void basis_row(const BasisSpec& spec, double x, std::span<double> out);
void basis_row_derivative(const BasisSpec& spec, double x, std::span<double> out);

// Tensor[N] -> Tensor[N, num_basis]
ad::Tensor bspline_basis(const ad::Tensor& x, const Grid& grid);
ad::Tensor rbf_basis(const ad::Tensor& x, const Grid& grid);
ad::Tensor rswaf_basis(const ad::Tensor& x, const Grid& grid);
ad::Tensor chebyshev_basis(const ad::Tensor& x, std::size_t degree);
ad::Tensor evaluate_basis(const BasisSpec& spec, const ad::Tensor& x);
// d/dx of every basis entry, same shape as evaluate_basis.
ad::Tensor basis_grad(const BasisSpec& spec, const ad::Tensor& x);

// Safe rational P(x) / (1 + |Q(x)|) with numerator coefficients p[0..m] and
// denominator coefficients q[1..n] (q[0] of the span multiplies x).
double rational_value(double x, std::span<const double> p, std::span<const double> q);

struct RationalPartials {
  double value = 0.0;
  double dx = 0.0;
  // Written when non-empty; sized m+1 and n.
  std::span<double> dp;
  std::span<double> dq;
};
// d/dp_j = x^j/D, d/dq_j = -P sign(Q) x^j / D^2, sign(0) := 0.
void rational_partials(double x, std::span<const double> p, std::span<const double> q, RationalPartials& out);

ad::Tensor grkan_rational(const ad::Tensor& x, const ad::Tensor& p, const ad::Tensor& q);
ad::Tensor grkan_rational_grad(const ad::Tensor& x, const ad::Tensor& p, const ad::Tensor& q);

}  // namespace kanslu::basis
