#include "kanslu/basis/basis.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "kanslu/errors.hpp"

namespace kanslu::basis {

std::string_view to_string(Family family) {
  switch (family) {
    case Family::BSpline: return "bspline";
    case Family::Rbf: return "rbf";
    case Family::Rswaf: return "rswaf";
    case Family::Chebyshev: return "chebyshev";
    case Family::GrKan: return "grkan";
  }
  return "unknown";
}

Family family_from_string(std::string_view name) {
  for (Family f : kAllFamilies) {
    if (to_string(f) == name) return f;
  }
  throw ParameterError("unknown basis family '" + std::string(name) +
                       "' (expected bspline, rbf, rswaf, chebyshev or grkan)");
}

Grid::Grid(double range_min, double range_max, std::size_t num_intervals, std::size_t spline_order)
    : range_min_(range_min), range_max_(range_max), num_intervals_(num_intervals), spline_order_(spline_order) {
  if (!(range_min < range_max)) {
    throw ParameterError("grid range must satisfy min < max, got [" + std::to_string(range_min) + ", " +
                         std::to_string(range_max) + "]");
  }
  if (num_intervals == 0) throw ParameterError("grid needs at least one interval");
  const double h = step();
  const std::size_t n = num_intervals + 2 * spline_order + 1;
  knots_.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    knots_[i] = range_min + (static_cast<double>(i) - static_cast<double>(spline_order)) * h;
  }
}

std::vector<double> Grid::centers() const {
  std::vector<double> c(num_intervals_ + 1);
  for (std::size_t j = 0; j <= num_intervals_; ++j) c[j] = range_min_ + static_cast<double>(j) * step();
  return c;
}

std::size_t BasisSpec::num_basis() const {
  switch (family) {
    case Family::BSpline: return grid.num_intervals() + grid.spline_order();
    case Family::Rbf:
    case Family::Rswaf: return grid.num_intervals() + 1;
    case Family::Chebyshev: return degree + 1;
    case Family::GrKan: return 1;
  }
  return 0;
}

void BasisSpec::validate() const {
  if (family == Family::GrKan) {
    if (numerator_degree < 1 || denominator_degree < 1) {
      throw ParameterError("GR-KAN needs numerator and denominator degree >= 1");
    }
    if (group_size == 0) throw ParameterError("GR-KAN group size must be positive");
  }
}

namespace {

// Cox-de Boor lift to `order`; `out` receives knots.size()-1-order values.
void cox_de_boor(double x, std::span<const double> t, std::size_t order, std::span<double> out) {
  const std::size_t n0 = t.size() - 1;
  std::array<double, 64> small{};
  std::vector<double> large;
  double* b = small.data();
  if (n0 > small.size()) {
    large.assign(n0, 0.0);
    b = large.data();
  }
  for (std::size_t j = 0; j < n0; ++j) b[j] = (x >= t[j] && x < t[j + 1]) ? 1.0 : 0.0;
  for (std::size_t d = 1; d <= order; ++d) {
    for (std::size_t j = 0; j + d < n0; ++j) {
      const double left = (x - t[j]) / (t[j + d] - t[j]) * b[j];
      const double right = (t[j + d + 1] - x) / (t[j + d + 1] - t[j + 1]) * b[j + 1];
      b[j] = left + right;
    }
  }
  std::copy(b, b + (n0 - order), out.begin());
}

}  // namespace

void bspline_row(double x, const Grid& grid, std::span<double> out) {
  cox_de_boor(x, grid.knots(), grid.spline_order(), out);
}

void bspline_row_derivative(double x, const Grid& grid, std::span<double> out) {
  const std::size_t k = grid.spline_order();
  const std::size_t nb = grid.num_intervals() + k;
  if (k == 0) {
    std::fill(out.begin(), out.begin() + static_cast<std::ptrdiff_t>(nb), 0.0);
    return;
  }
  auto t = grid.knots();
  std::array<double, 64> small{};
  std::vector<double> large;
  std::span<double> lower(small.data(), nb + 1);
  if (nb + 1 > small.size()) {
    large.assign(nb + 1, 0.0);
    lower = large;
  }
  cox_de_boor(x, t, k - 1, lower);
  const double kk = static_cast<double>(k);
  for (std::size_t j = 0; j < nb; ++j) {
    out[j] = kk / (t[j + k] - t[j]) * lower[j] - kk / (t[j + k + 1] - t[j + 1]) * lower[j + 1];
  }
}

void rbf_row(double x, const Grid& grid, std::span<double> out) {
  const double h = grid.step();
  for (std::size_t j = 0; j <= grid.num_intervals(); ++j) {
    const double z = (x - (grid.range_min() + static_cast<double>(j) * h)) / h;
    out[j] = std::exp(-z * z);
  }
}

void rbf_row_derivative(double x, const Grid& grid, std::span<double> out) {
  const double h = grid.step();
  for (std::size_t j = 0; j <= grid.num_intervals(); ++j) {
    const double z = (x - (grid.range_min() + static_cast<double>(j) * h)) / h;
    out[j] = -2.0 * z / h * std::exp(-z * z);
  }
}

void rswaf_row(double x, const Grid& grid, std::span<double> out) {
  const double h = grid.step();
  for (std::size_t j = 0; j <= grid.num_intervals(); ++j) {
    const double th = std::tanh((x - (grid.range_min() + static_cast<double>(j) * h)) / h);
    out[j] = 1.0 - th * th;
  }
}

void rswaf_row_derivative(double x, const Grid& grid, std::span<double> out) {
  const double h = grid.step();
  for (std::size_t j = 0; j <= grid.num_intervals(); ++j) {
    const double th = std::tanh((x - (grid.range_min() + static_cast<double>(j) * h)) / h);
    out[j] = -2.0 * th * (1.0 - th * th) / h;
  }
}

void chebyshev_row(double x, std::size_t degree, std::span<double> out) {
  const double u = std::tanh(x);
  out[0] = 1.0;
  if (degree >= 1) out[1] = u;
  for (std::size_t j = 1; j < degree; ++j) out[j + 1] = 2.0 * u * out[j] - out[j - 1];
}

void chebyshev_row_derivative(double x, std::size_t degree, std::span<double> out) {
  const double u = std::tanh(x);
  const double du = 1.0 - u * u;
  // T'_{j+1} = 2 T_j + 2u T'_j - T'_{j-1}
  double t_prev = 1.0, t_cur = u;
  double d_prev = 0.0, d_cur = 1.0;
  out[0] = 0.0;
  if (degree >= 1) out[1] = du;
  for (std::size_t j = 1; j < degree; ++j) {
    const double t_next = 2.0 * u * t_cur - t_prev;
    const double d_next = 2.0 * t_cur + 2.0 * u * d_cur - d_prev;
    out[j + 1] = d_next * du;
    t_prev = t_cur;
    t_cur = t_next;
    d_prev = d_cur;
    d_cur = d_next;
  }
}

void basis_row(const BasisSpec& spec, double x, std::span<double> out) {
  switch (spec.family) {
    case Family::BSpline: return bspline_row(x, spec.grid, out);
    case Family::Rbf: return rbf_row(x, spec.grid, out);
    case Family::Rswaf: return rswaf_row(x, spec.grid, out);
    case Family::Chebyshev: return chebyshev_row(x, spec.degree, out);
    case Family::GrKan: break;
  }
  throw ContractError("GR-KAN has no fixed basis row; use rational_value with layer coefficients");
}

void basis_row_derivative(const BasisSpec& spec, double x, std::span<double> out) {
  switch (spec.family) {
    case Family::BSpline: return bspline_row_derivative(x, spec.grid, out);
    case Family::Rbf: return rbf_row_derivative(x, spec.grid, out);
    case Family::Rswaf: return rswaf_row_derivative(x, spec.grid, out);
    case Family::Chebyshev: return chebyshev_row_derivative(x, spec.degree, out);
    case Family::GrKan: break;
  }
  throw ContractError("GR-KAN has no fixed basis row; use rational_partials with layer coefficients");
}

namespace {

template <typename RowFn>
ad::Tensor expand(const ad::Tensor& x, std::size_t width, RowFn row) {
  const std::size_t n = x.numel();
  ad::Tensor out({n, width});
  for (std::size_t i = 0; i < n; ++i) row(x[i], out.data().subspan(i * width, width));
  return out;
}

}  // namespace

ad::Tensor bspline_basis(const ad::Tensor& x, const Grid& grid) {
  return expand(x, grid.num_intervals() + grid.spline_order(),
                [&](double v, std::span<double> r) { bspline_row(v, grid, r); });
}

ad::Tensor rbf_basis(const ad::Tensor& x, const Grid& grid) {
  return expand(x, grid.num_intervals() + 1, [&](double v, std::span<double> r) { rbf_row(v, grid, r); });
}

ad::Tensor rswaf_basis(const ad::Tensor& x, const Grid& grid) {
  return expand(x, grid.num_intervals() + 1, [&](double v, std::span<double> r) { rswaf_row(v, grid, r); });
}

ad::Tensor chebyshev_basis(const ad::Tensor& x, std::size_t degree) {
  return expand(x, degree + 1, [&](double v, std::span<double> r) { chebyshev_row(v, degree, r); });
}

ad::Tensor evaluate_basis(const BasisSpec& spec, const ad::Tensor& x) {
  return expand(x, spec.num_basis(), [&](double v, std::span<double> r) { basis_row(spec, v, r); });
}

ad::Tensor basis_grad(const BasisSpec& spec, const ad::Tensor& x) {
  return expand(x, spec.num_basis(), [&](double v, std::span<double> r) { basis_row_derivative(spec, v, r); });
}

double rational_value(double x, std::span<const double> p, std::span<const double> q) {
  double num = 0.0;
  for (std::size_t j = p.size(); j-- > 0;) num = num * x + p[j];
  double den = 0.0;
  for (std::size_t j = q.size(); j-- > 0;) den = (den + q[j]) * x;
  return num / (1.0 + std::abs(den));
}

void rational_partials(double x, std::span<const double> p, std::span<const double> q, RationalPartials& out) {
  double num = 0.0, dnum = 0.0;
  for (std::size_t j = p.size(); j-- > 0;) {
    dnum = dnum * x + num;
    num = num * x + p[j];
  }
  // Q(x) = sum_{j=1..n} q_j x^j
  double qv = 0.0, dq = 0.0;
  for (std::size_t j = q.size(); j-- > 0;) {
    dq = dq * x + (qv + q[j]);
    qv = (qv + q[j]) * x;
  }
  const double sign = qv > 0.0 ? 1.0 : (qv < 0.0 ? -1.0 : 0.0);
  const double den = 1.0 + std::abs(qv);
  out.value = num / den;
  out.dx = dnum / den - num * sign * dq / (den * den);
  if (!out.dp.empty()) {
    double xp = 1.0;
    for (std::size_t j = 0; j < p.size(); ++j, xp *= x) out.dp[j] = xp / den;
  }
  if (!out.dq.empty()) {
    double xp = x;
    const double k = -num * sign / (den * den);
    for (std::size_t j = 0; j < q.size(); ++j, xp *= x) out.dq[j] = k * xp;
  }
}

ad::Tensor grkan_rational(const ad::Tensor& x, const ad::Tensor& p, const ad::Tensor& q) {
  ad::Tensor out(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) out[i] = rational_value(x[i], p.data(), q.data());
  return out;
}

ad::Tensor grkan_rational_grad(const ad::Tensor& x, const ad::Tensor& p, const ad::Tensor& q) {
  ad::Tensor out(x.shape());
  RationalPartials r;
  for (std::size_t i = 0; i < x.numel(); ++i) {
    rational_partials(x[i], p.data(), q.data(), r);
    out[i] = r.dx;
  }
  return out;
}

}  // namespace kanslu::basis
