#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "kanslu/autodiff/tape.hpp"

// Independent reference implementations used by the tests.
namespace kanslu::oracles {

// Recursive definition of the B-spline B_{j,k}(x) on an arbitrary knot
// vector with half-open support.
double de_boor(double x, std::span<const double> knots, std::size_t j, std::size_t k);

struct GradcheckResult {
  // Per input: ||analytic - numeric||_2 / max(||analytic||, ||numeric||, 1e-12).
  std::vector<double> relative_error;
  double max_error() const;
};

// Differentiates L = Σ w_i f(inputs)_i with fixed random weights w, once by the
// tape and once by central differences with step eps.
using TapeFunction = std::function<ad::Var(ad::Tape&, std::span<const ad::Var>)>;
GradcheckResult gradcheck(const TapeFunction& f, std::vector<ad::Tensor> inputs, std::uint64_t seed = 7,
                          double eps = 1e-5);

double brute_accuracy(std::span<const std::size_t> truth, std::span<const std::size_t> pred);
// counts[t][p]
std::vector<std::vector<std::size_t>> brute_confusion(std::span<const std::size_t> truth,
                                                      std::span<const std::size_t> pred, std::size_t classes);
double brute_macro_f1(std::span<const std::size_t> truth, std::span<const std::size_t> pred, std::size_t classes);

struct WalkedShape {
  std::size_t channels = 1;
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t flat() const { return channels * height * width; }
};
// Applies out = floor((in + 2p - k)/s) + 1 layer by layer, with 2x2/2 pooling
// after the second and fourth convolution.
WalkedShape walk_cnn_shape(std::size_t height, std::size_t width, std::span<const std::size_t> channels,
                           std::size_t kernel = 3, std::size_t stride = 1, std::size_t padding = 2);

}  // namespace kanslu::oracles
