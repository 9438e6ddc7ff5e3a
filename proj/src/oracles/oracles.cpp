#include "kanslu/oracles/oracles.hpp"

#include <algorithm>
#include <cmath>

#include "kanslu/autodiff/ops.hpp"
#include "kanslu/random.hpp"

namespace kanslu::oracles {

double de_boor(double x, std::span<const double> knots, std::size_t j, std::size_t k) {
  if (k == 0) return (knots[j] <= x && x < knots[j + 1]) ? 1.0 : 0.0;
  double value = 0.0;
  const double dl = knots[j + k] - knots[j];
  if (dl != 0.0) value += (x - knots[j]) / dl * de_boor(x, knots, j, k - 1);
  const double dr = knots[j + k + 1] - knots[j + 1];
  if (dr != 0.0) value += (knots[j + k + 1] - x) / dr * de_boor(x, knots, j + 1, k - 1);
  return value;
}

double GradcheckResult::max_error() const {
  double m = 0.0;
  for (double e : relative_error) m = std::max(m, e);
  return m;
}

namespace {

double weighted_loss(const TapeFunction& f, std::vector<ad::Tensor>& inputs, std::span<const double> w) {
  ad::Tape tape;
  std::vector<ad::Var> vars;
  for (auto& t : inputs) vars.push_back(tape.constant(t));
  const ad::Tensor& out = f(tape, vars).value();
  double s = 0.0;
  for (std::size_t i = 0; i < out.numel(); ++i) s += w[i] * out[i];
  return s;
}

}  // namespace

GradcheckResult gradcheck(const TapeFunction& f, std::vector<ad::Tensor> inputs, std::uint64_t seed, double eps) {
  Rng rng(seed);
  std::vector<double> weights;
  std::vector<std::vector<double>> analytic(inputs.size());
  {
    for (auto& t : inputs) {
      t.set_requires_grad(true);
      t.clear_grad();
    }
    ad::Tape tape;
    std::vector<ad::Var> vars;
    for (auto& t : inputs) vars.push_back(tape.leaf(t));
    ad::Var out = f(tape, vars);
    std::normal_distribution<double> normal(0.0, 1.0);
    weights.resize(out.value().numel());
    for (double& w : weights) w = normal(rng);
    tape.backward(ad::weighted_sum(out, weights));
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      if (inputs[i].has_grad()) {
        auto g = inputs[i].grad();
        analytic[i].assign(g.begin(), g.end());
      } else {
        analytic[i].assign(inputs[i].numel(), 0.0);
      }
    }
  }
  for (auto& t : inputs) {
    t.clear_grad();
    t.set_requires_grad(false);
  }
  GradcheckResult result;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
    for (std::size_t e = 0; e < inputs[i].numel(); ++e) {
      const double orig = inputs[i][e];
      inputs[i][e] = orig + eps;
      const double up = weighted_loss(f, inputs, weights);
      inputs[i][e] = orig - eps;
      const double down = weighted_loss(f, inputs, weights);
      inputs[i][e] = orig;
      const double numeric = (up - down) / (2.0 * eps);
      diff2 += (analytic[i][e] - numeric) * (analytic[i][e] - numeric);
      a2 += analytic[i][e] * analytic[i][e];
      n2 += numeric * numeric;
    }
    result.relative_error.push_back(std::sqrt(diff2) / std::max({std::sqrt(a2), std::sqrt(n2), 1e-12}));
  }
  return result;
}

double brute_accuracy(std::span<const std::size_t> truth, std::span<const std::size_t> pred) {
  std::size_t hit = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) hit += truth[i] == pred[i];
  return truth.empty() ? 0.0 : static_cast<double>(hit) / static_cast<double>(truth.size());
}

std::vector<std::vector<std::size_t>> brute_confusion(std::span<const std::size_t> truth,
                                                      std::span<const std::size_t> pred, std::size_t classes) {
  std::vector<std::vector<std::size_t>> m(classes, std::vector<std::size_t>(classes, 0));
  for (std::size_t t = 0; t < classes; ++t) {
    for (std::size_t p = 0; p < classes; ++p) {
      for (std::size_t i = 0; i < truth.size(); ++i) m[t][p] += truth[i] == t && pred[i] == p;
    }
  }
  return m;
}

double brute_macro_f1(std::span<const std::size_t> truth, std::span<const std::size_t> pred, std::size_t classes) {
  double total = 0.0;
  for (std::size_t c = 0; c < classes; ++c) {
    double tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
      tp += truth[i] == c && pred[i] == c;
      fp += truth[i] != c && pred[i] == c;
      fn += truth[i] == c && pred[i] != c;
    }
    const double precision = tp + fp > 0 ? tp / (tp + fp) : 0.0;
    const double recall = tp + fn > 0 ? tp / (tp + fn) : 0.0;
    total += precision + recall > 0 ? 2 * precision * recall / (precision + recall) : 0.0;
  }
  return total / static_cast<double>(classes);
}

WalkedShape walk_cnn_shape(std::size_t height, std::size_t width, std::span<const std::size_t> channels,
                           std::size_t kernel, std::size_t stride, std::size_t padding) {
  WalkedShape s{1, height, width};
  for (std::size_t i = 0; i < channels.size(); ++i) {
    s.channels = channels[i];
    s.height = (s.height + 2 * padding - kernel) / stride + 1;
    s.width = (s.width + 2 * padding - kernel) / stride + 1;
    if (i == 1 || i == 3) {
      s.height = (s.height - 2) / 2 + 1;
      s.width = (s.width - 2) / 2 + 1;
    }
  }
  return s;
}

}  // namespace kanslu::oracles
