#include "kanslu/cli/selfcheck.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <numbers>
#include <sstream>

#include "kanslu/autodiff/ops.hpp"
#include "kanslu/basis/basis.hpp"
#include "kanslu/kan/kan_layer.hpp"
#include "kanslu/nn/layers.hpp"
#include "kanslu/oracles/oracles.hpp"
#include "kanslu/random.hpp"
#include "kanslu/train/metrics.hpp"

namespace kanslu::cli {

namespace {

using basis::Family;
using Clock = std::chrono::steady_clock;

constexpr double kGradBound = 1e-4;

ad::Tensor random_tensor(ad::Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  ad::Tensor t(std::move(shape));
  for (double& v : t.data()) v = lo + (hi - lo) * uniform01(rng);
  return t;
}

basis::BasisSpec spec_of(Family f) {
  basis::BasisSpec s;
  s.family = f;
  if (f == Family::GrKan) s.group_size = 2;
  return s;
}

// Tracks the worst statistic seen and where it occurred.
struct Worst {
  double value = 0.0;
  std::string where;

  void add(double v, const std::string& label) {
    if (!(v <= value)) {  // NaN counts as worst
      value = v;
      where = label;
    }
  }
};

CheckResult finish(std::string name, const Worst& worst, double bound, Clock::time_point t0) {
  CheckResult r;
  r.name = std::move(name);
  r.worst = worst.value;
  r.bound = bound;
  r.passed = worst.value < bound;
  r.detail = worst.where;
  r.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
  return r;
}

// The first call is the analytic pass of gradcheck; scaling only that call
// makes analytic and numeric gradients disagree by 1%.
oracles::TapeFunction maybe_skew(oracles::TapeFunction f, bool inject) {
  if (!inject) return f;
  auto calls = std::make_shared<int>(0);
  return [f = std::move(f), calls](ad::Tape& tape, std::span<const ad::Var> v) {
    ad::Var out = f(tape, v);
    if ((*calls)++ == 0) out = ad::scale(out, tape.constant(ad::Tensor::scalar(1.01)));
    return out;
  };
}

double grad_error(const oracles::TapeFunction& f, std::vector<ad::Tensor> inputs, std::uint64_t seed) {
  return oracles::gradcheck(f, std::move(inputs), seed).max_error();
}

}  // namespace

CheckResult check_kan_oracle(const SelfcheckOptions& options) {
  const auto t0 = Clock::now();
  const double skew = options.inject == "kan_oracle" ? 1e-6 : 0.0;
  std::uniform_int_distribution<std::size_t> width(1, 8), batch_size(1, 16);
  Worst worst;
  for (Family f : basis::kAllFamilies) {
    for (std::size_t trial = 0; trial < options.kan_trials; ++trial) {
      Rng rng(derive_seed(1000 + static_cast<std::uint64_t>(f), trial));
      const std::size_t in = width(rng), out = width(rng), batch = batch_size(rng);
      kan::KanLayer layer(in, out, spec_of(f), rng);
      layer.w1()[0] = 0.3 + uniform01(rng);
      layer.w2()[0] = -0.5 + uniform01(rng);
      const ad::Tensor x = random_tensor({batch, in}, rng, -1.5, 1.5);
      ad::Tape tape;
      const ad::Tensor fast = kan::kan_forward(tape, layer, tape.constant(x)).value();
      const ad::Tensor slow = kan::kan_forward_naive(layer, x);
      double err = 0.0;
      for (std::size_t i = 0; i < fast.numel(); ++i) err = std::max(err, std::abs(fast[i] + skew - slow[i]));
      worst.add(err, std::string(basis::to_string(f)) + " trial " + std::to_string(trial));
    }
  }
  return finish("kan_oracle", worst, 1e-10, t0);
}

CheckResult check_grad_primitives(const SelfcheckOptions& options) {
  const auto t0 = Clock::now();
  const bool inject = options.inject == "grad_primitives";
  Worst worst;
  for (std::uint64_t seed = 0; seed < options.seeds; ++seed) {
    Rng rng(derive_seed(200, seed));
    const std::vector<std::size_t> targets{1, 0, 2};
    const auto run = [&](const char* name, oracles::TapeFunction f, std::vector<ad::Tensor> inputs) {
      worst.add(grad_error(maybe_skew(std::move(f), inject), std::move(inputs), seed),
                std::string(name) + " seed " + std::to_string(seed));
    };
    run("matmul", [](ad::Tape&, auto v) { return ad::matmul(v[0], v[1]); },
        {random_tensor({3, 4}, rng), random_tensor({4, 2}, rng)});
    run("linear", [](ad::Tape&, auto v) { return ad::linear(v[0], v[1], v[2]); },
        {random_tensor({2, 3}, rng), random_tensor({4, 3}, rng), random_tensor({4}, rng)});
    run("add", [](ad::Tape&, auto v) { return ad::add(v[0], v[1]); },
        {random_tensor({2, 3}, rng), random_tensor({2, 3}, rng)});
    run("scale", [](ad::Tape&, auto v) { return ad::scale(v[0], v[1]); },
        {random_tensor({2, 3}, rng), random_tensor({1}, rng)});
    run("gelu", [](ad::Tape&, auto v) { return ad::gelu(v[0]); }, {random_tensor({8}, rng, -3, 3)});
    run("swish", [](ad::Tape&, auto v) { return ad::swish(v[0]); }, {random_tensor({8}, rng, -3, 3)});
    run("conv2d", [](ad::Tape&, auto v) { return ad::conv2d(v[0], v[1], v[2]); },
        {random_tensor({2, 2, 4, 5}, rng), random_tensor({3, 2, 3, 3}, rng), random_tensor({3}, rng)});
    run("batchnorm2d",
        [](ad::Tape&, auto v) {
          ad::BatchNormStats stats(2);
          return ad::batchnorm2d(v[0], v[1], v[2], stats, true);
        },
        {random_tensor({3, 2, 3, 3}, rng), random_tensor({2}, rng, 0.5, 1.5), random_tensor({2}, rng)});
    run("layernorm", [](ad::Tape&, auto v) { return ad::layernorm(v[0], v[1], v[2]); },
        {random_tensor({2, 5}, rng), random_tensor({5}, rng), random_tensor({5}, rng)});
    run("maxpool2d", [](ad::Tape&, auto v) { return ad::maxpool2d(v[0]); }, {random_tensor({1, 2, 4, 5}, rng)});
    run("dropout",
        [seed](ad::Tape&, auto v) {
          Rng mask(seed);  // same mask on every evaluation
          return ad::dropout(v[0], 0.3, true, mask);
        },
        {random_tensor({4, 6}, rng)});
    run("flatten", [](ad::Tape&, auto v) { return ad::flatten(v[0]); }, {random_tensor({2, 2, 3}, rng)});
    run("cross_entropy", [&targets](ad::Tape&, auto v) { return ad::softmax_cross_entropy(v[0], targets); },
        {random_tensor({3, 4}, rng, -2, 2)});
    for (Family f : basis::kAllFamilies) {
      if (f == Family::GrKan) {
        ad::Tensor q = random_tensor({2, 4}, rng, 0.1, 0.5);
        run("group_rational", [](ad::Tape&, auto v) { return kan::group_rational(v[0], v[1], v[2], 2); },
            {random_tensor({2, 4}, rng), random_tensor({2, 6}, rng), q});
      } else {
        const basis::BasisSpec spec = spec_of(f);
        run("basis_expand", [spec](ad::Tape&, auto v) { return kan::basis_expand(v[0], spec); },
            {random_tensor({2, 3}, rng, -0.95, 0.95)});
      }
    }
  }
  return finish("grad_primitives", worst, kGradBound, t0);
}

CheckResult check_grad_kan(const SelfcheckOptions& options) {
  const auto t0 = Clock::now();
  const bool inject = options.inject == "grad_kan";
  Worst worst;
  for (std::uint64_t seed = 0; seed < options.seeds; ++seed) {
    for (Family f : basis::kAllFamilies) {
      Rng rng(derive_seed(300 + static_cast<std::uint64_t>(f), seed));
      const basis::BasisSpec spec = spec_of(f);
      kan::KanLayer proto(3, 2, spec, rng);
      std::vector<ad::Tensor> inputs{random_tensor({4, 3}, rng, -0.9, 0.9), proto.spline_coeffs(),
                                     proto.base_weights(), ad::Tensor::scalar(0.5 + uniform01(rng)),
                                     ad::Tensor::scalar(0.5 + uniform01(rng))};
      if (f == Family::GrKan) {
        inputs.push_back(proto.rational_numerator());
        inputs.push_back(proto.rational_denominator());
        for (double& v : inputs.back().data()) v += 0.3;
      }
      // Mirrors kan_forward with every parameter exposed as an input.
      oracles::TapeFunction layer = [spec](ad::Tape&, std::span<const ad::Var> v) {
        ad::Var expanded =
            spec.family == Family::GrKan ? kan::group_rational(v[0], v[5], v[6], spec.group_size) : kan::basis_expand(v[0], spec);
        ad::Var base = ad::matmul(ad::swish(v[0]), v[2]);
        return ad::add(ad::scale(base, v[3]), ad::scale(ad::matmul(expanded, v[1]), v[4]));
      };
      worst.add(grad_error(maybe_skew(layer, inject), inputs, seed),
                std::string(basis::to_string(f)) + " seed " + std::to_string(seed));
    }
  }
  return finish("grad_kan", worst, kGradBound, t0);
}

CheckResult check_grad_ff_block(const SelfcheckOptions& options) {
  const auto t0 = Clock::now();
  const bool inject = options.inject == "grad_ff_block";
  Worst worst;
  for (std::uint64_t seed = 0; seed < options.seeds; ++seed) {
    Rng rng(derive_seed(400, seed));
    nn::FFBlock block(4, 3, 0.0, rng);
    oracles::TapeFunction f = [](ad::Tape&, std::span<const ad::Var> v) {
      return ad::gelu(ad::layernorm(ad::linear(v[0], v[1], v[2]), v[3], v[4]));
    };
    worst.add(grad_error(maybe_skew(f, inject),
                         {random_tensor({3, 4}, rng), block.linear.weight, block.linear.bias,
                          random_tensor({3}, rng, 0.5, 1.5), random_tensor({3}, rng)},
                         seed),
              "seed " + std::to_string(seed));
  }
  return finish("grad_ff_block", worst, kGradBound, t0);
}

CheckResult check_grad_cnn_tiny(const SelfcheckOptions& options) {
  const auto t0 = Clock::now();
  const bool inject = options.inject == "grad_cnn_tiny";
  Worst worst;
  for (std::uint64_t seed = 0; seed < options.seeds; ++seed) {
    Rng rng(derive_seed(500, seed));
    nn::CnnBackbone net(8, 9, {2, 2, 2, 2}, 0.0, rng);
    ad::ParameterList params;
    net.collect_parameters(params, "");
    std::vector<ad::Tensor> inputs{random_tensor({2, 1, 8, 9}, rng)};
    for (const auto& p : params) {
      if (p.trainable) inputs.push_back(*p.tensor);
    }
    oracles::TapeFunction f = [&net](ad::Tape&, std::span<const ad::Var> v) {
      nn::CnnBackbone copy = net;  // keeps running statistics untouched
      ad::Var h = v[0];
      for (std::size_t s = 0; s < 4; ++s) {
        auto& st = copy.stages()[s];
        h = ad::conv2d(h, v[1 + 4 * s], v[2 + 4 * s]);
        h = ad::batchnorm2d(h, v[3 + 4 * s], v[4 + 4 * s], st.stats, true);
        h = ad::gelu(h);
        if (s == 1 || s == 3) h = ad::maxpool2d(h);
      }
      return ad::flatten(h);
    };
    const auto r = oracles::gradcheck(maybe_skew(f, inject), inputs, seed);
    for (std::size_t i = 0; i < r.relative_error.size(); ++i) {
      // A conv bias ahead of training-mode batchnorm has an exactly zero
      // gradient; both sides are rounding noise there.
      if (i >= 2 && (i - 2) % 4 == 0) continue;
      worst.add(r.relative_error[i], "input " + std::to_string(i) + " seed " + std::to_string(seed));
    }
  }
  return finish("grad_cnn_tiny", worst, kGradBound, t0);
}

CheckResult check_basis_identities(const SelfcheckOptions& options) {
  const auto t0 = Clock::now();
  const double skew = options.inject == "basis_identities" ? 1e-6 : 0.0;
  // Each identity is normalised to its own tolerance so one bound of 1 applies.
  Worst worst;
  const basis::Grid grid;
  std::vector<double> row(grid.num_intervals() + grid.spline_order());
  for (int i = 0; i < 1000; ++i) {
    const double x = grid.range_min() + (grid.range_max() - grid.range_min()) * (i + 0.5) / 1000.0;
    basis::bspline_row(x, grid, row);
    double s = skew;
    for (double v : row) s += v;
    worst.add(std::abs(s - 1.0) / 1e-9, "partition of unity at " + std::to_string(x));
  }
  std::vector<double> cheb(9);
  for (int i = 0; i <= 1000; ++i) {
    const double u = -0.999 + 1.998 * i / 1000.0;
    basis::chebyshev_row(std::atanh(u), 8, cheb);
    for (std::size_t n = 0; n <= 8; ++n) {
      const double expect = std::cos(static_cast<double>(n) * std::acos(u));
      worst.add(std::abs(cheb[n] + skew - expect) / 1e-10, "chebyshev T" + std::to_string(n));
    }
  }
  Rng rng(600);
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<double> p(6), q(4);
    for (double& v : p) v = -1.0 + 2.0 * uniform01(rng);
    for (double& v : q) v = -1.0 + 2.0 * uniform01(rng);
    for (int i = 0; i < 100000; ++i) {
      const double x = -100.0 + 200.0 * i / 99999.0;
      const std::vector<double> one{1.0};
      // P = 1 exposes 1/D, so D = 1/value.
      const double den = 1.0 / basis::rational_value(x, one, q);
      // Violation > 0 when D < 1; scaled so any violation exceeds the bound.
      worst.add(std::max(0.0, 1.0 - den + skew) * 1e12, "rational denominator");
    }
  }
  return finish("basis_identities", worst, 1.0, t0);
}

CheckResult check_metric_oracle(const SelfcheckOptions& options) {
  const auto t0 = Clock::now();
  const bool inject = options.inject == "metric_oracle";
  Worst worst;
  for (int trial = 0; trial < 100; ++trial) {
    Rng rng(derive_seed(700, static_cast<std::uint64_t>(trial)));
    const std::size_t k = 2 + rng() % 7, n = 1 + rng() % 60;
    std::vector<std::size_t> truth(n), pred(n);
    // Leave the last class out of both sides now and then (zero support).
    const std::size_t used = trial % 4 == 0 ? k - 1 : k;
    for (std::size_t i = 0; i < n; ++i) {
      truth[i] = rng() % used;
      pred[i] = rng() % used;
    }
    std::vector<std::size_t> fed = pred;
    if (inject && trial == 0) fed[0] = (fed[0] + 1) % k;
    const train::MetricsReport m = train::compute_metrics(truth, fed, k);
    const auto confusion = oracles::brute_confusion(truth, pred, k);
    double mismatch = 0.0;
    if (m.accuracy != oracles::brute_accuracy(truth, pred)) mismatch += 1.0;
    if (m.f1_macro != oracles::brute_macro_f1(truth, pred, k)) mismatch += 1.0;
    if (m.confusion != confusion) mismatch += 1.0;
    worst.add(mismatch, "trial " + std::to_string(trial));
  }
  return finish("metric_oracle", worst, 0.5, t0);
}

std::vector<std::string> selfcheck_names() {
  return {"kan_oracle", "grad_primitives", "grad_kan", "grad_ff_block", "grad_cnn_tiny", "basis_identities",
          "metric_oracle"};
}

std::vector<CheckResult> run_selfcheck(const SelfcheckOptions& options) {
  using Check = CheckResult (*)(const SelfcheckOptions&);
  const Check checks[] = {check_kan_oracle,      check_grad_primitives,  check_grad_kan,     check_grad_ff_block,
                          check_grad_cnn_tiny,   check_basis_identities, check_metric_oracle};
  const std::vector<std::string> names = selfcheck_names();
  std::vector<CheckResult> out;
  for (std::size_t i = 0; i < std::size(checks); ++i) {
    try {
      out.push_back(checks[i](options));
    } catch (const std::exception& e) {
      CheckResult r;
      r.name = names[i];
      r.detail = std::string("threw: ") + e.what();
      r.worst = std::numeric_limits<double>::infinity();
      out.push_back(std::move(r));
    }
  }
  return out;
}

}  // namespace kanslu::cli
