#include "kanslu/autodiff/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "kanslu/errors.hpp"

namespace kanslu::ad {
namespace {

using MatR = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapR = Eigen::Map<MatR>;
using CMapR = Eigen::Map<const MatR>;
using CMapV = Eigen::Map<const Eigen::RowVectorXd>;

CMapR as_matrix(const Tensor& t, std::size_t rows, std::size_t cols) {
  return CMapR(t.data().data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

MapR as_matrix(std::span<double> s, std::size_t rows, std::size_t cols) {
  return MapR(s.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

CMapR as_matrix(std::span<const double> s, std::size_t rows, std::size_t cols) {
  return CMapR(s.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

void require_rank(const Tensor& t, std::size_t rank, const char* op) {
  if (t.rank() != rank) {
    throw DimensionError(std::string(op) + ": expected rank-" + std::to_string(rank) + " input, got " +
                         shape_str(t.shape()));
  }
}

// `fn(x, &dydx)` returns f(x) and writes f'(x); the derivative is cached for
// backward only when the input needs a gradient.
template <typename Fn>
Var elementwise(Var x, Fn fn) {
  const Tensor& in = x.value();
  Tensor out(in.shape());
  auto src = in.data();
  auto dst = out.data();
  if (!x.requires_grad()) {
    double unused;
    for (std::size_t i = 0; i < src.size(); ++i) dst[i] = fn(src[i], &unused);
    return x.tape().record(std::move(out), {x}, nullptr);
  }
  std::vector<double> deriv(src.size());
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = fn(src[i], &deriv[i]);
  return x.tape().record(std::move(out), {x}, [deriv = std::move(deriv)](BackwardContext& ctx) {
    auto g = ctx.grad_output();
    auto dx = ctx.grad_input(0);
    for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i] * deriv[i];
  });
}

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

void im2col(const double* x, std::size_t cin, std::size_t h, std::size_t w, double* col) {
  const std::size_t ho = h + 2 * kConvPadding - kConvKernel + 1;
  const std::size_t wo = w + 2 * kConvPadding - kConvKernel + 1;
  const auto pad = static_cast<std::ptrdiff_t>(kConvPadding);
  for (std::size_t c = 0; c < cin; ++c) {
    for (std::size_t ky = 0; ky < kConvKernel; ++ky) {
      for (std::size_t kx = 0; kx < kConvKernel; ++kx) {
        double* row = col + ((c * kConvKernel + ky) * kConvKernel + kx) * ho * wo;
        const std::ptrdiff_t x0 = static_cast<std::ptrdiff_t>(kx) - pad;
        const std::size_t lo = static_cast<std::size_t>(std::max<std::ptrdiff_t>(0, -x0));
        const std::size_t hi = static_cast<std::size_t>(
            std::clamp<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(w) - x0, 0, static_cast<std::ptrdiff_t>(wo)));
        for (std::size_t oy = 0; oy < ho; ++oy) {
          double* dst = row + oy * wo;
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy + ky) - pad;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h) || lo >= hi) {
            std::fill(dst, dst + wo, 0.0);
            continue;
          }
          const double* src = x + (c * h + static_cast<std::size_t>(iy)) * w;
          std::fill(dst, dst + lo, 0.0);
          for (std::size_t ox = lo; ox < hi; ++ox) dst[ox] = src[static_cast<std::ptrdiff_t>(ox) + x0];
          std::fill(dst + hi, dst + wo, 0.0);
        }
      }
    }
  }
}

void col2im_add(const double* col, std::size_t cin, std::size_t h, std::size_t w, double* x) {
  const std::size_t ho = h + 2 * kConvPadding - kConvKernel + 1;
  const std::size_t wo = w + 2 * kConvPadding - kConvKernel + 1;
  const auto pad = static_cast<std::ptrdiff_t>(kConvPadding);
  for (std::size_t c = 0; c < cin; ++c) {
    for (std::size_t ky = 0; ky < kConvKernel; ++ky) {
      for (std::size_t kx = 0; kx < kConvKernel; ++kx) {
        const double* row = col + ((c * kConvKernel + ky) * kConvKernel + kx) * ho * wo;
        const std::ptrdiff_t x0 = static_cast<std::ptrdiff_t>(kx) - pad;
        const std::size_t lo = static_cast<std::size_t>(std::max<std::ptrdiff_t>(0, -x0));
        const std::size_t hi = static_cast<std::size_t>(
            std::clamp<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(w) - x0, 0, static_cast<std::ptrdiff_t>(wo)));
        for (std::size_t oy = 0; oy < ho; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy + ky) - pad;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
          const double* src = row + oy * wo;
          double* dst = x + (c * h + static_cast<std::size_t>(iy)) * w;
          for (std::size_t ox = lo; ox < hi; ++ox) dst[static_cast<std::ptrdiff_t>(ox) + x0] += src[ox];
        }
      }
    }
  }
}

}  // namespace

double gelu_value(double x) { return 0.5 * x * std::erfc(-x * kInvSqrt2); }

double gelu_derivative(double x) {
  return 0.5 * std::erfc(-x * kInvSqrt2) + x * kInvSqrt2Pi * std::exp(-0.5 * x * x);
}

namespace {
double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}
}  // namespace

double swish_value(double x) { return x * sigmoid(x); }

double swish_derivative(double x) {
  const double s = sigmoid(x);
  return s + x * s * (1.0 - s);
}

Var matmul(Var a, Var b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.rank() != 2 || bv.rank() != 2 || av.dim(1) != bv.dim(0)) {
    throw DimensionError("matmul: incompatible shapes " + shape_str(av.shape()) + " and " + shape_str(bv.shape()));
  }
  const std::size_t m = av.dim(0), k = av.dim(1), n = bv.dim(1);
  Tensor out({m, n});
  as_matrix(out.data(), m, n).noalias() = as_matrix(av, m, k) * as_matrix(bv, k, n);
  return a.tape().record(std::move(out), {a, b}, [m, k, n](BackwardContext& ctx) {
    auto g = as_matrix(ctx.grad_output(), m, n);
    if (ctx.needs_grad(0)) as_matrix(ctx.grad_input(0), m, k).noalias() += g * as_matrix(ctx.input(1), k, n).transpose();
    if (ctx.needs_grad(1)) as_matrix(ctx.grad_input(1), k, n).noalias() += as_matrix(ctx.input(0), m, k).transpose() * g;
  });
}

Var linear(Var x, Var weight, Var bias) {
  const Tensor& xv = x.value();
  const Tensor& wv = weight.value();
  const Tensor& bv = bias.value();
  if (xv.rank() != 2 || wv.rank() != 2 || xv.dim(1) != wv.dim(1) || bv.numel() != wv.dim(0)) {
    throw DimensionError("linear: input " + shape_str(xv.shape()) + " does not fit weight " + shape_str(wv.shape()) +
                         " and bias " + shape_str(bv.shape()));
  }
  const std::size_t batch = xv.dim(0), in = xv.dim(1), out_dim = wv.dim(0);
  Tensor out({batch, out_dim});
  auto y = as_matrix(out.data(), batch, out_dim);
  y.noalias() = as_matrix(xv, batch, in) * as_matrix(wv, out_dim, in).transpose();
  y.rowwise() += CMapV(bv.data().data(), static_cast<Eigen::Index>(out_dim));
  return x.tape().record(std::move(out), {x, weight, bias}, [batch, in, out_dim](BackwardContext& ctx) {
    auto g = as_matrix(ctx.grad_output(), batch, out_dim);
    if (ctx.needs_grad(0)) {
      as_matrix(ctx.grad_input(0), batch, in).noalias() += g * as_matrix(ctx.input(1), out_dim, in);
    }
    if (ctx.needs_grad(1)) {
      as_matrix(ctx.grad_input(1), out_dim, in).noalias() += g.transpose() * as_matrix(ctx.input(0), batch, in);
    }
    if (ctx.needs_grad(2)) {
      as_matrix(ctx.grad_input(2), 1, out_dim) += g.colwise().sum();
    }
  });
}

Var add(Var a, Var b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.shape() != bv.shape()) {
    throw DimensionError("add: shapes " + shape_str(av.shape()) + " and " + shape_str(bv.shape()) + " differ");
  }
  Tensor out = av;
  out.clear_grad();
  out.set_requires_grad(false);
  auto o = out.data();
  auto bs = bv.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] += bs[i];
  return a.tape().record(std::move(out), {a, b}, [](BackwardContext& ctx) {
    auto g = ctx.grad_output();
    for (std::size_t k = 0; k < 2; ++k) {
      if (!ctx.needs_grad(k)) continue;
      auto d = ctx.grad_input(k);
      for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i];
    }
  });
}

Var scale(Var x, Var s) {
  const Tensor& xv = x.value();
  const double factor = s.value().item();
  Tensor out(xv.shape());
  auto o = out.data();
  auto xs = xv.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = factor * xs[i];
  return x.tape().record(std::move(out), {x, s}, [](BackwardContext& ctx) {
    auto g = ctx.grad_output();
    auto xs = ctx.input(0).data();
    const double f = ctx.input(1).item();
    if (ctx.needs_grad(0)) {
      auto dx = ctx.grad_input(0);
      for (std::size_t i = 0; i < g.size(); ++i) dx[i] += f * g[i];
    }
    if (ctx.needs_grad(1)) {
      double acc = 0.0;
      for (std::size_t i = 0; i < g.size(); ++i) acc += g[i] * xs[i];
      ctx.grad_input(1)[0] += acc;
    }
  });
}

Var sum(Var x) {
  double acc = 0.0;
  for (double v : x.value().data()) acc += v;
  return x.tape().record(Tensor::scalar(acc), {x}, [](BackwardContext& ctx) {
    const double g = ctx.grad_output()[0];
    for (double& d : ctx.grad_input(0)) d += g;
  });
}

Var weighted_sum(Var x, std::span<const double> weights) {
  const Tensor& xv = x.value();
  if (weights.size() != xv.numel()) {
    throw DimensionError("weighted_sum: " + std::to_string(weights.size()) + " weights for tensor " +
                         shape_str(xv.shape()));
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) acc += weights[i] * xv[i];
  std::vector<double> w(weights.begin(), weights.end());
  return x.tape().record(Tensor::scalar(acc), {x}, [w = std::move(w)](BackwardContext& ctx) {
    const double g = ctx.grad_output()[0];
    auto dx = ctx.grad_input(0);
    for (std::size_t i = 0; i < w.size(); ++i) dx[i] += g * w[i];
  });
}

Var reshape(Var x, Shape shape) {
  Tensor out = x.value().reshaped(std::move(shape));
  out.clear_grad();
  out.set_requires_grad(false);
  return x.tape().record(std::move(out), {x}, [](BackwardContext& ctx) {
    auto g = ctx.grad_output();
    auto dx = ctx.grad_input(0);
    for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i];
  });
}

Var flatten(Var x) {
  const Shape& s = x.shape();
  if (s.empty()) throw DimensionError("flatten: scalar input");
  const std::size_t batch = s[0];
  return reshape(x, {batch, batch ? x.value().numel() / batch : 0});
}

Var gelu(Var x) {
  return elementwise(x, [](double v, double* d) {
    const double cdf = 0.5 * std::erfc(-v * kInvSqrt2);
    *d = cdf + v * kInvSqrt2Pi * std::exp(-0.5 * v * v);
    return v * cdf;
  });
}

Var swish(Var x) {
  return elementwise(x, [](double v, double* d) {
    const double s = sigmoid(v);
    *d = s + v * s * (1.0 - s);
    return v * s;
  });
}

Var conv2d(Var x, Var kernel, Var bias) {
  const Tensor& xv = x.value();
  const Tensor& kv = kernel.value();
  require_rank(xv, 4, "conv2d");
  require_rank(kv, 4, "conv2d kernel");
  if (kv.dim(2) != kConvKernel || kv.dim(3) != kConvKernel) {
    throw DimensionError("conv2d: kernel must be 3x3, got " + shape_str(kv.shape()));
  }
  if (kv.dim(1) != xv.dim(1)) {
    throw DimensionError("conv2d: input " + shape_str(xv.shape()) + " has " + std::to_string(xv.dim(1)) +
                         " channels but kernel " + shape_str(kv.shape()) + " expects " + std::to_string(kv.dim(1)));
  }
  if (bias.value().numel() != kv.dim(0)) {
    throw DimensionError("conv2d: bias " + shape_str(bias.shape()) + " does not match kernel " +
                         shape_str(kv.shape()));
  }
  const std::size_t batch = xv.dim(0), cin = xv.dim(1), h = xv.dim(2), w = xv.dim(3), cout = kv.dim(0);
  const std::size_t ho = h + 2 * kConvPadding - kConvKernel + 1;
  const std::size_t wo = w + 2 * kConvPadding - kConvKernel + 1;
  const std::size_t patch = cin * kConvKernel * kConvKernel;
  const std::size_t plane = ho * wo;

  Tensor out({batch, cout, ho, wo});
  Buffer col(patch * plane);
  auto kmat = as_matrix(kv, cout, patch);
  auto bvec = bias.value().data();
  for (std::size_t b = 0; b < batch; ++b) {
    im2col(xv.data().data() + b * cin * h * w, cin, h, w, col.data());
    auto y = as_matrix(out.data().subspan(b * cout * plane, cout * plane), cout, plane);
    y.noalias() = kmat * as_matrix(std::span<const double>(col), patch, plane);
    for (std::size_t c = 0; c < cout; ++c) y.row(static_cast<Eigen::Index>(c)).array() += bvec[c];
  }

  return x.tape().record(
      std::move(out), {x, kernel, bias}, [batch, cin, h, w, cout, patch, plane](BackwardContext& ctx) {
        auto g = ctx.grad_output();
        const Tensor& xin = ctx.input(0);
        const Tensor& k = ctx.input(1);
        const bool need_x = ctx.needs_grad(0), need_k = ctx.needs_grad(1), need_b = ctx.needs_grad(2);
        Buffer col(patch * plane);
        Buffer dcol(need_x ? patch * plane : 0);
        for (std::size_t b = 0; b < batch; ++b) {
          auto gb = as_matrix(g.subspan(b * cout * plane, cout * plane), cout, plane);
          if (need_k) {
            im2col(xin.data().data() + b * cin * h * w, cin, h, w, col.data());
            as_matrix(ctx.grad_input(1), cout, patch).noalias() +=
                gb * as_matrix(std::span<const double>(col), patch, plane).transpose();
          }
          if (need_b) {
            auto db = ctx.grad_input(2);
            for (std::size_t c = 0; c < cout; ++c) db[c] += gb.row(static_cast<Eigen::Index>(c)).sum();
          }
          if (need_x) {
            as_matrix(std::span<double>(dcol), patch, plane).noalias() = as_matrix(k, cout, patch).transpose() * gb;
            col2im_add(dcol.data(), cin, h, w, ctx.grad_input(0).data() + b * cin * h * w);
          }
        }
      });
}

Var batchnorm2d(Var x, Var gamma, Var beta, BatchNormStats& stats, bool training) {
  const Tensor& xv = x.value();
  require_rank(xv, 4, "batchnorm2d");
  const std::size_t batch = xv.dim(0), channels = xv.dim(1), plane = xv.dim(2) * xv.dim(3);
  if (gamma.value().numel() != channels || beta.value().numel() != channels ||
      stats.running_mean.numel() != channels || stats.running_var.numel() != channels) {
    throw DimensionError("batchnorm2d: parameters do not match " + std::to_string(channels) + " channels of " +
                         shape_str(xv.shape()));
  }
  const std::size_t count = batch * plane;
  if (training && count < 2) {
    throw DegenerateBatchError("batchnorm2d: training mode needs at least 2 values per channel, got " +
                               std::to_string(count));
  }
  auto xs = xv.data();
  std::vector<double> mean(channels), inv_std(channels);
  for (std::size_t c = 0; c < channels; ++c) {
    if (training) {
      double m = 0.0;
      for (std::size_t b = 0; b < batch; ++b) {
        const double* p = xs.data() + (b * channels + c) * plane;
        for (std::size_t i = 0; i < plane; ++i) m += p[i];
      }
      m /= static_cast<double>(count);
      double v = 0.0;
      for (std::size_t b = 0; b < batch; ++b) {
        const double* p = xs.data() + (b * channels + c) * plane;
        for (std::size_t i = 0; i < plane; ++i) v += (p[i] - m) * (p[i] - m);
      }
      v /= static_cast<double>(count);
      mean[c] = m;
      inv_std[c] = 1.0 / std::sqrt(v + kNormEpsilon);
      const double unbiased = v * static_cast<double>(count) / static_cast<double>(count - 1);
      stats.running_mean[c] = (1.0 - kBatchNormMomentum) * stats.running_mean[c] + kBatchNormMomentum * m;
      stats.running_var[c] = (1.0 - kBatchNormMomentum) * stats.running_var[c] + kBatchNormMomentum * unbiased;
    } else {
      mean[c] = stats.running_mean[c];
      inv_std[c] = 1.0 / std::sqrt(stats.running_var[c] + kNormEpsilon);
    }
  }
  Tensor out(xv.shape());
  auto o = out.data();
  auto gs = gamma.value().data();
  auto bs = beta.value().data();
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t c = 0; c < channels; ++c) {
      const std::size_t off = (b * channels + c) * plane;
      const double sc = gs[c] * inv_std[c];
      const double sh = bs[c] - mean[c] * sc;
      for (std::size_t i = 0; i < plane; ++i) o[off + i] = xs[off + i] * sc + sh;
    }
  }
  return x.tape().record(
      std::move(out), {x, gamma, beta},
      [batch, channels, plane, count, training, mean = std::move(mean),
       inv_std = std::move(inv_std)](BackwardContext& ctx) {
        auto g = ctx.grad_output();
        auto xs = ctx.input(0).data();
        auto gs = ctx.input(1).data();
        for (std::size_t c = 0; c < channels; ++c) {
          double sum_g = 0.0, sum_gx = 0.0;
          for (std::size_t b = 0; b < batch; ++b) {
            const std::size_t off = (b * channels + c) * plane;
            for (std::size_t i = 0; i < plane; ++i) {
              const double xhat = (xs[off + i] - mean[c]) * inv_std[c];
              sum_g += g[off + i];
              sum_gx += g[off + i] * xhat;
            }
          }
          if (ctx.needs_grad(1)) ctx.grad_input(1)[c] += sum_gx;
          if (ctx.needs_grad(2)) ctx.grad_input(2)[c] += sum_g;
          if (!ctx.needs_grad(0)) continue;
          auto dx = ctx.grad_input(0);
          const double k = gs[c] * inv_std[c];
          const double n = static_cast<double>(count);
          for (std::size_t b = 0; b < batch; ++b) {
            const std::size_t off = (b * channels + c) * plane;
            for (std::size_t i = 0; i < plane; ++i) {
              if (training) {
                const double xhat = (xs[off + i] - mean[c]) * inv_std[c];
                dx[off + i] += k * (g[off + i] - sum_g / n - xhat * sum_gx / n);
              } else {
                dx[off + i] += k * g[off + i];
              }
            }
          }
        }
      });
}

Var layernorm(Var x, Var gamma, Var beta) {
  const Tensor& xv = x.value();
  require_rank(xv, 2, "layernorm");
  const std::size_t rows = xv.dim(0), d = xv.dim(1);
  if (d < 2) throw DimensionError("layernorm: feature width must be at least 2, got " + shape_str(xv.shape()));
  if (gamma.value().numel() != d || beta.value().numel() != d) {
    throw DimensionError("layernorm: parameters " + shape_str(gamma.shape()) + " do not match input " +
                         shape_str(xv.shape()));
  }
  auto xs = xv.data();
  auto gs = gamma.value().data();
  auto bs = beta.value().data();
  Tensor out(xv.shape());
  auto o = out.data();
  std::vector<double> mean(rows), inv_std(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* p = xs.data() + r * d;
    double m = 0.0;
    for (std::size_t i = 0; i < d; ++i) m += p[i];
    m /= static_cast<double>(d);
    double v = 0.0;
    for (std::size_t i = 0; i < d; ++i) v += (p[i] - m) * (p[i] - m);
    v /= static_cast<double>(d);
    mean[r] = m;
    inv_std[r] = 1.0 / std::sqrt(v + kNormEpsilon);
    for (std::size_t i = 0; i < d; ++i) o[r * d + i] = gs[i] * (p[i] - m) * inv_std[r] + bs[i];
  }
  return x.tape().record(
      std::move(out), {x, gamma, beta},
      [rows, d, mean = std::move(mean), inv_std = std::move(inv_std)](BackwardContext& ctx) {
        auto g = ctx.grad_output();
        auto xs = ctx.input(0).data();
        auto gs = ctx.input(1).data();
        const bool need_x = ctx.needs_grad(0), need_g = ctx.needs_grad(1), need_b = ctx.needs_grad(2);
        std::span<double> dx = need_x ? ctx.grad_input(0) : std::span<double>();
        std::span<double> dg = need_g ? ctx.grad_input(1) : std::span<double>();
        std::span<double> db = need_b ? ctx.grad_input(2) : std::span<double>();
        const double n = static_cast<double>(d);
        for (std::size_t r = 0; r < rows; ++r) {
          double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
          for (std::size_t i = 0; i < d; ++i) {
            const double xhat = (xs[r * d + i] - mean[r]) * inv_std[r];
            const double gi = g[r * d + i];
            if (need_g) dg[i] += gi * xhat;
            if (need_b) db[i] += gi;
            sum_dxhat += gi * gs[i];
            sum_dxhat_xhat += gi * gs[i] * xhat;
          }
          if (!need_x) continue;
          for (std::size_t i = 0; i < d; ++i) {
            const double xhat = (xs[r * d + i] - mean[r]) * inv_std[r];
            const double dxhat = g[r * d + i] * gs[i];
            dx[r * d + i] += inv_std[r] * (dxhat - sum_dxhat / n - xhat * sum_dxhat_xhat / n);
          }
        }
      });
}

Var maxpool2d(Var x) {
  const Tensor& xv = x.value();
  require_rank(xv, 4, "maxpool2d");
  const std::size_t batch = xv.dim(0), channels = xv.dim(1), h = xv.dim(2), w = xv.dim(3);
  if (h < 2 || w < 2) throw DimensionError("maxpool2d: spatial size must be at least 2x2, got " + shape_str(xv.shape()));
  const std::size_t ho = h / 2, wo = w / 2;
  Tensor out({batch, channels, ho, wo});
  std::vector<std::uint32_t> argmax(out.numel());
  auto xs = xv.data();
  auto o = out.data();
  for (std::size_t bc = 0; bc < batch * channels; ++bc) {
    const std::size_t in_off = bc * h * w;
    const std::size_t out_off = bc * ho * wo;
    for (std::size_t oy = 0; oy < ho; ++oy) {
      for (std::size_t ox = 0; ox < wo; ++ox) {
        std::size_t best = in_off + 2 * oy * w + 2 * ox;
        for (std::size_t dy = 0; dy < 2; ++dy) {
          for (std::size_t dx = 0; dx < 2; ++dx) {
            const std::size_t idx = in_off + (2 * oy + dy) * w + 2 * ox + dx;
            if (xs[idx] > xs[best]) best = idx;
          }
        }
        o[out_off + oy * wo + ox] = xs[best];
        argmax[out_off + oy * wo + ox] = static_cast<std::uint32_t>(best);
      }
    }
  }
  return x.tape().record(std::move(out), {x}, [argmax = std::move(argmax)](BackwardContext& ctx) {
    auto g = ctx.grad_output();
    auto dx = ctx.grad_input(0);
    for (std::size_t i = 0; i < g.size(); ++i) dx[argmax[i]] += g[i];
  });
}

Var dropout(Var x, double p, bool training, Rng& rng) {
  if (!(p >= 0.0 && p < 1.0)) throw ParameterError("dropout probability must be in [0, 1), got " + std::to_string(p));
  if (!training || p == 0.0) return x;
  const Tensor& xv = x.value();
  const double keep_scale = 1.0 / (1.0 - p);
  std::vector<std::uint8_t> keep(xv.numel());
  Tensor out(xv.shape());
  auto xs = xv.data();
  auto o = out.data();
  // Two 32-bit uniforms per draw.
  const double threshold = p * 0x1.0p32;
  for (std::size_t i = 0; i < keep.size(); i += 2) {
    const std::uint64_t bits = rng();
    keep[i] = static_cast<double>(bits & 0xFFFFFFFFu) >= threshold;
    if (i + 1 < keep.size()) keep[i + 1] = static_cast<double>(bits >> 32) >= threshold;
  }
  for (std::size_t i = 0; i < keep.size(); ++i) o[i] = keep[i] ? xs[i] * keep_scale : 0.0;
  return x.tape().record(std::move(out), {x}, [keep = std::move(keep), keep_scale](BackwardContext& ctx) {
    auto g = ctx.grad_output();
    auto dx = ctx.grad_input(0);
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (keep[i]) dx[i] += g[i] * keep_scale;
    }
  });
}

Tensor softmax_rows(const Tensor& logits) {
  require_rank(logits, 2, "softmax");
  const std::size_t rows = logits.dim(0), k = logits.dim(1);
  Tensor out(logits.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* l = logits.data().data() + r * k;
    double* p = out.data().data() + r * k;
    const double m = *std::max_element(l, l + k);
    double z = 0.0;
    for (std::size_t j = 0; j < k; ++j) z += (p[j] = std::exp(l[j] - m));
    for (std::size_t j = 0; j < k; ++j) p[j] /= z;
  }
  return out;
}

Var softmax_cross_entropy(Var logits, std::span<const std::size_t> targets) {
  const Tensor& lv = logits.value();
  require_rank(lv, 2, "softmax_cross_entropy");
  const std::size_t rows = lv.dim(0), k = lv.dim(1);
  if (targets.size() != rows) {
    throw DimensionError("softmax_cross_entropy: " + std::to_string(targets.size()) + " targets for logits " +
                         shape_str(lv.shape()));
  }
  if (rows == 0) throw DimensionError("softmax_cross_entropy: empty batch");
  double loss = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    if (targets[r] >= k) {
      throw IndexError("target " + std::to_string(targets[r]) + " out of range for " + std::to_string(k) +
                       " classes");
    }
    const double* l = lv.data().data() + r * k;
    const double m = *std::max_element(l, l + k);
    double z = 0.0;
    for (std::size_t j = 0; j < k; ++j) z += std::exp(l[j] - m);
    loss += m + std::log(z) - l[targets[r]];
  }
  loss /= static_cast<double>(rows);
  std::vector<std::size_t> t(targets.begin(), targets.end());
  return logits.tape().record(Tensor::scalar(loss), {logits}, [rows, k, t = std::move(t)](BackwardContext& ctx) {
    const double g = ctx.grad_output()[0] / static_cast<double>(rows);
    Tensor probs = softmax_rows(ctx.input(0));
    auto dx = ctx.grad_input(0);
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t j = 0; j < k; ++j) {
        dx[r * k + j] += g * (probs[r * k + j] - (j == t[r] ? 1.0 : 0.0));
      }
    }
  });
}

}  // namespace kanslu::ad
