#include "adx/nn/functional.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "adx/core/autograd.hpp"
#include "adx/core/errors.hpp"

namespace adx::nn {

using autograd::BackwardContext;
using autograd::record;

Tensor relu(const Tensor& x) {
  std::vector<double> out(x.numel());
  auto v = x.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = v[i] > 0.0 ? v[i] : 0.0;
  return record(x.shape(), std::move(out), {x}, [](const BackwardContext& ctx) {
    auto g = ctx.input_grad(0);
    auto in = ctx.input_value(0);
    auto dy = ctx.out_grad();
    for (std::size_t i = 0; i < g.size(); ++i)
      if (in[i] > 0.0) g[i] += dy[i];
  });
}

Tensor leaky_relu(const Tensor& x, double slope) {
  if (!(slope > 0.0 && slope < 1.0)) throw std::invalid_argument("leaky_relu: slope must be in (0,1)");
  std::vector<double> out(x.numel());
  auto v = x.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = v[i] > 0.0 ? v[i] : slope * v[i];
  return record(x.shape(), std::move(out), {x}, [slope](const BackwardContext& ctx) {
    auto g = ctx.input_grad(0);
    auto in = ctx.input_value(0);
    auto dy = ctx.out_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += in[i] > 0.0 ? dy[i] : slope * dy[i];
  });
}

Tensor softplus(const Tensor& x, double beta) {
  if (!(beta > 0.0)) throw std::invalid_argument("softplus: beta must be > 0");
  std::vector<double> out(x.numel());
  auto v = x.values();
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double bx = beta * v[i];
    out[i] = bx > kSoftplusThreshold ? v[i] + std::log1p(std::exp(-bx)) / beta : std::log1p(std::exp(bx)) / beta;
  }
  return record(x.shape(), std::move(out), {x}, [beta](const BackwardContext& ctx) {
    auto g = ctx.input_grad(0);
    auto in = ctx.input_value(0);
    auto dy = ctx.out_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += dy[i] / (1.0 + std::exp(-beta * in[i]));
  });
}

Tensor softmax(const Tensor& logits) {
  if (logits.rank() == 0) throw ShapeError("softmax: rank-0 tensor");
  const std::size_t k = logits.shape().back();
  const std::size_t rows = logits.numel() / k;
  std::vector<double> out(logits.numel());
  auto v = logits.values();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = v.data() + r * k;
    double* o = out.data() + r * k;
    const double shift = *std::max_element(in, in + k);
    double total = 0.0;
    for (std::size_t j = 0; j < k; ++j) total += (o[j] = std::exp(in[j] - shift));
    for (std::size_t j = 0; j < k; ++j) o[j] /= total;
  }
  return record(logits.shape(), std::move(out), {logits}, [k, rows](const BackwardContext& ctx) {
    auto g = ctx.input_grad(0);
    auto y = ctx.out_value();
    auto dy = ctx.out_grad();
    for (std::size_t r = 0; r < rows; ++r) {
      double dot = 0.0;
      for (std::size_t j = 0; j < k; ++j) dot += dy[r * k + j] * y[r * k + j];
      for (std::size_t j = 0; j < k; ++j) g[r * k + j] += y[r * k + j] * (dy[r * k + j] - dot);
    }
  });
}

Tensor dropout(const Tensor& x, double rate, Mode mode, SeededRng& rng) {
  if (!(rate >= 0.0 && rate < 1.0)) throw std::invalid_argument("dropout: rate must be in [0,1)");
  if (mode == Mode::eval || rate == 0.0) return x;
  const double keep_scale = 1.0 / (1.0 - rate);
  std::vector<double> mask(x.numel());
  for (auto& m : mask) m = rng.uniform() < rate ? 0.0 : keep_scale;
  std::vector<double> out(x.numel());
  auto v = x.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = v[i] * mask[i];
  return record(x.shape(), std::move(out), {x}, [mask = std::move(mask)](const BackwardContext& ctx) {
    auto g = ctx.input_grad(0);
    auto dy = ctx.out_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += dy[i] * mask[i];
  });
}

BatchNormState BatchNormState::create(std::size_t channels, double eps, double momentum) {
  if (!(eps > 0.0)) throw std::invalid_argument("batchnorm: eps must be > 0");
  if (!(momentum > 0.0 && momentum <= 1.0)) throw std::invalid_argument("batchnorm: momentum must be in (0,1]");
  BatchNormState s;
  s.gamma = Tensor::full({channels}, 1.0, true);
  s.beta = Tensor::zeros({channels}, true);
  s.running_mean = Tensor::zeros({channels});
  s.running_var = Tensor::full({channels}, 1.0);
  s.eps = eps;
  s.momentum = momentum;
  return s;
}

Tensor batchnorm(const Tensor& x, BatchNormState& state, Mode mode) {
  if (x.rank() < 2) throw ShapeError("batchnorm: expected [N,...,C], got " + shape_str(x.shape()));
  const std::size_t c = x.shape().back();
  if (state.gamma.numel() != c) {
    throw ShapeError("batchnorm: state has " + std::to_string(state.gamma.numel()) + " channels, input " +
                     shape_str(x.shape()));
  }
  const std::size_t m = x.numel() / c;
  auto v = x.values();
  auto gamma = state.gamma.values();
  auto beta = state.beta.values();

  std::vector<double> mu(c, 0.0), var(c, 0.0);
  if (mode == Mode::train) {
    if (x.dim(0) < 2) throw ShapeError("batchnorm: train mode needs a batch of at least 2 samples");
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t ch = 0; ch < c; ++ch) mu[ch] += v[i * c + ch];
    for (auto& s : mu) s /= static_cast<double>(m);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t ch = 0; ch < c; ++ch) {
        const double d = v[i * c + ch] - mu[ch];
        var[ch] += d * d;
      }
    auto rm = state.running_mean.mutable_values();
    auto rv = state.running_var.mutable_values();
    for (std::size_t ch = 0; ch < c; ++ch) {
      const double unbiased = var[ch] / static_cast<double>(m - 1);
      var[ch] /= static_cast<double>(m);
      rm[ch] = (1.0 - state.momentum) * rm[ch] + state.momentum * mu[ch];
      rv[ch] = (1.0 - state.momentum) * rv[ch] + state.momentum * unbiased;
    }
  } else {
    auto rm = state.running_mean.values();
    auto rv = state.running_var.values();
    std::copy(rm.begin(), rm.end(), mu.begin());
    std::copy(rv.begin(), rv.end(), var.begin());
  }

  std::vector<double> inv_std(c);
  for (std::size_t ch = 0; ch < c; ++ch) inv_std[ch] = 1.0 / std::sqrt(var[ch] + state.eps);
  std::vector<double> xhat(x.numel()), out(x.numel());
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t ch = 0; ch < c; ++ch) {
      const std::size_t k = i * c + ch;
      xhat[k] = (v[k] - mu[ch]) * inv_std[ch];
      out[k] = gamma[ch] * xhat[k] + beta[ch];
    }

  const bool batch_stats = mode == Mode::train;
  return record(x.shape(), std::move(out), {x, state.gamma, state.beta},
                [c, m, batch_stats, inv_std = std::move(inv_std), xhat = std::move(xhat)](const BackwardContext& ctx) {
                  auto dy = ctx.out_grad();
                  auto gamma = ctx.input_value(1);
                  std::vector<double> sum_dy(c, 0.0), sum_dy_xhat(c, 0.0);
                  for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t ch = 0; ch < c; ++ch) {
                      sum_dy[ch] += dy[i * c + ch];
                      sum_dy_xhat[ch] += dy[i * c + ch] * xhat[i * c + ch];
                    }
                  if (auto gg = ctx.input_grad(1); !gg.empty())
                    for (std::size_t ch = 0; ch < c; ++ch) gg[ch] += sum_dy_xhat[ch];
                  if (auto gb = ctx.input_grad(2); !gb.empty())
                    for (std::size_t ch = 0; ch < c; ++ch) gb[ch] += sum_dy[ch];
                  auto gx = ctx.input_grad(0);
                  if (gx.empty()) return;
                  const double inv_m = 1.0 / static_cast<double>(m);
                  for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t ch = 0; ch < c; ++ch) {
                      const std::size_t k = i * c + ch;
                      const double scale = gamma[ch] * inv_std[ch];
                      if (batch_stats) {
                        gx[k] += scale * (dy[k] - inv_m * sum_dy[ch] - xhat[k] * inv_m * sum_dy_xhat[ch]);
                      } else {
                        gx[k] += scale * dy[k];
                      }
                    }
                });
}

}  // namespace adx::nn
