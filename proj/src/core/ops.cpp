#include "adx/core/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <string>

#include "adx/core/autograd.hpp"
#include "adx/core/errors.hpp"

namespace adx {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;

// Eigen chooses vectorised kernels by operand address, which changes the
// summation order. Products therefore run on Eigen-owned (aligned) copies so
// results do not depend on where a tensor happens to be allocated.
RowMatrix load(const double* p, Eigen::Index rows, Eigen::Index cols) { return ConstMatrixMap(p, rows, cols); }

std::vector<double> to_vector(const RowMatrix& m) { return {m.data(), m.data() + m.size()}; }

void accumulate(const RowMatrix& m, double* dst) {
  for (Eigen::Index i = 0; i < m.size(); ++i) dst[i] += m.data()[i];
}

using autograd::BackwardContext;
using autograd::record;

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}

template <typename F>
std::vector<double> map_values(std::span<const double> in, F f) {
  std::vector<double> out(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = f(in[i]);
  return out;
}

// Unary op whose derivative is expressed through (input, output).
template <typename Fwd, typename Deriv>
Tensor unary(const Tensor& a, Fwd fwd, Deriv deriv) {
  return record(a.shape(), map_values(a.values(), fwd), {a}, [deriv](const BackwardContext& ctx) {
    auto g = ctx.input_grad(0);
    auto x = ctx.input_value(0);
    auto y = ctx.out_value();
    auto dy = ctx.out_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += dy[i] * deriv(x[i], y[i]);
  });
}

struct SpatialDims {
  std::size_t n, h, w, c;
  bool batched;
};

SpatialDims spatial_dims(const Tensor& t, const char* op) {
  if (t.rank() == 3) return {1, t.dim(0), t.dim(1), t.dim(2), false};
  if (t.rank() == 4) return {t.dim(0), t.dim(1), t.dim(2), t.dim(3), true};
  throw ShapeError(std::string(op) + ": expected [H,W,C] or [N,H,W,C], got " + shape_str(t.shape()));
}

Shape spatial_shape(const SpatialDims& d, std::size_t h, std::size_t w, std::size_t c) {
  if (d.batched) return {d.n, h, w, c};
  return {h, w, c};
}

struct ConvGeometry {
  std::size_t n, h, w, c;
  std::size_t kh, kw, f;
  std::size_t stride;
  std::size_t pad_top, pad_left;
  std::size_t ho, wo;
  std::size_t patch() const { return kh * kw * c; }
  std::size_t pixels() const { return ho * wo; }
};

std::size_t same_padding_before(std::size_t in, std::size_t out, std::size_t k, std::size_t s) {
  const std::size_t needed = (out - 1) * s + k;
  return needed > in ? (needed - in) / 2 : 0;
}

void im2col(const double* x, const ConvGeometry& g, double* cols) {
  const std::size_t patch = g.patch();
  for (std::size_t oy = 0; oy < g.ho; ++oy) {
    for (std::size_t ox = 0; ox < g.wo; ++ox) {
      double* row = cols + (oy * g.wo + ox) * patch;
      for (std::size_t ky = 0; ky < g.kh; ++ky) {
        const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) - static_cast<std::ptrdiff_t>(g.pad_top);
        for (std::size_t kx = 0; kx < g.kw; ++kx) {
          const std::ptrdiff_t ix =
              static_cast<std::ptrdiff_t>(ox * g.stride + kx) - static_cast<std::ptrdiff_t>(g.pad_left);
          double* dst = row + (ky * g.kw + kx) * g.c;
          if (iy < 0 || ix < 0 || iy >= static_cast<std::ptrdiff_t>(g.h) || ix >= static_cast<std::ptrdiff_t>(g.w)) {
            std::fill(dst, dst + g.c, 0.0);
          } else {
            std::memcpy(dst, x + (static_cast<std::size_t>(iy) * g.w + static_cast<std::size_t>(ix)) * g.c,
                        g.c * sizeof(double));
          }
        }
      }
    }
  }
}

void col2im_add(const double* cols, const ConvGeometry& g, double* dx) {
  const std::size_t patch = g.patch();
  for (std::size_t oy = 0; oy < g.ho; ++oy) {
    for (std::size_t ox = 0; ox < g.wo; ++ox) {
      const double* row = cols + (oy * g.wo + ox) * patch;
      for (std::size_t ky = 0; ky < g.kh; ++ky) {
        const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) - static_cast<std::ptrdiff_t>(g.pad_top);
        if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.h)) continue;
        for (std::size_t kx = 0; kx < g.kw; ++kx) {
          const std::ptrdiff_t ix =
              static_cast<std::ptrdiff_t>(ox * g.stride + kx) - static_cast<std::ptrdiff_t>(g.pad_left);
          if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.w)) continue;
          const double* src = row + (ky * g.kw + kx) * g.c;
          double* dst = dx + (static_cast<std::size_t>(iy) * g.w + static_cast<std::size_t>(ix)) * g.c;
          for (std::size_t ch = 0; ch < g.c; ++ch) dst[ch] += src[ch];
        }
      }
    }
  }
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> out(a.numel());
  auto x = a.values();
  auto y = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] + y[i];
  return record(a.shape(), std::move(out), {a, b}, [](const BackwardContext& ctx) {
    auto dy = ctx.out_grad();
    for (std::size_t k = 0; k < 2; ++k) {
      auto g = ctx.input_grad(k);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += dy[i];
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<double> out(a.numel());
  auto x = a.values();
  auto y = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] - y[i];
  return record(a.shape(), std::move(out), {a, b}, [](const BackwardContext& ctx) {
    auto dy = ctx.out_grad();
    auto ga = ctx.input_grad(0);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += dy[i];
    auto gb = ctx.input_grad(1);
    for (std::size_t i = 0; i < gb.size(); ++i) gb[i] -= dy[i];
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<double> out(a.numel());
  auto x = a.values();
  auto y = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * y[i];
  return record(a.shape(), std::move(out), {a, b}, [](const BackwardContext& ctx) {
    auto dy = ctx.out_grad();
    auto xa = ctx.input_value(0);
    auto xb = ctx.input_value(1);
    auto ga = ctx.input_grad(0);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += dy[i] * xb[i];
    auto gb = ctx.input_grad(1);
    for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += dy[i] * xa[i];
  });
}

Tensor div(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "div");
  std::vector<double> out(a.numel());
  auto x = a.values();
  auto y = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] / y[i];
  return record(a.shape(), std::move(out), {a, b}, [](const BackwardContext& ctx) {
    auto dy = ctx.out_grad();
    auto xb = ctx.input_value(1);
    auto q = ctx.out_value();
    auto ga = ctx.input_grad(0);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += dy[i] / xb[i];
    auto gb = ctx.input_grad(1);
    for (std::size_t i = 0; i < gb.size(); ++i) gb[i] -= dy[i] * q[i] / xb[i];
  });
}

Tensor neg(const Tensor& a) { return scale(a, -1.0); }

Tensor scale(const Tensor& a, double factor) {
  return unary(a, [factor](double x) { return x * factor; }, [factor](double, double) { return factor; });
}

Tensor add_scalar(const Tensor& a, double value) {
  return unary(a, [value](double x) { return x + value; }, [](double, double) { return 1.0; });
}

Tensor square(const Tensor& a) {
  return unary(a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Tensor sqrt(const Tensor& a) {
  return unary(a, [](double x) { return std::sqrt(x); },
               [](double, double y) { return y > 0.0 ? 0.5 / y : 0.0; });
}

Tensor exp(const Tensor& a) {
  return unary(a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& a) {
  return unary(a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Tensor add_bias(const Tensor& x, const Tensor& b) {
  if (x.rank() == 0 || b.rank() != 1 || x.shape().back() != b.dim(0)) {
    throw ShapeError("add_bias: bias " + shape_str(b.shape()) + " does not match last axis of " + shape_str(x.shape()));
  }
  const std::size_t c = b.dim(0);
  std::vector<double> out(x.values().begin(), x.values().end());
  auto bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i % c];
  return record(x.shape(), std::move(out), {x, b}, [c](const BackwardContext& ctx) {
    auto dy = ctx.out_grad();
    auto gx = ctx.input_grad(0);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += dy[i];
    auto gb = ctx.input_grad(1);
    if (!gb.empty()) {
      for (std::size_t i = 0; i < dy.size(); ++i) gb[i % c] += dy[i];
    }
  });
}

Tensor sum(const Tensor& a) {
  double total = 0.0;
  for (double v : a.values()) total += v;
  return record({1}, {total}, {a}, [](const BackwardContext& ctx) {
    const double dy = ctx.out_grad()[0];
    for (double& g : ctx.input_grad(0)) g += dy;
  });
}

Tensor mean(const Tensor& a) { return scale(sum(a), 1.0 / static_cast<double>(a.numel())); }

Tensor select(const Tensor& a, std::size_t flat_index) {
  if (flat_index >= a.numel()) {
    throw ShapeError("select: index " + std::to_string(flat_index) + " out of range for " + shape_str(a.shape()));
  }
  return record({1}, {a[flat_index]}, {a}, [flat_index](const BackwardContext& ctx) {
    ctx.input_grad(0)[flat_index] += ctx.out_grad()[0];
  });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw ShapeError("matmul: cannot multiply " + shape_str(a.shape()) + " by " + shape_str(b.shape()));
  }
  const auto m = static_cast<Eigen::Index>(a.dim(0));
  const auto k = static_cast<Eigen::Index>(a.dim(1));
  const auto n = static_cast<Eigen::Index>(b.dim(1));
  RowMatrix prod;
  prod.noalias() = load(a.values().data(), m, k) * load(b.values().data(), k, n);
  return record({a.dim(0), b.dim(1)}, to_vector(prod), {a, b}, [m, k, n](const BackwardContext& ctx) {
    const RowMatrix dy = load(ctx.out_grad().data(), m, n);
    if (auto ga = ctx.input_grad(0); !ga.empty()) {
      RowMatrix p;
      p.noalias() = dy * load(ctx.input_value(1).data(), k, n).transpose();
      accumulate(p, ga.data());
    }
    if (auto gb = ctx.input_grad(1); !gb.empty()) {
      RowMatrix p;
      p.noalias() = load(ctx.input_value(0).data(), m, k).transpose() * dy;
      accumulate(p, gb.data());
    }
  });
}

Tensor matmul_affine(const Tensor& a, const Tensor& w, const Tensor& b) {
  if (w.rank() != 2) throw ShapeError("matmul_affine: weights must be [in,out], got " + shape_str(w.shape()));
  if (b.rank() != 1 || b.dim(0) != w.dim(1)) {
    throw ShapeError("matmul_affine: bias " + shape_str(b.shape()) + " does not match weights " + shape_str(w.shape()));
  }
  if (a.rank() == 1) {
    Tensor y = add_bias(matmul(reshape(a, {1, a.dim(0)}), w), b);
    return reshape(y, {w.dim(1)});
  }
  if (a.rank() != 2) throw ShapeError("matmul_affine: input must be [in] or [M,in], got " + shape_str(a.shape()));
  return add_bias(matmul(a, w), b);
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_numel(shape) != a.numel()) {
    throw ShapeError("reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(shape));
  }
  std::vector<double> out(a.values().begin(), a.values().end());
  return record(std::move(shape), std::move(out), {a}, [](const BackwardContext& ctx) {
    auto g = ctx.input_grad(0);
    auto dy = ctx.out_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += dy[i];
  });
}

Tensor flatten(const Tensor& a) {
  if (a.rank() < 1) throw ShapeError("flatten: rank-0 tensor");
  return reshape(a, {a.dim(0), a.numel() / a.dim(0)});
}

std::size_t conv_output_size(std::size_t in, std::size_t kernel, Conv2dOptions options) {
  if (options.stride == 0) throw ShapeError("conv2d: stride must be >= 1");
  if (kernel == 0) throw ShapeError("conv2d: kernel size must be >= 1");
  if (options.padding == Padding::same) return (in + options.stride - 1) / options.stride;
  if (kernel > in) {
    throw ShapeError("conv2d: kernel " + std::to_string(kernel) + " larger than input extent " + std::to_string(in) +
                     " with valid padding");
  }
  return (in - kernel) / options.stride + 1;
}

Tensor conv2d(const Tensor& input, const Tensor& kernels, Conv2dOptions options) {
  const SpatialDims d = spatial_dims(input, "conv2d");
  if (kernels.rank() != 4) throw ShapeError("conv2d: kernels must be [k,k,C,F], got " + shape_str(kernels.shape()));
  if (kernels.dim(2) != d.c) {
    throw ShapeError("conv2d: input has " + std::to_string(d.c) + " channels but kernels expect " +
                     std::to_string(kernels.dim(2)) + " (input " + shape_str(input.shape()) + ", kernels " +
                     shape_str(kernels.shape()) + ")");
  }
  ConvGeometry g{};
  g.n = d.n;
  g.h = d.h;
  g.w = d.w;
  g.c = d.c;
  g.kh = kernels.dim(0);
  g.kw = kernels.dim(1);
  g.f = kernels.dim(3);
  g.stride = options.stride;
  g.ho = conv_output_size(g.h, g.kh, options);
  g.wo = conv_output_size(g.w, g.kw, options);
  if (options.padding == Padding::same) {
    g.pad_top = same_padding_before(g.h, g.ho, g.kh, g.stride);
    g.pad_left = same_padding_before(g.w, g.wo, g.kw, g.stride);
  }

  const auto rows = static_cast<Eigen::Index>(g.pixels());
  const auto patch = static_cast<Eigen::Index>(g.patch());
  const auto f = static_cast<Eigen::Index>(g.f);
  const std::size_t in_stride = g.h * g.w * g.c;
  const std::size_t out_stride = g.pixels() * g.f;

  std::vector<double> out(g.n * out_stride);
  RowMatrix cols(rows, patch);
  const RowMatrix ker = load(kernels.values().data(), patch, f);
  RowMatrix prod;
  for (std::size_t s = 0; s < g.n; ++s) {
    im2col(input.values().data() + s * in_stride, g, cols.data());
    prod.noalias() = cols * ker;
    std::copy(prod.data(), prod.data() + prod.size(), out.data() + s * out_stride);
  }

  return record(spatial_shape(d, g.ho, g.wo, g.f), std::move(out), {input, kernels},
                [g, rows, patch, f, in_stride, out_stride](const BackwardContext& ctx) {
                  auto gx = ctx.input_grad(0);
                  auto gk = ctx.input_grad(1);
                  const double* x = ctx.input_value(0).data();
                  const RowMatrix ker = load(ctx.input_value(1).data(), patch, f);
                  RowMatrix cols(rows, patch);
                  RowMatrix prod;
                  for (std::size_t s = 0; s < g.n; ++s) {
                    const RowMatrix dy = load(ctx.out_grad().data() + s * out_stride, rows, f);
                    if (!gk.empty()) {
                      im2col(x + s * in_stride, g, cols.data());
                      prod.noalias() = cols.transpose() * dy;
                      accumulate(prod, gk.data());
                    }
                    if (!gx.empty()) {
                      cols.noalias() = dy * ker.transpose();
                      col2im_add(cols.data(), g, gx.data() + s * in_stride);
                    }
                  }
                });
}

Tensor pool2d(const Tensor& input, std::size_t window, PoolMode mode) {
  const SpatialDims d = spatial_dims(input, "pool2d");
  if (window == 0) throw ShapeError("pool2d: window must be >= 1");
  if (window > d.h || window > d.w) {
    throw ShapeError("pool2d: window " + std::to_string(window) + " larger than input " + shape_str(input.shape()));
  }
  const std::size_t ho = d.h / window;
  const std::size_t wo = d.w / window;
  const std::size_t c = d.c;
  std::vector<double> out(d.n * ho * wo * c);
  std::vector<std::size_t> argmax;
  if (mode == PoolMode::max) argmax.resize(out.size());
  auto x = input.values();
  const double inv_area = 1.0 / static_cast<double>(window * window);

  for (std::size_t s = 0; s < d.n; ++s) {
    for (std::size_t oy = 0; oy < ho; ++oy) {
      for (std::size_t ox = 0; ox < wo; ++ox) {
        for (std::size_t ch = 0; ch < c; ++ch) {
          const std::size_t o = ((s * ho + oy) * wo + ox) * c + ch;
          double best = -std::numeric_limits<double>::infinity();
          std::size_t best_index = 0;
          double acc = 0.0;
          for (std::size_t py = 0; py < window; ++py) {
            for (std::size_t px = 0; px < window; ++px) {
              const std::size_t i = ((s * d.h + oy * window + py) * d.w + ox * window + px) * c + ch;
              if (x[i] > best) {
                best = x[i];
                best_index = i;
              }
              acc += x[i];
            }
          }
          if (mode == PoolMode::max) {
            out[o] = best;
            argmax[o] = best_index;
          } else {
            out[o] = acc * inv_area;
          }
        }
      }
    }
  }

  return record(spatial_shape(d, ho, wo, c), std::move(out), {input},
                [d, ho, wo, c, window, mode, inv_area, argmax = std::move(argmax)](const BackwardContext& ctx) {
                  auto gx = ctx.input_grad(0);
                  auto dy = ctx.out_grad();
                  if (mode == PoolMode::max) {
                    for (std::size_t o = 0; o < dy.size(); ++o) gx[argmax[o]] += dy[o];
                    return;
                  }
                  for (std::size_t s = 0; s < d.n; ++s) {
                    for (std::size_t oy = 0; oy < ho; ++oy) {
                      for (std::size_t ox = 0; ox < wo; ++ox) {
                        for (std::size_t ch = 0; ch < c; ++ch) {
                          const double share = dy[((s * ho + oy) * wo + ox) * c + ch] * inv_area;
                          for (std::size_t py = 0; py < window; ++py) {
                            for (std::size_t px = 0; px < window; ++px) {
                              gx[((s * d.h + oy * window + py) * d.w + ox * window + px) * c + ch] += share;
                            }
                          }
                        }
                      }
                    }
                  }
                });
}

Tensor upsample_nearest(const Tensor& input, std::size_t factor) {
  if (input.rank() != 4) throw ShapeError("upsample_nearest: expected [N,H,W,C], got " + shape_str(input.shape()));
  if (factor == 0) throw ShapeError("upsample_nearest: factor must be >= 1");
  const std::size_t n = input.dim(0), h = input.dim(1), w = input.dim(2), c = input.dim(3);
  const std::size_t ho = h * factor, wo = w * factor;
  std::vector<double> out(n * ho * wo * c);
  auto x = input.values();
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t y = 0; y < ho; ++y)
      for (std::size_t xx = 0; xx < wo; ++xx) {
        const double* src = x.data() + ((s * h + y / factor) * w + xx / factor) * c;
        std::copy(src, src + c, out.data() + ((s * ho + y) * wo + xx) * c);
      }
  return record({n, ho, wo, c}, std::move(out), {input}, [n, h, w, c, ho, wo, factor](const BackwardContext& ctx) {
    auto gx = ctx.input_grad(0);
    auto dy = ctx.out_grad();
    for (std::size_t s = 0; s < n; ++s)
      for (std::size_t y = 0; y < ho; ++y)
        for (std::size_t xx = 0; xx < wo; ++xx) {
          const double* src = dy.data() + ((s * ho + y) * wo + xx) * c;
          double* dst = gx.data() + ((s * h + y / factor) * w + xx / factor) * c;
          for (std::size_t ch = 0; ch < c; ++ch) dst[ch] += src[ch];
        }
  });
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  if (a.rank() != 4 || b.rank() != 4 || a.dim(0) != b.dim(0) || a.dim(1) != b.dim(1) || a.dim(2) != b.dim(2)) {
    throw ShapeError("concat_channels: incompatible " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
  }
  const std::size_t pixels = a.dim(0) * a.dim(1) * a.dim(2);
  const std::size_t ca = a.dim(3), cb = b.dim(3), c = ca + cb;
  std::vector<double> out(pixels * c);
  auto va = a.values();
  auto vb = b.values();
  for (std::size_t p = 0; p < pixels; ++p) {
    std::copy_n(va.data() + p * ca, ca, out.data() + p * c);
    std::copy_n(vb.data() + p * cb, cb, out.data() + p * c + ca);
  }
  return record({a.dim(0), a.dim(1), a.dim(2), c}, std::move(out), {a, b},
                [pixels, ca, cb, c](const BackwardContext& ctx) {
                  auto dy = ctx.out_grad();
                  auto ga = ctx.input_grad(0);
                  auto gb = ctx.input_grad(1);
                  for (std::size_t p = 0; p < pixels; ++p) {
                    if (!ga.empty())
                      for (std::size_t ch = 0; ch < ca; ++ch) ga[p * ca + ch] += dy[p * c + ch];
                    if (!gb.empty())
                      for (std::size_t ch = 0; ch < cb; ++ch) gb[p * cb + ch] += dy[p * c + ca + ch];
                  }
                });
}

Tensor global_avg_pool(const Tensor& input) {
  if (input.rank() != 4) throw ShapeError("global_avg_pool: expected [N,H,W,C], got " + shape_str(input.shape()));
  const std::size_t n = input.dim(0), hw = input.dim(1) * input.dim(2), c = input.dim(3);
  const double inv = 1.0 / static_cast<double>(hw);
  std::vector<double> out(n * c, 0.0);
  auto x = input.values();
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t p = 0; p < hw; ++p)
      for (std::size_t ch = 0; ch < c; ++ch) out[s * c + ch] += x[(s * hw + p) * c + ch];
  for (double& v : out) v *= inv;
  return record({n, c}, std::move(out), {input}, [n, hw, c, inv](const BackwardContext& ctx) {
    auto gx = ctx.input_grad(0);
    auto dy = ctx.out_grad();
    for (std::size_t s = 0; s < n; ++s)
      for (std::size_t p = 0; p < hw; ++p)
        for (std::size_t ch = 0; ch < c; ++ch) gx[(s * hw + p) * c + ch] += dy[s * c + ch] * inv;
  });
}

}  // namespace adx
