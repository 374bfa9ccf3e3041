#pragma once

#include <cstddef>

#include "adx/core/tensor.hpp"

namespace adx {

// Elementwise arithmetic. Binary ops require identical shapes.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor neg(const Tensor& a);
Tensor scale(const Tensor& a, double factor);
Tensor add_scalar(const Tensor& a, double value);
Tensor square(const Tensor& a);
/// sqrt with a zero gradient wherever the output is exactly zero.
Tensor sqrt(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator*(const Tensor& a, double s) { return scale(a, s); }
inline Tensor operator*(double s, const Tensor& a) { return scale(a, s); }
inline Tensor operator-(const Tensor& a) { return neg(a); }

/// Adds b (shape [C]) along the last axis of x.
Tensor add_bias(const Tensor& x, const Tensor& b);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

/// Single element as a scalar tensor.
Tensor select(const Tensor& a, std::size_t flat_index);

/// [M,K] x [K,N] -> [M,N].
Tensor matmul(const Tensor& a, const Tensor& b);

/// Fully connected map y = a·W + b. a is [in] or [M,in], W is [in,out],
/// b is [out]; the result is [out] or [M,out].
Tensor matmul_affine(const Tensor& a, const Tensor& w, const Tensor& b);

Tensor reshape(const Tensor& a, Shape shape);
/// [N, ...] -> [N, prod(...)].
Tensor flatten(const Tensor& a);

enum class Padding { valid, same };

struct Conv2dOptions {
  std::size_t stride = 1;
  Padding padding = Padding::valid;
};

/// 2-D cross-correlation in channels-last layout.
/// input [H,W,C] or [N,H,W,C]; kernels [k,k,C,F]; output [Ho,Wo,F] or
/// [N,Ho,Wo,F]. Valid padding gives Ho = (H-k)/stride + 1; same padding
/// gives Ho = ceil(H/stride) with zero padding split evenly (extra row/column
/// on the bottom/right).
Tensor conv2d(const Tensor& input, const Tensor& kernels, Conv2dOptions options = {});

/// Output spatial size of conv2d along one axis; throws ShapeError if the
/// kernel does not fit.
std::size_t conv_output_size(std::size_t in, std::size_t kernel, Conv2dOptions options);

enum class PoolMode { max, avg };

/// Non-overlapping p x p pooling with stride p; output is floor(H/p) x floor(W/p).
/// Accepts [H,W,C] or [N,H,W,C].
Tensor pool2d(const Tensor& input, std::size_t window, PoolMode mode);

/// Nearest-neighbour upsampling of [N,H,W,C] by an integer factor.
Tensor upsample_nearest(const Tensor& input, std::size_t factor);

/// Concatenates two [N,H,W,*] tensors along the channel axis.
Tensor concat_channels(const Tensor& a, const Tensor& b);

/// [N,H,W,C] -> [N,C].
Tensor global_avg_pool(const Tensor& input);

}  // namespace adx
