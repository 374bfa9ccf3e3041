#pragma once

#include "adx/core/rng.hpp"
#include "adx/core/tensor.hpp"

namespace adx::nn {

enum class Mode { train, eval };

inline constexpr double kDefaultLeakySlope = 0.01;
/// Above this value of beta*x softplus switches to x + log1p(exp(-beta*x))/beta.
inline constexpr double kSoftplusThreshold = 30.0;

Tensor relu(const Tensor& x);
Tensor leaky_relu(const Tensor& x, double slope = kDefaultLeakySlope);
/// (1/beta) * log(1 + exp(beta*x)). Underflows to 0 only for beta*x below
/// about -745.
Tensor softplus(const Tensor& x, double beta = 1.0);
/// Max-shifted softmax along the last axis.
Tensor softmax(const Tensor& logits);

/// Inverted dropout: in train mode each element is zeroed with probability
/// `rate` and survivors are scaled by 1/(1-rate); eval mode is the identity.
Tensor dropout(const Tensor& x, double rate, Mode mode, SeededRng& rng);

struct BatchNormState {
  Tensor gamma;         // [C], learned scale
  Tensor beta;          // [C], learned shift
  Tensor running_mean;  // [C]
  Tensor running_var;   // [C], unbiased batch variance, exponentially averaged
  double eps = 1e-5;
  double momentum = 0.1;

  static BatchNormState create(std::size_t channels, double eps = 1e-5, double momentum = 0.1);
};

/// Per-channel normalisation over every axis but the last. Train mode uses
/// batch statistics and updates the running averages; eval mode uses the
/// running averages. Train mode needs at least two samples on axis 0.
Tensor batchnorm(const Tensor& x, BatchNormState& state, Mode mode);

}  // namespace adx::nn
