#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "adx/core/ops.hpp"
#include "adx/core/rng.hpp"
#include "adx/core/tensor.hpp"

namespace adx::bayes {

inline constexpr double kDefaultRhoInit = -3.0;

/// Factorised Gaussian over a weight tensor with sigma = softplus(rho).
struct GaussianPosterior {
  Tensor mu;
  Tensor rho;

  /// mu ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)), rho = rho_init.
  static GaussianPosterior create(Shape shape, std::size_t fan_in, SeededRng& rng, double rho_init = kDefaultRhoInit);

  const Shape& shape() const { return mu.shape(); }
  /// softplus(rho), differentiable.
  Tensor sigma() const;
  /// sigma^2 / mu^2 per weight; +inf where mu == 0.
  std::vector<double> alpha() const;
};

struct PriorConfig {
  enum class Kind { standard_normal, scale_mixture };
  Kind kind = Kind::standard_normal;
  // scale_mixture: pi * N(0, sigma1^2) + (1 - pi) * N(0, sigma2^2)
  double pi = 0.5;
  double sigma1 = 1.0;
  double sigma2 = 0.0025;

  /// Throws std::invalid_argument.
  void validate() const;
  /// log p(w) for a single weight.
  double log_density(double w) const;
};

std::string_view to_string(PriorConfig::Kind kind);
PriorConfig::Kind prior_kind_from_string(std::string_view name);

/// w = mu + sigma * eps with eps ~ N(0,1) drawn in row-major order.
Tensor sample_weights(const GaussianPosterior& post, SeededRng& rng);
/// Same with caller-supplied noise (shape of mu).
Tensor sample_weights(const GaussianPosterior& post, const Tensor& eps);

/// Draws one N(0,1) value per element of `shape`, row-major.
Tensor standard_normal_noise(const Shape& shape, SeededRng& rng);

/// Mean and variance paths of a local-reparameterised dense layer:
/// gamma = a·mu (+ bias mu), delta = a^2·sigma^2 (+ bias sigma^2).
struct Moments {
  Tensor mean;
  Tensor variance;
};
Moments lrt_dense_moments(const Tensor& a, const GaussianPosterior& post, const GaussianPosterior* bias = nullptr);
Moments lrt_conv_moments(const Tensor& a, const GaussianPosterior& post, Conv2dOptions options = {},
                         const GaussianPosterior* bias = nullptr);

/// gamma + sqrt(delta) * eps with one fresh eps per output activation.
Tensor lrt_dense(const Tensor& a, const GaussianPosterior& post, SeededRng& rng,
                 const GaussianPosterior* bias = nullptr);
Tensor lrt_conv(const Tensor& a, const GaussianPosterior& post, SeededRng& rng, Conv2dOptions options = {},
                const GaussianPosterior* bias = nullptr);
/// Applies caller-supplied output noise to precomputed moments.
Tensor lrt_combine(const Moments& m, const Tensor& eps);

/// Sum over weights of log(1/sigma) + (sigma^2 + mu^2)/2 - 1/2, against N(0,1).
Tensor kl_gaussian_closed(const GaussianPosterior& post);

struct MonteCarloEstimate {
  double value = 0.0;
  double std_error = 0.0;
};

/// (1/n) sum_i [log q(w_i) - log p(w_i)], w_i ~ q, evaluated in plain doubles.
MonteCarloEstimate kl_monte_carlo(const GaussianPosterior& post, const PriorConfig& prior, std::size_t n_samples,
                                  SeededRng& rng);

/// Differentiable KL term used in training: closed form for the standard
/// normal prior, otherwise an `n_samples` reparameterised Monte Carlo estimate
/// drawn from `rng`.
Tensor kl_divergence(const GaussianPosterior& post, const PriorConfig& prior, SeededRng* rng,
                     std::size_t n_samples = 1);

/// Elementwise log p(w) with its derivative, for any prior.
Tensor log_prior(const Tensor& w, const PriorConfig& prior);

inline constexpr double kProbabilityClamp = 1e-12;

struct ElboBreakdown {
  double nll = 0.0;
  double kl = 0.0;
  double kl_weight = 0.0;
  double total = 0.0;
  /// Rows whose target probability was clamped to kProbabilityClamp.
  std::size_t clamped = 0;
  /// nll + kl_weight * kl as a differentiable scalar.
  Tensor loss;
};

/// predictions: [N,K] probability rows; targets: [N,K] one-hot.
ElboBreakdown elbo_loss(const Tensor& predictions, const Tensor& targets, const Tensor& kl_total, double kl_weight);

/// -sum log p[target] with probabilities clamped at kProbabilityClamp.
/// `clamped` receives the number of clamped rows when non-null.
Tensor nll_from_probabilities(const Tensor& predictions, const std::vector<std::size_t>& labels,
                              std::size_t* clamped = nullptr);

}  // namespace adx::bayes
