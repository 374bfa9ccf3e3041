#pragma once

#include <memory>

#include "adx/bayes/functional.hpp"
#include "adx/nn/layers.hpp"

namespace adx::bayes {

/// Shared settings of the Bayesian layers in one model.
struct BayesLayerOptions {
  PriorConfig prior;
  double rho_init = kDefaultRhoInit;
  /// Monte Carlo draws per KL evaluation when the prior has no closed form.
  std::size_t kl_samples = 1;
};

/// Convolution with Gaussian weights and bias, evaluated with the local
/// reparameterisation trick. With ctx.sample_weights false it runs the
/// posterior-mean network.
class BayesConv2d final : public nn::Layer {
 public:
  BayesConv2d(const nn::LayerConfig& cfg, const BayesLayerOptions& options, SeededRng& rng);
  nn::LayerKind kind() const override { return nn::LayerKind::bayes_conv; }
  Tensor forward(const Tensor& x, nn::ForwardContext& ctx) override;
  std::vector<nn::NamedTensor> parameters() override;
  Tensor kl_divergence(SeededRng* rng) override;

  GaussianPosterior& weight() { return weight_; }
  GaussianPosterior& bias() { return bias_; }

 private:
  Conv2dOptions conv_;
  BayesLayerOptions options_;
  GaussianPosterior weight_;  // [k,k,C,F]
  GaussianPosterior bias_;    // [F]
};

class BayesDense final : public nn::Layer {
 public:
  BayesDense(const nn::LayerConfig& cfg, const BayesLayerOptions& options, SeededRng& rng);
  nn::LayerKind kind() const override { return nn::LayerKind::bayes_dense; }
  Tensor forward(const Tensor& x, nn::ForwardContext& ctx) override;
  std::vector<nn::NamedTensor> parameters() override;
  Tensor kl_divergence(SeededRng* rng) override;

  GaussianPosterior& weight() { return weight_; }
  GaussianPosterior& bias() { return bias_; }

 private:
  BayesLayerOptions options_;
  GaussianPosterior weight_;  // [in,out]
  GaussianPosterior bias_;    // [out]
};

/// Builds any layer kind, Bayesian ones included.
std::unique_ptr<nn::Layer> make_bayes_layer(const nn::LayerConfig& cfg, const BayesLayerOptions& options,
                                            SeededRng& rng);

}  // namespace adx::bayes
