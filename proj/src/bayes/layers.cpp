#include "adx/bayes/layers.hpp"

#include <stdexcept>

namespace adx::bayes {

namespace {

std::vector<nn::NamedTensor> posterior_parameters(const std::string& name, const GaussianPosterior& w,
                                                  const GaussianPosterior& b) {
  return {{name + ".weight_mu", w.mu}, {name + ".weight_rho", w.rho}, {name + ".bias_mu", b.mu},
          {name + ".bias_rho", b.rho}};
}

Tensor layer_kl(const GaussianPosterior& w, const GaussianPosterior& b, const BayesLayerOptions& o, SeededRng* rng) {
  return add(kl_divergence(w, o.prior, rng, o.kl_samples), kl_divergence(b, o.prior, rng, o.kl_samples));
}

}  // namespace

BayesConv2d::BayesConv2d(const nn::LayerConfig& cfg, const BayesLayerOptions& options, SeededRng& rng)
    : nn::Layer(cfg.name), conv_{cfg.stride, cfg.padding}, options_(options) {
  if (cfg.kind != nn::LayerKind::bayes_conv) throw std::invalid_argument("BayesConv2d: expected bayes_conv config");
  cfg.validate();
  options_.prior.validate();
  const std::size_t fan_in = cfg.kernel * cfg.kernel * cfg.in_channels;
  weight_ = GaussianPosterior::create({cfg.kernel, cfg.kernel, cfg.in_channels, cfg.filters}, fan_in, rng,
                                      options.rho_init);
  bias_ = GaussianPosterior::create({cfg.filters}, fan_in, rng, options.rho_init);
}

Tensor BayesConv2d::forward(const Tensor& x, nn::ForwardContext& ctx) {
  Tensor y = ctx.sample_weights ? lrt_conv(x, weight_, ctx.require_rng(name()), conv_, &bias_)
                                : add_bias(conv2d(x, weight_.mu, conv_), bias_.mu);
  ctx.maybe_capture(name(), y);
  return y;
}

std::vector<nn::NamedTensor> BayesConv2d::parameters() { return posterior_parameters(name(), weight_, bias_); }

Tensor BayesConv2d::kl_divergence(SeededRng* rng) { return layer_kl(weight_, bias_, options_, rng); }

BayesDense::BayesDense(const nn::LayerConfig& cfg, const BayesLayerOptions& options, SeededRng& rng)
    : nn::Layer(cfg.name), options_(options) {
  if (cfg.kind != nn::LayerKind::bayes_dense) throw std::invalid_argument("BayesDense: expected bayes_dense config");
  cfg.validate();
  options_.prior.validate();
  weight_ = GaussianPosterior::create({cfg.in_features, cfg.units}, cfg.in_features, rng, options.rho_init);
  bias_ = GaussianPosterior::create({cfg.units}, cfg.in_features, rng, options.rho_init);
}

Tensor BayesDense::forward(const Tensor& x, nn::ForwardContext& ctx) {
  Tensor y = ctx.sample_weights ? lrt_dense(x, weight_, ctx.require_rng(name()), &bias_)
                                : matmul_affine(x, weight_.mu, bias_.mu);
  ctx.maybe_capture(name(), y);
  return y;
}

std::vector<nn::NamedTensor> BayesDense::parameters() { return posterior_parameters(name(), weight_, bias_); }

Tensor BayesDense::kl_divergence(SeededRng* rng) { return layer_kl(weight_, bias_, options_, rng); }

std::unique_ptr<nn::Layer> make_bayes_layer(const nn::LayerConfig& cfg, const BayesLayerOptions& options,
                                            SeededRng& rng) {
  if (cfg.kind == nn::LayerKind::bayes_conv) return std::make_unique<BayesConv2d>(cfg, options, rng);
  if (cfg.kind == nn::LayerKind::bayes_dense) return std::make_unique<BayesDense>(cfg, options, rng);
  return nn::make_layer(cfg, rng);
}

}  // namespace adx::bayes
