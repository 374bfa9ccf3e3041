#include "adx/nn/layers.hpp"

#include <array>
#include <cmath>
#include <stdexcept>

#include "adx/core/errors.hpp"

namespace adx::nn {

namespace {

constexpr std::array<std::pair<LayerKind, std::string_view>, 13> kKindNames{{
    {LayerKind::conv, "conv"},
    {LayerKind::dense, "dense"},
    {LayerKind::maxpool, "maxpool"},
    {LayerKind::avgpool, "avgpool"},
    {LayerKind::relu, "relu"},
    {LayerKind::leaky_relu, "leaky_relu"},
    {LayerKind::softplus, "softplus"},
    {LayerKind::softmax, "softmax"},
    {LayerKind::dropout, "dropout"},
    {LayerKind::batchnorm, "batchnorm"},
    {LayerKind::flatten, "flatten"},
    {LayerKind::bayes_conv, "bayes_conv"},
    {LayerKind::bayes_dense, "bayes_dense"},
}};

Tensor he_uniform(Shape shape, std::size_t fan_in, SeededRng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = (2.0 * rng.uniform() - 1.0) * limit;
  return Tensor(std::move(shape), std::move(v), true);
}

void require(bool ok, const LayerConfig& cfg, const char* what) {
  if (!ok) throw std::invalid_argument("layer '" + cfg.name + "' (" + std::string(to_string(cfg.kind)) + "): " + what);
}

}  // namespace

std::string_view to_string(LayerKind kind) {
  for (const auto& [k, n] : kKindNames)
    if (k == kind) return n;
  return "unknown";
}

LayerKind layer_kind_from_string(std::string_view name) {
  for (const auto& [k, n] : kKindNames)
    if (n == name) return k;
  throw std::invalid_argument("unknown layer kind '" + std::string(name) + "'");
}

void LayerConfig::validate() const {
  switch (kind) {
    case LayerKind::conv:
    case LayerKind::bayes_conv:
      require(in_channels > 0, *this, "in_channels must be > 0");
      require(filters > 0, *this, "filters must be > 0");
      require(kernel > 0, *this, "kernel must be > 0");
      require(stride > 0, *this, "stride must be > 0");
      break;
    case LayerKind::dense:
    case LayerKind::bayes_dense:
      require(in_features > 0, *this, "in_features must be > 0");
      require(units > 0, *this, "units must be > 0");
      break;
    case LayerKind::maxpool:
    case LayerKind::avgpool:
      require(window > 0, *this, "window must be >= 1");
      break;
    case LayerKind::leaky_relu:
      require(slope > 0.0 && slope < 1.0, *this, "slope must be in (0,1)");
      break;
    case LayerKind::softplus:
      require(beta > 0.0, *this, "beta must be > 0");
      break;
    case LayerKind::dropout:
      require(rate >= 0.0 && rate < 1.0, *this, "rate must be in [0,1)");
      break;
    case LayerKind::batchnorm:
      require(in_channels > 0, *this, "in_channels must be > 0");
      require(bn_eps > 0.0, *this, "bn_eps must be > 0");
      require(bn_momentum > 0.0 && bn_momentum <= 1.0, *this, "bn_momentum must be in (0,1]");
      break;
    case LayerKind::relu:
    case LayerKind::softmax:
    case LayerKind::flatten:
      break;
  }
}

SeededRng& ForwardContext::require_rng(std::string_view who) const {
  if (rng == nullptr) throw std::logic_error(std::string(who) + ": forward context has no rng");
  return *rng;
}

void ForwardContext::maybe_capture(const std::string& name, const Tensor& t) const {
  if (capture == nullptr) return;
  if (auto it = capture->find(name); it != capture->end()) it->second = t;
}

Conv2d::Conv2d(const LayerConfig& cfg, SeededRng& rng) : Layer(cfg.name) {
  require(cfg.kind == LayerKind::conv, cfg, "expected conv config");
  cfg.validate();
  options_ = {cfg.stride, cfg.padding};
  weight_ = he_uniform({cfg.kernel, cfg.kernel, cfg.in_channels, cfg.filters},
                       cfg.kernel * cfg.kernel * cfg.in_channels, rng);
  bias_ = Tensor::zeros({cfg.filters}, true);
}

Tensor Conv2d::forward(const Tensor& x, ForwardContext& ctx) {
  Tensor y = add_bias(conv2d(x, weight_, options_), bias_);
  ctx.maybe_capture(name(), y);
  return y;
}

std::vector<NamedTensor> Conv2d::parameters() { return {{name() + ".weight", weight_}, {name() + ".bias", bias_}}; }

Dense::Dense(const LayerConfig& cfg, SeededRng& rng) : Layer(cfg.name) {
  require(cfg.kind == LayerKind::dense, cfg, "expected dense config");
  cfg.validate();
  weight_ = he_uniform({cfg.in_features, cfg.units}, cfg.in_features, rng);
  bias_ = Tensor::zeros({cfg.units}, true);
}

Tensor Dense::forward(const Tensor& x, ForwardContext& ctx) {
  Tensor y = matmul_affine(x, weight_, bias_);
  ctx.maybe_capture(name(), y);
  return y;
}

std::vector<NamedTensor> Dense::parameters() { return {{name() + ".weight", weight_}, {name() + ".bias", bias_}}; }

Pool2d::Pool2d(std::string name, std::size_t window, PoolMode mode) : Layer(std::move(name)), window_(window), mode_(mode) {
  if (window == 0) throw std::invalid_argument("pool2d: window must be >= 1");
}

Tensor Pool2d::forward(const Tensor& x, ForwardContext& ctx) {
  Tensor y = pool2d(x, window_, mode_);
  ctx.maybe_capture(name(), y);
  return y;
}

Activation::Activation(const LayerConfig& cfg) : Layer(cfg.name), kind_(cfg.kind), slope_(cfg.slope), beta_(cfg.beta) {
  require(kind_ == LayerKind::relu || kind_ == LayerKind::leaky_relu || kind_ == LayerKind::softplus ||
              kind_ == LayerKind::softmax || kind_ == LayerKind::flatten,
          cfg, "not an activation kind");
  cfg.validate();
}

Tensor Activation::forward(const Tensor& x, ForwardContext& ctx) {
  Tensor y;
  switch (kind_) {
    case LayerKind::relu: y = relu(x); break;
    case LayerKind::leaky_relu: y = leaky_relu(x, slope_); break;
    case LayerKind::softplus: y = softplus(x, beta_); break;
    case LayerKind::softmax: y = softmax(x); break;
    default: y = flatten(x); break;
  }
  ctx.maybe_capture(name(), y);
  return y;
}

Dropout::Dropout(std::string name, double rate) : Layer(std::move(name)), rate_(0.0) { set_rate(rate); }

void Dropout::set_rate(double rate) {
  if (!(rate >= 0.0 && rate < 1.0)) throw std::invalid_argument("dropout '" + name() + "': rate must be in [0,1)");
  rate_ = rate;
}

Tensor Dropout::forward(const Tensor& x, ForwardContext& ctx) {
  if (ctx.mode == Mode::eval || rate_ == 0.0) return x;
  return dropout(x, rate_, ctx.mode, ctx.require_rng(name()));
}

BatchNorm::BatchNorm(const LayerConfig& cfg) : Layer(cfg.name) {
  require(cfg.kind == LayerKind::batchnorm, cfg, "expected batchnorm config");
  cfg.validate();
  state_ = BatchNormState::create(cfg.in_channels, cfg.bn_eps, cfg.bn_momentum);
}

Tensor BatchNorm::forward(const Tensor& x, ForwardContext& ctx) {
  Tensor y = batchnorm(x, state_, ctx.mode);
  ctx.maybe_capture(name(), y);
  return y;
}

std::vector<NamedTensor> BatchNorm::parameters() {
  return {{name() + ".gamma", state_.gamma}, {name() + ".beta", state_.beta}};
}

std::vector<NamedTensor> BatchNorm::buffers() {
  return {{name() + ".running_mean", state_.running_mean}, {name() + ".running_var", state_.running_var}};
}

std::unique_ptr<Layer> make_layer(const LayerConfig& cfg, SeededRng& rng) {
  cfg.validate();
  switch (cfg.kind) {
    case LayerKind::conv: return std::make_unique<Conv2d>(cfg, rng);
    case LayerKind::dense: return std::make_unique<Dense>(cfg, rng);
    case LayerKind::maxpool: return std::make_unique<Pool2d>(cfg.name, cfg.window, PoolMode::max);
    case LayerKind::avgpool: return std::make_unique<Pool2d>(cfg.name, cfg.window, PoolMode::avg);
    case LayerKind::dropout: return std::make_unique<Dropout>(cfg.name, cfg.rate);
    case LayerKind::batchnorm: return std::make_unique<BatchNorm>(cfg);
    case LayerKind::relu:
    case LayerKind::leaky_relu:
    case LayerKind::softplus:
    case LayerKind::softmax:
    case LayerKind::flatten: return std::make_unique<Activation>(cfg);
    case LayerKind::bayes_conv:
    case LayerKind::bayes_dense: break;
  }
  throw std::invalid_argument("make_layer: Bayesian layer '" + cfg.name + "' needs a prior; use make_bayes_layer");
}

}  // namespace adx::nn
