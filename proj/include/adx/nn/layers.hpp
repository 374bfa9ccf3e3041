#pragma once

#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "adx/core/ops.hpp"
#include "adx/core/rng.hpp"
#include "adx/core/tensor.hpp"
#include "adx/nn/functional.hpp"

namespace adx::nn {

enum class LayerKind {
  conv,
  dense,
  maxpool,
  avgpool,
  relu,
  leaky_relu,
  softplus,
  softmax,
  dropout,
  batchnorm,
  flatten,
  bayes_conv,
  bayes_dense,
};

std::string_view to_string(LayerKind kind);
/// Throws std::invalid_argument for unknown names.
LayerKind layer_kind_from_string(std::string_view name);

struct LayerConfig {
  LayerKind kind = LayerKind::relu;
  std::string name;

  // conv / bayes_conv
  std::size_t in_channels = 0;
  std::size_t filters = 0;
  std::size_t kernel = 3;
  std::size_t stride = 1;
  Padding padding = Padding::valid;
  // dense / bayes_dense
  std::size_t in_features = 0;
  std::size_t units = 0;
  // pooling
  std::size_t window = 2;
  // activations and regularisers
  double slope = kDefaultLeakySlope;
  double beta = 1.0;
  double rate = 0.0;
  // batchnorm (channels taken from in_channels)
  double bn_eps = 1e-5;
  double bn_momentum = 0.1;

  /// Throws std::invalid_argument naming the offending field.
  void validate() const;
};

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

/// Per-call settings threaded through every layer.
struct ForwardContext {
  Mode mode = Mode::eval;
  SeededRng* rng = nullptr;
  /// Bayesian layers: draw fresh noise (true) or use the posterior mean.
  bool sample_weights = true;
  /// Outputs of layers whose names are already keys in this map are stored
  /// here during the forward pass.
  std::map<std::string, Tensor>* capture = nullptr;

  SeededRng& require_rng(std::string_view who) const;
  void maybe_capture(const std::string& name, const Tensor& t) const;
};

class Layer {
 public:
  explicit Layer(std::string name) : name_(std::move(name)) {}
  virtual ~Layer() = default;
  Layer(const Layer&) = delete;
  Layer& operator=(const Layer&) = delete;

  const std::string& name() const { return name_; }
  virtual LayerKind kind() const = 0;
  virtual Tensor forward(const Tensor& x, ForwardContext& ctx) = 0;
  virtual std::vector<NamedTensor> parameters() { return {}; }
  /// Non-trainable state saved with checkpoints (batchnorm running stats).
  virtual std::vector<NamedTensor> buffers() { return {}; }
  /// KL(q||p) for Bayesian layers as a scalar tensor; empty handle otherwise.
  /// Priors without a closed form draw Monte Carlo samples from `rng`.
  virtual Tensor kl_divergence(SeededRng* /*rng*/) { return {}; }

 private:
  std::string name_;
};

class Conv2d final : public Layer {
 public:
  /// He-uniform weights, zero bias.
  Conv2d(const LayerConfig& cfg, SeededRng& rng);
  LayerKind kind() const override { return LayerKind::conv; }
  Tensor forward(const Tensor& x, ForwardContext& ctx) override;
  std::vector<NamedTensor> parameters() override;
  Tensor& weight() { return weight_; }
  Tensor& bias() { return bias_; }

 private:
  Conv2dOptions options_;
  Tensor weight_;  // [k,k,C,F]
  Tensor bias_;    // [F]
};

class Dense final : public Layer {
 public:
  Dense(const LayerConfig& cfg, SeededRng& rng);
  LayerKind kind() const override { return LayerKind::dense; }
  Tensor forward(const Tensor& x, ForwardContext& ctx) override;
  std::vector<NamedTensor> parameters() override;
  Tensor& weight() { return weight_; }
  Tensor& bias() { return bias_; }

 private:
  Tensor weight_;  // [in,out]
  Tensor bias_;    // [out]
};

class Pool2d final : public Layer {
 public:
  Pool2d(std::string name, std::size_t window, PoolMode mode);
  LayerKind kind() const override { return mode_ == PoolMode::max ? LayerKind::maxpool : LayerKind::avgpool; }
  Tensor forward(const Tensor& x, ForwardContext& ctx) override;

 private:
  std::size_t window_;
  PoolMode mode_;
};

/// relu, leaky_relu, softplus, softmax and flatten.
class Activation final : public Layer {
 public:
  explicit Activation(const LayerConfig& cfg);
  LayerKind kind() const override { return kind_; }
  Tensor forward(const Tensor& x, ForwardContext& ctx) override;

 private:
  LayerKind kind_;
  double slope_;
  double beta_;
};

class Dropout final : public Layer {
 public:
  Dropout(std::string name, double rate);
  LayerKind kind() const override { return LayerKind::dropout; }
  Tensor forward(const Tensor& x, ForwardContext& ctx) override;
  double rate() const { return rate_; }
  void set_rate(double rate);

 private:
  double rate_;
};

class BatchNorm final : public Layer {
 public:
  explicit BatchNorm(const LayerConfig& cfg);
  LayerKind kind() const override { return LayerKind::batchnorm; }
  Tensor forward(const Tensor& x, ForwardContext& ctx) override;
  std::vector<NamedTensor> parameters() override;
  std::vector<NamedTensor> buffers() override;
  BatchNormState& state() { return state_; }

 private:
  BatchNormState state_;
};

/// Builds a deterministic layer. Bayesian kinds are rejected here; see
/// adx/bayes/layers.hpp.
std::unique_ptr<Layer> make_layer(const LayerConfig& cfg, SeededRng& rng);

}  // namespace adx::nn
