#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "adx/bayes/layers.hpp"
#include "adx/nn/model.hpp"

namespace adx::models {

enum class Architecture { addnet, bayescnn, unet_classifier };

std::string to_string(Architecture arch);
/// Accepts "unet" as shorthand for unet_classifier.
Architecture architecture_from_string(const std::string& name);

struct ModelSpec {
  Architecture architecture = Architecture::addnet;
  std::size_t height = 64;
  std::size_t width = 64;
  std::size_t channels = 1;
  std::size_t n_classes = 4;
  /// Filters per conv block; empty selects the architecture default
  /// (addnet 16/32/64/128, bayescnn 16/32/64).
  std::vector<std::size_t> filters;
  std::size_t kernel = 3;
  /// addnet and bayescnn only; the U-Net always pads "same".
  Padding padding = Padding::valid;
  double dropout = 0.3;
  double leaky_slope = 0.01;
  /// Width of the first dense layer of ADD-Net.
  std::size_t dense_units = 128;
  std::size_t unet_depth = 3;
  std::size_t unet_base_filters = 16;
  bayes::BayesLayerOptions bayes;

  std::vector<std::size_t> resolved_filters() const;
  /// Throws std::invalid_argument for bad knobs and ShapeError when the input
  /// cannot pass through the pooling stages.
  void validate() const;
};

nlohmann::json to_json(const ModelSpec& spec);
ModelSpec spec_from_json(const nlohmann::json& j);

/// Four blocks of conv -> batchnorm -> LeakyReLU -> 2x2 average pool, then
/// flatten -> dropout -> dense -> LeakyReLU -> dropout -> dense. Layer names:
/// conv1..4, bn1..4, act1..4, pool1..4, flatten, drop1, dense1, act5, drop2,
/// dense2.
std::unique_ptr<nn::SequentialModel> build_addnet(const ModelSpec& spec, std::uint64_t seed);

/// Bayesian conv -> ReLU -> 2x2 max pool blocks, flatten -> dropout ->
/// Bayesian dense. Layer names: bconv1..n, relu1..n, pool1..n, flatten, drop,
/// bdense.
std::unique_ptr<nn::SequentialModel> build_bayescnn(const ModelSpec& spec, std::uint64_t seed);

/// The same stack with deterministic conv/dense layers whose weights and
/// biases are copies of `bayes_model`'s posterior means (names conv1..n and
/// dense).
std::unique_ptr<nn::SequentialModel> build_bayescnn_twin(const ModelSpec& spec, nn::Model& bayes_model);

/// Encoder conv/ReLU/max-pool stages, a bottleneck conv, decoder stages of
/// nearest upsampling, skip concatenation and conv/ReLU, then global average
/// pooling -> dropout -> dense.
class UNetClassifier final : public nn::Model {
 public:
  UNetClassifier(const ModelSpec& spec, std::uint64_t seed);

  std::string architecture() const override { return "unet_classifier"; }
  Tensor logits(const Tensor& x, nn::ForwardContext& ctx) override;
  std::vector<nn::Layer*> layers() override;

  /// With skips disabled the decoder concatenates zeros in place of the
  /// encoder features, so the same weights apply.
  void set_skip_connections(bool enabled) { skips_ = enabled; }
  bool skip_connections() const { return skips_; }

 private:
  struct Stage {
    std::unique_ptr<nn::Layer> conv;
    std::unique_ptr<nn::Layer> act;
  };
  std::vector<Stage> encoder_;
  std::vector<std::unique_ptr<nn::Layer>> pools_;
  Stage bottleneck_;
  std::vector<Stage> decoder_;
  std::unique_ptr<nn::Layer> gap_dropout_;
  std::unique_ptr<nn::Layer> head_;
  bool skips_ = true;
};

std::unique_ptr<UNetClassifier> build_unet_classifier(const ModelSpec& spec, std::uint64_t seed);

/// Dispatches on spec.architecture.
std::unique_ptr<nn::Model> build_model(const ModelSpec& spec, std::uint64_t seed);

/// Sets the rate of every dropout layer.
void set_dropout(nn::Model& model, double rate);

}  // namespace adx::models
