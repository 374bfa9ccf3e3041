#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "adx/nn/layers.hpp"

namespace adx::nn {

/// Copy of every parameter and buffer value, keyed by qualified name.
using ModelState = std::map<std::string, std::vector<double>>;

class Model {
 public:
  virtual ~Model() = default;

  virtual std::string architecture() const = 0;
  /// Pre-softmax class scores, [N,K].
  virtual Tensor logits(const Tensor& x, ForwardContext& ctx) = 0;
  /// Layers in forward order.
  virtual std::vector<Layer*> layers() = 0;

  /// Class probabilities, softmax(logits).
  Tensor forward(const Tensor& x, ForwardContext& ctx);

  std::vector<NamedTensor> parameters();
  std::vector<NamedTensor> buffers();
  std::size_t parameter_count();
  void zero_grad();

  /// nullptr when no layer has that name.
  Layer* find_layer(const std::string& name);
  /// Names of conv and bayes_conv layers in forward order.
  std::vector<std::string> conv_layer_names();
  bool is_bayesian();
  /// Sum of layer KL terms as a scalar tensor; zero for deterministic models.
  Tensor kl_divergence(SeededRng* rng = nullptr);

  ModelState snapshot();
  /// Throws std::invalid_argument if names or sizes differ.
  void restore(const ModelState& state);
};

/// Plain layer stack.
class SequentialModel : public Model {
 public:
  explicit SequentialModel(std::string architecture) : architecture_(std::move(architecture)) {}

  std::string architecture() const override { return architecture_; }
  Tensor logits(const Tensor& x, ForwardContext& ctx) override;
  std::vector<Layer*> layers() override;

  Layer& add(std::unique_ptr<Layer> layer);

 private:
  std::string architecture_;
  std::vector<std::unique_ptr<Layer>> layers_;
};

}  // namespace adx::nn
