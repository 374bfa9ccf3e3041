#include "adx/nn/model.hpp"

#include <algorithm>
#include <set>
#include <stdexcept>

#include "adx/core/ops.hpp"

namespace adx::nn {

Tensor Model::forward(const Tensor& x, ForwardContext& ctx) { return softmax(logits(x, ctx)); }

std::vector<NamedTensor> Model::parameters() {
  std::vector<NamedTensor> out;
  for (Layer* l : layers())
    for (auto& p : l->parameters()) out.push_back(std::move(p));
  return out;
}

std::vector<NamedTensor> Model::buffers() {
  std::vector<NamedTensor> out;
  for (Layer* l : layers())
    for (auto& b : l->buffers()) out.push_back(std::move(b));
  return out;
}

std::size_t Model::parameter_count() {
  std::size_t n = 0;
  for (const auto& p : parameters()) n += p.tensor.numel();
  return n;
}

void Model::zero_grad() {
  for (auto& p : parameters()) p.tensor.zero_grad();
}

Layer* Model::find_layer(const std::string& name) {
  for (Layer* l : layers())
    if (l->name() == name) return l;
  return nullptr;
}

std::vector<std::string> Model::conv_layer_names() {
  std::vector<std::string> out;
  for (Layer* l : layers())
    if (l->kind() == LayerKind::conv || l->kind() == LayerKind::bayes_conv) out.push_back(l->name());
  return out;
}

bool Model::is_bayesian() {
  auto ls = layers();
  return std::any_of(ls.begin(), ls.end(), [](Layer* l) {
    return l->kind() == LayerKind::bayes_conv || l->kind() == LayerKind::bayes_dense;
  });
}

Tensor Model::kl_divergence(SeededRng* rng) {
  Tensor total = Tensor::scalar(0.0);
  for (Layer* l : layers()) {
    Tensor kl = l->kl_divergence(rng);
    if (kl.defined()) total = add(total, kl);
  }
  return total;
}

ModelState Model::snapshot() {
  ModelState state;
  auto copy = [&](const std::vector<NamedTensor>& ts) {
    for (const auto& t : ts) {
      auto v = t.tensor.values();
      state[t.name].assign(v.begin(), v.end());
    }
  };
  copy(parameters());
  copy(buffers());
  return state;
}

void Model::restore(const ModelState& state) {
  auto all = parameters();
  auto bufs = buffers();
  all.insert(all.end(), bufs.begin(), bufs.end());
  if (all.size() != state.size())
    throw std::invalid_argument("restore: state has " + std::to_string(state.size()) + " tensors, model has " +
                                std::to_string(all.size()));
  for (auto& t : all) {
    auto it = state.find(t.name);
    if (it == state.end()) throw std::invalid_argument("restore: missing tensor '" + t.name + "'");
    auto dst = t.tensor.mutable_values();
    if (it->second.size() != dst.size())
      throw std::invalid_argument("restore: size mismatch for '" + t.name + "'");
    std::copy(it->second.begin(), it->second.end(), dst.begin());
  }
}

Tensor SequentialModel::logits(const Tensor& x, ForwardContext& ctx) {
  Tensor h = x;
  for (auto& l : layers_) h = l->forward(h, ctx);
  return h;
}

std::vector<Layer*> SequentialModel::layers() {
  std::vector<Layer*> out;
  out.reserve(layers_.size());
  for (auto& l : layers_) out.push_back(l.get());
  return out;
}

Layer& SequentialModel::add(std::unique_ptr<Layer> layer) {
  for (auto& l : layers_)
    if (l->name() == layer->name()) throw std::invalid_argument("duplicate layer name '" + layer->name() + "'");
  layers_.push_back(std::move(layer));
  return *layers_.back();
}

}  // namespace adx::nn
