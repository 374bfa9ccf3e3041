#include "adx/models/zoo.hpp"

#include <stdexcept>

#include "adx/core/errors.hpp"
#include "adx/core/ops.hpp"

namespace adx::models {

using nn::LayerConfig;
using nn::LayerKind;

namespace {

std::string padding_name(Padding p) { return p == Padding::same ? "same" : "valid"; }

Padding padding_from_string(const std::string& s) {
  if (s == "same") return Padding::same;
  if (s == "valid") return Padding::valid;
  throw std::invalid_argument("unknown padding '" + s + "'");
}

// Spatial size after `blocks` rounds of conv + 2x2 pool; throws if a stage
// does not fit.
void check_pooling_fits(const ModelSpec& spec, std::size_t blocks, const char* arch) {
  std::size_t h = spec.height, w = spec.width;
  for (std::size_t b = 0; b < blocks; ++b) {
    const std::size_t need = spec.padding == Padding::valid ? spec.kernel + 1 : 2;
    if (h < need || w < need)
      throw ShapeError(std::string(arch) + ": input " + std::to_string(spec.height) + "x" + std::to_string(spec.width) +
                       " is too small for " + std::to_string(blocks) + " conv/pool blocks");
    if (spec.padding == Padding::valid) {
      h -= spec.kernel - 1;
      w -= spec.kernel - 1;
    }
    h /= 2;
    w /= 2;
  }
}

std::size_t flat_features(const ModelSpec& spec, std::size_t blocks) {
  std::size_t h = spec.height, w = spec.width;
  for (std::size_t b = 0; b < blocks; ++b) {
    if (spec.padding == Padding::valid) {
      h -= spec.kernel - 1;
      w -= spec.kernel - 1;
    }
    h /= 2;
    w /= 2;
  }
  return h * w * spec.resolved_filters()[blocks - 1];
}

LayerConfig conv_cfg(LayerKind kind, std::string name, std::size_t in, std::size_t out, const ModelSpec& spec,
                     Padding padding) {
  return {.kind = kind, .name = std::move(name), .in_channels = in, .filters = out, .kernel = spec.kernel,
          .padding = padding};
}

LayerConfig simple(LayerKind kind, std::string name) { return {.kind = kind, .name = std::move(name)}; }

std::unique_ptr<nn::SequentialModel> bayescnn_stack(const ModelSpec& spec, std::uint64_t seed, bool bayesian) {
  spec.validate();
  const auto filters = spec.resolved_filters();
  SeededRng init(derive_seed(seed, "init"));
  auto model = std::make_unique<nn::SequentialModel>(bayesian ? "bayescnn" : "bayescnn_twin");
  const std::string conv_prefix = bayesian ? "bconv" : "conv";
  std::size_t in = spec.channels;
  for (std::size_t b = 0; b < filters.size(); ++b) {
    const std::string id = std::to_string(b + 1);
    model->add(bayes::make_bayes_layer(
        conv_cfg(bayesian ? LayerKind::bayes_conv : LayerKind::conv, conv_prefix + id, in, filters[b], spec,
                 spec.padding),
        spec.bayes, init));
    model->add(nn::make_layer(simple(LayerKind::relu, "relu" + id), init));
    model->add(nn::make_layer({.kind = LayerKind::maxpool, .name = "pool" + id, .window = 2}, init));
    in = filters[b];
  }
  model->add(nn::make_layer(simple(LayerKind::flatten, "flatten"), init));
  model->add(nn::make_layer({.kind = LayerKind::dropout, .name = "drop", .rate = spec.dropout}, init));
  model->add(bayes::make_bayes_layer({.kind = bayesian ? LayerKind::bayes_dense : LayerKind::dense,
                                      .name = bayesian ? "bdense" : "dense",
                                      .in_features = flat_features(spec, filters.size()),
                                      .units = spec.n_classes},
                                     spec.bayes, init));
  return model;
}

}  // namespace

std::string to_string(Architecture arch) {
  switch (arch) {
    case Architecture::addnet: return "addnet";
    case Architecture::bayescnn: return "bayescnn";
    case Architecture::unet_classifier: return "unet_classifier";
  }
  return "unknown";
}

Architecture architecture_from_string(const std::string& name) {
  if (name == "addnet") return Architecture::addnet;
  if (name == "bayescnn") return Architecture::bayescnn;
  if (name == "unet" || name == "unet_classifier") return Architecture::unet_classifier;
  throw std::invalid_argument("unknown architecture '" + name + "' (expected addnet, bayescnn or unet)");
}

std::vector<std::size_t> ModelSpec::resolved_filters() const {
  if (!filters.empty()) return filters;
  if (architecture == Architecture::bayescnn) return {16, 32, 64};
  if (architecture == Architecture::addnet) return {16, 32, 64, 128};
  std::vector<std::size_t> out;
  for (std::size_t d = 0; d <= unet_depth; ++d) out.push_back(unet_base_filters << d);
  return out;
}

void ModelSpec::validate() const {
  if (n_classes < 2) throw std::invalid_argument("model spec: n_classes must be >= 2");
  if (height == 0 || width == 0 || channels == 0) throw std::invalid_argument("model spec: input dims must be > 0");
  if (kernel == 0) throw std::invalid_argument("model spec: kernel must be >= 1");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw std::invalid_argument("model spec: dropout must be in [0,1)");
  if (!(leaky_slope > 0.0 && leaky_slope < 1.0)) throw std::invalid_argument("model spec: leaky_slope must be in (0,1)");
  for (auto f : filters)
    if (f == 0) throw std::invalid_argument("model spec: filter counts must be > 0");
  bayes.prior.validate();
  if (bayes.kl_samples == 0) throw std::invalid_argument("model spec: kl_samples must be >= 1");
  switch (architecture) {
    case Architecture::addnet:
      if (resolved_filters().size() != 4) throw std::invalid_argument("model spec: addnet needs four filter counts");
      if (dense_units == 0) throw std::invalid_argument("model spec: dense_units must be > 0");
      check_pooling_fits(*this, 4, "addnet");
      break;
    case Architecture::bayescnn:
      if (resolved_filters().empty()) throw std::invalid_argument("model spec: bayescnn needs filter counts");
      check_pooling_fits(*this, resolved_filters().size(), "bayescnn");
      break;
    case Architecture::unet_classifier: {
      if (unet_depth == 0 || unet_base_filters == 0)
        throw std::invalid_argument("model spec: unet depth and base filters must be >= 1");
      const std::size_t div = std::size_t{1} << unet_depth;
      if (height % div != 0 || width % div != 0)
        throw ShapeError("unet: input " + std::to_string(height) + "x" + std::to_string(width) +
                         " is not divisible by 2^" + std::to_string(unet_depth));
      break;
    }
  }
}

nlohmann::json to_json(const ModelSpec& s) {
  return {
      {"architecture", to_string(s.architecture)},
      {"input", {s.height, s.width, s.channels}},
      {"n_classes", s.n_classes},
      {"filters", s.resolved_filters()},
      {"kernel", s.kernel},
      {"padding", padding_name(s.padding)},
      {"dropout", s.dropout},
      {"leaky_slope", s.leaky_slope},
      {"dense_units", s.dense_units},
      {"unet_depth", s.unet_depth},
      {"unet_base_filters", s.unet_base_filters},
      {"prior",
       {{"kind", std::string(bayes::to_string(s.bayes.prior.kind))},
        {"pi", s.bayes.prior.pi},
        {"sigma1", s.bayes.prior.sigma1},
        {"sigma2", s.bayes.prior.sigma2}}},
      {"rho_init", s.bayes.rho_init},
      {"kl_samples", s.bayes.kl_samples},
  };
}

ModelSpec spec_from_json(const nlohmann::json& j) {
  ModelSpec s;
  s.architecture = architecture_from_string(j.at("architecture").get<std::string>());
  if (j.contains("input")) {
    const auto in = j.at("input").get<std::vector<std::size_t>>();
    if (in.size() != 3) throw std::invalid_argument("model spec: input must be [height, width, channels]");
    s.height = in[0];
    s.width = in[1];
    s.channels = in[2];
  }
  s.n_classes = j.value("n_classes", s.n_classes);
  s.filters = j.value("filters", s.filters);
  s.kernel = j.value("kernel", s.kernel);
  s.padding = padding_from_string(j.value("padding", padding_name(s.padding)));
  s.dropout = j.value("dropout", s.dropout);
  s.leaky_slope = j.value("leaky_slope", s.leaky_slope);
  s.dense_units = j.value("dense_units", s.dense_units);
  s.unet_depth = j.value("unet_depth", s.unet_depth);
  s.unet_base_filters = j.value("unet_base_filters", s.unet_base_filters);
  if (j.contains("prior")) {
    const auto& p = j.at("prior");
    s.bayes.prior.kind = bayes::prior_kind_from_string(p.value("kind", std::string("standard_normal")));
    s.bayes.prior.pi = p.value("pi", s.bayes.prior.pi);
    s.bayes.prior.sigma1 = p.value("sigma1", s.bayes.prior.sigma1);
    s.bayes.prior.sigma2 = p.value("sigma2", s.bayes.prior.sigma2);
  }
  s.bayes.rho_init = j.value("rho_init", s.bayes.rho_init);
  s.bayes.kl_samples = j.value("kl_samples", s.bayes.kl_samples);
  s.validate();
  return s;
}

std::unique_ptr<nn::SequentialModel> build_addnet(const ModelSpec& spec, std::uint64_t seed) {
  if (spec.architecture != Architecture::addnet) throw std::invalid_argument("build_addnet: spec is not addnet");
  spec.validate();
  const auto filters = spec.resolved_filters();
  SeededRng init(derive_seed(seed, "init"));
  auto model = std::make_unique<nn::SequentialModel>("addnet");
  std::size_t in = spec.channels;
  for (std::size_t b = 0; b < 4; ++b) {
    const std::string id = std::to_string(b + 1);
    model->add(nn::make_layer(conv_cfg(LayerKind::conv, "conv" + id, in, filters[b], spec, spec.padding), init));
    model->add(nn::make_layer({.kind = LayerKind::batchnorm, .name = "bn" + id, .in_channels = filters[b]}, init));
    model->add(nn::make_layer({.kind = LayerKind::leaky_relu, .name = "act" + id, .slope = spec.leaky_slope}, init));
    model->add(nn::make_layer({.kind = LayerKind::avgpool, .name = "pool" + id, .window = 2}, init));
    in = filters[b];
  }
  model->add(nn::make_layer(simple(LayerKind::flatten, "flatten"), init));
  model->add(nn::make_layer({.kind = LayerKind::dropout, .name = "drop1", .rate = spec.dropout}, init));
  model->add(nn::make_layer(
      {.kind = LayerKind::dense, .name = "dense1", .in_features = flat_features(spec, 4), .units = spec.dense_units},
      init));
  model->add(nn::make_layer({.kind = LayerKind::leaky_relu, .name = "act5", .slope = spec.leaky_slope}, init));
  model->add(nn::make_layer({.kind = LayerKind::dropout, .name = "drop2", .rate = spec.dropout}, init));
  model->add(nn::make_layer(
      {.kind = LayerKind::dense, .name = "dense2", .in_features = spec.dense_units, .units = spec.n_classes}, init));
  return model;
}

std::unique_ptr<nn::SequentialModel> build_bayescnn(const ModelSpec& spec, std::uint64_t seed) {
  if (spec.architecture != Architecture::bayescnn) throw std::invalid_argument("build_bayescnn: spec is not bayescnn");
  return bayescnn_stack(spec, seed, true);
}

std::unique_ptr<nn::SequentialModel> build_bayescnn_twin(const ModelSpec& spec, nn::Model& bayes_model) {
  auto twin = bayescnn_stack(spec, 0, false);
  auto source = bayes_model.snapshot();
  nn::ModelState state;
  for (auto& p : twin->parameters()) {
    // conv2.weight <- bconv2.weight_mu, dense.bias <- bdense.bias_mu
    const auto dot = p.name.find('.');
    const std::string key = "b" + p.name.substr(0, dot) + p.name.substr(dot) + "_mu";
    auto it = source.find(key);
    if (it == source.end()) throw std::invalid_argument("twin: source model has no '" + key + "'");
    state[p.name] = it->second;
  }
  twin->restore(state);
  return twin;
}

UNetClassifier::UNetClassifier(const ModelSpec& spec, std::uint64_t seed) {
  if (spec.architecture != Architecture::unet_classifier)
    throw std::invalid_argument("build_unet_classifier: spec is not unet_classifier");
  spec.validate();
  SeededRng init(derive_seed(seed, "init"));
  const std::size_t depth = spec.unet_depth, base = spec.unet_base_filters;
  auto stage = [&](const std::string& prefix, std::size_t in, std::size_t out) {
    Stage s;
    s.conv = nn::make_layer(conv_cfg(LayerKind::conv, prefix + ".conv", in, out, spec, Padding::same), init);
    s.act = nn::make_layer(simple(LayerKind::relu, prefix + ".relu"), init);
    return s;
  };
  std::size_t in = spec.channels;
  for (std::size_t d = 0; d < depth; ++d) {
    const std::string prefix = "enc" + std::to_string(d + 1);
    encoder_.push_back(stage(prefix, in, base << d));
    pools_.push_back(nn::make_layer({.kind = LayerKind::maxpool, .name = prefix + ".pool", .window = 2}, init));
    in = base << d;
  }
  bottleneck_ = stage("bottleneck", in, base << depth);
  in = base << depth;
  for (std::size_t d = 0; d < depth; ++d) {
    const std::size_t skip = base << (depth - 1 - d);
    decoder_.push_back(stage("dec" + std::to_string(d + 1), in + skip, skip));
    in = skip;
  }
  gap_dropout_ = nn::make_layer({.kind = LayerKind::dropout, .name = "head.dropout", .rate = spec.dropout}, init);
  head_ = nn::make_layer({.kind = LayerKind::dense, .name = "head.dense", .in_features = in, .units = spec.n_classes},
                         init);
}

Tensor UNetClassifier::logits(const Tensor& x, nn::ForwardContext& ctx) {
  std::vector<Tensor> skips;
  Tensor h = x;
  for (std::size_t d = 0; d < encoder_.size(); ++d) {
    h = encoder_[d].act->forward(encoder_[d].conv->forward(h, ctx), ctx);
    skips.push_back(h);
    h = pools_[d]->forward(h, ctx);
  }
  h = bottleneck_.act->forward(bottleneck_.conv->forward(h, ctx), ctx);
  for (std::size_t d = 0; d < decoder_.size(); ++d) {
    h = upsample_nearest(h, 2);
    const Tensor& s = skips[skips.size() - 1 - d];
    h = concat_channels(h, skips_ ? s : Tensor::zeros(s.shape()));
    h = decoder_[d].act->forward(decoder_[d].conv->forward(h, ctx), ctx);
  }
  h = gap_dropout_->forward(global_avg_pool(h), ctx);
  return head_->forward(h, ctx);
}

std::vector<nn::Layer*> UNetClassifier::layers() {
  std::vector<nn::Layer*> out;
  for (std::size_t d = 0; d < encoder_.size(); ++d) {
    out.push_back(encoder_[d].conv.get());
    out.push_back(encoder_[d].act.get());
    out.push_back(pools_[d].get());
  }
  out.push_back(bottleneck_.conv.get());
  out.push_back(bottleneck_.act.get());
  for (auto& s : decoder_) {
    out.push_back(s.conv.get());
    out.push_back(s.act.get());
  }
  out.push_back(gap_dropout_.get());
  out.push_back(head_.get());
  return out;
}

std::unique_ptr<UNetClassifier> build_unet_classifier(const ModelSpec& spec, std::uint64_t seed) {
  return std::make_unique<UNetClassifier>(spec, seed);
}

std::unique_ptr<nn::Model> build_model(const ModelSpec& spec, std::uint64_t seed) {
  switch (spec.architecture) {
    case Architecture::addnet: return build_addnet(spec, seed);
    case Architecture::bayescnn: return build_bayescnn(spec, seed);
    case Architecture::unet_classifier: return build_unet_classifier(spec, seed);
  }
  throw std::invalid_argument("build_model: unknown architecture");
}

void set_dropout(nn::Model& model, double rate) {
  for (nn::Layer* l : model.layers())
    if (auto* d = dynamic_cast<nn::Dropout*>(l)) d->set_rate(rate);
}

}  // namespace adx::models
