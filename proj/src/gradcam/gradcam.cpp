#include "adx/gradcam/gradcam.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

#include "adx/core/errors.hpp"
#include "adx/core/ops.hpp"
#include "adx/data/dataset.hpp"

namespace adx::cam {

namespace {

Tensor as_batch(const Tensor& image) {
  if (image.rank() == 3) return Tensor({1, image.dim(0), image.dim(1), image.dim(2)}, {image.values().begin(), image.values().end()});
  if (image.rank() == 4 && image.dim(0) == 1) return image.detach();
  throw ShapeError("gradcam: expected one image [H,W,C] or [1,H,W,C], got " + shape_str(image.shape()));
}

void require_conv_layer(nn::Model& model, const std::string& layer) {
  nn::Layer* l = model.find_layer(layer);
  if (l == nullptr) throw std::invalid_argument("gradcam: layer '" + layer + "' not found");
  if (l->kind() != nn::LayerKind::conv && l->kind() != nn::LayerKind::bayes_conv) {
    throw std::invalid_argument("gradcam: layer '" + layer + "' is " + std::string(nn::to_string(l->kind())) +
                                ", not a convolutional layer");
  }
}

std::uint8_t round_channel(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 255.0)));
}

}  // namespace

std::string default_layer(nn::Model& model) {
  const auto names = model.conv_layer_names();
  if (names.empty()) throw std::invalid_argument("gradcam: model has no convolutional layer");
  return names.back();
}

CoarseMap class_activation(nn::Model& model, const Tensor& image, std::size_t target_class, const std::string& layer,
                           nn::ForwardContext& ctx) {
  require_conv_layer(model, layer);
  const Tensor x = as_batch(image);
  std::map<std::string, Tensor> captured{{layer, Tensor()}};
  ctx.capture = &captured;
  const Tensor logits = model.logits(x, ctx);
  ctx.capture = nullptr;
  if (target_class >= logits.dim(1)) {
    throw std::invalid_argument("gradcam: class " + std::to_string(target_class) + " out of range for " +
                                std::to_string(logits.dim(1)) + " classes");
  }
  const Tensor& a = captured.at(layer);
  if (!a.defined() || a.rank() != 4) throw std::logic_error("gradcam: layer '" + layer + "' produced no activation");

  const std::size_t h = a.dim(1), w = a.dim(2), k = a.dim(3);
  CoarseMap map{std::vector<double>(h * w, 0.0), h, w};
  const Tensor score = select(logits, target_class);
  model.zero_grad();
  if (score.requires_grad()) score.backward();
  model.zero_grad();
  if (!a.has_grad()) return map;  // score does not depend on the layer

  auto act = a.values();
  auto grad = a.grad();
  std::vector<double> alpha(k, 0.0);
  for (std::size_t p = 0; p < h * w; ++p)
    for (std::size_t c = 0; c < k; ++c) alpha[c] += grad[p * k + c];
  for (auto& v : alpha) v /= static_cast<double>(h * w);
  for (std::size_t p = 0; p < h * w; ++p) {
    double s = 0.0;
    for (std::size_t c = 0; c < k; ++c) s += alpha[c] * act[p * k + c];
    map.values[p] = std::max(s, 0.0);
  }
  return map;
}

Heatmap finalize(const CoarseMap& map, std::size_t height, std::size_t width, std::size_t target_class,
                 const std::string& layer) {
  Heatmap hm{.height = height, .width = width, .target_class = target_class, .layer = layer};
  hm.values = data::resize_bilinear(map.values, map.height, map.width, 1, height, width);
  if (hm.values.size() != height * width) throw ShapeError("gradcam: upsampled map has the wrong size");
  const auto [lo, hi] = std::minmax_element(hm.values.begin(), hm.values.end());
  const double mn = *lo, mx = *hi;
  hm.raw_max = mx;
  if (mx <= 0.0) {
    std::fill(hm.values.begin(), hm.values.end(), 0.0);
  } else if (mx == mn) {
    std::fill(hm.values.begin(), hm.values.end(), 1.0);
  } else {
    for (auto& v : hm.values) v = (v - mn) / (mx - mn);
  }
  return hm;
}

Heatmap gradcam(nn::Model& model, const Tensor& image, std::size_t target_class, const std::string& layer) {
  const std::string name = layer.empty() ? default_layer(model) : layer;
  nn::ForwardContext ctx{.mode = nn::Mode::eval, .sample_weights = false};
  const CoarseMap map = class_activation(model, image, target_class, name, ctx);
  const Tensor x = as_batch(image);
  return finalize(map, x.dim(1), x.dim(2), target_class, name);
}

std::string to_string(BayesMode mode) { return mode == BayesMode::averaged ? "averaged" : "mean_weights"; }

BayesMode bayes_mode_from_string(const std::string& s) {
  if (s == "mean_weights" || s == "mean") return BayesMode::mean_weights;
  if (s == "averaged") return BayesMode::averaged;
  throw std::invalid_argument("unknown Grad-CAM mode '" + s + "' (expected mean_weights or averaged)");
}

Heatmap bayes_gradcam(nn::Model& model, const Tensor& image, std::size_t target_class, const std::string& layer,
                      BayesMode mode, std::size_t samples, std::uint64_t seed) {
  if (mode == BayesMode::mean_weights) return gradcam(model, image, target_class, layer);
  if (samples == 0) throw std::invalid_argument("bayes_gradcam: samples must be >= 1");
  const std::string name = layer.empty() ? default_layer(model) : layer;
  SeededRng rng(seed);
  CoarseMap sum;
  for (std::size_t s = 0; s < samples; ++s) {
    nn::ForwardContext ctx{.mode = nn::Mode::eval, .rng = &rng, .sample_weights = true};
    const CoarseMap m = class_activation(model, image, target_class, name, ctx);
    if (s == 0) {
      sum = m;
    } else {
      for (std::size_t i = 0; i < m.values.size(); ++i) sum.values[i] += m.values[i];
    }
  }
  for (auto& v : sum.values) v /= static_cast<double>(samples);
  const Tensor x = as_batch(image);
  return finalize(sum, x.dim(1), x.dim(2), target_class, name);
}

Rgb ramp_color(double v) {
  static constexpr double stops[4][3] = {{0, 0, 255}, {0, 255, 0}, {255, 255, 0}, {255, 0, 0}};
  v = std::isnan(v) ? 0.0 : std::clamp(v, 0.0, 1.0);
  const double pos = v * 3.0;
  const std::size_t seg = std::min<std::size_t>(static_cast<std::size_t>(pos), 2);
  const double t = pos - static_cast<double>(seg);
  Rgb out{};
  for (std::size_t c = 0; c < 3; ++c) out[c] = round_channel(stops[seg][c] + t * (stops[seg + 1][c] - stops[seg][c]));
  return out;
}

const std::array<Rgb, 256>& color_lut() {
  static const std::array<Rgb, 256> lut = [] {
    std::array<Rgb, 256> t{};
    for (std::size_t i = 0; i < 256; ++i) t[i] = ramp_color(static_cast<double>(i) / 255.0);
    return t;
  }();
  return lut;
}

data::Image colorize_overlay(const Heatmap& heatmap, const Tensor& image, double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw std::invalid_argument("colorize_overlay: alpha must be in [0,1]");
  const Tensor x = as_batch(image);
  const std::size_t h = x.dim(1), w = x.dim(2), c = x.dim(3);
  if (heatmap.height != h || heatmap.width != w || heatmap.values.size() != h * w) {
    throw ShapeError("colorize_overlay: heatmap " + std::to_string(heatmap.height) + "x" +
                     std::to_string(heatmap.width) + " does not match image " + std::to_string(h) + "x" +
                     std::to_string(w));
  }
  if (c != 1 && c != 3) throw ShapeError("colorize_overlay: image must have 1 or 3 channels");
  const auto& lut = color_lut();
  data::Image out{.width = w, .height = h, .channels = 3, .pixels = std::vector<std::uint8_t>(h * w * 3)};
  auto px = x.values();
  for (std::size_t p = 0; p < h * w; ++p) {
    const double gray = c == 1 ? px[p] : 0.299 * px[p * 3] + 0.587 * px[p * 3 + 1] + 0.114 * px[p * 3 + 2];
    const double g = std::clamp(gray, 0.0, 1.0);
    const double hv = std::clamp(heatmap.values[p], 0.0, 1.0);
    const Rgb& col = lut[static_cast<std::size_t>(std::lround(255.0 * hv))];
    for (std::size_t ch = 0; ch < 3; ++ch) {
      out.pixels[p * 3 + ch] = round_channel((1.0 - alpha) * 255.0 * g + alpha * col[ch]);
    }
  }
  return out;
}

std::string overlay_filename(const std::string& sample_id, const std::string& class_name, const std::string& layer) {
  return sample_id + "_" + class_name + "_" + layer + ".png";
}

}  // namespace adx::cam
