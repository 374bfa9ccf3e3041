#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "adx/data/image_io.hpp"
#include "adx/nn/model.hpp"

namespace adx::cam {

/// ReLU(sum_k alpha_k A_k) at the resolution of the target layer, where
/// alpha_k is the spatial mean of d(class logit)/dA_k.
struct CoarseMap {
  std::vector<double> values;
  std::size_t height = 0;
  std::size_t width = 0;
};

struct Heatmap {
  /// Row-major [height, width], min-max normalised to [0,1]; all zeros if the
  /// class activation map is identically zero.
  std::vector<double> values;
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t target_class = 0;
  std::string layer;
  /// Largest value before normalisation.
  double raw_max = 0.0;
};

/// Last conv (or Bayesian conv) layer. Throws std::invalid_argument if the
/// model has none.
std::string default_layer(nn::Model& model);

/// Class activation map for a single image ([H,W,C] or [1,H,W,C]) under the
/// given forward context. Throws std::invalid_argument when the layer is
/// missing or not convolutional, or when the class is out of range.
CoarseMap class_activation(nn::Model& model, const Tensor& image, std::size_t target_class, const std::string& layer,
                           nn::ForwardContext& ctx);

/// Bilinear upsampling to height x width followed by min-max normalisation.
Heatmap finalize(const CoarseMap& map, std::size_t height, std::size_t width, std::size_t target_class,
                 const std::string& layer);

/// Eval-mode Grad-CAM; Bayesian layers use their posterior means. An empty
/// layer name selects default_layer(model).
Heatmap gradcam(nn::Model& model, const Tensor& image, std::size_t target_class, const std::string& layer = "");

enum class BayesMode { mean_weights, averaged };
std::string to_string(BayesMode mode);
BayesMode bayes_mode_from_string(const std::string& s);

/// mean_weights: identical to gradcam(). averaged: `samples` stochastic
/// passes drawing layer noise from SeededRng(seed) in sequence; their coarse
/// maps are averaged before upsampling and normalisation.
Heatmap bayes_gradcam(nn::Model& model, const Tensor& image, std::size_t target_class, const std::string& layer,
                      BayesMode mode, std::size_t samples = 10, std::uint64_t seed = 0);

using Rgb = std::array<std::uint8_t, 3>;

/// Colour ramp: v is clamped to [0,1] and interpolated linearly between the
/// stops 0 blue (0,0,255), 1/3 green (0,255,0), 2/3 yellow (255,255,0) and
/// 1 red (255,0,0); channels are rounded half away from zero.
Rgb ramp_color(double v);

/// 256-entry table: entry i is ramp_color(i / 255).
const std::array<Rgb, 256>& color_lut();

/// Per pixel: round((1 - alpha) * 255 * gray + alpha * lut[round(255 * h)]),
/// where gray is the image's first channel (or ITU-R 601 luma for RGB
/// images) in [0,1]. Throws std::invalid_argument for alpha outside [0,1]
/// or a size mismatch.
data::Image colorize_overlay(const Heatmap& heatmap, const Tensor& image, double alpha = 0.5);

/// "<sample-id>_<class>_<layer>.png"
std::string overlay_filename(const std::string& sample_id, const std::string& class_name, const std::string& layer);

}  // namespace adx::cam
