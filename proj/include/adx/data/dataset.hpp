#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "adx/core/tensor.hpp"
#include "adx/resample/resample.hpp"

namespace adx::data {

struct LabeledImageSet {
  Tensor images;  // [N,H,W,C], values in [0,1]
  std::vector<std::size_t> labels;
  std::vector<std::string> class_names;

  std::size_t size() const { return labels.size(); }
  std::size_t height() const { return images.dim(1); }
  std::size_t width() const { return images.dim(2); }
  std::size_t channels() const { return images.dim(3); }
  std::size_t n_classes() const { return class_names.size(); }

  /// Throws DataError when shapes, labels or pixel range are inconsistent.
  void validate() const;
  /// Rows in the given order.
  LabeledImageSet subset(const std::vector<std::size_t>& indices) const;
  std::vector<std::size_t> class_counts() const;
};

// Binary dataset file: "IMDS", u32 version, u32 class count, class names
// (u32 length + UTF-8 bytes), u64 N, u32 H, W, C, N*H*W*C f32 pixels,
// N u32 labels. All integers little-endian.
inline constexpr std::uint32_t kImdsVersion = 1;
void write_imds(std::ostream& os, const LabeledImageSet& ds);
LabeledImageSet read_imds(std::istream& is);
void save_imds(const std::filesystem::path& path, const LabeledImageSet& ds);
LabeledImageSet load_imds(const std::filesystem::path& path);

struct LoadOptions {
  std::size_t height = 64;
  std::size_t width = 64;
  std::size_t channels = 1;
};

struct LoadReport {
  std::size_t loaded = 0;
  std::vector<std::string> skipped;  // files that failed to decode
};

/// One subdirectory per class; class index follows the lexicographic order
/// of the folder names. Files are read in sorted path order, converted to
/// the requested channel count, resized bilinearly and scaled to [0,1].
/// Hidden files are ignored and undecodable files are skipped and reported.
LabeledImageSet load_image_folder(const std::filesystem::path& root, const LoadOptions& options = {},
                                  LoadReport* report = nullptr);

/// Bilinear resize with half-pixel centres; [h,w,c] planar doubles.
std::vector<double> resize_bilinear(const std::vector<double>& src, std::size_t h, std::size_t w, std::size_t c,
                                    std::size_t out_h, std::size_t out_w);

/// Divides by 255 unless every value already lies in [0,1].
void rescale_to_unit(std::vector<double>& values);

Tensor one_hot(const std::vector<std::size_t>& labels, std::size_t n_classes);

struct SplitSpec {
  /// (train, test) or (train, val, test); each > 0, summing to 1.
  std::vector<double> fractions{0.6, 0.2, 0.2};
  bool stratified = true;
  std::uint64_t seed = 0;

  void validate() const;
  bool three_way() const { return fractions.size() == 3; }
};

struct SplitIndices {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;  // empty in two-way mode
  std::vector<std::size_t> test;
};

/// Shuffles each class with its own derived stream and apportions it by
/// largest remainder, giving every part at least one sample. Indices in each
/// part are ascending.
SplitIndices split_indices(const std::vector<std::size_t>& labels, std::size_t n_classes, const SplitSpec& spec);

struct Split {
  LabeledImageSet train;
  LabeledImageSet val;
  LabeledImageSet test;
  SplitIndices indices;
};

Split stratified_split(const LabeledImageSet& ds, const SplitSpec& spec);

enum class PatternKind { quadrant_blob, stripes };
std::string to_string(PatternKind kind);
PatternKind pattern_kind_from_string(const std::string& name);

/// Four synthetic classes on a single channel. quadrant_blob: class c holds a
/// Gaussian bump whose support is confined to quadrant c (0 top-left,
/// 1 top-right, 2 bottom-left, 3 bottom-right). stripes: class-specific
/// stripe orientation. Gaussian noise is added and values clamped to [0,1]
/// and rounded to float precision. Rows are ordered class by class.
LabeledImageSet synth_dataset(std::size_t n_per_class, std::size_t height, std::size_t width, PatternKind kind,
                              double noise, std::uint64_t seed);
/// Same generator with an explicit count per class.
LabeledImageSet synth_dataset(const std::vector<std::size_t>& counts, std::size_t height, std::size_t width,
                              PatternKind kind, double noise, std::uint64_t seed);

resample::FeatureMatrix flatten(const LabeledImageSet& ds);
LabeledImageSet unflatten(const resample::FeatureMatrix& x, const std::vector<std::size_t>& labels, std::size_t height,
                          std::size_t width, std::size_t channels, std::vector<std::string> class_names);

struct ResampledSet {
  LabeledImageSet data;
  resample::ResampleReport report;
};

/// SMOTE-Tomek on flattened pixels; the result keeps the input's image shape
/// and class names.
ResampledSet smote_tomek(const LabeledImageSet& ds, const resample::ResamplePlan& plan);

}  // namespace adx::data
