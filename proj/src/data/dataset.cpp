#include "adx/data/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "adx/core/binary_io.hpp"
#include "adx/core/errors.hpp"
#include "adx/core/rng.hpp"
#include "adx/data/image_io.hpp"

namespace fs = std::filesystem;

namespace adx::data {

namespace {

constexpr std::uint64_t kMaxImdsElements = std::uint64_t{1} << 34;

void shuffle(std::vector<std::size_t>& v, SeededRng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.uniform_index(i)]);
}

// Largest-remainder apportionment of n items with at least one per part.
std::vector<std::size_t> apportion(std::size_t n, const std::vector<double>& fractions) {
  const std::size_t parts = fractions.size();
  std::vector<double> quota(parts);
  std::vector<std::size_t> count(parts);
  std::size_t total = 0;
  for (std::size_t k = 0; k < parts; ++k) {
    quota[k] = static_cast<double>(n) * fractions[k];
    count[k] = std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(quota[k])));
    total += count[k];
  }
  while (total > n) {
    std::size_t pick = parts;
    for (std::size_t k = 0; k < parts; ++k)
      if (count[k] > 1 && (pick == parts || count[k] - quota[k] > count[pick] - quota[pick])) pick = k;
    --count[pick];
    --total;
  }
  std::vector<std::size_t> order(parts);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return quota[a] - static_cast<double>(count[a]) > quota[b] - static_cast<double>(count[b]);
  });
  for (std::size_t i = 0; total < n; i = (i + 1) % parts) {
    ++count[order[i]];
    ++total;
  }
  return count;
}

std::vector<double> to_channels(const Image& img, std::size_t channels) {
  const std::size_t n = img.width * img.height;
  std::vector<double> out(n * channels);
  for (std::size_t p = 0; p < n; ++p) {
    const std::uint8_t* px = img.pixels.data() + p * img.channels;
    if (channels == img.channels) {
      for (std::size_t c = 0; c < channels; ++c) out[p * channels + c] = px[c];
    } else if (channels == 1) {
      out[p] = 0.299 * px[0] + 0.587 * px[1] + 0.114 * px[2];
    } else {
      for (std::size_t c = 0; c < channels; ++c) out[p * channels + c] = px[0];
    }
  }
  return out;
}

}  // namespace

void LabeledImageSet::validate() const {
  if (!images.defined() || images.rank() != 4)
    throw DataError("dataset: images must be [N,H,W,C]");
  if (images.dim(0) != labels.size())
    throw DataError("dataset: " + std::to_string(labels.size()) + " labels for " + std::to_string(images.dim(0)) +
                    " images");
  for (auto l : labels)
    if (l >= class_names.size())
      throw DataError("dataset: label " + std::to_string(l) + " with " + std::to_string(class_names.size()) +
                      " classes");
  for (double v : images.values())
    if (!(v >= 0.0 && v <= 1.0)) throw DataError("dataset: pixel value outside [0,1]");
}

LabeledImageSet LabeledImageSet::subset(const std::vector<std::size_t>& indices) const {
  const std::size_t per = height() * width() * channels();
  std::vector<double> v;
  v.reserve(indices.size() * per);
  LabeledImageSet out;
  out.class_names = class_names;
  auto src = images.values();
  for (auto i : indices) {
    if (i >= size()) throw std::out_of_range("subset: index " + std::to_string(i));
    v.insert(v.end(), src.begin() + static_cast<std::ptrdiff_t>(i * per),
             src.begin() + static_cast<std::ptrdiff_t>((i + 1) * per));
    out.labels.push_back(labels[i]);
  }
  out.images = Tensor({indices.size(), height(), width(), channels()}, std::move(v));
  return out;
}

std::vector<std::size_t> LabeledImageSet::class_counts() const { return resample::class_counts(labels, n_classes()); }

void write_imds(std::ostream& os, const LabeledImageSet& ds) {
  ds.validate();
  binio::write_magic(os, "IMDS");
  binio::write_u32(os, kImdsVersion);
  binio::write_u32(os, static_cast<std::uint32_t>(ds.class_names.size()));
  for (const auto& n : ds.class_names) binio::write_string(os, n);
  binio::write_u64(os, ds.size());
  binio::write_u32(os, static_cast<std::uint32_t>(ds.height()));
  binio::write_u32(os, static_cast<std::uint32_t>(ds.width()));
  binio::write_u32(os, static_cast<std::uint32_t>(ds.channels()));
  for (double v : ds.images.values()) binio::write_f32(os, static_cast<float>(v));
  for (auto l : ds.labels) binio::write_u32(os, static_cast<std::uint32_t>(l));
  if (!os) throw std::runtime_error("imds: write failed");
}

LabeledImageSet read_imds(std::istream& is) {
  binio::expect_magic(is, "IMDS", "dataset");
  const auto version = binio::read_u32(is);
  if (version != kImdsVersion) throw DataError("dataset: unsupported IMDS version " + std::to_string(version));
  LabeledImageSet ds;
  const auto n_classes = binio::read_u32(is);
  if (n_classes == 0 || n_classes > 1u << 16) throw DataError("dataset: bad class count");
  for (std::uint32_t c = 0; c < n_classes; ++c) ds.class_names.push_back(binio::read_string(is, 4096));
  const std::uint64_t n = binio::read_u64(is);
  const std::uint64_t h = binio::read_u32(is), w = binio::read_u32(is), c = binio::read_u32(is);
  if (h == 0 || w == 0 || c == 0 || n * h * w * c > kMaxImdsElements) throw DataError("dataset: bad dimensions");
  std::vector<double> px(n * h * w * c);
  for (auto& v : px) v = binio::read_f32(is);
  ds.labels.resize(n);
  for (auto& l : ds.labels) l = binio::read_u32(is);
  ds.images = Tensor({n, h, w, c}, std::move(px));
  ds.validate();
  return ds;
}

void save_imds(const fs::path& path, const LabeledImageSet& ds) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  write_imds(f, ds);
}

LabeledImageSet load_imds(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open dataset '" + path.string() + "'");
  return read_imds(f);
}

std::vector<double> resize_bilinear(const std::vector<double>& src, std::size_t h, std::size_t w, std::size_t c,
                                    std::size_t out_h, std::size_t out_w) {
  if (src.size() != h * w * c) throw ShapeError("resize: buffer does not match dimensions");
  if (out_h == h && out_w == w) return src;
  std::vector<double> out(out_h * out_w * c);
  auto coord = [](std::size_t o, std::size_t in, std::size_t outn, std::size_t& i0, std::size_t& i1, double& t) {
    double s = (static_cast<double>(o) + 0.5) * static_cast<double>(in) / static_cast<double>(outn) - 0.5;
    s = std::clamp(s, 0.0, static_cast<double>(in - 1));
    i0 = static_cast<std::size_t>(std::floor(s));
    i1 = std::min(i0 + 1, in - 1);
    t = s - static_cast<double>(i0);
  };
  for (std::size_t y = 0; y < out_h; ++y) {
    std::size_t y0, y1;
    double ty;
    coord(y, h, out_h, y0, y1, ty);
    for (std::size_t x = 0; x < out_w; ++x) {
      std::size_t x0, x1;
      double tx;
      coord(x, w, out_w, x0, x1, tx);
      for (std::size_t ch = 0; ch < c; ++ch) {
        const double a = src[(y0 * w + x0) * c + ch], b = src[(y0 * w + x1) * c + ch];
        const double d = src[(y1 * w + x0) * c + ch], e = src[(y1 * w + x1) * c + ch];
        out[(y * out_w + x) * c + ch] = (1 - ty) * ((1 - tx) * a + tx * b) + ty * ((1 - tx) * d + tx * e);
      }
    }
  }
  return out;
}

void rescale_to_unit(std::vector<double>& values) {
  const bool scaled = std::all_of(values.begin(), values.end(), [](double v) { return v >= 0.0 && v <= 1.0; });
  if (scaled) return;
  for (auto& v : values) v = std::clamp(v / 255.0, 0.0, 1.0);
}

LabeledImageSet load_image_folder(const fs::path& root, const LoadOptions& options, LoadReport* report) {
  if (!fs::is_directory(root)) throw DataError("image folder '" + root.string() + "' does not exist");
  if (options.channels != 1 && options.channels != 3) throw std::invalid_argument("load: channels must be 1 or 3");
  if (options.height == 0 || options.width == 0) throw std::invalid_argument("load: size must be > 0");
  std::vector<fs::path> class_dirs;
  for (const auto& e : fs::directory_iterator(root))
    if (e.is_directory() && e.path().filename().string().front() != '.') class_dirs.push_back(e.path());
  std::sort(class_dirs.begin(), class_dirs.end(),
            [](const fs::path& a, const fs::path& b) { return a.filename().string() < b.filename().string(); });
  if (class_dirs.empty()) throw DataError("image folder '" + root.string() + "' has no class subdirectories");

  LoadReport local;
  LoadReport& rep = report ? *report : local;
  LabeledImageSet ds;
  std::vector<double> pixels;
  for (std::size_t c = 0; c < class_dirs.size(); ++c) {
    ds.class_names.push_back(class_dirs[c].filename().string());
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(class_dirs[c]))
      if (e.is_regular_file() && e.path().filename().string().front() != '.') files.push_back(e.path());
    std::sort(files.begin(), files.end());
    std::size_t loaded = 0;
    for (const auto& f : files) {
      Image img;
      try {
        img = read_image(f);
      } catch (const DataError&) {
        rep.skipped.push_back(f.string());
        continue;
      }
      auto v = resize_bilinear(to_channels(img, options.channels), img.height, img.width, options.channels,
                               options.height, options.width);
      for (auto& x : v) x = std::clamp(x / 255.0, 0.0, 1.0);
      pixels.insert(pixels.end(), v.begin(), v.end());
      ds.labels.push_back(c);
      ++loaded;
    }
    if (loaded == 0) throw DataError("class folder '" + class_dirs[c].string() + "' has no decodable images");
    rep.loaded += loaded;
  }
  ds.images = Tensor({ds.labels.size(), options.height, options.width, options.channels}, std::move(pixels));
  return ds;
}

Tensor one_hot(const std::vector<std::size_t>& labels, std::size_t n_classes) {
  if (n_classes == 0) throw std::invalid_argument("one_hot: n_classes must be > 0");
  std::vector<double> v(labels.size() * n_classes, 0.0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= n_classes)
      throw std::invalid_argument("one_hot: label " + std::to_string(labels[i]) + " >= " + std::to_string(n_classes));
    v[i * n_classes + labels[i]] = 1.0;
  }
  return Tensor({labels.size(), n_classes}, std::move(v));
}

void SplitSpec::validate() const {
  if (fractions.size() != 2 && fractions.size() != 3)
    throw std::invalid_argument("split: give (train,test) or (train,val,test) fractions");
  double total = 0.0;
  for (double f : fractions) {
    if (!(f > 0.0)) {
      throw std::invalid_argument(
          "split: every fraction must be > 0; use two fractions (train,test) for a split without validation");
    }
    total += f;
  }
  if (std::abs(total - 1.0) > 1e-9) throw std::invalid_argument("split: fractions must sum to 1");
}

SplitIndices split_indices(const std::vector<std::size_t>& labels, std::size_t n_classes, const SplitSpec& spec) {
  spec.validate();
  const std::size_t parts = spec.fractions.size();
  std::vector<std::vector<std::size_t>> groups;
  if (spec.stratified) {
    groups.resize(n_classes);
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] >= n_classes) throw DataError("split: label out of range");
      groups[labels[i]].push_back(i);
    }
  } else {
    groups.emplace_back(labels.size());
    std::iota(groups[0].begin(), groups[0].end(), 0);
  }
  std::vector<std::vector<std::size_t>> out(parts);
  std::string too_small;
  for (std::size_t g = 0; g < groups.size(); ++g) {
    if (groups[g].size() < parts) {
      too_small += (too_small.empty() ? "" : ", ") + std::to_string(g) + " (" + std::to_string(groups[g].size()) + ")";
      continue;
    }
    SeededRng rng(derive_seed(spec.seed, "split", g));
    shuffle(groups[g], rng);
    const auto counts = apportion(groups[g].size(), spec.fractions);
    std::size_t pos = 0;
    for (std::size_t k = 0; k < parts; ++k)
      for (std::size_t j = 0; j < counts[k]; ++j) out[k].push_back(groups[g][pos++]);
  }
  if (!too_small.empty())
    throw DataError("split: classes with fewer than " + std::to_string(parts) + " samples: " + too_small);
  for (auto& o : out) std::sort(o.begin(), o.end());
  SplitIndices idx;
  idx.train = std::move(out[0]);
  if (parts == 3) {
    idx.val = std::move(out[1]);
    idx.test = std::move(out[2]);
  } else {
    idx.test = std::move(out[1]);
  }
  return idx;
}

Split stratified_split(const LabeledImageSet& ds, const SplitSpec& spec) {
  Split s;
  s.indices = split_indices(ds.labels, ds.n_classes(), spec);
  s.train = ds.subset(s.indices.train);
  s.val = ds.subset(s.indices.val);
  s.test = ds.subset(s.indices.test);
  return s;
}

std::string to_string(PatternKind kind) { return kind == PatternKind::stripes ? "stripes" : "quadrant_blob"; }

PatternKind pattern_kind_from_string(const std::string& name) {
  if (name == "quadrant_blob") return PatternKind::quadrant_blob;
  if (name == "stripes") return PatternKind::stripes;
  throw std::invalid_argument("unknown pattern kind '" + name + "'");
}

LabeledImageSet synth_dataset(std::size_t n_per_class, std::size_t height, std::size_t width, PatternKind kind,
                              double noise, std::uint64_t seed) {
  return synth_dataset(std::vector<std::size_t>(4, n_per_class), height, width, kind, noise, seed);
}

LabeledImageSet synth_dataset(const std::vector<std::size_t>& counts, std::size_t height, std::size_t width,
                              PatternKind kind, double noise, std::uint64_t seed) {
  if (counts.size() != 4) throw std::invalid_argument("synth: exactly four class counts");
  if (height < 8 || width < 8) throw std::invalid_argument("synth: height and width must be >= 8");
  if (!(noise >= 0.0)) throw std::invalid_argument("synth: noise must be >= 0");
  const std::size_t hw = height * width;
  const double qh = static_cast<double>(height / 2), qw = static_cast<double>(width / 2);
  const double spread = static_cast<double>(std::min(height, width)) / 10.0;
  constexpr double kPi = 3.14159265358979323846;

  LabeledImageSet ds;
  ds.class_names = {"class0", "class1", "class2", "class3"};
  std::vector<double> pixels;
  pixels.reserve(hw * std::accumulate(counts.begin(), counts.end(), std::size_t{0}));
  for (std::size_t c = 0; c < 4; ++c) {
    std::vector<double> base(hw, 0.0);
    for (std::size_t y = 0; y < height; ++y)
      for (std::size_t x = 0; x < width; ++x) {
        double v = 0.0;
        if (kind == PatternKind::quadrant_blob) {
          const std::size_t r0 = (c / 2) * (height / 2), c0 = (c % 2) * (width / 2);
          if (y >= r0 && y < r0 + height / 2 && x >= c0 && x < c0 + width / 2) {
            const double dy = static_cast<double>(y) - (static_cast<double>(r0) + qh / 2.0 - 0.5);
            const double dx = static_cast<double>(x) - (static_cast<double>(c0) + qw / 2.0 - 0.5);
            v = std::exp(-(dx * dx + dy * dy) / (2.0 * spread * spread));
          }
        } else {
          const double fy = static_cast<double>(y), fx = static_cast<double>(x);
          const double phase = c == 0 ? fy : c == 1 ? fx : c == 2 ? (fx + fy) / std::sqrt(2.0) : (fx - fy) / std::sqrt(2.0);
          v = 0.5 + 0.5 * std::sin(2.0 * kPi * phase / 8.0);
        }
        base[y * width + x] = v;
      }
    SeededRng rng(derive_seed(seed, "synth", c));
    for (std::size_t i = 0; i < counts[c]; ++i) {
      for (std::size_t p = 0; p < hw; ++p) {
        double v = base[p];
        if (noise > 0.0) v += noise * rng.normal();
        pixels.push_back(static_cast<double>(static_cast<float>(std::clamp(v, 0.0, 1.0))));
      }
      ds.labels.push_back(c);
    }
  }
  ds.images = Tensor({ds.labels.size(), height, width, 1}, std::move(pixels));
  return ds;
}

resample::FeatureMatrix flatten(const LabeledImageSet& ds) {
  const std::size_t cols = ds.height() * ds.width() * ds.channels();
  auto v = ds.images.values();
  return resample::FeatureMatrix(ds.size(), cols, std::vector<double>(v.begin(), v.end()));
}

LabeledImageSet unflatten(const resample::FeatureMatrix& x, const std::vector<std::size_t>& labels, std::size_t height,
                          std::size_t width, std::size_t channels, std::vector<std::string> class_names) {
  if (x.cols != height * width * channels)
    throw ShapeError("unflatten: " + std::to_string(x.cols) + " features vs " + std::to_string(height) + "x" +
                     std::to_string(width) + "x" + std::to_string(channels));
  if (labels.size() != x.rows) throw ShapeError("unflatten: label count differs from row count");
  LabeledImageSet ds;
  ds.images = Tensor({x.rows, height, width, channels}, x.data);
  ds.labels = labels;
  ds.class_names = std::move(class_names);
  return ds;
}

ResampledSet smote_tomek(const LabeledImageSet& ds, const resample::ResamplePlan& plan) {
  ds.validate();
  auto r = resample::smote_tomek(flatten(ds), ds.labels, plan);
  return {unflatten(r.x, r.y, ds.height(), ds.width(), ds.channels(), ds.class_names), std::move(r.report)};
}

}  // namespace adx::data
