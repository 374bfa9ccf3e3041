#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace adx::resample {

/// Row-major samples x features.
struct FeatureMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  FeatureMatrix() = default;
  FeatureMatrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  std::span<const double> row(std::size_t i) const { return {data.data() + i * cols, cols}; }
  std::span<double> row(std::size_t i) { return {data.data() + i * cols, cols}; }
  /// Throws DataError on size mismatch or non-finite entries.
  void validate() const;
};

using Labels = std::vector<std::size_t>;

enum class LinkRemoval { majority_only, both };

std::string to_string(LinkRemoval removal);
LinkRemoval link_removal_from_string(const std::string& name);

struct ResamplePlan {
  std::size_t k_neighbors = 5;
  /// Per-class target sizes; empty means every class grows to the largest
  /// class count.
  std::vector<std::size_t> target_counts;
  LinkRemoval link_removal = LinkRemoval::majority_only;
  std::uint64_t seed = 0;
  /// Worker threads for neighbour search; 0 or 1 runs inline.
  std::size_t threads = 1;
};

/// Squared Euclidean distance, summed in feature order.
double squared_distance(std::span<const double> a, std::span<const double> b);

/// For each of `members`, the indices (into `members` order, as row ids of x)
/// of its k nearest other members. Ties go to the lower row index.
std::vector<std::vector<std::size_t>> nearest_neighbors(const FeatureMatrix& x, const std::vector<std::size_t>& members,
                                                        std::size_t k, std::size_t threads = 1);

struct SmoteResult {
  FeatureMatrix x;
  Labels y;
  /// Rows [0, n_original) are the input rows, unchanged.
  std::size_t n_original = 0;
  std::vector<std::string> warnings;
};

/// Synthesises x_i + lambda (x_nn - x_i) for each class below its target.
/// Originals of a class are visited round-robin; the neighbour and lambda
/// come from a per-class stream derived from plan.seed. Synthetic rows are
/// appended class by class in ascending label order.
SmoteResult smote(const FeatureMatrix& x, const Labels& y, const ResamplePlan& plan);

/// Pairs (a, b), a < b, of opposite-label mutual nearest neighbours, sorted.
std::vector<std::pair<std::size_t, std::size_t>> tomek_links(const FeatureMatrix& x, const Labels& y,
                                                             std::size_t threads = 1);

struct ResampleReport {
  std::vector<std::size_t> before;
  std::vector<std::size_t> after_smote;
  std::vector<std::size_t> after_tomek;
  std::vector<std::pair<std::size_t, std::size_t>> links;
  /// Rows of the post-SMOTE matrix that were dropped, ascending.
  std::vector<std::size_t> removed;
  std::vector<std::string> warnings;

  /// Columns: class,before,after_smote,after_tomek. Uses class_names when
  /// given, otherwise the label index.
  void write_csv(std::ostream& out, const std::vector<std::string>& class_names = {}) const;
};

struct ResampleResult {
  FeatureMatrix x;
  Labels y;
  ResampleReport report;
};

/// SMOTE followed by Tomek-link removal. Under majority_only each link loses
/// the member whose class was strictly larger before resampling; links between
/// classes of equal original size are left in place.
ResampleResult smote_tomek(const FeatureMatrix& x, const Labels& y, const ResamplePlan& plan);

/// Per-class counts, sized to max label + 1 (or n_classes if larger).
std::vector<std::size_t> class_counts(const Labels& y, std::size_t n_classes = 0);

}  // namespace adx::resample
