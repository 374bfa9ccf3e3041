#pragma once

#include <cstddef>
#include <ostream>
#include <string>
#include <vector>

#include "adx/core/tensor.hpp"

namespace adx::train {

inline constexpr double kCrossEntropyClamp = 1e-12;

/// Mean over rows of -sum_k t[k] * log(max(p[k], 1e-12)). `targets` has the
/// shape of `probs` ([N,K]); clamped entries pass no gradient.
Tensor cross_entropy(const Tensor& probs, const Tensor& targets);

/// Row-wise argmax; ties resolve to the lowest class index.
std::vector<std::size_t> argmax_rows(const Tensor& probs);

/// confusion[true][predicted].
using ConfusionMatrix = std::vector<std::vector<std::size_t>>;

ConfusionMatrix confusion_matrix(const std::vector<std::size_t>& labels, const std::vector<std::size_t>& predicted,
                                 std::size_t n_classes);

/// One-vs-rest ROC AUC through the Mann-Whitney rank statistic with averaged
/// ranks for ties. NaN when either class is absent.
double auc_rank(const std::vector<double>& scores, const std::vector<bool>& positive);

struct ClassificationMetrics {
  ConfusionMatrix confusion;
  double accuracy = 0.0;
  // Per class. A rate whose denominator is zero is reported as 0.
  std::vector<double> precision;
  std::vector<double> recall;
  std::vector<double> f1;
  // Unweighted means over all classes.
  double macro_precision = 0.0;
  double macro_recall = 0.0;
  double macro_f1 = 0.0;
  /// Per-class one-vs-rest AUC; empty when only hard predictions were given.
  std::vector<double> auc;
  /// Mean over classes whose AUC is defined; NaN if none is.
  double auc_macro = 0.0;

  std::size_t n_classes() const { return confusion.size(); }
};

/// Throws DataError for an empty set or a label/prediction out of range.
ClassificationMetrics metrics_from_predictions(const std::vector<std::size_t>& labels,
                                               const std::vector<std::size_t>& predicted, std::size_t n_classes);

/// Metrics from class probabilities [N,K]: argmax predictions plus AUC.
ClassificationMetrics metrics_from_probabilities(const Tensor& probs, const std::vector<std::size_t>& labels);

struct ReportRow {
  std::string model;
  bool resampled = false;
  ClassificationMetrics metrics;
};

/// Header: model,resampled,accuracy,recall,precision,f1,auc_macro, then one
/// auc_<class> column per class name. Rates use six decimals; an undefined
/// AUC is written as "nan".
void write_report_csv(std::ostream& os, const std::vector<ReportRow>& rows, const std::vector<std::string>& class_names);

/// Header: true\predicted followed by the class names; one row per class.
void write_confusion_csv(std::ostream& os, const ConfusionMatrix& confusion,
                         const std::vector<std::string>& class_names);

}  // namespace adx::train
