#include "adx/train/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>

#include "adx/core/autograd.hpp"
#include "adx/core/errors.hpp"

namespace adx::train {

namespace {

double safe_ratio(double num, double den) { return den > 0.0 ? num / den : 0.0; }

std::string fixed6(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

}  // namespace

Tensor cross_entropy(const Tensor& probs, const Tensor& targets) {
  if (probs.rank() != 2) throw ShapeError("cross_entropy: predictions must be [N,K], got " + shape_str(probs.shape()));
  if (targets.shape() != probs.shape()) {
    throw ShapeError("cross_entropy: targets " + shape_str(targets.shape()) + " vs predictions " +
                     shape_str(probs.shape()));
  }
  const std::size_t n = probs.dim(0);
  if (n == 0) throw ShapeError("cross_entropy: empty batch");
  const double inv_n = 1.0 / static_cast<double>(n);
  double total = 0.0;
  for (std::size_t i = 0; i < probs.numel(); ++i) {
    const double t = targets[i];
    if (t != 0.0) total -= t * std::log(std::max(probs[i], kCrossEntropyClamp));
  }
  return autograd::record({1}, {total * inv_n}, {probs, targets}, [inv_n](const autograd::BackwardContext& ctx) {
    const double dy = ctx.out_grad()[0] * inv_n;
    auto p = ctx.input_value(0);
    auto t = ctx.input_value(1);
    if (auto g = ctx.input_grad(0); !g.empty()) {
      for (std::size_t i = 0; i < g.size(); ++i)
        if (t[i] != 0.0 && p[i] > kCrossEntropyClamp) g[i] -= dy * t[i] / p[i];
    }
    if (auto g = ctx.input_grad(1); !g.empty()) {
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= dy * std::log(std::max(p[i], kCrossEntropyClamp));
    }
  });
}

std::vector<std::size_t> argmax_rows(const Tensor& probs) {
  if (probs.rank() != 2) throw ShapeError("argmax_rows: expected [N,K], got " + shape_str(probs.shape()));
  const std::size_t n = probs.dim(0), k = probs.dim(1);
  std::vector<std::size_t> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < k; ++j)
      if (probs[i * k + j] > probs[i * k + best]) best = j;
    out[i] = best;
  }
  return out;
}

ConfusionMatrix confusion_matrix(const std::vector<std::size_t>& labels, const std::vector<std::size_t>& predicted,
                                 std::size_t n_classes) {
  if (labels.size() != predicted.size()) {
    throw ShapeError("confusion_matrix: " + std::to_string(labels.size()) + " labels vs " +
                     std::to_string(predicted.size()) + " predictions");
  }
  ConfusionMatrix c(n_classes, std::vector<std::size_t>(n_classes, 0));
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= n_classes || predicted[i] >= n_classes) {
      throw DataError("confusion_matrix: class index out of range at row " + std::to_string(i));
    }
    ++c[labels[i]][predicted[i]];
  }
  return c;
}

double auc_rank(const std::vector<double>& scores, const std::vector<bool>& positive) {
  if (scores.size() != positive.size()) throw ShapeError("auc_rank: scores and labels differ in length");
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double rank_sum = 0.0;
  std::size_t n_pos = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);  // mean of ranks i+1..j
    for (std::size_t r = i; r < j; ++r) {
      if (positive[order[r]]) {
        rank_sum += avg_rank;
        ++n_pos;
      }
    }
    i = j;
  }
  const std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) return std::numeric_limits<double>::quiet_NaN();
  const double np = static_cast<double>(n_pos), nn = static_cast<double>(n_neg);
  return (rank_sum - np * (np + 1.0) / 2.0) / (np * nn);
}

ClassificationMetrics metrics_from_predictions(const std::vector<std::size_t>& labels,
                                               const std::vector<std::size_t>& predicted, std::size_t n_classes) {
  if (labels.empty()) throw DataError("evaluate: empty test set");
  ClassificationMetrics m;
  m.confusion = confusion_matrix(labels, predicted, n_classes);
  std::size_t correct = 0;
  for (std::size_t c = 0; c < n_classes; ++c) correct += m.confusion[c][c];
  m.accuracy = static_cast<double>(correct) / static_cast<double>(labels.size());
  m.precision.resize(n_classes);
  m.recall.resize(n_classes);
  m.f1.resize(n_classes);
  for (std::size_t c = 0; c < n_classes; ++c) {
    double predicted_c = 0.0, actual_c = 0.0;
    for (std::size_t o = 0; o < n_classes; ++o) {
      predicted_c += static_cast<double>(m.confusion[o][c]);
      actual_c += static_cast<double>(m.confusion[c][o]);
    }
    const double tp = static_cast<double>(m.confusion[c][c]);
    m.precision[c] = safe_ratio(tp, predicted_c);
    m.recall[c] = safe_ratio(tp, actual_c);
    m.f1[c] = safe_ratio(2.0 * m.precision[c] * m.recall[c], m.precision[c] + m.recall[c]);
  }
  const double k = static_cast<double>(n_classes);
  m.macro_precision = std::accumulate(m.precision.begin(), m.precision.end(), 0.0) / k;
  m.macro_recall = std::accumulate(m.recall.begin(), m.recall.end(), 0.0) / k;
  m.macro_f1 = std::accumulate(m.f1.begin(), m.f1.end(), 0.0) / k;
  m.auc_macro = std::numeric_limits<double>::quiet_NaN();
  return m;
}

ClassificationMetrics metrics_from_probabilities(const Tensor& probs, const std::vector<std::size_t>& labels) {
  if (probs.rank() != 2 || probs.dim(0) != labels.size()) {
    throw ShapeError("evaluate: probabilities " + shape_str(probs.shape()) + " for " + std::to_string(labels.size()) +
                     " labels");
  }
  const std::size_t n = probs.dim(0), k = probs.dim(1);
  ClassificationMetrics m = metrics_from_predictions(labels, argmax_rows(probs), k);
  m.auc.resize(k);
  double sum = 0.0;
  std::size_t defined = 0;
  std::vector<double> scores(n);
  std::vector<bool> positive(n);
  for (std::size_t c = 0; c < k; ++c) {
    for (std::size_t i = 0; i < n; ++i) {
      scores[i] = probs[i * k + c];
      positive[i] = labels[i] == c;
    }
    m.auc[c] = auc_rank(scores, positive);
    if (!std::isnan(m.auc[c])) {
      sum += m.auc[c];
      ++defined;
    }
  }
  m.auc_macro = defined > 0 ? sum / static_cast<double>(defined) : std::numeric_limits<double>::quiet_NaN();
  return m;
}

void write_report_csv(std::ostream& os, const std::vector<ReportRow>& rows,
                      const std::vector<std::string>& class_names) {
  os << "model,resampled,accuracy,recall,precision,f1,auc_macro";
  for (const auto& name : class_names) os << ",auc_" << name;
  os << '\n';
  for (const auto& r : rows) {
    const auto& m = r.metrics;
    os << r.model << ',' << (r.resampled ? "true" : "false") << ',' << fixed6(m.accuracy) << ','
       << fixed6(m.macro_recall) << ',' << fixed6(m.macro_precision) << ',' << fixed6(m.macro_f1) << ','
       << fixed6(m.auc_macro);
    for (std::size_t c = 0; c < class_names.size(); ++c)
      os << ',' << fixed6(c < m.auc.size() ? m.auc[c] : std::numeric_limits<double>::quiet_NaN());
    os << '\n';
  }
}

void write_confusion_csv(std::ostream& os, const ConfusionMatrix& confusion,
                         const std::vector<std::string>& class_names) {
  os << "true\\predicted";
  for (const auto& name : class_names) os << ',' << name;
  os << '\n';
  for (std::size_t r = 0; r < confusion.size(); ++r) {
    os << (r < class_names.size() ? class_names[r] : std::to_string(r));
    for (auto v : confusion[r]) os << ',' << v;
    os << '\n';
  }
}

}  // namespace adx::train
