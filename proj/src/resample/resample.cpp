#include "adx/resample/resample.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <stdexcept>
#include <thread>

#include "adx/core/errors.hpp"
#include "adx/core/rng.hpp"

namespace adx::resample {

namespace {

// Runs fn(i) for i in [0, n), splitting the range into contiguous blocks.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t threads, Fn&& fn) {
  threads = std::max<std::size_t>(1, std::min(threads, n));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  const std::size_t block = (n + threads - 1) / threads;
  for (std::size_t t = 0; t < threads; ++t) {
    const std::size_t lo = t * block, hi = std::min(n, lo + block);
    if (lo >= hi) break;
    pool.emplace_back([lo, hi, &fn] {
      for (std::size_t i = lo; i < hi; ++i) fn(i);
    });
  }
  for (auto& th : pool) th.join();
}

void check_labels(const FeatureMatrix& x, const Labels& y) {
  x.validate();
  if (y.size() != x.rows)
    throw DataError("labels: " + std::to_string(y.size()) + " labels for " + std::to_string(x.rows) + " rows");
}

}  // namespace

FeatureMatrix::FeatureMatrix(std::size_t r, std::size_t c, std::vector<double> d) : rows(r), cols(c), data(std::move(d)) {
  validate();
}

void FeatureMatrix::validate() const {
  if (data.size() != rows * cols)
    throw DataError("feature matrix: " + std::to_string(data.size()) + " values for " + std::to_string(rows) + "x" +
                    std::to_string(cols));
  for (double v : data)
    if (!std::isfinite(v)) throw DataError("feature matrix: non-finite value");
}

std::string to_string(LinkRemoval removal) { return removal == LinkRemoval::both ? "both" : "majority_only"; }

LinkRemoval link_removal_from_string(const std::string& name) {
  if (name == "majority_only") return LinkRemoval::majority_only;
  if (name == "both") return LinkRemoval::both;
  throw std::invalid_argument("unknown link removal policy '" + name + "'");
}

double squared_distance(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    acc += d * d;
  }
  return acc;
}

std::vector<std::vector<std::size_t>> nearest_neighbors(const FeatureMatrix& x, const std::vector<std::size_t>& members,
                                                        std::size_t k, std::size_t threads) {
  if (k == 0 || k >= members.size())
    throw std::invalid_argument("nearest_neighbors: k=" + std::to_string(k) + " with " +
                                std::to_string(members.size()) + " members");
  std::vector<std::vector<std::size_t>> out(members.size());
  if (k == 1) {
    parallel_for(members.size(), threads, [&](std::size_t i) {
      const auto xi = x.row(members[i]);
      double best = std::numeric_limits<double>::infinity();
      std::size_t best_row = 0;
      for (std::size_t j = 0; j < members.size(); ++j) {
        if (j == i) continue;
        const double d = squared_distance(xi, x.row(members[j]));
        if (d < best || (d == best && members[j] < best_row)) {
          best = d;
          best_row = members[j];
        }
      }
      out[i] = {best_row};
    });
    return out;
  }
  parallel_for(members.size(), threads, [&](std::size_t i) {
    // (distance, row) ordered lexicographically gives the lowest-index tie break.
    std::vector<std::pair<double, std::size_t>> cand;
    cand.reserve(members.size() - 1);
    const auto xi = x.row(members[i]);
    for (std::size_t j = 0; j < members.size(); ++j) {
      if (j == i) continue;
      cand.emplace_back(squared_distance(xi, x.row(members[j])), members[j]);
    }
    std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(k), cand.end());
    out[i].reserve(k);
    for (std::size_t j = 0; j < k; ++j) out[i].push_back(cand[j].second);
  });
  return out;
}

std::vector<std::size_t> class_counts(const Labels& y, std::size_t n_classes) {
  std::size_t n = n_classes;
  for (auto l : y) n = std::max(n, l + 1);
  std::vector<std::size_t> counts(n, 0);
  for (auto l : y) ++counts[l];
  return counts;
}

SmoteResult smote(const FeatureMatrix& x, const Labels& y, const ResamplePlan& plan) {
  check_labels(x, y);
  if (plan.k_neighbors == 0) throw std::invalid_argument("smote: k_neighbors must be >= 1");
  const auto counts = class_counts(y, plan.target_counts.size());
  const std::size_t n_classes = counts.size();
  std::vector<std::size_t> targets = plan.target_counts;
  if (targets.empty()) targets.assign(n_classes, *std::max_element(counts.begin(), counts.end()));

  SmoteResult res;
  res.x = x;
  res.y = y;
  res.n_original = x.rows;
  for (std::size_t c = 0; c < n_classes; ++c) {
    if (targets[c] < counts[c])
      throw std::invalid_argument("smote: target " + std::to_string(targets[c]) + " for class " + std::to_string(c) +
                                  " is below its current count " + std::to_string(counts[c]));
    const std::size_t deficit = targets[c] - counts[c];
    if (deficit == 0) continue;
    if (counts[c] < 2)
      throw DataError("smote: class " + std::to_string(c) + " has " + std::to_string(counts[c]) +
                      " sample(s); at least 2 are needed to interpolate");
    std::size_t k = plan.k_neighbors;
    if (k >= counts[c]) {
      k = counts[c] - 1;
      res.warnings.push_back("smote: class " + std::to_string(c) + " has " + std::to_string(counts[c]) +
                             " samples; k reduced from " + std::to_string(plan.k_neighbors) + " to " +
                             std::to_string(k));
    }
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < y.size(); ++i)
      if (y[i] == c) members.push_back(i);
    const auto knn = nearest_neighbors(x, members, k, plan.threads);

    SeededRng rng(derive_seed(plan.seed, "smote", c));
    res.x.data.reserve(res.x.data.size() + deficit * x.cols);
    for (std::size_t s = 0; s < deficit; ++s) {
      const std::size_t m = s % members.size();
      const std::size_t nn = knn[m][rng.uniform_index(k)];
      const double lambda = rng.uniform();
      const auto xi = x.row(members[m]);
      const auto xn = x.row(nn);
      for (std::size_t f = 0; f < x.cols; ++f) res.x.data.push_back(xi[f] + lambda * (xn[f] - xi[f]));
      res.y.push_back(c);
    }
    res.x.rows += deficit;
  }
  return res;
}

std::vector<std::pair<std::size_t, std::size_t>> tomek_links(const FeatureMatrix& x, const Labels& y,
                                                             std::size_t threads) {
  check_labels(x, y);
  if (x.rows < 2) throw DataError("tomek_links: need at least 2 samples");
  std::vector<std::size_t> all(x.rows);
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  const auto nn = nearest_neighbors(x, all, 1, threads);
  std::vector<std::pair<std::size_t, std::size_t>> links;
  for (std::size_t a = 0; a < x.rows; ++a) {
    const std::size_t b = nn[a][0];
    if (a < b && nn[b][0] == a && y[a] != y[b]) links.emplace_back(a, b);
  }
  return links;
}

void ResampleReport::write_csv(std::ostream& out, const std::vector<std::string>& class_names) const {
  out << "class,before,after_smote,after_tomek\n";
  for (std::size_t c = 0; c < before.size(); ++c) {
    out << (c < class_names.size() ? class_names[c] : std::to_string(c)) << ',' << before[c] << ',' << after_smote[c]
        << ',' << after_tomek[c] << '\n';
  }
}

ResampleResult smote_tomek(const FeatureMatrix& x, const Labels& y, const ResamplePlan& plan) {
  SmoteResult s = smote(x, y, plan);
  ResampleResult res;
  res.report.before = class_counts(y, plan.target_counts.size());
  const std::size_t n_classes = res.report.before.size();
  res.report.after_smote = class_counts(s.y, n_classes);
  res.report.warnings = std::move(s.warnings);
  res.report.links = tomek_links(s.x, s.y, plan.threads);

  std::vector<char> drop(s.x.rows, 0);
  for (const auto& [a, b] : res.report.links) {
    if (plan.link_removal == LinkRemoval::both) {
      drop[a] = drop[b] = 1;
      continue;
    }
    const std::size_t na = res.report.before[s.y[a]], nb = res.report.before[s.y[b]];
    if (na > nb) drop[a] = 1;
    if (nb > na) drop[b] = 1;
  }
  res.x.cols = s.x.cols;
  for (std::size_t i = 0; i < s.x.rows; ++i) {
    if (drop[i]) {
      res.report.removed.push_back(i);
      continue;
    }
    const auto r = s.x.row(i);
    res.x.data.insert(res.x.data.end(), r.begin(), r.end());
    res.y.push_back(s.y[i]);
  }
  res.x.rows = res.y.size();
  res.report.after_tomek = class_counts(res.y, n_classes);
  return res;
}

}  // namespace adx::resample
