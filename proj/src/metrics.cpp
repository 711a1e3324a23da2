#include "aisurvey/metrics.hpp"

#include "aisurvey/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

namespace aisurvey {

double auc(std::span<const int> labels, std::span<const double> scores) {
  if (labels.size() != scores.size()) throw Error(ErrorKind::Shape, "labels and scores differ in length");
  const std::size_t n = labels.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Sum of positive ranks with ties averaged, kept doubled so it stays integral.
  std::uint64_t doubled_rank_sum = 0;
  std::size_t positives = 0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
    const std::size_t pos_in_group =
        static_cast<std::size_t>(std::count_if(order.begin() + static_cast<long>(i), order.begin() + static_cast<long>(j) + 1,
                                               [&](std::size_t k) { return labels[k] == 1; }));
    // ranks i+1 .. j+1, average (i + j + 2) / 2
    doubled_rank_sum += static_cast<std::uint64_t>(pos_in_group) * static_cast<std::uint64_t>(i + j + 2);
    positives += pos_in_group;
    i = j + 1;
  }
  const std::size_t negatives = n - positives;
  if (positives == 0 || negatives == 0) {
    throw Error(ErrorKind::UndefinedMetric, "AUC needs at least one positive and one negative label");
  }
  // 2U = 2 R_pos - P (P + 1); exact in integers, one rounding at the end.
  const std::uint64_t u_doubled = doubled_rank_sum - static_cast<std::uint64_t>(positives) * (positives + 1);
  return static_cast<double>(u_doubled) / (2.0 * static_cast<double>(positives) * static_cast<double>(negatives));
}

Classification accuracy_f1(std::span<const int> labels, std::span<const double> scores, double threshold) {
  if (labels.size() != scores.size()) throw Error(ErrorKind::Shape, "labels and scores differ in length");
  if (labels.empty()) throw Error(ErrorKind::UndefinedMetric, "no predictions");
  std::size_t tp = 0, tn = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const bool pred = scores[i] >= threshold;
    const bool pos = labels[i] == 1;
    if (pred && pos) ++tp;
    else if (pred) ++fp;
    else if (pos) ++fn;
    else ++tn;
  }
  Classification c;
  c.accuracy = static_cast<double>(tp + tn) / static_cast<double>(labels.size());
  c.precision = tp + fp ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
  c.recall = tp + fn ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
  c.f1 = c.precision + c.recall > 0 ? 2 * c.precision * c.recall / (c.precision + c.recall) : 0.0;
  return c;
}

double correlation(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw Error(ErrorKind::Shape, "correlation inputs differ in length");
  if (x.size() < 2) throw Error(ErrorKind::UndefinedMetric, "correlation needs at least two points");
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx, dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) throw Error(ErrorKind::UndefinedMetric, "correlation undefined for zero variance");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

}  // namespace aisurvey
