#pragma once

#include <span>

namespace aisurvey {

// Mann-Whitney AUC from average ranks; ties count one half. O(n log n).
// Throws UndefinedMetric unless both classes are present.
double auc(std::span<const int> labels, std::span<const double> scores);

struct Classification {
  double accuracy = 0.0;
  double precision = 0.0;  // 0 when nothing is predicted positive
  double recall = 0.0;     // 0 when there are no positives
  double f1 = 0.0;         // 0 when precision + recall = 0
};

// Scores >= threshold count as positive predictions.
Classification accuracy_f1(std::span<const int> labels, std::span<const double> scores, double threshold = 0.5);

// Pearson product-moment correlation.
double correlation(std::span<const double> x, std::span<const double> y);

}  // namespace aisurvey
