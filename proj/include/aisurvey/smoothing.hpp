#pragma once

#include <span>
#include <vector>

namespace aisurvey {

struct SeriesPoint {
  double year = 0.0;
  double value = 0.0;
  double count = 1.0;  // precision weight
};

struct TrendPoint {
  int year = 0;
  double smoothed = 0.0;
  double lower = 0.0;
  double upper = 0.0;
  double se = 0.0;
};

// Local linear regression with tricube weights over the nearest
// ceil(span * n) points (at least 3), multiplied by the point counts, on
// the annual grid from `first_year` to `last_year`. The band is
// smoothed +/- 1.96 * sigma * sqrt(sum_j l_j^2 / c_j), where l is the
// linear smoother row and sigma^2 = sum_i c_i r_i^2 / (n - trace(L)).
// Throws InsufficientData below 3 points.
std::vector<TrendPoint> smooth_trend(std::span<const SeriesPoint> series, int first_year, int last_year,
                                     double span = 0.75);
// Grid spanning the series' own years.
std::vector<TrendPoint> smooth_trend(std::span<const SeriesPoint> series, double span = 0.75);

// Smoother weights l(x) such that the fit at x equals sum_j l_j y_j.
std::vector<double> local_linear_weights(std::span<const SeriesPoint> series, double x, double span);

// Share of observed points whose value lies inside the band at that year.
double interval_covers_rate(std::span<const TrendPoint> trend, std::span<const SeriesPoint> observed);

}  // namespace aisurvey
