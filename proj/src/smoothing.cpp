#include "aisurvey/smoothing.hpp"

#include "aisurvey/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace aisurvey {

namespace {

double tricube(double u) {
  if (u >= 1.0) return 0.0;
  const double t = 1.0 - u * u * u;
  return t * t * t;
}

}  // namespace

std::vector<double> local_linear_weights(std::span<const SeriesPoint> series, double x, double span) {
  const std::size_t n = series.size();
  if (n < 3) throw Error(ErrorKind::InsufficientData, "smoothing needs at least 3 points");
  if (!(span > 0.0)) throw Error(ErrorKind::Config, "span must be positive");
  std::vector<double> dist(n);
  for (std::size_t i = 0; i < n; ++i) dist[i] = std::abs(series[i].year - x);
  std::vector<double> sorted = dist;
  std::sort(sorted.begin(), sorted.end());
  auto q = static_cast<std::size_t>(std::ceil(span * static_cast<double>(n)));
  q = std::clamp<std::size_t>(q, 3, n);

  for (;; ++q) {
    double h = sorted[q - 1];
    if (q == n && span > 1.0) h *= span;
    std::vector<double> w(n, 0.0);
    double s0 = 0.0, s1 = 0.0, s2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double k = h > 0.0 ? tricube(dist[i] / h) : (dist[i] == 0.0 ? 1.0 : 0.0);
      w[i] = k * series[i].count;
      const double d = series[i].year - x;
      s0 += w[i];
      s1 += w[i] * d;
      s2 += w[i] * d * d;
    }
    const double det = s0 * s2 - s1 * s1;
    if (s0 > 0.0 && det > 1e-12 * std::max(1.0, s0 * s2)) {
      std::vector<double> l(n);
      for (std::size_t i = 0; i < n; ++i) {
        const double d = series[i].year - x;
        l[i] = w[i] * (s2 - s1 * d) / det;
      }
      return l;
    }
    if (q >= n) {
      // Window holds a single distinct year: fall back to its weighted mean.
      if (s0 <= 0.0) throw Error(ErrorKind::InsufficientData, "no weighted points near the evaluation year");
      for (auto& v : w) v /= s0;
      return w;
    }
  }
}

std::vector<TrendPoint> smooth_trend(std::span<const SeriesPoint> series, int first_year, int last_year,
                                     double span) {
  const std::size_t n = series.size();
  if (n < 3) throw Error(ErrorKind::InsufficientData, "smoothing needs at least 3 points");
  if (last_year < first_year) throw Error(ErrorKind::Config, "empty year grid");
  for (const auto& p : series) {
    if (!(p.count > 0.0) || !std::isfinite(p.value) || !std::isfinite(p.year)) {
      throw Error(ErrorKind::Config, "series points need finite values and positive counts");
    }
  }
  double rss = 0.0, trace = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto l = local_linear_weights(series, series[i].year, span);
    double fit = 0.0;
    for (std::size_t j = 0; j < n; ++j) fit += l[j] * series[j].value;
    const double r = series[i].value - fit;
    rss += series[i].count * r * r;
    trace += l[i];
  }
  const double dof = std::max(static_cast<double>(n) - trace, 1.0);
  const double sigma = std::sqrt(rss / dof);

  std::vector<TrendPoint> out;
  for (int year = first_year; year <= last_year; ++year) {
    const auto l = local_linear_weights(series, year, span);
    double fit = 0.0, var = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      fit += l[j] * series[j].value;
      var += l[j] * l[j] / series[j].count;
    }
    TrendPoint t;
    t.year = year;
    t.smoothed = fit;
    t.se = sigma * std::sqrt(var);
    t.lower = fit - 1.96 * t.se;
    t.upper = fit + 1.96 * t.se;
    out.push_back(t);
  }
  return out;
}

std::vector<TrendPoint> smooth_trend(std::span<const SeriesPoint> series, double span) {
  if (series.size() < 3) throw Error(ErrorKind::InsufficientData, "smoothing needs at least 3 points");
  const auto [lo, hi] = std::minmax_element(series.begin(), series.end(),
                                            [](const SeriesPoint& a, const SeriesPoint& b) { return a.year < b.year; });
  return smooth_trend(series, static_cast<int>(std::floor(lo->year)), static_cast<int>(std::ceil(hi->year)), span);
}

double interval_covers_rate(std::span<const TrendPoint> trend, std::span<const SeriesPoint> observed) {
  int n = 0, hit = 0;
  for (const auto& p : observed) {
    const auto it = std::find_if(trend.begin(), trend.end(),
                                 [&](const TrendPoint& t) { return t.year == static_cast<int>(std::lround(p.year)); });
    if (it == trend.end()) continue;
    ++n;
    if (p.value >= it->lower - 1e-12 && p.value <= it->upper + 1e-12) ++hit;
  }
  if (n == 0) throw Error(ErrorKind::UndefinedMetric, "no observed points on the trend grid");
  return static_cast<double>(hit) / n;
}

}  // namespace aisurvey
