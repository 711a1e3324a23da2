#include "aisurvey/aggregation.hpp"

#include "aisurvey/csv.hpp"
#include "aisurvey/error.hpp"
#include "aisurvey/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>

namespace aisurvey {

std::vector<AggregatedCell> weighted_aggregate(std::span<const ScoredResponse> responses,
                                               std::span<const double> weights) {
  struct Acc {
    double w = 0.0, w2 = 0.0, wy = 0.0, wo = 0.0, wl = 0.0;
    int n = 0, n_obs = 0;
  };
  std::map<std::pair<int, int>, Acc> acc;
  for (const auto& r : responses) {
    if (r.individual < 0 || static_cast<std::size_t>(r.individual) >= weights.size()) {
      throw Error(ErrorKind::Index, "no survey weight for individual " + std::to_string(r.individual));
    }
    const double w = weights[static_cast<std::size_t>(r.individual)];
    auto& a = acc[{r.question, r.year}];
    a.w += w;
    a.w2 += w * w;
    a.wy += w * r.predicted;
    ++a.n;
    if (r.observed >= 0) {
      a.wo += w;
      a.wl += w * r.observed;
      ++a.n_obs;
    }
  }
  std::vector<AggregatedCell> cells;
  cells.reserve(acc.size());
  for (const auto& [key, a] : acc) {
    if (!(a.w > 0.0)) {
      throw Error(ErrorKind::Filter, "zero total weight in cell (question " + std::to_string(key.first) + ", year " +
                                         std::to_string(key.second) + ")");
    }
    AggregatedCell c;
    c.question = key.first;
    c.year = key.second;
    c.predicted = a.wy / a.w;
    c.rescaled = c.predicted;
    c.respondents = a.n;
    c.observed_count = a.n_obs;
    c.total_weight = a.w;
    c.effective_count = a.w * a.w / a.w2;
    if (a.n_obs > 0 && a.wo > 0.0) {
      c.has_observed = true;
      c.observed = a.wl / a.wo;
    }
    cells.push_back(c);
  }
  return cells;
}

std::vector<ScoredResponse> scored_from_predictions(const SurveyDataset& ds, std::span<const Prediction> predictions) {
  const auto obs = ds.observations();
  std::vector<ScoredResponse> out;
  out.reserve(predictions.size());
  for (const auto& p : predictions) {
    const auto& o = obs[p.record];
    out.push_back({o.individual, o.question, o.year, p.predicted, o.label});
  }
  return out;
}

std::vector<double> individual_weights(const SurveyDataset& ds) {
  std::vector<double> w(static_cast<std::size_t>(ds.n_individuals()), -1.0);
  for (const auto& o : ds.observations()) {
    auto& slot = w[static_cast<std::size_t>(o.individual)];
    if (slot < 0.0) slot = o.weight;
  }
  for (auto& x : w) x = std::max(x, 0.0);
  return w;
}

double CalibrationLine::apply_unclipped(double predicted) const { return slope * predicted + intercept; }

double CalibrationLine::apply(double predicted) const { return std::clamp(apply_unclipped(predicted), 0.0, 1.0); }

CalibrationLine fit_rescaling(std::span<const AggregatedCell> cells) {
  double sx = 0.0, sy = 0.0;
  int n = 0;
  for (const auto& c : cells) {
    if (!c.has_observed) continue;
    sx += c.predicted;
    sy += c.observed;
    ++n;
  }
  if (n < 2) throw Error(ErrorKind::Singular, "rescaling needs at least two observed cells");
  const double mx = sx / n, my = sy / n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (const auto& c : cells) {
    if (!c.has_observed) continue;
    sxx += (c.predicted - mx) * (c.predicted - mx);
    sxy += (c.predicted - mx) * (c.observed - my);
    syy += (c.observed - my) * (c.observed - my);
  }
  if (!(sxx > 0.0)) throw Error(ErrorKind::Singular, "predicted proportions are all identical");
  CalibrationLine line;
  line.slope = sxy / sxx;
  line.intercept = my - line.slope * mx;
  line.r_squared = syy > 0.0 ? sxy * sxy / (sxx * syy) : 1.0;
  line.cells = n;
  return line;
}

void apply_rescaling(const CalibrationLine& line, std::span<AggregatedCell> cells) {
  for (auto& c : cells) c.rescaled = line.apply(c.predicted);
}

double margin_correct_rate(std::span<const AggregatedCell> cells, double margin) {
  int n = 0, hit = 0;
  for (const auto& c : cells) {
    if (!c.has_observed) continue;
    ++n;
    if (std::abs(c.rescaled - c.observed) <= margin + 1e-9) ++hit;
  }
  if (n == 0) throw Error(ErrorKind::UndefinedMetric, "no observed cells to score");
  return static_cast<double>(hit) / n;
}

AggregateSummary summarize_cells(std::span<const AggregatedCell> cells, double margin) {
  std::vector<double> x, y;
  for (const auto& c : cells) {
    if (!c.has_observed) continue;
    x.push_back(c.predicted);
    y.push_back(c.observed);
  }
  AggregateSummary s;
  s.cells = static_cast<int>(x.size());
  s.correlation = correlation(x, y);
  s.correct_rate = margin_correct_rate(cells, margin);
  return s;
}

void write_cells(const SurveyDataset& ds, std::span<const AggregatedCell> cells, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
  csv::write_row(out, {"variable", "year", "predicted", "rescaled", "observed", "respondents", "observed_count",
                       "effective_count", "total_weight"});
  for (const auto& c : cells) {
    csv::write_row(out, {ds.questions().decode(c.question), std::to_string(ds.years().decode(c.year)),
                         csv::format_double(c.predicted), csv::format_double(c.rescaled),
                         c.has_observed ? csv::format_double(c.observed) : std::string(),
                         std::to_string(c.respondents), std::to_string(c.observed_count),
                         csv::format_double(c.effective_count), csv::format_double(c.total_weight)});
  }
}

}  // namespace aisurvey
