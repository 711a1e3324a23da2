#include "aisurvey/aggregation.hpp"
#include "aisurvey/metrics.hpp"
#include "aisurvey/rng.hpp"
#include "test_util.hpp"

#include <doctest.h>

#include <cmath>

using namespace aisurvey;

namespace {

AggregatedCell cell(int q, int y, double predicted, double observed) {
  AggregatedCell c;
  c.question = q;
  c.year = y;
  c.predicted = predicted;
  c.rescaled = predicted;
  c.has_observed = true;
  c.observed = observed;
  return c;
}

}  // namespace

TEST_CASE("weighted aggregation of a small cell") {
  const std::vector<ScoredResponse> r = {{0, 0, 0, 0.2, 1}, {1, 0, 0, 0.8, 0}, {2, 0, 0, 0.6, -1}};
  const std::vector<double> w = {1.0, 1.0, 2.0};
  const auto cells = weighted_aggregate(r, w);
  REQUIRE(cells.size() == 1);
  CHECK(cells[0].predicted == doctest::Approx(0.55));
  CHECK(cells[0].observed == doctest::Approx(0.5));
  CHECK(cells[0].respondents == 3);
  CHECK(cells[0].observed_count == 2);
  CHECK(cells[0].total_weight == 4.0);
  CHECK(cells[0].effective_count == doctest::Approx(16.0 / 6.0));
  const std::vector<double> equal = {1.0, 1.0};
  const std::vector<ScoredResponse> two = {{0, 0, 0, 0.2, 1}, {1, 0, 0, 0.8, 0}};
  CHECK(weighted_aggregate(two, equal)[0].predicted == doctest::Approx(0.5));
}

TEST_CASE("aggregation is invariant to scaling all weights") {
  Rng rng(3);
  std::vector<ScoredResponse> r;
  std::vector<double> w;
  for (int i = 0; i < 40; ++i) {
    w.push_back(rng.uniform(0.5, 1.5));
    for (int q = 0; q < 3; ++q) r.push_back({i, q, i % 2, rng.uniform(), rng.bernoulli(0.5) ? 1 : 0});
  }
  std::vector<double> scaled = w;
  for (auto& v : scaled) v *= 7.0;
  const auto a = weighted_aggregate(r, w);
  const auto b = weighted_aggregate(r, scaled);
  REQUIRE(a.size() == 6);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].predicted == doctest::Approx(b[i].predicted).epsilon(1e-12));
    CHECK(a[i].observed == doctest::Approx(b[i].observed).epsilon(1e-12));
    CHECK(a[i].effective_count == doctest::Approx(b[i].effective_count).epsilon(1e-12));
  }
  for (std::size_t i = 1; i < a.size(); ++i) {
    CHECK(std::make_pair(a[i - 1].question, a[i - 1].year) < std::make_pair(a[i].question, a[i].year));
  }
}

TEST_CASE("aggregation rejects zero-weight cells and unknown individuals") {
  const std::vector<ScoredResponse> r = {{0, 0, 0, 0.2, 1}};
  const std::vector<double> zero = {0.0};
  CHECK(testutil::error_kind_of([&] { weighted_aggregate(r, zero); }) == ErrorKind::Filter);
  const std::vector<ScoredResponse> far = {{3, 0, 0, 0.2, 1}};
  const std::vector<double> w = {1.0};
  CHECK(testutil::error_kind_of([&] { weighted_aggregate(far, w); }) == ErrorKind::Index);
}

TEST_CASE("rescaling recovers an exact line") {
  std::vector<AggregatedCell> cells;
  for (int i = 0; i < 5; ++i) {
    const double p = 0.1 + 0.05 * i;
    cells.push_back(cell(i, 0, p, 2.0 * p + 0.1));
  }
  const auto line = fit_rescaling(cells);
  CHECK(line.slope == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(line.intercept == doctest::Approx(0.1).epsilon(1e-12));
  CHECK(line.r_squared == doctest::Approx(1.0));
  CHECK(line.cells == 5);
  apply_rescaling(line, cells);
  for (const auto& c : cells) CHECK(c.rescaled == doctest::Approx(c.observed).epsilon(1e-12));
  CHECK(line.apply(0.9) == 1.0);
  CHECK(line.apply_unclipped(0.9) == doctest::Approx(1.9));
}

TEST_CASE("rescaling leaves correlation unchanged") {
  Rng rng(6);
  std::vector<AggregatedCell> cells;
  for (int i = 0; i < 30; ++i) {
    const double p = rng.uniform(0.2, 0.6);
    cells.push_back(cell(i, 0, p, std::clamp(p + 0.1 * rng.normal(), 0.0, 1.0)));
  }
  const auto before = summarize_cells(cells).correlation;
  const auto line = fit_rescaling(cells);
  apply_rescaling(line, cells);
  std::vector<double> rescaled, observed;
  for (const auto& c : cells) {
    rescaled.push_back(c.rescaled);
    observed.push_back(c.observed);
  }
  CHECK(correlation(rescaled, observed) == doctest::Approx(before).epsilon(1e-12));
}

TEST_CASE("margin boundary counts within three points") {
  std::vector<AggregatedCell> in = {cell(0, 0, 0.5, 0.53)};
  std::vector<AggregatedCell> out = {cell(0, 0, 0.5, 0.531)};
  CHECK(margin_correct_rate(in, 0.03) == 1.0);
  CHECK(margin_correct_rate(out, 0.03) == 0.0);
  std::vector<AggregatedCell> none = {cell(0, 0, 0.5, 0.5)};
  none[0].has_observed = false;
  CHECK(testutil::error_kind_of([&] { margin_correct_rate(none); }) == ErrorKind::UndefinedMetric);
}

TEST_CASE("flat predictions cannot be rescaled") {
  std::vector<AggregatedCell> cells = {cell(0, 0, 0.4, 0.3), cell(1, 0, 0.4, 0.6)};
  CHECK(testutil::error_kind_of([&] { fit_rescaling(cells); }) == ErrorKind::Singular);
  std::vector<AggregatedCell> one = {cell(0, 0, 0.4, 0.3)};
  CHECK(testutil::error_kind_of([&] { fit_rescaling(one); }) == ErrorKind::Singular);
}
