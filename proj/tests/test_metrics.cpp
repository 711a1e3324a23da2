#include "aisurvey/metrics.hpp"
#include "aisurvey/rng.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

#include <doctest.h>

#include <vector>

using namespace aisurvey;

TEST_CASE("AUC on small hand examples") {
  const std::vector<int> y = {0, 0, 1, 1};
  CHECK(auc(y, std::vector<double>{0.1, 0.4, 0.35, 0.8}) == 0.75);
  CHECK(auc(y, std::vector<double>{0.1, 0.2, 0.3, 0.4}) == 1.0);
  CHECK(auc(y, std::vector<double>{0.4, 0.3, 0.2, 0.1}) == 0.0);
  CHECK(auc(y, std::vector<double>{0.5, 0.5, 0.5, 0.5}) == 0.5);
}

TEST_CASE("AUC needs both classes") {
  const std::vector<int> y = {1, 1};
  const std::vector<double> s = {0.2, 0.3};
  CHECK(testutil::error_kind_of([&] { auc(y, s); }) == ErrorKind::UndefinedMetric);
}

TEST_CASE("AUC agrees with the pairwise oracle, ties included") {
  Rng rng(5);
  for (int t = 0; t < 200; ++t) {
    const auto n = 2 + rng.below(60);
    std::vector<int> y(n);
    std::vector<double> s(n);
    for (std::size_t i = 0; i < n; ++i) {
      y[i] = rng.bernoulli(0.4) ? 1 : 0;
      s[i] = static_cast<double>(rng.below(8)) / 8.0;
    }
    y[0] = 0;
    y[1] = 1;
    CHECK(auc(y, s) == doctest::Approx(oracle::pairwise_auc(y, s)).epsilon(1e-12));
  }
}

TEST_CASE("accuracy and F1 conventions") {
  const std::vector<int> y = {1, 0, 1, 0};
  const auto c = accuracy_f1(y, std::vector<double>{0.9, 0.5, 0.2, 0.1});
  CHECK(c.accuracy == 0.5);
  CHECK(c.precision == 0.5);
  CHECK(c.recall == 0.5);
  CHECK(c.f1 == 0.5);
  const auto none = accuracy_f1(y, std::vector<double>{0.1, 0.1, 0.1, 0.1});
  CHECK(none.precision == 0.0);
  CHECK(none.f1 == 0.0);
  const std::vector<int> negatives = {0, 0};
  CHECK(accuracy_f1(negatives, std::vector<double>{0.1, 0.9}).recall == 0.0);
}

TEST_CASE("correlation matches the two-pass oracle") {
  CHECK(correlation(std::vector<double>{1, 2, 3}, std::vector<double>{2, 4, 6}) == doctest::Approx(1.0));
  CHECK(correlation(std::vector<double>{1, 2, 3}, std::vector<double>{3, 2, 1}) == doctest::Approx(-1.0));
  CHECK(testutil::error_kind_of([] { correlation(std::vector<double>{1, 1}, std::vector<double>{1, 2}); }) ==
        ErrorKind::UndefinedMetric);
  Rng rng(8);
  for (int t = 0; t < 50; ++t) {
    std::vector<double> x(30), y(30);
    for (std::size_t i = 0; i < 30; ++i) {
      x[i] = rng.normal();
      y[i] = 0.3 * x[i] + rng.normal();
    }
    CHECK(std::abs(correlation(x, y) - oracle::two_pass_correlation(x, y)) < 1e-12);
  }
}
