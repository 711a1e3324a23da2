#include "aisurvey/logistic.hpp"
#include "aisurvey/metrics.hpp"
#include "aisurvey/missing_sim.hpp"
#include "aisurvey/rng.hpp"
#include "aisurvey/synthetic.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

#include <doctest.h>

#include <cmath>
#include <limits>

using namespace aisurvey;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

Eigen::MatrixXd binary_matrix(int rows, int cols, std::uint64_t seed) {
  Rng rng(seed);
  Eigen::MatrixXd x(rows, cols);
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) x(i, j) = rng.bernoulli(0.5) ? 1.0 : 0.0;
  }
  return x;
}

std::vector<double> mask_indicator(const MissingMask& mask, int col, const Eigen::MatrixXd& x) {
  std::vector<double> ind(static_cast<std::size_t>(x.rows()), 0.0);
  for (const auto& c : mask.cells) {
    if (c.col == col) ind[static_cast<std::size_t>(c.row)] = 1.0;
  }
  return ind;
}

}  // namespace

TEST_CASE("MCAR removes exactly round(rate * observed) observed cells") {
  const auto x = binary_matrix(100, 100, 1);
  const auto mask = simulate_mcar(x, 0.1, 5);
  CHECK(mask.cells.size() == 1000);
  CHECK(std::is_sorted(mask.cells.begin(), mask.cells.end()));
  CHECK(std::adjacent_find(mask.cells.begin(), mask.cells.end()) == mask.cells.end());
  CHECK(simulate_mcar(x, 0.0, 5).cells.empty());
  CHECK(simulate_mcar(x, 0.1, 5).cells == mask.cells);
  CHECK(simulate_mcar(x, 0.1, 6).cells != mask.cells);
}

TEST_CASE("MCAR skips cells that are already missing") {
  auto x = binary_matrix(20, 5, 2);
  for (int i = 0; i < 20; i += 2) x(i, 0) = kNaN;
  const auto mask = simulate_mcar(x, 0.5, 3);
  CHECK(mask.cells.size() == 45);
  for (const auto& c : mask.cells) CHECK_FALSE(std::isnan(x(c.row, c.col)));
}

TEST_CASE("rates outside [0, 1) are rejected") {
  const auto x = binary_matrix(4, 4, 1);
  CHECK(testutil::error_kind_of([&] { simulate_mcar(x, 1.0, 1); }) == ErrorKind::Config);
  CHECK(testutil::error_kind_of([&] { simulate_mar(x, -0.1, 1); }) == ErrorKind::Config);
  CHECK(testutil::error_kind_of([] { parse_mechanism("nmar"); }) == ErrorKind::Usage);
}

TEST_CASE("MAR follows a planted driver column") {
  Rng rng(4);
  const int n = 2000;
  Eigen::MatrixXd x(n, 3);
  for (int i = 0; i < n; ++i) {
    x(i, 0) = rng.bernoulli(0.5) ? 1.0 : 0.0;
    x(i, 2) = rng.bernoulli(0.5) ? 1.0 : 0.0;
    x(i, 1) = (x(i, 0) == 1.0 && rng.bernoulli(0.4)) ? kNaN : (rng.bernoulli(0.5) ? 1.0 : 0.0);
  }
  const auto mask = simulate_mar(x, 0.1, 9);
  CHECK(mask.cells.size() == static_cast<std::size_t>(std::llround(0.1 * static_cast<double>(observed_count(x)))));
  std::vector<double> driver, removed;
  const auto ind = mask_indicator(mask, 1, x);
  for (int i = 0; i < n; ++i) {
    if (std::isnan(x(i, 1))) continue;
    driver.push_back(x(i, 0));
    removed.push_back(ind[static_cast<std::size_t>(i)]);
  }
  CHECK(correlation(driver, removed) > 0.2);
  for (const auto& c : mask.cells) CHECK_FALSE(std::isnan(x(c.row, c.col)));
}

TEST_CASE("MAR without a low-missingness predictor is infeasible") {
  auto x = binary_matrix(10, 2, 3);
  for (int i = 0; i < 10; i += 2) {
    x(i, 0) = kNaN;
    x(i + 1, 1) = kNaN;
  }
  CHECK(testutil::error_kind_of([&] { simulate_mar(x, 0.1, 1); }) == ErrorKind::Infeasible);
}

TEST_CASE("MNAR with constant demographics still removes the target count") {
  auto x = binary_matrix(50, 4, 5);
  x(0, 0) = kNaN;
  Demographics demo;
  demo.columns = {"sex"};
  for (int i = 0; i < 50; ++i) demo.rows.push_back({"a"});
  CHECK(demo.one_hot().cols() == 0);
  const auto mask = simulate_mnar(x, demo, 0.2, 2);
  CHECK(mask.cells.size() == static_cast<std::size_t>(std::llround(0.2 * 199.0)));
}

TEST_CASE("MNAR follows a planted demographic") {
  Rng rng(12);
  const int n = 1500;
  Eigen::MatrixXd x(n, 2);
  Demographics demo;
  demo.columns = {"group"};
  for (int i = 0; i < n; ++i) {
    const bool b = rng.bernoulli(0.5);
    demo.rows.push_back({b ? "b" : "a"});
    x(i, 0) = (b && rng.bernoulli(0.3)) ? kNaN : 1.0;
    x(i, 1) = rng.bernoulli(0.5) ? 1.0 : 0.0;
  }
  const auto mask = simulate_mnar(x, demo, 0.1, 4, RemovalScope::PerVariable);
  REQUIRE(mask.models.size() == 2);
  CHECK(mask.models[0].coefficients(0) > 0.0);
  const auto ind = mask_indicator(mask, 0, x);
  std::vector<double> group, removed;
  for (int i = 0; i < n; ++i) {
    if (std::isnan(x(i, 0))) continue;
    group.push_back(demo.rows[static_cast<std::size_t>(i)][0] == "b" ? 1.0 : 0.0);
    removed.push_back(ind[static_cast<std::size_t>(i)]);
  }
  CHECK(correlation(group, removed) > 0.2);
  Demographics short_demo = demo;
  short_demo.rows.pop_back();
  CHECK(testutil::error_kind_of([&] { simulate_mnar(x, short_demo, 0.1, 4); }) == ErrorKind::Dependency);
}

TEST_CASE("global scope removes the same total as per-variable scope") {
  auto x = binary_matrix(200, 4, 8);
  for (int i = 0; i < 200; i += 7) x(i, 3) = kNaN;
  const auto per = simulate_mar(x, 0.15, 3, RemovalScope::PerVariable, 0.2);
  const auto global = simulate_mar(x, 0.15, 3, RemovalScope::Global, 0.2);
  CHECK(per.cells.size() == global.cells.size());
}

TEST_CASE("demographics load by respondent key and one-hot encode") {
  testutil::TempDir dir;
  testutil::write_file(dir / "demo.csv", "yearid,sex,region\n2,m,south\n1,f,north\n3,f,west\n");
  const std::vector<std::int64_t> keys = {1, 2, 3};
  const auto demo = Demographics::load(dir / "demo.csv", keys);
  REQUIRE(demo.rows.size() == 3);
  CHECK(demo.rows[0][0] == "f");
  CHECK(demo.rows[1][1] == "south");
  const auto h = demo.one_hot();
  CHECK(h.cols() == 3);  // sex: m; region: south, west
  CHECK(h.row(0).sum() == 0.0);
  const std::vector<std::int64_t> missing = {1, 4};
  CHECK(testutil::error_kind_of([&] { Demographics::load(dir / "demo.csv", missing); }) == ErrorKind::Dependency);
}

TEST_CASE("masks map back to dataset records") {
  SyntheticConfig cfg;
  cfg.individuals = 30;
  cfg.questions = 6;
  cfg.years = 2;
  cfg.observed_fraction = 0.5;
  cfg.embedding_dim = 4;
  cfg.latent_dim = 2;
  const auto s = generate_synthetic_survey(cfg);
  const auto m = response_matrix(s.dataset);
  CHECK(observed_count(m.values) == s.dataset.size());
  const auto mask = simulate_mcar(m.values, 0.25, 1);
  const auto recs = masked_records(s.dataset, m, mask);
  CHECK(recs.size() == mask.cells.size());
  for (auto r : recs) {
    const auto& o = s.dataset.observations()[r];
    CHECK(m.values(m.rows.record_row[r], o.question) == static_cast<double>(o.label));
  }
  testutil::TempDir dir;
  write_mask(s.dataset, m, mask, dir / "mask.csv");
  const auto text = testutil::read_file(dir / "mask.csv");
  CHECK(text.rfind("yearid,variable,year\n", 0) == 0);
  CHECK(static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n')) == mask.cells.size() + 1);
}

TEST_CASE("logistic fit: label flip negates, and agrees with a grid search") {
  Rng rng(21);
  for (int t = 0; t < 5; ++t) {
    Eigen::MatrixXd x(6, 1);
    std::vector<int> y = {0, 1, 0, 1, 1, 0};
    for (int i = 0; i < 6; ++i) x(i, 0) = rng.normal();
    const auto fit = fit_logistic(x, y, 0.5);
    CHECK(fit.converged);
    std::vector<int> flipped;
    for (int v : y) flipped.push_back(1 - v);
    const auto neg = fit_logistic(x, flipped, 0.5);
    CHECK(neg.intercept == doctest::Approx(-fit.intercept).epsilon(1e-8));
    CHECK(neg.coefficients(0) == doctest::Approx(-fit.coefficients(0)).epsilon(1e-8));
    const auto grid = oracle::grid_search_logistic(x, y, 0.5);
    CHECK(std::abs(grid(0) - fit.intercept) < 1e-3);
    CHECK(std::abs(grid(1) - fit.coefficients(0)) < 1e-3);
  }
}

TEST_CASE("logistic probability rises with a positively weighted feature") {
  Eigen::MatrixXd x(8, 1);
  x << -2, -1, -0.5, 0, 0.2, 0.5, 1, 2;
  const std::vector<int> y = {0, 0, 1, 0, 1, 0, 1, 1};
  const auto fit = fit_logistic(x, y);
  CHECK(fit.coefficients(0) > 0.0);
  const auto p = fit.probabilities(x);
  for (int i = 1; i < 8; ++i) CHECK(p(i) > p(i - 1));
  CHECK(penalized_log_likelihood(x, y, fit.intercept, fit.coefficients, fit.l2) >=
        penalized_log_likelihood(x, y, fit.intercept + 0.01, fit.coefficients, fit.l2));
}
