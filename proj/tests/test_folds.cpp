#include "aisurvey/folds.hpp"
#include "aisurvey/metrics.hpp"
#include "aisurvey/synthetic.hpp"
#include "test_util.hpp"

#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <set>

using namespace aisurvey;

namespace {

SyntheticSurvey small_survey(int individuals = 60, int questions = 12, int years = 4, double observed = 0.5) {
  SyntheticConfig cfg;
  cfg.individuals = individuals;
  cfg.questions = questions;
  cfg.years = years;
  cfg.observed_fraction = observed;
  cfg.embedding_dim = 12;
  return generate_synthetic_survey(cfg);
}

DcnConfig fast_config() {
  DcnConfig cfg;
  cfg.embed_dim = 4;
  cfg.learning_rate = 1e-2;
  cfg.batch_size = 32;
  cfg.max_epochs = 3;
  return cfg;
}

void check_partition(const SurveyDataset& ds, const FoldPlan& plan) {
  std::vector<int> seen(ds.size(), 0);
  for (int r = 0; r < plan.num_folds; ++r) {
    for (auto rec : plan.test_records(r)) ++seen[rec];
    const auto test = plan.test_records(r);
    const auto train = plan.train_records(r);
    CHECK(test.size() + train.size() == ds.size());
  }
  CHECK(std::all_of(seen.begin(), seen.end(), [](int s) { return s == 1; }));
}

}  // namespace

TEST_CASE("response folds partition 100 responses evenly") {
  const auto s = small_survey(10, 10, 1, 1.0);
  REQUIRE(s.dataset.size() == 100);
  const auto plan = make_response_folds(s.dataset, 10, 3);
  for (auto size : plan.fold_sizes()) CHECK(size == 10);
  check_partition(s.dataset, plan);
  const auto again = make_response_folds(s.dataset, 10, 3);
  CHECK(plan.record_fold == again.record_fold);
  CHECK(make_response_folds(s.dataset, 10, 4).record_fold != plan.record_fold);
}

TEST_CASE("uneven response folds differ by at most one") {
  const auto s = small_survey(7, 11, 1, 1.0);
  const auto sizes = make_response_folds(s.dataset, 10, 1).fold_sizes();
  const auto [lo, hi] = std::minmax_element(sizes.begin(), sizes.end());
  CHECK(*hi - *lo <= 1);
}

TEST_CASE("year-question folds keep each cell whole") {
  const auto s = small_survey(20, 2, 2, 1.0);
  for (bool stratify : {true, false}) {
    const auto plan = make_year_question_folds(s.dataset, 10, 5, stratify);
    check_partition(s.dataset, plan);
    const auto obs = s.dataset.observations();
    std::map<std::pair<int, int>, std::set<int>> folds_of_cell;
    for (std::size_t r = 0; r < obs.size(); ++r) folds_of_cell[{obs[r].question, obs[r].year}].insert(plan.record_fold[r]);
    CHECK(folds_of_cell.size() == 4);
    for (const auto& [cell, folds] : folds_of_cell) CHECK(folds.size() == 1);
    CHECK(make_year_question_folds(s.dataset, 10, 5, stratify).record_fold == plan.record_fold);
  }
}

TEST_CASE("stratified retrodiction folds spread each year's cells") {
  const auto s = small_survey(10, 20, 3, 1.0);
  const auto plan = make_year_question_folds(s.dataset, 10, 9, true);
  for (int y = 0; y < 3; ++y) {
    std::vector<int> per_fold(10, 0);
    for (int q = 0; q < 20; ++q) ++per_fold[static_cast<std::size_t>(plan.unit_fold[static_cast<std::size_t>(q * 3 + y)])];
    for (int c : per_fold) CHECK(c == 2);
  }
}

TEST_CASE("question folds put 2 of 20 questions in each fold") {
  const auto s = small_survey(5, 20, 2, 1.0);
  const auto plan = make_question_folds(s.dataset, 10, 8);
  for (auto size : plan.fold_sizes()) CHECK(size == 2);
  check_partition(s.dataset, plan);
}

TEST_CASE("held-out units never appear in training or validation") {
  const auto s = small_survey();
  CvOptions opts;
  for (auto task : {TaskKind::Imputation, TaskKind::Retrodiction, TaskKind::Unasked}) {
    const auto plan = make_plan(task, s.dataset, 10, 17);
    for (int r = 0; r < 10; ++r) {
      const auto split = round_split(s.dataset, plan, r, opts);
      CHECK(leaked_units(s.dataset, plan, split).empty());
      CHECK(split.train.size() + split.validation.size() + split.test.size() == s.dataset.size());
      const auto test = plan.test_records(r);
      for (auto rec : split.test) CHECK(plan.record_fold[rec] == r);
      if (task == TaskKind::Unasked) {
        std::set<int> held;
        for (auto rec : test) held.insert(s.dataset.observations()[rec].question);
        for (auto rec : split.train) CHECK(held.count(s.dataset.observations()[rec].question) == 0);
      }
    }
  }
}

TEST_CASE("validation slices whole units") {
  const auto s = small_survey();
  std::vector<std::size_t> all(s.dataset.size());
  std::iota(all.begin(), all.end(), 0);
  const auto split = split_validation(s.dataset, UnitKind::Question, all, 0.1, 4);
  std::set<std::size_t> val_units, train_units;
  for (auto r : split.validation) val_units.insert(unit_of(UnitKind::Question, s.dataset, r));
  for (auto r : split.train) train_units.insert(unit_of(UnitKind::Question, s.dataset, r));
  CHECK(val_units.size() == 2);  // ceil(0.1 * 12)
  for (auto u : val_units) CHECK(train_units.count(u) == 0);
}

TEST_CASE("subsampling keeps whole units and full fraction is identity") {
  const auto s = small_survey();
  std::vector<std::size_t> all(s.dataset.size());
  std::iota(all.begin(), all.end(), 0);
  CHECK(subsample_units(s.dataset, UnitKind::Response, all, 1.0, 3) == all);
  const auto half = subsample_units(s.dataset, UnitKind::QuestionYear, all, 0.5, 3);
  CHECK(std::is_sorted(half.begin(), half.end()));
  std::set<std::size_t> kept;
  for (auto r : half) kept.insert(unit_of(UnitKind::QuestionYear, s.dataset, r));
  for (std::size_t r = 0; r < all.size(); ++r) {
    const bool unit_kept = kept.count(unit_of(UnitKind::QuestionYear, s.dataset, r)) > 0;
    CHECK(unit_kept == std::binary_search(half.begin(), half.end(), r));
  }
}

TEST_CASE("training improves on the initial loss and respects the epoch cap") {
  const auto s = small_survey();
  const auto frozen = s.embeddings.to_matrix();
  const auto plan = make_response_folds(s.dataset, 10, 1);
  auto cfg = fast_config();
  const auto result = train_model(s.dataset, frozen, plan, 0, cfg, CvOptions{});
  REQUIRE_FALSE(result.history.epochs.empty());
  CHECK(result.history.epochs.front().train_loss < result.history.initial_loss);
  CHECK(result.history.epochs.size() <= static_cast<std::size_t>(cfg.max_epochs));
  CHECK(result.params.all_finite());
}

TEST_CASE("early stopping fires after patience epochs without improvement") {
  const auto s = small_survey();
  const auto frozen = s.embeddings.to_matrix();
  std::vector<std::size_t> all(s.dataset.size());
  std::iota(all.begin(), all.end(), 0);
  const auto split = split_validation(s.dataset, UnitKind::Response, all, 0.1, 2);
  auto cfg = fast_config();
  cfg.learning_rate = 0.5;  // overshoots quickly
  cfg.max_epochs = 10;
  cfg.patience = 1;
  const auto r = train_dcn(s.dataset, frozen, split.train, split.validation, cfg, 3);
  if (r.history.early_stopped) {
    CHECK(static_cast<int>(r.history.epochs.size()) == r.history.best_epoch + cfg.patience);
  } else {
    CHECK(static_cast<int>(r.history.epochs.size()) == cfg.max_epochs);
  }
  CHECK(r.history.epochs.size() <= 10);
}

TEST_CASE("empty training split is rejected") {
  const auto s = small_survey();
  const auto frozen = s.embeddings.to_matrix();
  std::vector<std::size_t> none;
  CHECK(testutil::error_kind_of([&] { train_dcn(s.dataset, frozen, none, none, fast_config(), 1); }) ==
        ErrorKind::EmptySplit);
}

TEST_CASE("cross-validation covers every response once and is reproducible") {
  const auto s = small_survey();
  const auto frozen = s.embeddings.to_matrix();
  CvOptions opts;
  opts.seed = 7;
  opts.threads = 2;
  const auto a = run_cross_validation(s.dataset, frozen, TaskKind::Retrodiction, fast_config(), opts);
  REQUIRE(a.predictions.size() == s.dataset.size());
  for (std::size_t i = 0; i < a.predictions.size(); ++i) {
    CHECK(a.predictions[i].record == i);
    CHECK(a.predictions[i].fold == a.plan.record_fold[i]);
  }
  opts.threads = 1;
  const auto b = run_cross_validation(s.dataset, frozen, TaskKind::Retrodiction, fast_config(), opts);
  for (std::size_t i = 0; i < a.predictions.size(); ++i) CHECK(a.predictions[i].predicted == b.predictions[i].predicted);
}

TEST_CASE("prediction files round-trip") {
  testutil::TempDir dir;
  const auto s = small_survey();
  std::vector<Prediction> preds;
  for (std::size_t r = 0; r < s.dataset.size(); r += 3) preds.push_back({static_cast<int>(r % 10), r, 0.25 + 1e-3 * static_cast<double>(r % 7)});
  write_predictions(s.dataset, preds, dir / "p.csv");
  const auto back = read_predictions(s.dataset, dir / "p.csv");
  REQUIRE(back.size() == preds.size());
  for (std::size_t i = 0; i < preds.size(); ++i) {
    CHECK(back[i].record == preds[i].record);
    CHECK(back[i].fold == preds[i].fold);
    CHECK(back[i].predicted == preds[i].predicted);
  }
}

TEST_CASE("missingness sweep: one row per fraction, zero matches the plain run, more data helps") {
  const auto s = small_survey(200, 30, 5, 0.4);
  const auto frozen = s.embeddings.to_matrix();
  CvOptions opts;
  opts.seed = 11;
  opts.rounds = 2;
  auto cfg = fast_config();
  const std::vector<double> fractions = {0.0, 0.1, 0.9};
  const auto rows = missingness_sweep(s.dataset, frozen, TaskKind::Imputation, fractions, cfg, opts);
  REQUIRE(rows.size() == 3);
  const auto plain = run_cross_validation(s.dataset, frozen, TaskKind::Imputation, cfg, opts);
  std::vector<int> labels;
  std::vector<double> scores;
  for (const auto& p : plain.predictions) {
    labels.push_back(s.dataset.observations()[p.record].label);
    scores.push_back(p.predicted);
  }
  CHECK(rows[0].auc == auc(labels, scores));
  CHECK(rows[1].auc >= rows[2].auc);
  CHECK(rows[1].train_records > rows[2].train_records);
  const std::vector<double> bad = {1.0};
  CHECK(testutil::error_kind_of([&] { missingness_sweep(s.dataset, frozen, TaskKind::Imputation, bad, cfg, opts); }) ==
        ErrorKind::Config);
}
