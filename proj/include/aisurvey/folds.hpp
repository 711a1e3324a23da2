#pragma once

#include "aisurvey/dcn.hpp"
#include "aisurvey/survey_store.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

namespace aisurvey {

enum class TaskKind { Imputation, Retrodiction, Unasked };
enum class UnitKind { Response, QuestionYear, Question };

std::string_view to_string(TaskKind task);
TaskKind parse_task(std::string_view text);
UnitKind unit_kind_for(TaskKind task);

// Unit id of an observation: its own index (response), q * Y + y
// (question-year cell), or q (question).
std::size_t unit_of(UnitKind kind, const SurveyDataset& ds, std::size_t record);
std::size_t unit_space(UnitKind kind, const SurveyDataset& ds);

struct FoldPlan {
  TaskKind task = TaskKind::Imputation;
  UnitKind unit = UnitKind::Response;
  int num_folds = 10;
  std::vector<int> unit_fold;    // -1 for units with no observations
  std::vector<int> record_fold;  // fold of every observation

  std::vector<std::size_t> test_records(int round) const;
  std::vector<std::size_t> train_records(int round) const;
  std::vector<std::size_t> fold_sizes() const;  // in units
};

// Units are shuffled with Rng(seed) and dealt round-robin, so fold sizes
// differ by at most one.
FoldPlan make_response_folds(const SurveyDataset& ds, int k, std::uint64_t seed);
// Question-year cells. With stratification, each year's cells are shuffled
// and dealt separately, continuing the round-robin across years.
FoldPlan make_year_question_folds(const SurveyDataset& ds, int k, std::uint64_t seed, bool stratify_by_year = true);
FoldPlan make_question_folds(const SurveyDataset& ds, int k, std::uint64_t seed);
FoldPlan make_plan(TaskKind task, const SurveyDataset& ds, int k, std::uint64_t seed, bool stratify_by_year = true);

// Keeps a seeded share of the units behind `records` (scheme-consistent),
// preserving the original record order.
std::vector<std::size_t> subsample_units(const SurveyDataset& ds, UnitKind unit, std::span<const std::size_t> records,
                                         double keep_fraction, std::uint64_t seed);

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;
};
// Holds out ceil(fraction * units) whole units for validation.
Split split_validation(const SurveyDataset& ds, UnitKind unit, std::span<const std::size_t> records, double fraction,
                       std::uint64_t seed);

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;       // inference-mode BCE on the monitor sample
  double validation_auc = 0.0;   // NaN when undefined
  double validation_loss = 0.0;
};

struct TrainHistory {
  double initial_loss = 0.0;
  std::vector<EpochRecord> epochs;
  int best_epoch = 0;  // 1-based; 0 means the initial parameters were best
  bool early_stopped = false;
  long optimizer_steps = 0;
};

struct TrainResult {
  DcnParameters params;
  TrainHistory history;
};

std::vector<Example> examples_for(const SurveyDataset& ds, std::span<const std::size_t> records);
std::vector<int> labels_for(const SurveyDataset& ds, std::span<const std::size_t> records);

// Minibatch Adam over `train`; early stopping on validation AUC (falls back
// to validation loss when AUC is undefined). Returns the best-epoch state.
TrainResult train_dcn(const SurveyDataset& ds, const Eigen::MatrixXd& frozen, std::span<const std::size_t> train,
                      std::span<const std::size_t> validation, const DcnConfig& cfg, std::uint64_t seed);

struct CvOptions {
  int folds = 10;
  std::uint64_t seed = 42;
  bool stratify_by_year = true;
  double validation_fraction = 0.1;
  double train_fraction = 1.0;  // < 1 subsamples training units
  int rounds = -1;              // -1 = all folds
  unsigned threads = 0;         // 0 = hardware concurrency
};

struct RoundSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;
  std::vector<std::size_t> test;
};

// Deterministic train/validation/test partition for one CV round.
RoundSplit round_split(const SurveyDataset& ds, const FoldPlan& plan, int round, const CvOptions& opts);

TrainResult train_model(const SurveyDataset& ds, const Eigen::MatrixXd& frozen, const FoldPlan& plan, int round,
                        const DcnConfig& cfg, const CvOptions& opts);

struct Prediction {
  int fold = 0;
  std::size_t record = 0;
  double predicted = 0.0;
};

struct CvResult {
  FoldPlan plan;
  std::vector<Prediction> predictions;  // sorted by record
  std::vector<TrainHistory> histories;  // per round
};

CvResult run_cross_validation(const SurveyDataset& ds, const Eigen::MatrixXd& frozen, TaskKind task,
                              const DcnConfig& cfg, const CvOptions& opts);

// Unit keys that appear in both the held-out and the training side of a
// round (validation counts as training). Empty when there is no leakage.
std::vector<std::size_t> leaked_units(const SurveyDataset& ds, const FoldPlan& plan, const RoundSplit& split);

struct SweepRow {
  double missing_fraction = 0.0;
  double auc = 0.0;
  std::size_t train_records = 0;
};

std::vector<SweepRow> missingness_sweep(const SurveyDataset& ds, const Eigen::MatrixXd& frozen, TaskKind task,
                                        std::span<const double> fractions, const DcnConfig& cfg, const CvOptions& opts);

// `fold,year,yearid,variable,observed,predicted`
void write_predictions(const SurveyDataset& ds, std::span<const Prediction> predictions,
                       const std::filesystem::path& path);
// Inverse of write_predictions against the same dataset, sorted by record.
// Rows that do not resolve to a record, or whose observed value disagrees
// with the dataset, raise Alignment.
std::vector<Prediction> read_predictions(const SurveyDataset& ds, const std::filesystem::path& path);

}  // namespace aisurvey
