#pragma once

#include "aisurvey/aggregation.hpp"
#include "aisurvey/folds.hpp"
#include "aisurvey/metrics.hpp"
#include "aisurvey/survey_store.hpp"

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace aisurvey::cli {

// Exit status per error category.
enum ExitCode : int {
  kOk = 0,
  kUnexpected = 1,
  kUsage = 2,
  kDependency = 3,
  kData = 4,
  kNumerical = 5,
  kConfig = 6,
  kLocked = 7,
};
int exit_code_for(ErrorKind kind);

// Parses argv (argv[0] is the program name) and runs one subcommand.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

// Scores recomputed from a prediction table.
struct PredictionSummary {
  std::size_t records = 0;
  double auc = 0.0;
  Classification classification;
  int cells = 0;
  double correlation = 0.0;  // observed vs predicted cell proportions
  double correct_rate = 0.0;
  CalibrationLine calibration;
};

// Aggregates with the dataset's survey weights, fits one rescaling line on
// all observed cells and scores them at `margin`.
PredictionSummary summarize_predictions(const SurveyDataset& ds, std::span<const Prediction> predictions,
                                        double margin);

}  // namespace aisurvey::cli
