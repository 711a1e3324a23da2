#pragma once

#include "aisurvey/folds.hpp"
#include "aisurvey/survey_store.hpp"

#include <filesystem>
#include <span>
#include <vector>

namespace aisurvey {

struct ScoredResponse {
  int individual = 0;
  int question = 0;
  int year = 0;
  double predicted = 0.0;
  int observed = -1;  // -1 when the respondent was not asked
};

struct AggregatedCell {
  int question = 0;
  int year = 0;
  double predicted = 0.0;  // weighted mean of predictions
  double rescaled = 0.0;   // predicted after rescaling (equal until applied)
  bool has_observed = false;
  double observed = 0.0;   // weighted mean of labels where present
  int respondents = 0;
  int observed_count = 0;
  double effective_count = 0.0;  // (sum w)^2 / sum w^2
  double total_weight = 0.0;
};

// Cells sorted by (question, year). `weights` is indexed by individual.
// Throws Filter on a cell whose total weight is zero and Index on an
// individual without a weight.
std::vector<AggregatedCell> weighted_aggregate(std::span<const ScoredResponse> responses,
                                               std::span<const double> weights);

// Out-of-fold predictions joined back to their records.
std::vector<ScoredResponse> scored_from_predictions(const SurveyDataset& ds, std::span<const Prediction> predictions);

// Per-individual weight as recorded in the dataset (first record wins).
std::vector<double> individual_weights(const SurveyDataset& ds);

struct CalibrationLine {
  double slope = 1.0;
  double intercept = 0.0;
  double r_squared = 0.0;
  int cells = 0;

  double apply(double predicted) const;  // clipped to [0, 1]
  double apply_unclipped(double predicted) const;
};

// One OLS line of observed on predicted proportion over every cell that has
// an observed value. Throws Singular when the predictions do not vary.
CalibrationLine fit_rescaling(std::span<const AggregatedCell> cells);
void apply_rescaling(const CalibrationLine& line, std::span<AggregatedCell> cells);

// Share of observed cells with |rescaled - observed| <= margin. A 1e-9
// slack absorbs decimal representation error at the boundary.
double margin_correct_rate(std::span<const AggregatedCell> cells, double margin = 0.03);

struct AggregateSummary {
  int cells = 0;
  double correlation = 0.0;  // observed vs predicted proportion
  double correct_rate = 0.0;
};
AggregateSummary summarize_cells(std::span<const AggregatedCell> cells, double margin = 0.03);

// `variable,year,predicted,rescaled,observed,respondents,observed_count,effective_count,total_weight`
void write_cells(const SurveyDataset& ds, std::span<const AggregatedCell> cells, const std::filesystem::path& path);

}  // namespace aisurvey
