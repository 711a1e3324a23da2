#pragma once

#include "aisurvey/logistic.hpp"
#include "aisurvey/mf.hpp"
#include "aisurvey/survey_store.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace aisurvey {

enum class Mechanism { MCAR, MAR, MNAR };
std::string_view to_string(Mechanism m);
Mechanism parse_mechanism(std::string_view text);

// Top-k removal either per target variable (quotas apportioned so the total
// is still round(rate * observed)) or as one pooled ranking.
enum class RemovalScope { PerVariable, Global };

struct Cell {
  int row = 0;
  int col = 0;
  auto operator<=>(const Cell&) const = default;
};

struct MissingMask {
  Mechanism mechanism = Mechanism::MCAR;
  double rate = 0.1;
  std::uint64_t seed = 0;
  std::vector<Cell> cells;  // sorted
  std::vector<LogisticModel> models;  // per target column (MAR / MNAR)
  std::vector<int> fitted_columns;
};

// NaN marks an unobserved cell.
std::size_t observed_count(const Eigen::MatrixXd& x);

MissingMask simulate_mcar(const Eigen::MatrixXd& x, double rate, std::uint64_t seed);

// Predictors: columns other than the target whose missing share is below
// `predictor_missing_threshold`, mean-imputed.
MissingMask simulate_mar(const Eigen::MatrixXd& x, double rate, std::uint64_t seed,
                         RemovalScope scope = RemovalScope::PerVariable, double predictor_missing_threshold = 0.1,
                         double l2 = 1e-4);

// Per-row categorical demographics, one-hot encoded (first level dropped).
struct Demographics {
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;

  Eigen::MatrixXd one_hot() const;
  // Delimited text keyed by `yearid`; remaining columns are categorical.
  static Demographics load(const std::filesystem::path& path, std::span<const std::int64_t> row_keys);
};

MissingMask simulate_mnar(const Eigen::MatrixXd& x, const Demographics& demographics, double rate, std::uint64_t seed,
                          RemovalScope scope = RemovalScope::PerVariable, double l2 = 1e-4);

// Respondent-wave x question matrix of a dataset (rows as in wave_rows()).
struct ResponseMatrix {
  Eigen::MatrixXd values;
  std::vector<int> row_individual;
  std::vector<int> row_year;
  WaveRows rows;
};
ResponseMatrix response_matrix(const SurveyDataset& ds);

// Records hit by the mask, in record order.
std::vector<std::size_t> masked_records(const SurveyDataset& ds, const ResponseMatrix& m, const MissingMask& mask);

// `yearid,variable,year`
void write_mask(const SurveyDataset& ds, const ResponseMatrix& m, const MissingMask& mask,
                const std::filesystem::path& path);

}  // namespace aisurvey
