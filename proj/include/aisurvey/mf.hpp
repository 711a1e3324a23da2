#pragma once

#include "aisurvey/folds.hpp"
#include "aisurvey/survey_store.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace aisurvey {

struct MfConfig {
  int rank = 50;
  double lambda = 10.0;
  int iterations = 15;
  std::uint64_t seed = 42;
};

struct MfEntry {
  int row = 0;
  int col = 0;
  double value = 0.0;
};

struct MfFactors {
  Eigen::MatrixXd individual;  // rows x r
  Eigen::MatrixXd question;    // r x cols
  double lambda = 10.0;
  int iterations = 15;
};

// Objective after initialization and after every half-step
// (individual update, then question update), in order.
struct AlsTrace {
  std::vector<double> objective;
};

// sum over entries (I_i . Q_q - s)^2 + lambda (|I|_F^2 + |Q|_F^2).
// Repeated (row, col) entries each contribute their own squared error.
double mf_objective(const MfFactors& f, std::span<const MfEntry> entries);

// argmin_x sum_k (x . q_k - s_k)^2 + lambda |x|^2 over the given columns of
// `basis` (r x m): solves (Q Q^T + lambda I) x = Q s.
Eigen::VectorXd ridge_solve(const Eigen::MatrixXd& basis, std::span<const int> columns, std::span<const double> values,
                            double lambda);

// Exact alternating ridge solves from a seeded uniform(0, 0.1) start. Rows
// or columns with no entries get zero factors.
MfFactors als_fit(std::span<const MfEntry> entries, int n_rows, int n_cols, const MfConfig& cfg,
                  AlsTrace* trace = nullptr);

double mf_predict(const MfFactors& f, int row, int col);

// Respondent-wave rows: one row per distinct (individual, year) pair, in
// ascending (individual, year) order. For year-scoped respondent keys this
// is one row per respondent.
struct WaveRows {
  std::vector<int> record_row;  // row of every record
  int n_rows = 0;
};
WaveRows wave_rows(const SurveyDataset& ds);

std::vector<MfEntry> mf_entries(const SurveyDataset& ds, const WaveRows& rows, std::span<const std::size_t> records);

// Same fold plans as the DCN harness for a given seed. Unasked questions are
// out of reach for factorization and raise a Structural error.
CvResult run_mf_cross_validation(const SurveyDataset& ds, TaskKind task, const MfConfig& cfg, const CvOptions& opts);

void save_factors(const MfFactors& f, const std::filesystem::path& manifest);
MfFactors load_factors(const std::filesystem::path& manifest);

}  // namespace aisurvey
