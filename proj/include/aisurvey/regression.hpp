#pragma once

#include "aisurvey/folds.hpp"
#include "aisurvey/survey_store.hpp"

#include <Eigen/Dense>

#include <span>
#include <string>
#include <vector>

namespace aisurvey {

struct RegressionResult {
  Eigen::VectorXd coefficients;
  Eigen::VectorXd std_errors;      // HC1
  Eigen::MatrixXd covariance;      // HC1
  Eigen::VectorXd t_values;
  Eigen::VectorXd p_values;        // two-sided, Student t with n - k dof
  std::vector<bool> significant;   // p < 0.05
  int n = 0;
  int k = 0;
};

// OLS with HC1 covariance (n / (n - k)) (X'X)^-1 X' diag(e^2) X (X'X)^-1.
// X must already contain the intercept column. Throws Singular when X is
// rank deficient or n <= k.
RegressionResult ols_robust(const Eigen::VectorXd& y, const Eigen::MatrixXd& x);

// sigma^2 (X'X)^-1 with sigma^2 = e'e / (n - k).
Eigen::MatrixXd ols_classical_covariance(const Eigen::VectorXd& y, const Eigen::MatrixXd& x);

struct GroupAuc {
  int group = 0;  // individual id, or question * Y + year for cells
  double auc = 0.0;
  int n = 0;
  int positives = 0;
};

struct GroupAucTable {
  std::vector<GroupAuc> rows;  // sorted by group
  int excluded = 0;            // groups lacking one of the classes
};

GroupAucTable individual_auc(const SurveyDataset& ds, std::span<const Prediction> predictions);
GroupAucTable opinion_auc(const SurveyDataset& ds, std::span<const Prediction> predictions);

// Per (question, year) cell covariates for opinion-level regressions.
// ideology holds one score per individual (NaN when unknown); an empty
// span leaves that column NaN. Semantic similarity is the mean cosine
// between the question's frozen vector and every other question's.
struct OpinionCovariates {
  std::vector<std::string> names;  // sample_size, response_rate, ideology_correlation, response_variance, mean_cosine
  std::vector<int> cells;          // question * Y + year
  Eigen::MatrixXd values;          // cells x names
};
OpinionCovariates opinion_covariates(const SurveyDataset& ds, const Eigen::MatrixXd& frozen,
                                     std::span<const double> ideology);

// Column-wise (x - mean) / sd; constant columns become zero.
Eigen::MatrixXd standardize_columns(const Eigen::MatrixXd& x);

}  // namespace aisurvey
