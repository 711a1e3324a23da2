#pragma once

#include <Eigen/Dense>

#include <span>

namespace aisurvey {

struct LogisticModel {
  double intercept = 0.0;
  Eigen::VectorXd coefficients;
  double l2 = 1e-4;
  int iterations = 0;
  bool converged = false;
  double last_change = 0.0;  // max |coefficient step| of the final iteration

  double probability(const Eigen::Ref<const Eigen::RowVectorXd>& x) const;
  Eigen::VectorXd probabilities(const Eigen::MatrixXd& features) const;
};

// Maximizes sum_i log p(y_i | x_i) - (l2 / 2) |coefficients|^2 (intercept
// unpenalized) by Newton / IRLS with step halving. Converged when the
// largest step drops below `tolerance`; otherwise the last iterate is
// returned with converged = false.
LogisticModel fit_logistic(const Eigen::MatrixXd& features, std::span<const int> labels, double l2 = 1e-4,
                           int max_iterations = 100, double tolerance = 1e-8);

double penalized_log_likelihood(const Eigen::MatrixXd& features, std::span<const int> labels, double intercept,
                                const Eigen::VectorXd& coefficients, double l2);

}  // namespace aisurvey
