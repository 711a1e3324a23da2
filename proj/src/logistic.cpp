#include "aisurvey/logistic.hpp"

#include "aisurvey/error.hpp"

#include <cmath>

namespace aisurvey {

namespace {

// log(1 + exp(z)) without overflow
double softplus(double z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

double sigmoid(double z) { return z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z)); }

}  // namespace

double LogisticModel::probability(const Eigen::Ref<const Eigen::RowVectorXd>& x) const {
  return sigmoid(intercept + x.dot(coefficients));
}

Eigen::VectorXd LogisticModel::probabilities(const Eigen::MatrixXd& features) const {
  Eigen::VectorXd z = (features * coefficients).array() + intercept;
  return z.unaryExpr([](double v) { return sigmoid(v); });
}

double penalized_log_likelihood(const Eigen::MatrixXd& features, std::span<const int> labels, double intercept,
                                const Eigen::VectorXd& coefficients, double l2) {
  const Eigen::VectorXd z = (features * coefficients).array() + intercept;
  double ll = 0.0;
  for (Eigen::Index i = 0; i < z.size(); ++i) ll += labels[static_cast<std::size_t>(i)] * z(i) - softplus(z(i));
  return ll - 0.5 * l2 * coefficients.squaredNorm();
}

LogisticModel fit_logistic(const Eigen::MatrixXd& features, std::span<const int> labels, double l2, int max_iterations,
                           double tolerance) {
  const auto n = features.rows();
  const auto k = features.cols();
  if (static_cast<Eigen::Index>(labels.size()) != n) throw Error(ErrorKind::Shape, "label count != feature rows");
  if (n == 0) throw Error(ErrorKind::InsufficientData, "no examples");
  if (l2 < 0) throw Error(ErrorKind::Config, "l2 must be >= 0");

  Eigen::MatrixXd design(n, k + 1);
  design.col(0).setOnes();
  design.rightCols(k) = features;
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) y(i) = labels[static_cast<std::size_t>(i)];
  Eigen::VectorXd penalty = Eigen::VectorXd::Constant(k + 1, l2);
  penalty(0) = 0.0;

  auto objective = [&](const Eigen::VectorXd& beta) {
    return penalized_log_likelihood(features, labels, beta(0), beta.tail(k), l2);
  };

  Eigen::VectorXd beta = Eigen::VectorXd::Zero(k + 1);
  double current = objective(beta);
  LogisticModel model;
  model.l2 = l2;
  for (int it = 1; it <= max_iterations; ++it) {
    const Eigen::VectorXd z = design * beta;
    Eigen::VectorXd p = z.unaryExpr([](double v) { return sigmoid(v); });
    Eigen::VectorXd w = (p.array() * (1.0 - p.array())).max(1e-12);
    Eigen::VectorXd grad = design.transpose() * (y - p) - penalty.cwiseProduct(beta);
    Eigen::MatrixXd hess = design.transpose() * w.asDiagonal() * design;
    hess.diagonal() += penalty;
    hess.diagonal().array() += 1e-12;  // keeps the unpenalized intercept solvable under separation
    Eigen::VectorXd step = hess.ldlt().solve(grad);
    if (!step.allFinite()) throw Error(ErrorKind::Numerical, "IRLS step is not finite");

    double scale = 1.0;
    Eigen::VectorXd candidate = beta + step;
    double value = objective(candidate);
    for (int h = 0; h < 30 && value < current - 1e-12 * std::abs(current); ++h) {
      scale *= 0.5;
      candidate = beta + scale * step;
      value = objective(candidate);
    }
    model.last_change = (scale * step).cwiseAbs().maxCoeff();
    beta = candidate;
    current = value;
    model.iterations = it;
    if (model.last_change < tolerance) {
      model.converged = true;
      break;
    }
  }
  model.intercept = beta(0);
  model.coefficients = beta.tail(k);
  return model;
}

}  // namespace aisurvey
