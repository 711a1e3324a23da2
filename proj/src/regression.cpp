#include "aisurvey/regression.hpp"

#include "aisurvey/error.hpp"
#include "aisurvey/metrics.hpp"

#include <boost/math/distributions/students_t.hpp>

#include <cmath>
#include <limits>
#include <map>

namespace aisurvey {

namespace {

Eigen::MatrixXd checked_gram_inverse(const Eigen::MatrixXd& x) {
  const auto n = x.rows(), k = x.cols();
  if (n <= k) throw Error(ErrorKind::Singular, "design needs more rows than columns");
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x);
  if (qr.rank() < k) throw Error(ErrorKind::Singular, "design matrix is rank deficient");
  const Eigen::MatrixXd gram = x.transpose() * x;
  return gram.ldlt().solve(Eigen::MatrixXd::Identity(k, k));
}

}  // namespace

RegressionResult ols_robust(const Eigen::VectorXd& y, const Eigen::MatrixXd& x) {
  if (y.size() != x.rows()) throw Error(ErrorKind::Shape, "response and design row counts differ");
  const Eigen::MatrixXd inv = checked_gram_inverse(x);
  RegressionResult r;
  r.n = static_cast<int>(x.rows());
  r.k = static_cast<int>(x.cols());
  r.coefficients = inv * (x.transpose() * y);
  const Eigen::VectorXd e = y - x * r.coefficients;
  const Eigen::MatrixXd meat = x.transpose() * e.array().square().matrix().asDiagonal() * x;
  r.covariance = (static_cast<double>(r.n) / (r.n - r.k)) * inv * meat * inv;
  r.std_errors = r.covariance.diagonal().cwiseMax(0.0).cwiseSqrt();
  r.t_values.resize(r.k);
  r.p_values.resize(r.k);
  r.significant.assign(static_cast<std::size_t>(r.k), false);
  const boost::math::students_t dist(r.n - r.k);
  for (int j = 0; j < r.k; ++j) {
    const double b = r.coefficients(j), se = r.std_errors(j);
    double t, p;
    if (se > 0.0) {
      t = b / se;
      p = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t)));
    } else {
      t = b == 0.0 ? 0.0 : std::copysign(std::numeric_limits<double>::infinity(), b);
      p = b == 0.0 ? 1.0 : 0.0;
    }
    r.t_values(j) = t;
    r.p_values(j) = p;
    r.significant[static_cast<std::size_t>(j)] = p < 0.05;
  }
  return r;
}

Eigen::MatrixXd ols_classical_covariance(const Eigen::VectorXd& y, const Eigen::MatrixXd& x) {
  const Eigen::MatrixXd inv = checked_gram_inverse(x);
  const Eigen::VectorXd e = y - x * (inv * (x.transpose() * y));
  return (e.squaredNorm() / static_cast<double>(x.rows() - x.cols())) * inv;
}

namespace {

template <typename GroupOf>
GroupAucTable grouped_auc(const SurveyDataset& ds, std::span<const Prediction> predictions, GroupOf&& group_of) {
  std::map<int, std::pair<std::vector<int>, std::vector<double>>> groups;
  const auto obs = ds.observations();
  for (const auto& p : predictions) {
    auto& g = groups[group_of(obs[p.record])];
    g.first.push_back(obs[p.record].label);
    g.second.push_back(p.predicted);
  }
  GroupAucTable table;
  for (const auto& [key, g] : groups) {
    int pos = 0;
    for (int l : g.first) pos += l;
    const int n = static_cast<int>(g.first.size());
    if (pos == 0 || pos == n) {
      ++table.excluded;
      continue;
    }
    table.rows.push_back({key, auc(g.first, g.second), n, pos});
  }
  return table;
}

}  // namespace

GroupAucTable individual_auc(const SurveyDataset& ds, std::span<const Prediction> predictions) {
  return grouped_auc(ds, predictions, [](const Observation& o) { return o.individual; });
}

GroupAucTable opinion_auc(const SurveyDataset& ds, std::span<const Prediction> predictions) {
  const int years = ds.n_years();
  return grouped_auc(ds, predictions, [years](const Observation& o) { return o.question * years + o.year; });
}

OpinionCovariates opinion_covariates(const SurveyDataset& ds, const Eigen::MatrixXd& frozen,
                                     std::span<const double> ideology) {
  const int years = ds.n_years();
  const auto obs = ds.observations();
  std::vector<int> year_respondents(static_cast<std::size_t>(years), 0);
  {
    std::vector<std::pair<int, int>> seen;
    for (const auto& o : obs) seen.push_back({o.year, o.individual});
    std::sort(seen.begin(), seen.end());
    seen.erase(std::unique(seen.begin(), seen.end()), seen.end());
    for (const auto& s : seen) ++year_respondents[static_cast<std::size_t>(s.first)];
  }

  const int p = ds.n_questions();
  Eigen::VectorXd cosine = Eigen::VectorXd::Constant(p, std::nan(""));
  if (frozen.rows() == p && p > 1) {
    Eigen::MatrixXd unit = frozen;
    for (int j = 0; j < p; ++j) {
      const double norm = unit.row(j).norm();
      if (norm > 0.0) unit.row(j) /= norm;
    }
    const Eigen::MatrixXd sim = unit * unit.transpose();
    for (int j = 0; j < p; ++j) cosine(j) = (sim.row(j).sum() - sim(j, j)) / (p - 1);
  }

  std::map<int, std::vector<std::size_t>> cells;
  for (std::size_t r = 0; r < obs.size(); ++r) cells[obs[r].question * years + obs[r].year].push_back(r);

  OpinionCovariates out;
  out.names = {"sample_size", "response_rate", "ideology_correlation", "response_variance", "mean_cosine"};
  out.values.resize(static_cast<Eigen::Index>(cells.size()), 5);
  Eigen::Index row = 0;
  for (const auto& [key, records] : cells) {
    const int q = key / years, y = key % years;
    double mean = 0.0;
    for (auto r : records) mean += obs[r].label;
    mean /= static_cast<double>(records.size());
    double ideology_r = std::nan("");
    if (!ideology.empty()) {
      std::vector<double> a, b;
      for (auto r : records) {
        const double v = ideology[static_cast<std::size_t>(obs[r].individual)];
        if (std::isnan(v)) continue;
        a.push_back(v);
        b.push_back(obs[r].label);
      }
      try {
        if (a.size() >= 2) ideology_r = correlation(a, b);
      } catch (const Error&) {
      }
    }
    out.cells.push_back(key);
    out.values(row, 0) = static_cast<double>(records.size());
    out.values(row, 1) = static_cast<double>(records.size()) / year_respondents[static_cast<std::size_t>(y)];
    out.values(row, 2) = ideology_r;
    out.values(row, 3) = mean * (1.0 - mean);
    out.values(row, 4) = cosine(q);
    ++row;
  }
  return out;
}

Eigen::MatrixXd standardize_columns(const Eigen::MatrixXd& x) {
  Eigen::MatrixXd out(x.rows(), x.cols());
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    const double mean = x.col(j).mean();
    const Eigen::ArrayXd centered = x.col(j).array() - mean;
    const double sd = x.rows() > 1 ? std::sqrt(centered.square().sum() / static_cast<double>(x.rows() - 1)) : 0.0;
    if (sd > 0.0) {
      out.col(j) = (centered / sd).matrix();
    } else {
      out.col(j).setZero();
    }
  }
  return out;
}

}  // namespace aisurvey
