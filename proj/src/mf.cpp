#include "aisurvey/mf.hpp"

#include "aisurvey/error.hpp"
#include "aisurvey/rng.hpp"
#include "aisurvey/tensor_io.hpp"

#include <algorithm>
#include <map>

namespace aisurvey {

double mf_objective(const MfFactors& f, std::span<const MfEntry> entries) {
  double loss = 0.0;
  for (const auto& e : entries) {
    const double r = f.individual.row(e.row).dot(f.question.col(e.col)) - e.value;
    loss += r * r;
  }
  return loss + f.lambda * (f.individual.squaredNorm() + f.question.squaredNorm());
}

Eigen::VectorXd ridge_solve(const Eigen::MatrixXd& basis, std::span<const int> columns, std::span<const double> values,
                            double lambda) {
  const auto r = basis.rows();
  if (columns.empty()) return Eigen::VectorXd::Zero(r);
  Eigen::MatrixXd gram = lambda * Eigen::MatrixXd::Identity(r, r);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(r);
  for (std::size_t k = 0; k < columns.size(); ++k) {
    const auto q = basis.col(columns[k]);
    gram.selfadjointView<Eigen::Lower>().rankUpdate(q);
    rhs += values[k] * q;
  }
  gram.triangularView<Eigen::StrictlyUpper>() = gram.transpose();
  Eigen::LDLT<Eigen::MatrixXd> ldlt(gram);
  if (ldlt.info() != Eigen::Success || ldlt.isNegative()) {
    throw Error(ErrorKind::Numerical, "ridge system is not positive definite");
  }
  Eigen::VectorXd x = ldlt.solve(rhs);
  if (!x.allFinite()) throw Error(ErrorKind::Numerical, "ridge solve produced non-finite factors (lambda too small?)");
  return x;
}

MfFactors als_fit(std::span<const MfEntry> entries, int n_rows, int n_cols, const MfConfig& cfg, AlsTrace* trace) {
  if (cfg.rank < 1) throw Error(ErrorKind::Config, "rank must be >= 1");
  if (cfg.lambda < 0) throw Error(ErrorKind::Config, "lambda must be >= 0");
  if (n_rows < 0 || n_cols < 0) throw Error(ErrorKind::Config, "negative matrix size");

  std::vector<std::vector<int>> row_cols(static_cast<std::size_t>(n_rows)), col_rows(static_cast<std::size_t>(n_cols));
  std::vector<std::vector<double>> row_vals(static_cast<std::size_t>(n_rows)), col_vals(static_cast<std::size_t>(n_cols));
  for (const auto& e : entries) {
    if (e.row < 0 || e.row >= n_rows || e.col < 0 || e.col >= n_cols) throw Error(ErrorKind::Index, "entry out of range");
    row_cols[static_cast<std::size_t>(e.row)].push_back(e.col);
    row_vals[static_cast<std::size_t>(e.row)].push_back(e.value);
    col_rows[static_cast<std::size_t>(e.col)].push_back(e.row);
    col_vals[static_cast<std::size_t>(e.col)].push_back(e.value);
  }

  MfFactors f;
  f.lambda = cfg.lambda;
  f.iterations = cfg.iterations;
  f.individual.resize(n_rows, cfg.rank);
  f.question.resize(cfg.rank, n_cols);
  Rng rng(cfg.seed);
  for (int i = 0; i < n_rows; ++i) {
    for (int k = 0; k < cfg.rank; ++k) f.individual(i, k) = rng.uniform(0.0, 0.1);
  }
  for (int k = 0; k < cfg.rank; ++k) {
    for (int j = 0; j < n_cols; ++j) f.question(k, j) = rng.uniform(0.0, 0.1);
  }
  if (trace) trace->objective.push_back(mf_objective(f, entries));

  for (int it = 0; it < cfg.iterations; ++it) {
    for (int i = 0; i < n_rows; ++i) {
      const auto u = static_cast<std::size_t>(i);
      f.individual.row(i) = ridge_solve(f.question, row_cols[u], row_vals[u], cfg.lambda).transpose();
    }
    if (trace) trace->objective.push_back(mf_objective(f, entries));
    const Eigen::MatrixXd individual_t = f.individual.transpose();
    for (int j = 0; j < n_cols; ++j) {
      const auto u = static_cast<std::size_t>(j);
      f.question.col(j) = ridge_solve(individual_t, col_rows[u], col_vals[u], cfg.lambda);
    }
    if (trace) trace->objective.push_back(mf_objective(f, entries));
  }
  return f;
}

double mf_predict(const MfFactors& f, int row, int col) {
  if (row < 0 || row >= f.individual.rows() || col < 0 || col >= f.question.cols()) {
    throw Error(ErrorKind::Index, "factor index out of range");
  }
  return f.individual.row(row).dot(f.question.col(col));
}

WaveRows wave_rows(const SurveyDataset& ds) {
  std::map<std::pair<int, int>, int> ids;
  for (const auto& o : ds.observations()) ids.emplace(std::pair{o.individual, o.year}, 0);
  int next = 0;
  for (auto& [key, id] : ids) id = next++;
  WaveRows w;
  w.n_rows = next;
  w.record_row.reserve(ds.size());
  for (const auto& o : ds.observations()) w.record_row.push_back(ids.at({o.individual, o.year}));
  return w;
}

std::vector<MfEntry> mf_entries(const SurveyDataset& ds, const WaveRows& rows, std::span<const std::size_t> records) {
  std::vector<MfEntry> out;
  out.reserve(records.size());
  for (auto r : records) {
    const auto& o = ds.observations()[r];
    out.push_back({rows.record_row[r], o.question, static_cast<double>(o.label)});
  }
  return out;
}

CvResult run_mf_cross_validation(const SurveyDataset& ds, TaskKind task, const MfConfig& cfg, const CvOptions& opts) {
  if (task == TaskKind::Unasked) {
    throw Error(ErrorKind::Structural, "matrix factorization cannot score questions absent from training");
  }
  if (ds.empty()) throw Error(ErrorKind::EmptySplit, "dataset is empty");
  CvResult result;
  result.plan = make_plan(task, ds, opts.folds, derive_seed(opts.seed, "fold-plan"), opts.stratify_by_year);
  const auto rows = wave_rows(ds);
  CvOptions o = opts;
  o.validation_fraction = 0.0;  // fixed iteration count, nothing to early-stop
  const int rounds = opts.rounds < 0 ? opts.folds : std::min(opts.rounds, opts.folds);
  for (int r = 0; r < rounds; ++r) {
    const auto split = round_split(ds, result.plan, r, o);
    if (split.test.empty()) continue;
    const auto entries = mf_entries(ds, rows, split.train);
    MfConfig c = cfg;
    c.seed = derive_seed(derive_seed(opts.seed, "round", static_cast<std::uint64_t>(r)), "als");
    const auto f = als_fit(entries, rows.n_rows, ds.n_questions(), c);
    for (auto rec : split.test) {
      result.predictions.push_back({r, rec, mf_predict(f, rows.record_row[rec], ds.observations()[rec].question)});
    }
  }
  std::sort(result.predictions.begin(), result.predictions.end(),
            [](const Prediction& a, const Prediction& b) { return a.record < b.record; });
  return result;
}

void save_factors(const MfFactors& f, const std::filesystem::path& manifest) {
  TensorBundle b;
  b.kind = "mf-factors";
  b.meta = {{"lambda", f.lambda}, {"iterations", f.iterations}, {"rank", f.individual.cols()}};
  b.tensors.push_back({"individual", f.individual});
  b.tensors.push_back({"question", f.question});
  save_bundle(b, manifest);
}

MfFactors load_factors(const std::filesystem::path& manifest) {
  auto b = load_bundle(manifest);
  if (b.kind != "mf-factors") throw Error(ErrorKind::Format, "bundle kind '" + b.kind + "' is not mf-factors");
  MfFactors f;
  f.individual = b.get("individual");
  f.question = b.get("question");
  f.lambda = b.meta.value("lambda", 10.0);
  f.iterations = b.meta.value("iterations", 15);
  return f;
}

}  // namespace aisurvey
