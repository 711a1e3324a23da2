#include "aisurvey/missing_sim.hpp"

#include "aisurvey/csv.hpp"
#include "aisurvey/error.hpp"
#include "aisurvey/rng.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <unordered_map>

namespace aisurvey {

std::string_view to_string(Mechanism m) {
  switch (m) {
    case Mechanism::MCAR: return "mcar";
    case Mechanism::MAR: return "mar";
    case Mechanism::MNAR: return "mnar";
  }
  return "?";
}

Mechanism parse_mechanism(std::string_view text) {
  if (text == "mcar") return Mechanism::MCAR;
  if (text == "mar") return Mechanism::MAR;
  if (text == "mnar") return Mechanism::MNAR;
  throw Error(ErrorKind::Usage, "unknown mechanism '" + std::string(text) + "'");
}

std::size_t observed_count(const Eigen::MatrixXd& x) {
  return static_cast<std::size_t>((x.array() == x.array()).count());
}

namespace {

void check_rate(double rate) {
  if (!(rate >= 0.0 && rate < 1.0)) throw Error(ErrorKind::Config, "missingness rate must lie in [0, 1)");
}

std::size_t target_size(double rate, std::size_t observed) {
  return static_cast<std::size_t>(std::llround(rate * static_cast<double>(observed)));
}

std::vector<std::size_t> column_observed(const Eigen::MatrixXd& x) {
  std::vector<std::size_t> c(static_cast<std::size_t>(x.cols()), 0);
  for (Eigen::Index j = 0; j < x.cols(); ++j) c[static_cast<std::size_t>(j)] = static_cast<std::size_t>((x.col(j).array() == x.col(j).array()).count());
  return c;
}

// Largest-remainder apportionment of round(rate * total) across columns;
// ties in remainder go to the lower column index.
std::vector<std::size_t> quotas(const std::vector<std::size_t>& observed, double rate) {
  const std::size_t total = std::accumulate(observed.begin(), observed.end(), std::size_t{0});
  const std::size_t want = target_size(rate, total);
  std::vector<std::size_t> q(observed.size());
  std::vector<std::pair<double, std::size_t>> rem;
  std::size_t assigned = 0;
  for (std::size_t j = 0; j < observed.size(); ++j) {
    const double exact = rate * static_cast<double>(observed[j]);
    q[j] = static_cast<std::size_t>(std::floor(exact));
    assigned += q[j];
    rem.push_back({exact - std::floor(exact), j});
  }
  std::stable_sort(rem.begin(), rem.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t i = 0; assigned < want && i < rem.size(); ++i) {
    if (q[rem[i].second] < observed[rem[i].second]) {
      ++q[rem[i].second];
      ++assigned;
    }
  }
  return q;
}

struct Scored {
  Cell cell;
  double score;
};

// Shuffle first so equal scores are ordered by the seed, then stable sort.
std::vector<Cell> top_k(std::vector<Scored> candidates, std::size_t k, Rng& rng) {
  rng.shuffle(std::span(candidates));
  std::stable_sort(candidates.begin(), candidates.end(),
                   [](const Scored& a, const Scored& b) { return a.score > b.score; });
  std::vector<Cell> out;
  for (std::size_t i = 0; i < std::min(k, candidates.size()); ++i) out.push_back(candidates[i].cell);
  return out;
}

Eigen::MatrixXd mean_imputed(const Eigen::MatrixXd& x, std::span<const int> cols) {
  Eigen::MatrixXd out(x.rows(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t c = 0; c < cols.size(); ++c) {
    const auto col = x.col(cols[c]);
    double sum = 0.0;
    std::size_t n = 0;
    for (Eigen::Index i = 0; i < col.size(); ++i) {
      if (!std::isnan(col(i))) {
        sum += col(i);
        ++n;
      }
    }
    const double mean = n ? sum / static_cast<double>(n) : 0.0;
    for (Eigen::Index i = 0; i < col.size(); ++i) out(i, static_cast<Eigen::Index>(c)) = std::isnan(col(i)) ? mean : col(i);
  }
  return out;
}

// Fits m_{., j} per target column on `features_for(j)` and removes the most
// likely-missing observed cells.
template <typename FeaturesFor>
MissingMask model_based_mask(const Eigen::MatrixXd& x, double rate, std::uint64_t seed, RemovalScope scope, double l2,
                             Mechanism mechanism, FeaturesFor&& features_for) {
  check_rate(rate);
  MissingMask mask;
  mask.mechanism = mechanism;
  mask.rate = rate;
  mask.seed = seed;
  const auto observed = column_observed(x);
  const auto per_col = quotas(observed, rate);
  Rng rng(seed);
  std::vector<Scored> pooled;
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    if (observed[static_cast<std::size_t>(j)] == 0) continue;
    const Eigen::MatrixXd features = features_for(static_cast<int>(j));
    std::vector<int> missing(static_cast<std::size_t>(x.rows()));
    for (Eigen::Index i = 0; i < x.rows(); ++i) missing[static_cast<std::size_t>(i)] = std::isnan(x(i, j)) ? 1 : 0;
    auto model = fit_logistic(features, missing, l2);
    const Eigen::VectorXd p = model.probabilities(features);
    std::vector<Scored> candidates;
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      if (!std::isnan(x(i, j))) candidates.push_back({{static_cast<int>(i), static_cast<int>(j)}, p(i)});
    }
    mask.models.push_back(std::move(model));
    mask.fitted_columns.push_back(static_cast<int>(j));
    if (scope == RemovalScope::PerVariable) {
      auto picked = top_k(std::move(candidates), per_col[static_cast<std::size_t>(j)], rng);
      mask.cells.insert(mask.cells.end(), picked.begin(), picked.end());
    } else {
      pooled.insert(pooled.end(), candidates.begin(), candidates.end());
    }
  }
  if (scope == RemovalScope::Global) mask.cells = top_k(std::move(pooled), target_size(rate, observed_count(x)), rng);
  std::sort(mask.cells.begin(), mask.cells.end());
  return mask;
}

}  // namespace

MissingMask simulate_mcar(const Eigen::MatrixXd& x, double rate, std::uint64_t seed) {
  check_rate(rate);
  std::vector<Cell> cells;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      if (!std::isnan(x(i, j))) cells.push_back({static_cast<int>(i), static_cast<int>(j)});
    }
  }
  MissingMask mask;
  mask.mechanism = Mechanism::MCAR;
  mask.rate = rate;
  mask.seed = seed;
  const auto k = target_size(rate, cells.size());
  Rng rng(seed);
  rng.shuffle(std::span(cells));
  cells.resize(k);
  std::sort(cells.begin(), cells.end());
  mask.cells = std::move(cells);
  return mask;
}

MissingMask simulate_mar(const Eigen::MatrixXd& x, double rate, std::uint64_t seed, RemovalScope scope,
                         double predictor_missing_threshold, double l2) {
  const auto observed = column_observed(x);
  std::vector<int> eligible;
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    const double missing_share = 1.0 - static_cast<double>(observed[static_cast<std::size_t>(j)]) / static_cast<double>(x.rows());
    if (x.rows() > 0 && missing_share < predictor_missing_threshold) eligible.push_back(static_cast<int>(j));
  }
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    const bool has_other = std::any_of(eligible.begin(), eligible.end(), [&](int c) { return c != j; });
    if (!has_other && observed[static_cast<std::size_t>(j)] > 0) {
      throw Error(ErrorKind::Infeasible, "no low-missingness predictor available for column " + std::to_string(j));
    }
  }
  return model_based_mask(x, rate, seed, scope, l2, Mechanism::MAR, [&](int target) {
    std::vector<int> cols;
    for (int c : eligible) {
      if (c != target) cols.push_back(c);
    }
    return mean_imputed(x, cols);
  });
}

Eigen::MatrixXd Demographics::one_hot() const {
  std::vector<std::vector<std::string>> levels(columns.size());
  for (std::size_t c = 0; c < columns.size(); ++c) {
    std::set<std::string> seen;
    for (const auto& r : rows) seen.insert(r.at(c));
    levels[c].assign(seen.begin(), seen.end());
  }
  Eigen::Index width = 0;
  for (const auto& l : levels) width += static_cast<Eigen::Index>(l.empty() ? 0 : l.size() - 1);
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(rows.size()), width);
  Eigen::Index offset = 0;
  for (std::size_t c = 0; c < columns.size(); ++c) {
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const auto it = std::lower_bound(levels[c].begin(), levels[c].end(), rows[i][c]);
      const auto level = static_cast<Eigen::Index>(it - levels[c].begin());
      if (level > 0) out(static_cast<Eigen::Index>(i), offset + level - 1) = 1.0;
    }
    offset += static_cast<Eigen::Index>(levels[c].empty() ? 0 : levels[c].size() - 1);
  }
  return out;
}

Demographics Demographics::load(const std::filesystem::path& path, std::span<const std::int64_t> row_keys) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  csv::Reader reader(in);
  auto header = reader.next();
  if (!header) throw Error(ErrorKind::Parse, path.string() + ": missing header");
  std::size_t key_col = header->size();
  for (std::size_t c = 0; c < header->size(); ++c) {
    if (normalize_label((*header)[c]) == "yearid") key_col = c;
  }
  if (key_col == header->size()) throw Error(ErrorKind::Parse, path.string() + ": no yearid column");
  Demographics d;
  for (std::size_t c = 0; c < header->size(); ++c) {
    if (c != key_col) d.columns.push_back((*header)[c]);
  }
  std::unordered_map<std::int64_t, std::vector<std::string>> by_key;
  while (auto row = reader.next()) {
    if (row->size() == 1 && (*row)[0].empty()) continue;
    if (row->size() != header->size()) throw Error(ErrorKind::Parse, "line " + std::to_string(reader.line()) + ": wrong field count");
    std::vector<std::string> values;
    for (std::size_t c = 0; c < row->size(); ++c) {
      if (c != key_col) values.push_back((*row)[c]);
    }
    by_key[csv::parse_int((*row)[key_col])] = std::move(values);
  }
  std::vector<std::int64_t> missing;
  for (auto k : row_keys) {
    auto it = by_key.find(k);
    if (it == by_key.end()) {
      missing.push_back(k);
      continue;
    }
    d.rows.push_back(it->second);
  }
  if (!missing.empty()) {
    throw Error(ErrorKind::Dependency, std::to_string(missing.size()) + " respondents lack demographics (first: " +
                                           std::to_string(missing.front()) + ")");
  }
  return d;
}

MissingMask simulate_mnar(const Eigen::MatrixXd& x, const Demographics& demographics, double rate, std::uint64_t seed,
                          RemovalScope scope, double l2) {
  if (static_cast<Eigen::Index>(demographics.rows.size()) != x.rows()) {
    throw Error(ErrorKind::Dependency, "demographics cover " + std::to_string(demographics.rows.size()) + " of " +
                                           std::to_string(x.rows()) + " rows");
  }
  for (const auto& r : demographics.rows) {
    if (r.size() != demographics.columns.size()) throw Error(ErrorKind::Dependency, "ragged demographic row");
  }
  const Eigen::MatrixXd features = demographics.one_hot();
  return model_based_mask(x, rate, seed, scope, l2, Mechanism::MNAR, [&](int) { return features; });
}

ResponseMatrix response_matrix(const SurveyDataset& ds) {
  ResponseMatrix m;
  m.rows = wave_rows(ds);
  m.values = Eigen::MatrixXd::Constant(m.rows.n_rows, ds.n_questions(), std::nan(""));
  m.row_individual.assign(static_cast<std::size_t>(m.rows.n_rows), 0);
  m.row_year.assign(static_cast<std::size_t>(m.rows.n_rows), 0);
  const auto obs = ds.observations();
  for (std::size_t r = 0; r < obs.size(); ++r) {
    const int row = m.rows.record_row[r];
    m.values(row, obs[r].question) = obs[r].label;
    m.row_individual[static_cast<std::size_t>(row)] = obs[r].individual;
    m.row_year[static_cast<std::size_t>(row)] = obs[r].year;
  }
  return m;
}

std::vector<std::size_t> masked_records(const SurveyDataset& ds, const ResponseMatrix& m, const MissingMask& mask) {
  std::set<Cell> cells(mask.cells.begin(), mask.cells.end());
  std::vector<std::size_t> out;
  const auto obs = ds.observations();
  for (std::size_t r = 0; r < obs.size(); ++r) {
    if (cells.count({m.rows.record_row[r], obs[r].question})) out.push_back(r);
  }
  return out;
}

void write_mask(const SurveyDataset& ds, const ResponseMatrix& m, const MissingMask& mask,
                const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
  csv::write_row(out, {"yearid", "variable", "year"});
  for (const auto& c : mask.cells) {
    const auto row = static_cast<std::size_t>(c.row);
    csv::write_row(out, {std::to_string(ds.individuals().decode(m.row_individual[row])), ds.questions().decode(c.col),
                         std::to_string(ds.years().decode(m.row_year[row]))});
  }
}

}  // namespace aisurvey
