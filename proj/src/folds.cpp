#include "aisurvey/folds.hpp"

#include "aisurvey/csv.hpp"
#include "aisurvey/error.hpp"
#include "aisurvey/metrics.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <numeric>
#include <thread>
#include <tuple>

namespace aisurvey {

std::string_view to_string(TaskKind task) {
  switch (task) {
    case TaskKind::Imputation: return "imputation";
    case TaskKind::Retrodiction: return "retrodiction";
    case TaskKind::Unasked: return "unasked";
  }
  return "?";
}

TaskKind parse_task(std::string_view text) {
  if (text == "imputation") return TaskKind::Imputation;
  if (text == "retrodiction") return TaskKind::Retrodiction;
  if (text == "unasked") return TaskKind::Unasked;
  throw Error(ErrorKind::Usage, "unknown task '" + std::string(text) + "'");
}

UnitKind unit_kind_for(TaskKind task) {
  switch (task) {
    case TaskKind::Imputation: return UnitKind::Response;
    case TaskKind::Retrodiction: return UnitKind::QuestionYear;
    case TaskKind::Unasked: return UnitKind::Question;
  }
  return UnitKind::Response;
}

std::size_t unit_of(UnitKind kind, const SurveyDataset& ds, std::size_t record) {
  const auto& o = ds.observations()[record];
  switch (kind) {
    case UnitKind::Response: return record;
    case UnitKind::QuestionYear:
      return static_cast<std::size_t>(o.question) * static_cast<std::size_t>(ds.n_years()) +
             static_cast<std::size_t>(o.year);
    case UnitKind::Question: return static_cast<std::size_t>(o.question);
  }
  return record;
}

std::size_t unit_space(UnitKind kind, const SurveyDataset& ds) {
  switch (kind) {
    case UnitKind::Response: return ds.size();
    case UnitKind::QuestionYear:
      return static_cast<std::size_t>(ds.n_questions()) * static_cast<std::size_t>(ds.n_years());
    case UnitKind::Question: return static_cast<std::size_t>(ds.n_questions());
  }
  return 0;
}

std::vector<std::size_t> FoldPlan::test_records(int round) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < record_fold.size(); ++i) {
    if (record_fold[i] == round) out.push_back(i);
  }
  return out;
}

std::vector<std::size_t> FoldPlan::train_records(int round) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < record_fold.size(); ++i) {
    if (record_fold[i] != round) out.push_back(i);
  }
  return out;
}

std::vector<std::size_t> FoldPlan::fold_sizes() const {
  std::vector<std::size_t> sizes(static_cast<std::size_t>(num_folds), 0);
  for (int f : unit_fold) {
    if (f >= 0) ++sizes[static_cast<std::size_t>(f)];
  }
  return sizes;
}

namespace {

std::vector<char> present_units(const SurveyDataset& ds, UnitKind unit) {
  std::vector<char> present(unit_space(unit, ds), 0);
  for (std::size_t r = 0; r < ds.size(); ++r) present[unit_of(unit, ds, r)] = 1;
  return present;
}

FoldPlan finish_plan(const SurveyDataset& ds, TaskKind task, UnitKind unit, int k, std::vector<int> unit_fold) {
  FoldPlan plan;
  plan.task = task;
  plan.unit = unit;
  plan.num_folds = k;
  plan.unit_fold = std::move(unit_fold);
  plan.record_fold.resize(ds.size());
  for (std::size_t r = 0; r < ds.size(); ++r) plan.record_fold[r] = plan.unit_fold[unit_of(unit, ds, r)];
  return plan;
}

void check_k(int k) {
  if (k < 2) throw Error(ErrorKind::Config, "need at least 2 folds");
}

std::vector<int> deal(std::span<const std::size_t> units, std::size_t space, int k, Rng& rng, std::size_t offset = 0) {
  std::vector<std::size_t> shuffled(units.begin(), units.end());
  rng.shuffle(std::span(shuffled));
  std::vector<int> fold(space, -1);
  for (std::size_t i = 0; i < shuffled.size(); ++i) fold[shuffled[i]] = static_cast<int>((offset + i) % static_cast<std::size_t>(k));
  return fold;
}

FoldPlan plain_plan(const SurveyDataset& ds, TaskKind task, int k, std::uint64_t seed) {
  check_k(k);
  const auto unit = unit_kind_for(task);
  const auto present = present_units(ds, unit);
  std::vector<std::size_t> units;
  for (std::size_t u = 0; u < present.size(); ++u) {
    if (present[u]) units.push_back(u);
  }
  Rng rng(seed);
  return finish_plan(ds, task, unit, k, deal(units, present.size(), k, rng));
}

}  // namespace

FoldPlan make_response_folds(const SurveyDataset& ds, int k, std::uint64_t seed) {
  return plain_plan(ds, TaskKind::Imputation, k, seed);
}

FoldPlan make_question_folds(const SurveyDataset& ds, int k, std::uint64_t seed) {
  if (ds.n_questions() < k) {
    std::cerr << "warning: " << ds.n_questions() << " questions spread over " << k << " folds leaves some folds empty\n";
  }
  return plain_plan(ds, TaskKind::Unasked, k, seed);
}

FoldPlan make_year_question_folds(const SurveyDataset& ds, int k, std::uint64_t seed, bool stratify_by_year) {
  if (!stratify_by_year) return plain_plan(ds, TaskKind::Retrodiction, k, seed);
  check_k(k);
  const auto present = present_units(ds, UnitKind::QuestionYear);
  const auto n_years = static_cast<std::size_t>(ds.n_years());
  std::vector<int> fold(present.size(), -1);
  Rng rng(seed);
  std::size_t dealt = 0;
  for (std::size_t y = 0; y < n_years; ++y) {
    std::vector<std::size_t> cells;
    for (std::size_t q = 0; q < static_cast<std::size_t>(ds.n_questions()); ++q) {
      if (present[q * n_years + y]) cells.push_back(q * n_years + y);
    }
    const auto year_fold = deal(cells, present.size(), k, rng, dealt);
    for (auto c : cells) fold[c] = year_fold[c];
    dealt += cells.size();
  }
  return finish_plan(ds, TaskKind::Retrodiction, UnitKind::QuestionYear, k, std::move(fold));
}

FoldPlan make_plan(TaskKind task, const SurveyDataset& ds, int k, std::uint64_t seed, bool stratify_by_year) {
  switch (task) {
    case TaskKind::Imputation: return make_response_folds(ds, k, seed);
    case TaskKind::Retrodiction: return make_year_question_folds(ds, k, seed, stratify_by_year);
    case TaskKind::Unasked: return make_question_folds(ds, k, seed);
  }
  return make_response_folds(ds, k, seed);
}

namespace {

// Distinct units behind `records`, in first-appearance order.
std::vector<std::size_t> units_of(const SurveyDataset& ds, UnitKind unit, std::span<const std::size_t> records) {
  std::vector<char> seen(unit_space(unit, ds), 0);
  std::vector<std::size_t> units;
  for (auto r : records) {
    const auto u = unit_of(unit, ds, r);
    if (!seen[u]) {
      seen[u] = 1;
      units.push_back(u);
    }
  }
  return units;
}

}  // namespace

std::vector<std::size_t> subsample_units(const SurveyDataset& ds, UnitKind unit, std::span<const std::size_t> records,
                                         double keep_fraction, std::uint64_t seed) {
  if (!(keep_fraction > 0.0 && keep_fraction <= 1.0)) {
    throw Error(ErrorKind::Config, "keep fraction must lie in (0, 1]");
  }
  if (keep_fraction == 1.0) return {records.begin(), records.end()};
  auto units = units_of(ds, unit, records);
  Rng rng(seed);
  rng.shuffle(std::span(units));
  const auto keep = static_cast<std::size_t>(std::llround(keep_fraction * static_cast<double>(units.size())));
  std::vector<char> kept(unit_space(unit, ds), 0);
  for (std::size_t i = 0; i < keep; ++i) kept[units[i]] = 1;
  std::vector<std::size_t> out;
  for (auto r : records) {
    if (kept[unit_of(unit, ds, r)]) out.push_back(r);
  }
  return out;
}

Split split_validation(const SurveyDataset& ds, UnitKind unit, std::span<const std::size_t> records, double fraction,
                       std::uint64_t seed) {
  Split split;
  if (fraction <= 0.0) {
    split.train.assign(records.begin(), records.end());
    return split;
  }
  auto units = units_of(ds, unit, records);
  Rng rng(seed);
  rng.shuffle(std::span(units));
  auto n_val = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(units.size())));
  if (n_val >= units.size()) n_val = units.size() > 1 ? units.size() - 1 : 0;
  std::vector<char> is_val(unit_space(unit, ds), 0);
  for (std::size_t i = 0; i < n_val; ++i) is_val[units[i]] = 1;
  for (auto r : records) (is_val[unit_of(unit, ds, r)] ? split.validation : split.train).push_back(r);
  return split;
}

RoundSplit round_split(const SurveyDataset& ds, const FoldPlan& plan, int round, const CvOptions& opts) {
  if (round < 0 || round >= plan.num_folds) throw Error(ErrorKind::Config, "round out of range");
  const auto round_seed = derive_seed(opts.seed, "round", static_cast<std::uint64_t>(round));
  RoundSplit s;
  s.test = plan.test_records(round);
  auto train = plan.train_records(round);
  if (opts.train_fraction < 1.0) {
    train = subsample_units(ds, plan.unit, train, opts.train_fraction, derive_seed(round_seed, "subsample"));
  }
  auto split = split_validation(ds, plan.unit, train, opts.validation_fraction, derive_seed(round_seed, "validation"));
  s.train = std::move(split.train);
  s.validation = std::move(split.validation);
  return s;
}

TrainResult train_model(const SurveyDataset& ds, const Eigen::MatrixXd& frozen, const FoldPlan& plan, int round,
                        const DcnConfig& cfg, const CvOptions& opts) {
  const auto split = round_split(ds, plan, round, opts);
  if (split.train.empty()) {
    throw Error(ErrorKind::EmptySplit, "round " + std::to_string(round) + " has no training records");
  }
  return train_dcn(ds, frozen, split.train, split.validation, cfg,
                   derive_seed(derive_seed(opts.seed, "round", static_cast<std::uint64_t>(round)), "train"));
}

namespace {

// Runs fn(round) for each round on up to `threads` workers; the first
// exception is rethrown after all workers join.
template <typename Fn>
void for_each_round(int rounds, unsigned threads, Fn&& fn) {
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = std::min<unsigned>(threads, static_cast<unsigned>(std::max(rounds, 1)));
  std::atomic<int> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (int r = next++; r < rounds; r = next++) {
      try {
        fn(r);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);
}

}  // namespace

CvResult run_cross_validation(const SurveyDataset& ds, const Eigen::MatrixXd& frozen, TaskKind task,
                              const DcnConfig& cfg, const CvOptions& opts) {
  if (ds.empty()) throw Error(ErrorKind::EmptySplit, "dataset is empty");
  CvResult result;
  result.plan = make_plan(task, ds, opts.folds, derive_seed(opts.seed, "fold-plan"), opts.stratify_by_year);
  const int rounds = opts.rounds < 0 ? opts.folds : std::min(opts.rounds, opts.folds);
  std::vector<std::vector<Prediction>> per_round(static_cast<std::size_t>(rounds));
  result.histories.resize(static_cast<std::size_t>(rounds));

  for_each_round(rounds, opts.threads, [&](int r) {
    const auto split = round_split(ds, result.plan, r, opts);
    if (split.test.empty()) return;
    if (split.train.empty()) {
      throw Error(ErrorKind::EmptySplit, "round " + std::to_string(r) + " has no training records");
    }
    auto trained = train_dcn(ds, frozen, split.train, split.validation, cfg,
                             derive_seed(derive_seed(opts.seed, "round", static_cast<std::uint64_t>(r)), "train"));
    const auto examples = examples_for(ds, split.test);
    const auto probs = predict(trained.params, frozen, examples);
    auto& out = per_round[static_cast<std::size_t>(r)];
    for (std::size_t i = 0; i < split.test.size(); ++i) out.push_back({r, split.test[i], probs[i]});
    result.histories[static_cast<std::size_t>(r)] = std::move(trained.history);
  });

  for (auto& v : per_round) result.predictions.insert(result.predictions.end(), v.begin(), v.end());
  std::sort(result.predictions.begin(), result.predictions.end(),
            [](const Prediction& a, const Prediction& b) { return a.record < b.record; });
  return result;
}

std::vector<std::size_t> leaked_units(const SurveyDataset& ds, const FoldPlan& plan, const RoundSplit& split) {
  std::vector<char> held_out(unit_space(plan.unit, ds), 0);
  for (auto r : split.test) held_out[unit_of(plan.unit, ds, r)] = 1;
  std::vector<std::size_t> leaks;
  for (const auto* side : {&split.train, &split.validation}) {
    for (auto r : *side) {
      const auto u = unit_of(plan.unit, ds, r);
      if (held_out[u]) leaks.push_back(u);
    }
  }
  std::sort(leaks.begin(), leaks.end());
  leaks.erase(std::unique(leaks.begin(), leaks.end()), leaks.end());
  return leaks;
}

std::vector<SweepRow> missingness_sweep(const SurveyDataset& ds, const Eigen::MatrixXd& frozen, TaskKind task,
                                        std::span<const double> fractions, const DcnConfig& cfg, const CvOptions& opts) {
  std::vector<SweepRow> rows;
  for (double f : fractions) {
    if (!(f >= 0.0 && f < 1.0)) throw Error(ErrorKind::Config, "missing fraction must lie in [0, 1)");
    CvOptions o = opts;
    o.train_fraction = opts.train_fraction * (1.0 - f);
    const auto plan = make_plan(task, ds, o.folds, derive_seed(o.seed, "fold-plan"), o.stratify_by_year);
    const int rounds = o.rounds < 0 ? o.folds : std::min(o.rounds, o.folds);
    for (int r = 0; r < rounds; ++r) {
      if (round_split(ds, plan, r, o).train.empty()) {
        throw Error(ErrorKind::EmptySplit, "missing fraction " + std::to_string(f) + " leaves round " +
                                               std::to_string(r) + " without training data");
      }
    }
    const auto cv = run_cross_validation(ds, frozen, task, cfg, o);
    std::vector<int> labels;
    std::vector<double> scores;
    for (const auto& p : cv.predictions) {
      labels.push_back(ds.observations()[p.record].label);
      scores.push_back(p.predicted);
    }
    std::size_t n_train = 0;
    for (int r = 0; r < rounds; ++r) n_train += round_split(ds, plan, r, o).train.size();
    rows.push_back({f, auc(labels, scores), n_train});
  }
  return rows;
}

void write_predictions(const SurveyDataset& ds, std::span<const Prediction> predictions,
                       const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
  csv::write_row(out, {"fold", "year", "yearid", "variable", "observed", "predicted"});
  const auto records = ds.records();
  for (const auto& p : predictions) {
    const auto& r = records[p.record];
    csv::write_row(out, {std::to_string(p.fold), std::to_string(r.year), std::to_string(r.respondent_key), r.variable,
                         std::to_string(r.binarized), csv::format_double(p.predicted)});
  }
  if (!out) throw Error(ErrorKind::Io, "write failed for " + path.string());
}

std::vector<Prediction> read_predictions(const SurveyDataset& ds, const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Dependency, "cannot open predictions " + path.string());
  std::map<std::tuple<int, std::int64_t, std::string>, std::size_t> lookup;
  const auto records = ds.records();
  for (std::size_t r = 0; r < records.size(); ++r) {
    lookup[{records[r].year, records[r].respondent_key, records[r].variable}] = r;
  }
  csv::Reader reader(in);
  const auto header = reader.next();
  const std::vector<std::string> expected = {"fold", "year", "yearid", "variable", "observed", "predicted"};
  if (!header || *header != expected) throw Error(ErrorKind::Format, path.string() + ": unexpected prediction header");
  std::vector<Prediction> out;
  while (auto row = reader.next()) {
    if (row->size() == 1 && (*row)[0].empty()) continue;
    const std::string where = path.string() + " line " + std::to_string(reader.line()) + ": ";
    if (row->size() != expected.size()) throw Error(ErrorKind::Parse, where + "wrong field count");
    const auto it = lookup.find({static_cast<int>(csv::parse_int((*row)[1])), csv::parse_int((*row)[2]), (*row)[3]});
    if (it == lookup.end()) throw Error(ErrorKind::Alignment, where + "no matching response in the dataset");
    if (csv::parse_int((*row)[4]) != records[it->second].binarized) {
      throw Error(ErrorKind::Alignment, where + "observed value disagrees with the dataset");
    }
    out.push_back({static_cast<int>(csv::parse_int((*row)[0])), it->second, csv::parse_double((*row)[5])});
  }
  std::sort(out.begin(), out.end(), [](const Prediction& a, const Prediction& b) { return a.record < b.record; });
  return out;
}

}  // namespace aisurvey
