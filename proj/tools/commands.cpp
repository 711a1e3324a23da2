#include "commands.hpp"

#include "aisurvey/csv.hpp"
#include "aisurvey/dcn.hpp"
#include "aisurvey/embed_io.hpp"
#include "aisurvey/error.hpp"
#include "aisurvey/hashing.hpp"
#include "aisurvey/metrics.hpp"
#include "aisurvey/mf.hpp"
#include "aisurvey/missing_sim.hpp"
#include "aisurvey/regression.hpp"
#include "aisurvey/rng.hpp"
#include "aisurvey/smoothing.hpp"
#include "aisurvey/synthetic.hpp"
#include "aisurvey/tensor_io.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <fcntl.h>
#include <unistd.h>

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <set>

namespace aisurvey::cli {

namespace fs = std::filesystem;
using nlohmann::json;

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Usage:
      return kUsage;
    case ErrorKind::Io:
    case ErrorKind::Dependency:
      return kDependency;
    case ErrorKind::Config:
      return kConfig;
    case ErrorKind::NonFinite:
    case ErrorKind::Numerical:
    case ErrorKind::Singular:
    case ErrorKind::DegenerateImportance:
    case ErrorKind::UndefinedMetric:
    case ErrorKind::InsufficientData:
    case ErrorKind::Infeasible:
    case ErrorKind::EmptySplit:
    case ErrorKind::Structural:
      return kNumerical;
    default:
      return kData;
  }
}

namespace {

struct RunConfig {
  std::string subcommand;
  std::string data;
  std::string embeddings;
  std::string binarize_map;
  std::string demographics;
  std::string predictions;
  std::string checkpoint;
  std::string calibration;
  std::string out;
  std::vector<std::string> runs;
  std::vector<std::string> include_variables;
  std::vector<std::string> exclude_variables;
  std::vector<std::string> variables;
  std::string task = "imputation";
  std::uint64_t seed = 42;
  int folds = 10;
  int rounds = -1;
  unsigned threads = 0;
  bool no_stratify = false;
  double validation_fraction = 0.1;
  double train_fraction = 1.0;
  std::vector<double> missing_fractions;
  DcnConfig dcn;
  MfConfig mf;
  double margin = 0.03;
  double span = 0.75;
  std::string mechanism = "mcar";
  std::string scope = "per-variable";
  double rate = 0.1;
  std::string ideology_column;
  bool no_weights = false;
  SyntheticConfig synth;
};

json config_json(const RunConfig& c) {
  json j = {{"subcommand", c.subcommand},
            {"data", c.data},
            {"embeddings", c.embeddings},
            {"binarize_map", c.binarize_map},
            {"demographics", c.demographics},
            {"predictions", c.predictions},
            {"checkpoint", c.checkpoint},
            {"calibration", c.calibration},
            {"out", c.out},
            {"runs", c.runs},
            {"include_variables", c.include_variables},
            {"exclude_variables", c.exclude_variables},
            {"variables", c.variables},
            {"task", c.task},
            {"seed", c.seed},
            {"folds", c.folds},
            {"rounds", c.rounds},
            {"stratify_by_year", !c.no_stratify},
            {"validation_fraction", c.validation_fraction},
            {"train_fraction", c.train_fraction},
            {"missing_fractions", c.missing_fractions},
            {"dcn", to_json(c.dcn)},
            {"mf", {{"rank", c.mf.rank}, {"lambda", c.mf.lambda}, {"iterations", c.mf.iterations}}},
            {"margin", c.margin},
            {"span", c.span},
            {"mechanism", c.mechanism},
            {"scope", c.scope},
            {"rate", c.rate},
            {"ideology_column", c.ideology_column},
            {"use_weights", !c.no_weights}};
  if (c.subcommand == "synth") {
    j["synthetic"] = {{"individuals", c.synth.individuals}, {"questions", c.synth.questions},
                      {"years", c.synth.years},             {"latent_dim", c.synth.latent_dim},
                      {"observed_fraction", c.synth.observed_fraction}, {"noise", c.synth.noise},
                      {"alpha", c.synth.alpha},             {"beta", c.synth.beta},
                      {"embedding_dim", c.synth.embedding_dim}, {"first_year", c.synth.first_year}};
  }
  return j;
}

struct LockedError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Exclusive ownership of an output directory for the life of a run.
class OutputLock {
 public:
  explicit OutputLock(const fs::path& dir) : path_(dir / ".aisurvey.lock") {
    fs::create_directories(dir);
    fd_ = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
    if (fd_ < 0) throw LockedError("output directory " + dir.string() + " is locked by another run");
  }
  ~OutputLock() {
    ::close(fd_);
    std::error_code ec;
    fs::remove(path_, ec);
  }
  OutputLock(const OutputLock&) = delete;
  OutputLock& operator=(const OutputLock&) = delete;

 private:
  fs::path path_;
  int fd_ = -1;
};

std::string file_sha256(const fs::path& path) {
  const auto text = read_text_file(path);
  return sha256_hex(std::span(reinterpret_cast<const unsigned char*>(text.data()), text.size()));
}

class Manifest {
 public:
  Manifest(const RunConfig& cfg, fs::path dir) : dir_(std::move(dir)) {
    doc_["subcommand"] = cfg.subcommand;
    doc_["config"] = config_json(cfg);
    doc_["seed"] = cfg.seed;
    doc_["sub_seeds"] = json::object();
    doc_["inputs"] = json::array();
    doc_["artifacts"] = json::array();
  }

  void sub_seed(const std::string& name, std::uint64_t value) { doc_["sub_seeds"][name] = value; }

  void input(const std::string& role, const fs::path& path) {
    if (path.empty()) return;
    doc_["inputs"].push_back({{"role", role}, {"path", path.string()}, {"git_blob", git_blob_hash(path)}});
    const auto payload = payload_path_for(path);
    if (path.extension() == ".json" && fs::exists(payload)) {
      doc_["inputs"].push_back({{"role", role + "-payload"}, {"path", payload.string()}, {"git_blob", git_blob_hash(payload)}});
    }
  }

  fs::path artifact(const std::string& name) {
    const auto path = dir_ / name;
    artifacts_.push_back(path);
    return path;
  }

  // Registers a tensor bundle manifest and its payload.
  fs::path bundle(const std::string& name) {
    const auto path = artifact(name);
    artifacts_.push_back(payload_path_for(path));
    return path;
  }

  void note(const std::string& key, json value) { doc_[key] = std::move(value); }

  void finish(double wall_seconds) {
    for (const auto& a : artifacts_) {
      doc_["artifacts"].push_back({{"path", fs::relative(a, dir_).string()}, {"sha256", file_sha256(a)}});
    }
    doc_["wall_seconds"] = wall_seconds;
    write_text_file(dir_ / "manifest.json", doc_.dump(2) + "\n");
  }

 private:
  fs::path dir_;
  json doc_;
  std::vector<fs::path> artifacts_;
};

void require(const std::string& value, const std::string& flag, const std::string& sub) {
  if (value.empty()) throw Error(ErrorKind::Usage, sub + " needs " + flag);
}

void require_file(const std::string& path, const std::string& what) {
  if (!fs::exists(path)) throw Error(ErrorKind::Dependency, what + " not found: " + path);
}

SurveyDataset load_dataset(const RunConfig& c, std::ostream& err) {
  require(c.data, "--data", c.subcommand);
  require_file(c.data, "data file");
  IngestOptions opts;
  opts.use_weight_column = !c.no_weights;
  opts.include_variables = c.include_variables;
  opts.exclude_variables = c.exclude_variables;
  SurveyDataset ds;
  if (!c.binarize_map.empty()) {
    const auto map = c.binarize_map == "builtin" ? BinarizationMap::top_response_options()
                                                 : (require_file(c.binarize_map, "binarization map"),
                                                    BinarizationMap::load(c.binarize_map));
    auto records = filter_records(binarize_raw_responses(c.data, map), opts);
    if (c.no_weights) {
      for (auto& r : records) r.weight = 1.0;
    }
    ds = SurveyDataset::from_records(std::move(records));
    for (const auto& w : ds.warnings()) err << "warning: " << w << "\n";
  } else {
    ds = ingest_responses(c.data, opts);
  }
  if (ds.empty()) throw Error(ErrorKind::Filter, "no responses left after filtering");
  return ds;
}

Eigen::MatrixXd load_frozen(const RunConfig& c, const SurveyDataset& ds) {
  require(c.embeddings, "--embeddings", c.subcommand);
  require_file(c.embeddings, "embeddings");
  return load_embeddings(c.embeddings, ds).to_matrix();
}

CvOptions cv_options(const RunConfig& c) {
  CvOptions o;
  o.folds = c.folds;
  o.seed = c.seed;
  o.stratify_by_year = !c.no_stratify;
  o.validation_fraction = c.validation_fraction;
  o.train_fraction = c.train_fraction;
  o.rounds = c.rounds;
  o.threads = c.threads;
  return o;
}

void record_cv_seeds(Manifest& m, const CvOptions& o) {
  m.sub_seed("fold-plan", derive_seed(o.seed, "fold-plan"));
  const int rounds = o.rounds < 0 ? o.folds : std::min(o.rounds, o.folds);
  for (int r = 0; r < rounds; ++r) {
    const auto rs = derive_seed(o.seed, "round", static_cast<std::uint64_t>(r));
    m.sub_seed("round-" + std::to_string(r), rs);
    m.sub_seed("round-" + std::to_string(r) + "-train", derive_seed(rs, "train"));
    m.sub_seed("round-" + std::to_string(r) + "-validation", derive_seed(rs, "validation"));
  }
}

json history_json(const TrainHistory& h) {
  json epochs = json::array();
  for (const auto& e : h.epochs) {
    epochs.push_back({{"epoch", e.epoch},
                      {"train_loss", e.train_loss},
                      {"validation_auc", std::isnan(e.validation_auc) ? json(nullptr) : json(e.validation_auc)},
                      {"validation_loss", e.validation_loss}});
  }
  return {{"initial_loss", h.initial_loss},
          {"epochs", epochs},
          {"best_epoch", h.best_epoch},
          {"early_stopped", h.early_stopped},
          {"optimizer_steps", h.optimizer_steps}};
}

json summary_json(const PredictionSummary& s, double margin) {
  return {{"records", s.records},
          {"auc", s.auc},
          {"accuracy", s.classification.accuracy},
          {"precision", s.classification.precision},
          {"recall", s.classification.recall},
          {"f1", s.classification.f1},
          {"cells", s.cells},
          {"correlation", s.correlation},
          {"correct_rate", s.correct_rate},
          {"margin", margin},
          {"calibration", {{"slope", s.calibration.slope}, {"intercept", s.calibration.intercept},
                           {"r_squared", s.calibration.r_squared}}}};
}

json index_json(const SurveyDataset& ds) {
  return {{"individuals", std::vector<std::int64_t>(ds.individuals().keys().begin(), ds.individuals().keys().end())},
          {"variables", std::vector<std::string>(ds.questions().keys().begin(), ds.questions().keys().end())},
          {"years", std::vector<int>(ds.years().keys().begin(), ds.years().keys().end())}};
}

// Index of a checkpoint must describe the dataset it is applied to.
void check_index(const json& index, const SurveyDataset& ds) {
  if (index != index_json(ds)) {
    throw Error(ErrorKind::Alignment, "checkpoint was trained on a different set of respondents, variables or years");
  }
}

std::vector<std::size_t> all_records(const SurveyDataset& ds) {
  std::vector<std::size_t> r(ds.size());
  std::iota(r.begin(), r.end(), std::size_t{0});
  return r;
}

TrainResult train_on(const SurveyDataset& ds, const Eigen::MatrixXd& frozen, std::span<const std::size_t> records,
                     const RunConfig& c, Manifest& m) {
  const auto vseed = derive_seed(c.seed, "validation");
  const auto tseed = derive_seed(c.seed, "train");
  m.sub_seed("validation", vseed);
  m.sub_seed("train", tseed);
  const auto split = split_validation(ds, UnitKind::Response, records, c.validation_fraction, vseed);
  return train_dcn(ds, frozen, split.train, split.validation, c.dcn, tseed);
}

void write_regression(const RegressionResult& r, const std::vector<std::string>& terms, const fs::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
  csv::write_row(out, {"term", "coefficient", "std_error", "t", "p", "significant"});
  for (int j = 0; j < r.k; ++j) {
    csv::write_row(out, {terms[static_cast<std::size_t>(j)], csv::format_double(r.coefficients(j)),
                         csv::format_double(r.std_errors(j)), csv::format_double(r.t_values(j)),
                         csv::format_double(r.p_values(j)), r.significant[static_cast<std::size_t>(j)] ? "1" : "0"});
  }
}

// ---- subcommands ---------------------------------------------------------

void cmd_synth(const RunConfig& c, Manifest& m, std::ostream& out) {
  auto cfg = c.synth;
  cfg.seed = c.seed;
  const auto s = generate_synthetic_survey(cfg);
  write_responses(s.dataset, m.artifact("responses.csv"));
  export_vectors(s.embeddings, m.bundle("embeddings.json"));
  {
    std::ofstream f(m.artifact("truth.csv"), std::ios::binary | std::ios::trunc);
    csv::write_row(f, {"year", "yearid", "variable", "true_logit"});
    const auto records = s.dataset.records();
    for (std::size_t r = 0; r < records.size(); ++r) {
      csv::write_row(f, {std::to_string(records[r].year), std::to_string(records[r].respondent_key),
                         records[r].variable, csv::format_double(s.true_logits[r])});
    }
  }
  std::vector<int> labels;
  std::vector<double> truth;
  for (std::size_t r = 0; r < s.dataset.size(); ++r) {
    labels.push_back(s.dataset.observations()[r].label);
    truth.push_back(s.true_logits[r]);
  }
  const double bayes = auc(labels, truth);
  m.note("bayes_auc", bayes);
  out << "synthetic survey: " << s.dataset.size() << " responses, Bayes AUC " << bayes << "\n";
}

void cmd_ingest(const RunConfig& c, Manifest& m, std::ostream& out, std::ostream& err) {
  const auto ds = load_dataset(c, err);
  m.input("data", c.data);
  if (!c.binarize_map.empty() && c.binarize_map != "builtin") m.input("binarize-map", c.binarize_map);
  write_responses(ds, m.artifact("responses.csv"));
  const auto stats = dataset_stats(ds);
  write_text_file(m.artifact("stats.json"), stats_to_json(ds, stats).dump(2) + "\n");
  write_stats_csv(ds, stats, m.artifact("cell_stats.csv"));
  out << ds.size() << " responses, " << ds.n_individuals() << " respondents, " << ds.n_questions() << " variables, "
      << ds.n_years() << " years\n";
}

void cmd_embed_validate(const RunConfig& c, Manifest& m, std::ostream& out, std::ostream& err) {
  require(c.embeddings, "--embeddings", c.subcommand);
  require_file(c.embeddings, "embeddings");
  m.input("embeddings", c.embeddings);
  auto raw = read_embeddings(c.embeddings);
  json report = {{"dim", raw.dim}, {"count", raw.count()}, {"model_tag", raw.model_tag},
                 {"extraction_mode", std::string(to_string(raw.extraction_mode))}};
  if (!c.data.empty()) {
    const auto ds = load_dataset(c, err);
    m.input("data", c.data);
    std::vector<std::string> dropped;
    const auto aligned = align_embeddings(raw, ds, &dropped);
    report["aligned"] = aligned.count();
    report["dropped"] = dropped;
    export_vectors(aligned, m.bundle("embeddings_aligned.json"));
  }
  write_text_file(m.artifact("embedding_report.json"), report.dump(2) + "\n");
  out << "embeddings valid: " << raw.count() << " x " << raw.dim << "\n";
}

void cmd_train(const RunConfig& c, Manifest& m, std::ostream& out, std::ostream& err) {
  const auto ds = load_dataset(c, err);
  const auto frozen = load_frozen(c, ds);
  m.input("data", c.data);
  m.input("embeddings", c.embeddings);
  const auto result = train_on(ds, frozen, all_records(ds), c, m);
  save_checkpoint(result.params, c.dcn, index_json(ds), m.bundle("checkpoint.json"));
  write_text_file(m.artifact("history.json"), history_json(result.history).dump(2) + "\n");
  out << "trained " << result.history.optimizer_steps << " steps, best epoch " << result.history.best_epoch << "\n";
}

void cmd_cv(const RunConfig& c, Manifest& m, std::ostream& out, std::ostream& err) {
  const auto ds = load_dataset(c, err);
  const auto frozen = load_frozen(c, ds);
  m.input("data", c.data);
  m.input("embeddings", c.embeddings);
  const auto task = parse_task(c.task);
  const auto opts = cv_options(c);
  record_cv_seeds(m, opts);
  const auto cv = run_cross_validation(ds, frozen, task, c.dcn, opts);
  write_predictions(ds, cv.predictions, m.artifact("predictions.csv"));
  json histories = json::array();
  for (const auto& h : cv.histories) histories.push_back(history_json(h));
  write_text_file(m.artifact("history.json"), histories.dump(2) + "\n");
  const auto s = summarize_predictions(ds, cv.predictions, c.margin);
  auto metrics = summary_json(s, c.margin);
  metrics["model"] = "dcn";
  metrics["task"] = c.task;
  if (!c.missing_fractions.empty()) {
    const auto rows = missingness_sweep(ds, frozen, task, c.missing_fractions, c.dcn, opts);
    std::ofstream f(m.artifact("sweep.csv"), std::ios::binary | std::ios::trunc);
    csv::write_row(f, {"missing_fraction", "auc", "train_records"});
    for (const auto& r : rows) {
      csv::write_row(f, {csv::format_double(r.missing_fraction), csv::format_double(r.auc),
                         std::to_string(r.train_records)});
    }
  }
  write_text_file(m.artifact("metrics.json"), metrics.dump(2) + "\n");
  m.note("task", c.task);
  m.note("model", "dcn");
  out << c.task << " AUC " << s.auc << " over " << s.records << " responses\n";
}

void cmd_mf(const RunConfig& c, Manifest& m, std::ostream& out, std::ostream& err) {
  const auto ds = load_dataset(c, err);
  m.input("data", c.data);
  const auto task = parse_task(c.task);
  auto opts = cv_options(c);
  opts.validation_fraction = 0.0;
  record_cv_seeds(m, opts);
  auto cfg = c.mf;
  cfg.seed = c.seed;
  const auto cv = run_mf_cross_validation(ds, task, cfg, opts);
  write_predictions(ds, cv.predictions, m.artifact("predictions.csv"));
  const auto s = summarize_predictions(ds, cv.predictions, c.margin);
  auto metrics = summary_json(s, c.margin);
  metrics["model"] = "als";
  metrics["task"] = c.task;
  write_text_file(m.artifact("metrics.json"), metrics.dump(2) + "\n");

  const auto rows = wave_rows(ds);
  const auto entries = mf_entries(ds, rows, all_records(ds));
  auto full = cfg;
  full.seed = derive_seed(c.seed, "als-full");
  m.sub_seed("als-full", full.seed);
  save_factors(als_fit(entries, rows.n_rows, ds.n_questions(), full), m.bundle("factors.json"));
  m.note("task", c.task);
  m.note("model", "als");
  out << c.task << " AUC " << s.auc << " over " << s.records << " responses\n";
}

void cmd_simulate(const RunConfig& c, Manifest& m, std::ostream& out, std::ostream& err) {
  const auto ds = load_dataset(c, err);
  m.input("data", c.data);
  const auto matrix = response_matrix(ds);
  const auto mechanism = parse_mechanism(c.mechanism);
  RemovalScope scope;
  if (c.scope == "per-variable") {
    scope = RemovalScope::PerVariable;
  } else if (c.scope == "global") {
    scope = RemovalScope::Global;
  } else {
    throw Error(ErrorKind::Usage, "--scope must be per-variable or global");
  }
  const auto mseed = derive_seed(c.seed, "mask");
  m.sub_seed("mask", mseed);
  MissingMask mask;
  switch (mechanism) {
    case Mechanism::MCAR:
      mask = simulate_mcar(matrix.values, c.rate, mseed);
      break;
    case Mechanism::MAR:
      mask = simulate_mar(matrix.values, c.rate, mseed, scope);
      break;
    case Mechanism::MNAR: {
      if (c.demographics.empty()) throw Error(ErrorKind::Usage, "mnar needs --demographics");
      require_file(c.demographics, "demographics");
      m.input("demographics", c.demographics);
      std::vector<std::int64_t> keys;
      for (int ind : matrix.row_individual) keys.push_back(ds.individuals().decode(ind));
      mask = simulate_mnar(matrix.values, Demographics::load(c.demographics, keys), c.rate, mseed, scope);
      break;
    }
  }
  write_mask(ds, matrix, mask, m.artifact("mask.csv"));
  const auto masked = masked_records(ds, matrix, mask);
  std::vector<char> hidden(ds.size(), 0);
  for (auto r : masked) hidden[r] = 1;
  std::vector<std::size_t> retained;
  std::vector<ResponseRecord> kept;
  for (std::size_t r = 0; r < ds.size(); ++r) {
    if (!hidden[r]) {
      retained.push_back(r);
      kept.push_back(ds.records()[r]);
    }
  }
  write_responses(SurveyDataset::from_records(kept), m.artifact("retained.csv"));
  int converged = 0;
  for (const auto& model : mask.models) converged += model.converged ? 1 : 0;
  json summary = {{"mechanism", c.mechanism},
                  {"scope", c.scope},
                  {"rate", c.rate},
                  {"observed", ds.size()},
                  {"masked", masked.size()},
                  {"masked_fraction", static_cast<double>(masked.size()) / static_cast<double>(ds.size())},
                  {"models", mask.models.size()},
                  {"models_converged", converged}};
  if (!c.embeddings.empty()) {
    const auto frozen = load_frozen(c, ds);
    m.input("embeddings", c.embeddings);
    const auto trained = train_on(ds, frozen, retained, c, m);
    const auto probs = predict(trained.params, frozen, examples_for(ds, masked));
    std::vector<Prediction> preds;
    for (std::size_t i = 0; i < masked.size(); ++i) preds.push_back({0, masked[i], probs[i]});
    write_predictions(ds, preds, m.artifact("predictions.csv"));
    const auto labels = labels_for(ds, masked);
    summary["auc"] = auc(labels, probs);
    const auto cls = accuracy_f1(labels, probs);
    summary["accuracy"] = cls.accuracy;
    summary["f1"] = cls.f1;
  }
  write_text_file(m.artifact("simulation.json"), summary.dump(2) + "\n");
  out << c.mechanism << ": masked " << masked.size() << " of " << ds.size() << " responses\n";
}

CalibrationLine read_calibration(const std::string& path) {
  require_file(path, "calibration");
  const auto j = json::parse(read_text_file(path));
  const auto& line = j.contains("calibration") ? j.at("calibration") : j;
  CalibrationLine c;
  c.slope = line.at("slope").get<double>();
  c.intercept = line.at("intercept").get<double>();
  c.r_squared = line.value("r_squared", 0.0);
  return c;
}

void cmd_aggregate(const RunConfig& c, Manifest& m, std::ostream& out, std::ostream& err) {
  const auto ds = load_dataset(c, err);
  require(c.predictions, "--predictions", c.subcommand);
  m.input("data", c.data);
  m.input("predictions", c.predictions);
  const auto preds = read_predictions(ds, c.predictions);
  auto cells = weighted_aggregate(scored_from_predictions(ds, preds), individual_weights(ds));
  CalibrationLine line;
  if (!c.calibration.empty()) {
    m.input("calibration", c.calibration);
    line = read_calibration(c.calibration);
  } else {
    line = fit_rescaling(cells);
  }
  apply_rescaling(line, cells);
  write_cells(ds, cells, m.artifact("cells.csv"));
  const auto s = summarize_cells(cells, c.margin);
  json j = {{"calibration", {{"slope", line.slope}, {"intercept", line.intercept}, {"r_squared", line.r_squared},
                             {"cells", line.cells}}},
            {"cells", s.cells},
            {"correlation", s.correlation},
            {"correct_rate", s.correct_rate},
            {"margin", c.margin}};
  write_text_file(m.artifact("calibration.json"), j.dump(2) + "\n");
  out << s.cells << " observed cells, correlation " << s.correlation << ", within margin " << s.correct_rate << "\n";
}

void cmd_retrodict(const RunConfig& c, Manifest& m, std::ostream& out, std::ostream& err) {
  const auto ds = load_dataset(c, err);
  const auto frozen = load_frozen(c, ds);
  m.input("data", c.data);
  m.input("embeddings", c.embeddings);

  DcnParameters params;
  if (!c.checkpoint.empty()) {
    require_file(c.checkpoint, "checkpoint");
    m.input("checkpoint", c.checkpoint);
    auto ck = load_checkpoint(c.checkpoint);
    check_index(ck.index, ds);
    params = std::move(ck.params);
  } else {
    params = train_on(ds, frozen, all_records(ds), c, m).params;
    save_checkpoint(params, c.dcn, index_json(ds), m.bundle("checkpoint.json"));
  }

  std::vector<int> questions;
  if (c.variables.empty()) {
    for (int q = 0; q < ds.n_questions(); ++q) questions.push_back(q);
  } else {
    for (const auto& v : c.variables) {
      const auto q = ds.questions().find(v);
      if (!q) throw Error(ErrorKind::UnknownLabel, "variable '" + v + "' is not in the data");
      questions.push_back(*q);
    }
  }

  std::vector<std::vector<int>> respondents(static_cast<std::size_t>(ds.n_years()));
  std::set<std::tuple<int, int, int>> seen;
  std::map<std::tuple<int, int, int>, int> labels;
  for (const auto& o : ds.observations()) {
    if (seen.insert({o.year, o.individual, -1}).second) respondents[static_cast<std::size_t>(o.year)].push_back(o.individual);
    labels[{o.individual, o.question, o.year}] = o.label;
  }
  std::vector<Example> examples;
  for (int q : questions) {
    for (int y = 0; y < ds.n_years(); ++y) {
      for (int i : respondents[static_cast<std::size_t>(y)]) examples.push_back({i, q, y});
    }
  }
  const auto probs = predict(params, frozen, examples);
  std::vector<ScoredResponse> scored;
  scored.reserve(examples.size());
  for (std::size_t k = 0; k < examples.size(); ++k) {
    const auto& e = examples[k];
    const auto it = labels.find({e.individual, e.question, e.year});
    scored.push_back({e.individual, e.question, e.year, probs[k], it == labels.end() ? -1 : it->second});
  }
  auto cells = weighted_aggregate(scored, individual_weights(ds));
  CalibrationLine line;
  if (!c.calibration.empty()) {
    m.input("calibration", c.calibration);
    line = read_calibration(c.calibration);
  } else {
    line = fit_rescaling(cells);
  }
  apply_rescaling(line, cells);
  write_cells(ds, cells, m.artifact("cells.csv"));
  write_text_file(m.artifact("calibration.json"),
                  json({{"slope", line.slope}, {"intercept", line.intercept}, {"r_squared", line.r_squared},
                        {"cells", line.cells}, {"fit_on", c.calibration.empty() ? "in-sample" : c.calibration}})
                          .dump(2) + "\n");

  std::ofstream f(m.artifact("trend.csv"), std::ios::binary | std::ios::trunc);
  csv::write_row(f, {"variable", "year", "smoothed", "lower", "upper", "observed"});
  const int first = ds.years().decode(0), last = ds.years().decode(ds.n_years() - 1);
  std::size_t rows = 0;
  for (int q : questions) {
    std::vector<SeriesPoint> series;
    std::map<int, double> observed;
    for (const auto& cell : cells) {
      if (cell.question != q) continue;
      const int year = ds.years().decode(cell.year);
      series.push_back({static_cast<double>(year), cell.rescaled, static_cast<double>(cell.respondents)});
      if (cell.has_observed) observed[year] = cell.observed;
    }
    const auto trend = smooth_trend(series, first, last, c.span);
    for (const auto& t : trend) {
      const auto it = observed.find(t.year);
      csv::write_row(f, {ds.questions().decode(q), std::to_string(t.year), csv::format_double(t.smoothed),
                         csv::format_double(t.lower), csv::format_double(t.upper),
                         it == observed.end() ? std::string() : csv::format_double(it->second)});
      ++rows;
    }
  }
  f.close();
  out << "trend rows: " << rows << " for " << questions.size() << " variables\n";
}

void cmd_importance(const RunConfig& c, Manifest& m, std::ostream& out) {
  require(c.checkpoint, "--checkpoint", c.subcommand);
  require_file(c.checkpoint, "checkpoint");
  m.input("checkpoint", c.checkpoint);
  const auto ck = load_checkpoint(c.checkpoint);
  const auto scores = feature_importance(ck.params).as_array();
  const auto raw = raw_importance(ck.params.cross_w.at(0), ck.params.embed_dim()).as_array();
  std::ofstream f(m.artifact("importance.csv"), std::ios::binary | std::ios::trunc);
  csv::write_row(f, {"component", "score", "block_norm"});
  for (std::size_t k = 0; k < scores.size(); ++k) {
    csv::write_row(f, {FeatureImportance::kNames[k], csv::format_double(scores[k]), csv::format_double(raw[k])});
    out << FeatureImportance::kNames[k] << " " << scores[k] << "\n";
  }
}

void cmd_report(const RunConfig& c, Manifest& m, std::ostream& out, std::ostream& err) {
  if (c.runs.empty()) throw Error(ErrorKind::Usage, "report needs --runs");
  const auto ds = load_dataset(c, err);
  m.input("data", c.data);
  std::ofstream f(m.artifact("report.csv"), std::ios::binary | std::ios::trunc);
  csv::write_row(f, {"run", "model", "task", "records", "auc", "accuracy", "f1", "correlation", "correct_rate", "margin"});
  for (const auto& run : c.runs) {
    const fs::path dir(run);
    const auto manifest_path = dir / "manifest.json";
    require_file(manifest_path.string(), "run manifest");
    const auto manifest = json::parse(read_text_file(manifest_path));
    const auto preds_path = dir / "predictions.csv";
    require_file(preds_path.string(), "prediction file");
    m.input("predictions", preds_path);
    const auto preds = read_predictions(ds, preds_path);
    const auto s = summarize_predictions(ds, preds, c.margin);
    std::string model = manifest.value("subcommand", "");
    std::string task = manifest.contains("config") ? manifest["config"].value("task", "") : "";
    if (fs::exists(dir / "metrics.json")) {
      const auto metrics = json::parse(read_text_file(dir / "metrics.json"));
      model = metrics.value("model", model);
      task = metrics.value("task", task);
    }
    csv::write_row(f, {run, model, task, std::to_string(s.records), csv::format_double(s.auc),
                       csv::format_double(s.classification.accuracy), csv::format_double(s.classification.f1),
                       csv::format_double(s.correlation), csv::format_double(s.correct_rate),
                       csv::format_double(c.margin)});
    out << run << ": " << model << " " << task << " AUC " << s.auc << " rho " << s.correlation << " correct "
        << s.correct_rate << "\n";
  }
}

void cmd_regress(const RunConfig& c, Manifest& m, std::ostream& out, std::ostream& err) {
  const auto ds = load_dataset(c, err);
  require(c.predictions, "--predictions", c.subcommand);
  m.input("data", c.data);
  m.input("predictions", c.predictions);
  const auto preds = read_predictions(ds, c.predictions);

  const auto ind = individual_auc(ds, preds);
  const auto opi = opinion_auc(ds, preds);
  {
    std::ofstream f(m.artifact("individual_auc.csv"), std::ios::binary | std::ios::trunc);
    csv::write_row(f, {"yearid", "auc", "n", "positives"});
    for (const auto& r : ind.rows) {
      csv::write_row(f, {std::to_string(ds.individuals().decode(r.group)), csv::format_double(r.auc),
                         std::to_string(r.n), std::to_string(r.positives)});
    }
  }
  {
    std::ofstream f(m.artifact("opinion_auc.csv"), std::ios::binary | std::ios::trunc);
    csv::write_row(f, {"variable", "year", "auc", "n", "positives"});
    for (const auto& r : opi.rows) {
      csv::write_row(f, {ds.questions().decode(r.group / ds.n_years()),
                         std::to_string(ds.years().decode(r.group % ds.n_years())), csv::format_double(r.auc),
                         std::to_string(r.n), std::to_string(r.positives)});
    }
  }
  json summary = {{"individuals_scored", ind.rows.size()}, {"individuals_excluded", ind.excluded},
                  {"opinions_scored", opi.rows.size()}, {"opinions_excluded", opi.excluded}};

  std::vector<double> ideology;
  if (!c.demographics.empty()) {
    require_file(c.demographics, "demographics");
    m.input("demographics", c.demographics);
    std::vector<std::int64_t> keys(ds.individuals().keys().begin(), ds.individuals().keys().end());
    const auto demo = Demographics::load(c.demographics, keys);
    Demographics categorical;
    std::size_t ideology_col = demo.columns.size();
    for (std::size_t k = 0; k < demo.columns.size(); ++k) {
      if (demo.columns[k] == c.ideology_column) {
        ideology_col = k;
      } else {
        categorical.columns.push_back(demo.columns[k]);
      }
    }
    for (const auto& row : demo.rows) {
      std::vector<std::string> values;
      for (std::size_t k = 0; k < row.size(); ++k) {
        if (k != ideology_col) values.push_back(row[k]);
      }
      categorical.rows.push_back(std::move(values));
      if (ideology_col < row.size()) {
        try {
          ideology.push_back(csv::parse_double(row[ideology_col]));
        } catch (const Error&) {
          ideology.push_back(std::nan(""));
        }
      }
    }
    const Eigen::MatrixXd onehot = categorical.one_hot();
    Eigen::MatrixXd x(static_cast<Eigen::Index>(ind.rows.size()), onehot.cols() + 1);
    Eigen::VectorXd y(static_cast<Eigen::Index>(ind.rows.size()));
    for (std::size_t r = 0; r < ind.rows.size(); ++r) {
      x(static_cast<Eigen::Index>(r), 0) = 1.0;
      x.row(static_cast<Eigen::Index>(r)).tail(onehot.cols()) = onehot.row(ind.rows[r].group);
      y(static_cast<Eigen::Index>(r)) = ind.rows[r].auc;
    }
    std::vector<std::string> terms = {"intercept"};
    for (Eigen::Index k = 0; k < onehot.cols(); ++k) terms.push_back("demographic_" + std::to_string(k));
    write_regression(ols_robust(y, x), terms, m.artifact("regression_individual.csv"));
  }

  const Eigen::MatrixXd frozen = c.embeddings.empty() ? Eigen::MatrixXd() : load_frozen(c, ds);
  if (!c.embeddings.empty()) m.input("embeddings", c.embeddings);
  const auto cov = opinion_covariates(ds, frozen, ideology);
  std::map<int, Eigen::Index> cov_row;
  for (std::size_t k = 0; k < cov.cells.size(); ++k) cov_row[cov.cells[k]] = static_cast<Eigen::Index>(k);
  std::vector<Eigen::Index> usable_cols;
  for (Eigen::Index j = 0; j < cov.values.cols(); ++j) {
    if (!cov.values.col(j).array().isNaN().all()) usable_cols.push_back(j);
  }
  std::vector<Eigen::Index> rows;
  std::vector<double> ys;
  for (const auto& r : opi.rows) {
    const auto row = cov_row.at(r.group);
    bool ok = true;
    for (auto j : usable_cols) ok = ok && !std::isnan(cov.values(row, j));
    if (ok) {
      rows.push_back(row);
      ys.push_back(r.auc);
    }
  }
  Eigen::MatrixXd raw(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(usable_cols.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t j = 0; j < usable_cols.size(); ++j) {
      raw(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j)) = cov.values(rows[r], usable_cols[j]);
    }
  }
  const Eigen::MatrixXd z = standardize_columns(raw);
  // Covariates enter in order; one that adds no rank is dropped.
  Eigen::MatrixXd x = Eigen::MatrixXd::Ones(z.rows(), 1);
  std::vector<std::string> terms = {"intercept"};
  json dropped = json::array();
  for (Eigen::Index j = 0; j < z.cols(); ++j) {
    const auto& name = cov.names[static_cast<std::size_t>(usable_cols[static_cast<std::size_t>(j)])];
    Eigen::MatrixXd trial(x.rows(), x.cols() + 1);
    trial << x, z.col(j);
    if (Eigen::ColPivHouseholderQR<Eigen::MatrixXd>(trial).rank() == trial.cols()) {
      x = std::move(trial);
      terms.push_back(name);
    } else {
      dropped.push_back(name);
    }
  }
  summary["covariates_dropped"] = dropped;
  const Eigen::VectorXd y = Eigen::Map<const Eigen::VectorXd>(ys.data(), static_cast<Eigen::Index>(ys.size()));
  write_regression(ols_robust(y, x), terms, m.artifact("regression_opinion.csv"));
  write_text_file(m.artifact("regression.json"), summary.dump(2) + "\n");
  out << ind.rows.size() << " individuals and " << opi.rows.size() << " opinions scored\n";
}

void add_dcn_flags(CLI::App* sc, RunConfig& c) {
  sc->add_option("--epochs", c.dcn.max_epochs, "Maximum training epochs")->capture_default_str();
  sc->add_option("--batch-size", c.dcn.batch_size, "Minibatch size")->capture_default_str();
  sc->add_option("--lr", c.dcn.learning_rate, "Initial Adam learning rate")->capture_default_str();
  sc->add_option("--embed-dim", c.dcn.embed_dim, "Width of each embedding block")->capture_default_str();
  sc->add_option("--cross-layers", c.dcn.num_cross_layers, "Number of cross layers")->capture_default_str();
  sc->add_option("--dense-layers", c.dcn.num_dense_layers, "Number of dense layers")->capture_default_str();
  sc->add_option("--dropout", c.dcn.dropout, "Dropout rate")->capture_default_str();
  sc->add_option("--patience", c.dcn.patience, "Early-stopping patience in epochs")->capture_default_str();
  sc->add_option("--decay-steps", c.dcn.decay_steps, "Steps per learning-rate decay")->capture_default_str();
  sc->add_option("--validation-fraction", c.validation_fraction, "Share of training units held for early stopping")
      ->capture_default_str();
}

void add_cv_flags(CLI::App* sc, RunConfig& c) {
  sc->add_option("--task", c.task, "imputation | retrodiction | unasked")
      ->check(CLI::IsMember({"imputation", "retrodiction", "unasked"}))
      ->capture_default_str();
  sc->add_option("--folds", c.folds, "Number of folds")->capture_default_str();
  sc->add_option("--rounds", c.rounds, "Rounds to run (-1 = all)")->capture_default_str();
  sc->add_option("--threads", c.threads, "Worker threads (0 = all cores)");
  sc->add_flag("--no-stratify", c.no_stratify, "Deal question-year cells without per-year stratification");
  sc->add_option("--train-fraction", c.train_fraction, "Share of training units kept")->capture_default_str();
}

void add_data_flags(CLI::App* sc, RunConfig& c) {
  sc->add_option("--data", c.data, "Response file");
  sc->add_option("--binarize-map", c.binarize_map, "Option-set map for raw responses ('builtin' for the bundled table)");
  sc->add_option("--include", c.include_variables, "Keep only these variables");
  sc->add_option("--exclude", c.exclude_variables, "Drop these variables");
  sc->add_flag("--no-weights", c.no_weights, "Ignore the weight column");
}

fs::path default_out(const std::string& sub) {
  const char* root = std::getenv("AISURVEY_OUT");
  return fs::path(root && *root ? root : "aisurvey-runs") / sub;
}

}  // namespace

PredictionSummary summarize_predictions(const SurveyDataset& ds, std::span<const Prediction> predictions,
                                        double margin) {
  PredictionSummary s;
  std::vector<int> labels;
  std::vector<double> scores;
  for (const auto& p : predictions) {
    labels.push_back(ds.observations()[p.record].label);
    scores.push_back(p.predicted);
  }
  s.records = predictions.size();
  s.auc = auc(labels, scores);
  s.classification = accuracy_f1(labels, scores);
  auto cells = weighted_aggregate(scored_from_predictions(ds, predictions), individual_weights(ds));
  s.calibration = fit_rescaling(cells);
  apply_rescaling(s.calibration, cells);
  const auto agg = summarize_cells(cells, margin);
  s.cells = agg.cells;
  s.correlation = agg.correlation;
  s.correct_rate = agg.correct_rate;
  return s;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  RunConfig c;
  CLI::App app{"AI-augmented survey pipeline"};
  app.require_subcommand(1, 1);
  app.fallthrough();
  app.set_config("--config", "", "TOML or INI file with option defaults");
  app.add_option("--seed", c.seed, "Run seed")->capture_default_str();
  app.add_option("--out", c.out, "Output directory (default $AISURVEY_OUT/<subcommand>)");
  app.add_option("--margin", c.margin, "Margin of error for cell scoring")->capture_default_str();
  app.add_option("--span", c.span, "Smoother span")->capture_default_str();

  auto* synth = app.add_subcommand("synth", "Generate a planted synthetic survey");
  synth->add_option("--individuals", c.synth.individuals)->capture_default_str();
  synth->add_option("--questions", c.synth.questions)->capture_default_str();
  synth->add_option("--years", c.synth.years)->capture_default_str();
  synth->add_option("--latent-dim", c.synth.latent_dim)->capture_default_str();
  synth->add_option("--observed-fraction", c.synth.observed_fraction)->capture_default_str();
  synth->add_option("--noise", c.synth.noise)->capture_default_str();
  synth->add_option("--alpha", c.synth.alpha)->capture_default_str();
  synth->add_option("--beta", c.synth.beta)->capture_default_str();
  synth->add_option("--embedding-dim", c.synth.embedding_dim)->capture_default_str();
  synth->add_option("--first-year", c.synth.first_year)->capture_default_str();

  auto* ingest = app.add_subcommand("ingest", "Validate, binarize and index responses");
  add_data_flags(ingest, c);

  auto* embed = app.add_subcommand("embed-validate", "Validate and align an embedding file");
  add_data_flags(embed, c);
  embed->add_option("--embeddings", c.embeddings, "Embedding manifest or delimited text");

  auto* train = app.add_subcommand("train", "Train one model on all responses");
  add_data_flags(train, c);
  train->add_option("--embeddings", c.embeddings);
  add_dcn_flags(train, c);

  auto* cv = app.add_subcommand("cv", "Cross-validate the network");
  add_data_flags(cv, c);
  cv->add_option("--embeddings", c.embeddings);
  add_dcn_flags(cv, c);
  add_cv_flags(cv, c);
  cv->add_option("--missing-fractions", c.missing_fractions, "Also sweep these extra missing fractions");

  auto* mf = app.add_subcommand("mf", "Cross-validate the factorization baseline");
  add_data_flags(mf, c);
  add_cv_flags(mf, c);
  mf->add_option("--rank", c.mf.rank)->capture_default_str();
  mf->add_option("--lambda", c.mf.lambda)->capture_default_str();
  mf->add_option("--iterations", c.mf.iterations)->capture_default_str();

  auto* simulate = app.add_subcommand("simulate", "Impose MCAR / MAR / MNAR missingness");
  add_data_flags(simulate, c);
  simulate->add_option("--mechanism", c.mechanism)->check(CLI::IsMember({"mcar", "mar", "mnar"}))->capture_default_str();
  simulate->add_option("--rate", c.rate)->capture_default_str();
  simulate->add_option("--scope", c.scope, "per-variable | global")->capture_default_str();
  simulate->add_option("--demographics", c.demographics);
  simulate->add_option("--embeddings", c.embeddings, "Also train on retained data and score the masked cells");
  add_dcn_flags(simulate, c);

  auto* aggregate = app.add_subcommand("aggregate", "Survey-weighted cell proportions and rescaling");
  add_data_flags(aggregate, c);
  aggregate->add_option("--predictions", c.predictions);
  aggregate->add_option("--calibration", c.calibration, "Reuse a fitted rescaling line");

  auto* retro = app.add_subcommand("retrodict", "Predict every year for chosen variables and smooth the trend");
  add_data_flags(retro, c);
  retro->add_option("--embeddings", c.embeddings);
  retro->add_option("--variables", c.variables);
  retro->add_option("--checkpoint", c.checkpoint);
  retro->add_option("--calibration", c.calibration);
  add_dcn_flags(retro, c);

  auto* importance = app.add_subcommand("importance", "Block-norm feature importance of a checkpoint");
  importance->add_option("--checkpoint", c.checkpoint);

  auto* report = app.add_subcommand("report", "Summarize finished cross-validation runs");
  add_data_flags(report, c);
  report->add_option("--runs", c.runs, "Run directories");

  auto* regress = app.add_subcommand("regress", "Group AUCs and robust heterogeneity regressions");
  add_data_flags(regress, c);
  regress->add_option("--predictions", c.predictions);
  regress->add_option("--demographics", c.demographics);
  regress->add_option("--ideology-column", c.ideology_column);
  regress->add_option("--embeddings", c.embeddings);

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << "\n";
    return kUsage;
  }

  CLI::App* chosen = app.get_subcommands().front();
  c.subcommand = chosen->get_name();
  c.dcn.seed = c.seed;
  c.mf.seed = c.seed;
  const fs::path out_dir = c.out.empty() ? default_out(c.subcommand) : fs::path(c.out);
  c.out = out_dir.string();

  const auto start = std::chrono::steady_clock::now();
  try {
    c.dcn.validate();
    OutputLock lock(out_dir);
    Manifest manifest(c, out_dir);
    const auto& s = c.subcommand;
    if (s == "synth") cmd_synth(c, manifest, out);
    else if (s == "ingest") cmd_ingest(c, manifest, out, err);
    else if (s == "embed-validate") cmd_embed_validate(c, manifest, out, err);
    else if (s == "train") cmd_train(c, manifest, out, err);
    else if (s == "cv") cmd_cv(c, manifest, out, err);
    else if (s == "mf") cmd_mf(c, manifest, out, err);
    else if (s == "simulate") cmd_simulate(c, manifest, out, err);
    else if (s == "aggregate") cmd_aggregate(c, manifest, out, err);
    else if (s == "retrodict") cmd_retrodict(c, manifest, out, err);
    else if (s == "importance") cmd_importance(c, manifest, out);
    else if (s == "report") cmd_report(c, manifest, out, err);
    else if (s == "regress") cmd_regress(c, manifest, out, err);
    const std::chrono::duration<double> wall = std::chrono::steady_clock::now() - start;
    manifest.finish(wall.count());
  } catch (const LockedError& e) {
    err << "error [Locked]: " << e.what() << "\n";
    return kLocked;
  } catch (const Error& e) {
    err << "error [" << to_string(e.kind()) << "]: " << e.what() << "\n";
    return exit_code_for(e.kind());
  } catch (const fs::filesystem_error& e) {
    err << "error [Io]: " << e.what() << "\n";
    return kDependency;
  } catch (const nlohmann::json::exception& e) {
    err << "error [Format]: " << e.what() << "\n";
    return kData;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kUnexpected;
  }
  return kOk;
}

}  // namespace aisurvey::cli
