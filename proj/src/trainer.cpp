#include "aisurvey/error.hpp"
#include "aisurvey/folds.hpp"
#include "aisurvey/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace aisurvey {

std::vector<Example> examples_for(const SurveyDataset& ds, std::span<const std::size_t> records) {
  std::vector<Example> out;
  out.reserve(records.size());
  const auto obs = ds.observations();
  for (auto r : records) out.push_back({obs[r].individual, obs[r].question, obs[r].year});
  return out;
}

std::vector<int> labels_for(const SurveyDataset& ds, std::span<const std::size_t> records) {
  std::vector<int> out;
  out.reserve(records.size());
  const auto obs = ds.observations();
  for (auto r : records) out.push_back(obs[r].label);
  return out;
}

namespace {

constexpr std::size_t kMonitorSample = 20000;

struct Evaluation {
  double loss = 0.0;
  double auc = std::numeric_limits<double>::quiet_NaN();
};

Evaluation evaluate(const DcnParameters& params, const Eigen::MatrixXd& frozen, std::span<const Example> examples,
                    std::span<const int> labels) {
  Evaluation e;
  if (examples.empty()) return e;
  const auto probs = predict(params, frozen, examples);
  e.loss = mean_bce(probs, labels);
  const auto positives = std::count(labels.begin(), labels.end(), 1);
  if (positives > 0 && static_cast<std::size_t>(positives) < labels.size()) e.auc = auc(labels, probs);
  return e;
}

// Higher is better; AUC when defined, otherwise negative loss.
double score_of(const Evaluation& e) { return std::isnan(e.auc) ? -e.loss : e.auc; }

}  // namespace

TrainResult train_dcn(const SurveyDataset& ds, const Eigen::MatrixXd& frozen, std::span<const std::size_t> train,
                      std::span<const std::size_t> validation, const DcnConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  if (train.empty()) throw Error(ErrorKind::EmptySplit, "training split is empty");
  if (frozen.rows() != ds.n_questions()) {
    throw Error(ErrorKind::Shape, "embedding rows (" + std::to_string(frozen.rows()) + ") != question count (" +
                                      std::to_string(ds.n_questions()) + ")");
  }

  TrainResult result;
  result.params = init_params(cfg, static_cast<int>(frozen.cols()), ds.n_individuals(), ds.n_years(),
                              derive_seed(seed, "init"));
  auto& params = result.params;
  auto& history = result.history;
  AdamState adam = AdamState::for_params(params);

  const auto train_examples = examples_for(ds, train);
  const auto train_labels = labels_for(ds, train);
  const auto val_examples = examples_for(ds, validation);
  const auto val_labels = labels_for(ds, validation);

  // Fixed monitor subsample of the training set for the loss curve.
  std::vector<std::size_t> monitor(train.size());
  std::iota(monitor.begin(), monitor.end(), 0);
  if (monitor.size() > kMonitorSample) {
    Rng mrng(derive_seed(seed, "monitor"));
    mrng.shuffle(std::span(monitor));
    monitor.resize(kMonitorSample);
    std::sort(monitor.begin(), monitor.end());
  }
  std::vector<Example> monitor_examples;
  std::vector<int> monitor_labels;
  for (auto i : monitor) {
    monitor_examples.push_back(train_examples[i]);
    monitor_labels.push_back(train_labels[i]);
  }

  history.initial_loss = evaluate(params, frozen, monitor_examples, monitor_labels).loss;
  const bool has_validation = !val_examples.empty();
  double best_score = has_validation ? score_of(evaluate(params, frozen, val_examples, val_labels))
                                     : -std::numeric_limits<double>::infinity();
  DcnParameters best = params;
  int since_best = 0;

  std::vector<std::size_t> order(train_examples.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<Example> batch;
  std::vector<int> batch_labels;
  const auto bsz = static_cast<std::size_t>(cfg.batch_size);

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    Rng shuffle_rng(derive_seed(seed, "shuffle", static_cast<std::uint64_t>(epoch)));
    shuffle_rng.shuffle(std::span(order));
    Rng dropout_rng(derive_seed(seed, "dropout", static_cast<std::uint64_t>(epoch)));
    for (std::size_t start = 0; start < order.size(); start += bsz) {
      const auto end = std::min(order.size(), start + bsz);
      batch.clear();
      batch_labels.clear();
      for (auto i = start; i < end; ++i) {
        batch.push_back(train_examples[order[i]]);
        batch_labels.push_back(train_labels[order[i]]);
      }
      auto cache = forward(params, frozen, batch, cfg.dropout, true, &dropout_rng);
      const auto grads = backward(cache, batch_labels, params);
      adam_step(params, grads, adam, cfg);
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = evaluate(params, frozen, monitor_examples, monitor_labels).loss;
    if (!std::isfinite(rec.train_loss)) {
      throw Error(ErrorKind::NonFinite, "training loss became non-finite in epoch " + std::to_string(epoch));
    }
    if (has_validation) {
      const auto v = evaluate(params, frozen, val_examples, val_labels);
      rec.validation_auc = v.auc;
      rec.validation_loss = v.loss;
      history.epochs.push_back(rec);
      const double s = score_of(v);
      if (s > best_score) {
        best_score = s;
        best = params;
        history.best_epoch = epoch;
        since_best = 0;
      } else if (++since_best >= cfg.patience) {
        history.early_stopped = true;
        break;
      }
    } else {
      rec.validation_auc = std::numeric_limits<double>::quiet_NaN();
      history.epochs.push_back(rec);
      best = params;
      history.best_epoch = epoch;
    }
  }
  history.optimizer_steps = adam.step;
  result.params = std::move(best);
  return result;
}

}  // namespace aisurvey
