#include "aisurvey/synthetic.hpp"

#include "aisurvey/error.hpp"
#include "aisurvey/rng.hpp"

#include <cmath>
#include <cstdio>
#include <numeric>

namespace aisurvey {

std::string synthetic_variable_name(int question) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "q%03d", question);
  return buf;
}

SyntheticSurvey generate_synthetic_survey(const SyntheticConfig& cfg) {
  if (cfg.individuals <= 0 || cfg.questions <= 0 || cfg.years <= 0 || cfg.latent_dim <= 0) {
    throw Error(ErrorKind::Config, "synthetic sizes must be positive");
  }
  if (!(cfg.observed_fraction > 0.0 && cfg.observed_fraction <= 1.0)) {
    throw Error(ErrorKind::Config, "observed fraction must lie in (0, 1]");
  }
  if (cfg.embedding_dim < cfg.latent_dim) throw Error(ErrorKind::Config, "embedding_dim must be >= latent_dim");

  Rng rng(cfg.seed);
  auto draw = [&](int rows) {
    Eigen::MatrixXd m(rows, cfg.latent_dim);
    for (int r = 0; r < rows; ++r) {
      for (int c = 0; c < cfg.latent_dim; ++c) m(r, c) = rng.normal();
    }
    return m;
  };
  SyntheticSurvey out;
  out.individual_factors = draw(cfg.individuals);
  out.question_factors = draw(cfg.questions);
  out.year_factors = draw(cfg.years);
  const auto& u = out.individual_factors;
  const auto& q = out.question_factors;
  const auto& t = out.year_factors;

  const std::size_t total = static_cast<std::size_t>(cfg.years) * cfg.individuals * cfg.questions;
  std::vector<double> logits(total);
  std::vector<int> labels(total);
  std::size_t cell = 0;
  for (int y = 0; y < cfg.years; ++y) {
    for (int i = 0; i < cfg.individuals; ++i) {
      for (int j = 0; j < cfg.questions; ++j, ++cell) {
        const double s = u.row(i).dot(q.row(j)) + q.row(j).dot(t.row(y)) + u.row(i).dot(t.row(y));
        logits[cell] = cfg.alpha + cfg.beta * s;
        labels[cell] = rng.bernoulli(1.0 / (1.0 + std::exp(-logits[cell]))) ? 1 : 0;
      }
    }
  }

  std::vector<std::size_t> cells(total);
  std::iota(cells.begin(), cells.end(), 0);
  const auto keep = static_cast<std::size_t>(std::llround(cfg.observed_fraction * static_cast<double>(total)));
  if (keep < total) {
    rng.shuffle(std::span(cells));
    cells.resize(keep);
    std::sort(cells.begin(), cells.end());
  }

  Eigen::MatrixXd emb(cfg.questions, cfg.embedding_dim);
  for (int j = 0; j < cfg.questions; ++j) {
    for (int c = 0; c < cfg.latent_dim; ++c) emb(j, c) = q(j, c) + (cfg.noise > 0 ? cfg.noise * rng.normal() : 0.0);
    for (int c = cfg.latent_dim; c < cfg.embedding_dim; ++c) emb(j, c) = rng.normal();
  }
  std::vector<double> weights(static_cast<std::size_t>(cfg.individuals));
  for (auto& w : weights) w = rng.uniform(0.5, 1.5);

  std::vector<ResponseRecord> records;
  records.reserve(cells.size());
  out.true_logits.reserve(cells.size());
  const auto per_year = static_cast<std::size_t>(cfg.individuals) * cfg.questions;
  for (auto c : cells) {
    const int y = static_cast<int>(c / per_year);
    const int i = static_cast<int>((c % per_year) / static_cast<std::size_t>(cfg.questions));
    const int j = static_cast<int>(c % static_cast<std::size_t>(cfg.questions));
    ResponseRecord r;
    r.year = cfg.first_year + y;
    r.respondent_key = i + 1;
    r.variable = synthetic_variable_name(j);
    r.question_text = "Synthetic survey question " + std::to_string(j) + "?";
    r.binarized = labels[c];
    r.weight = weights[static_cast<std::size_t>(i)];
    records.push_back(std::move(r));
    out.true_logits.push_back(logits[c]);
  }
  out.dataset = SurveyDataset::from_records(std::move(records));

  // Rows of emb are in question order; align to whichever questions survived.
  std::vector<std::string> labels_out;
  Eigen::MatrixXd aligned(out.dataset.n_questions(), cfg.embedding_dim);
  for (int d = 0; d < out.dataset.n_questions(); ++d) {
    const auto& name = out.dataset.questions().decode(d);
    const int j = std::stoi(name.substr(1));
    aligned.row(d) = emb.row(j);
    labels_out.push_back(name);
  }
  out.embeddings = EmbeddingMatrix::from_matrix(aligned, std::move(labels_out), "synthetic-planted");
  return out;
}

}  // namespace aisurvey
