#pragma once

#include "aisurvey/embed_io.hpp"
#include "aisurvey/survey_store.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <vector>

namespace aisurvey {

// Planted survey: latent u_i, q_j, t_y ~ N(0, I_k) and
//   logit = alpha + beta * (u_i.q_j + q_j.t_y + u_i.t_y).
// The "semantic" vector of question j is q_j (plus optional Gaussian noise
// of std `noise`) followed by N(0,1) padding up to `embedding_dim`, so
// question text carries real signal about responses.
struct SyntheticConfig {
  int individuals = 500;
  int questions = 60;
  int years = 10;
  int latent_dim = 8;
  double observed_fraction = 0.4;
  double noise = 0.0;
  double alpha = 0.0;
  double beta = 1.5;
  int embedding_dim = 32;
  int first_year = 2000;
  std::uint64_t seed = 7;
};

struct SyntheticSurvey {
  SurveyDataset dataset;
  EmbeddingMatrix embeddings;       // aligned to dataset question ids
  std::vector<double> true_logits;  // per record
  Eigen::MatrixXd individual_factors;
  Eigen::MatrixXd question_factors;
  Eigen::MatrixXd year_factors;
};

// Draw order: u (row-major), q, t, then for every (year, individual,
// question) cell in that nesting its Bernoulli response, then the cell
// subsample shuffle, then embedding noise and padding per question, then
// one survey weight per individual ~ uniform(0.5, 1.5).
SyntheticSurvey generate_synthetic_survey(const SyntheticConfig& cfg);

std::string synthetic_variable_name(int question);

}  // namespace aisurvey
