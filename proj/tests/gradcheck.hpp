#pragma once

#include "aisurvey/dcn.hpp"
#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

namespace gradcheck {

struct TinyProblem {
  aisurvey::DcnParameters params;
  Eigen::MatrixXd frozen;
  std::vector<aisurvey::Example> batch;
  std::vector<int> labels;
};

// Random tiny network with weights large enough for non-trivial gradients
// and probabilities kept clear of the clamp.
inline TinyProblem random_problem(std::uint64_t seed) {
  aisurvey::Rng rng(seed);
  for (;;) {
    TinyProblem t;
    aisurvey::DcnConfig cfg;
    cfg.embed_dim = rng.below(2) ? 4 : 2;
    cfg.num_cross_layers = 1 + static_cast<int>(rng.below(3));
    cfg.num_dense_layers = static_cast<int>(rng.below(3));
    const int raw = 1 + static_cast<int>(rng.below(5));
    const int individuals = 2 + static_cast<int>(rng.below(3));
    const int questions = 2 + static_cast<int>(rng.below(3));
    const int years = 1 + static_cast<int>(rng.below(3));
    t.params = aisurvey::init_params(cfg, raw, individuals, years, rng.next());
    t.params.visit([&](const std::string&, Eigen::Map<Eigen::MatrixXd> m) {
      for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = 0.5 * rng.normal();
    });
    t.frozen.resize(questions, raw);
    for (Eigen::Index i = 0; i < t.frozen.size(); ++i) t.frozen.data()[i] = rng.normal();
    const int b = 1 + static_cast<int>(rng.below(6));
    for (int k = 0; k < b; ++k) {
      t.batch.push_back({static_cast<int>(rng.below(static_cast<std::uint64_t>(individuals))),
                         static_cast<int>(rng.below(static_cast<std::uint64_t>(questions))),
                         static_cast<int>(rng.below(static_cast<std::uint64_t>(years)))});
      t.labels.push_back(static_cast<int>(rng.below(2)));
    }
    bool clear = true;
    for (const auto& ex : t.batch) {
      const double z = oracle::reference_logit(t.params, t.frozen, ex);
      clear = clear && std::abs(z) < 12.0;
    }
    if (clear) return t;
  }
}

struct Result {
  double max_relative_error = 0.0;
  std::string worst;
  std::size_t entries = 0;
};

// Analytic gradient vs central differences of the independent scalar loss.
// Relative error |a - f| / max(|a|, |f|, floor).
inline Result check(TinyProblem& t, double h = 1e-5, double floor = 1e-6) {
  const auto cache = aisurvey::forward(t.params, t.frozen, t.batch, 0.0, false, nullptr);
  const auto grads = aisurvey::backward(cache, t.labels, t.params);
  std::vector<Eigen::MatrixXd> analytic;
  grads.visit([&](const std::string&, Eigen::Map<const Eigen::MatrixXd> m) { analytic.emplace_back(m); });
  Result r;
  std::size_t k = 0;
  t.params.visit([&](const std::string& name, Eigen::Map<Eigen::MatrixXd> m) {
    for (Eigen::Index i = 0; i < m.size(); ++i) {
      const double saved = m.data()[i];
      m.data()[i] = saved + h;
      const double up = oracle::reference_loss(t.params, t.frozen, t.batch, t.labels);
      m.data()[i] = saved - h;
      const double down = oracle::reference_loss(t.params, t.frozen, t.batch, t.labels);
      m.data()[i] = saved;
      const double fd = (up - down) / (2 * h);
      const double a = analytic[k].data()[i];
      const double rel = std::abs(a - fd) / std::max({std::abs(a), std::abs(fd), floor});
      if (rel > r.max_relative_error) {
        r.max_relative_error = rel;
        r.worst = name + "[" + std::to_string(i) + "]";
      }
      ++r.entries;
    }
    ++k;
  });
  return r;
}

}  // namespace gradcheck
